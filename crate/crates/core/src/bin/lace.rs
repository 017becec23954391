use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lace_core::cache::{self, Cache};
use lace_core::config::{self, KernelConfig, RunConfig};
use lace_core::output;
use lace_core::run::{self, exit_code, EXIT_CHECK_FAILURE, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use lace_core::Error;

#[derive(Parser, Debug)]
#[command(name = "lace", version, about = "Lace-expansion recursion engine and verification harness")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file, flat `key = value` or JSON.
    #[arg(long)]
    config: PathBuf,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the Fourier bounds of the configured step kernel.
    KernelCheck(Common),
    /// Run every stage and write the artifact directory.
    Run(Common),
    /// Inspect or prune the coefficient cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand, Debug)]
enum CacheAction {
    List,
    Purge {
        hashes: Vec<String>,
        #[arg(long)]
        all: bool,
    },
}

fn load(common: &Common) -> Result<config::FlatConfig, Error> {
    let mut map = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        map.insert("seed".into(), seed.to_string());
    }
    Ok(map)
}

fn kernel_check(common: &Common) -> Result<i32, Error> {
    let cfg = KernelConfig::from_flat(&load(common)?)?;
    let report = run::cmd_kernel_check(&cfg)?;
    let text = output::to_json(&report)?;
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(run::KERNEL_REPORT), &text)?;
        }
        None => print!("{text}"),
    }
    if report.pass() {
        eprintln!("kernel passes all bounds");
        Ok(EXIT_OK)
    } else {
        for f in &report.failures {
            eprintln!("FAILED {f}");
        }
        Ok(EXIT_CHECK_FAILURE)
    }
}

fn run_cmd(common: &Common) -> Result<i32, Error> {
    let cfg = RunConfig::from_flat(&load(common)?)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("lace-run"));
    let manifest = run::cmd_run(&cfg, &out, &cache::default_dir())?;
    for s in &manifest.stages {
        eprintln!("{:<18} {:<10} {}", s.name, s.status, s.detail.as_deref().unwrap_or(""));
    }
    match &manifest.error {
        None => {
            eprintln!("wrote {} outputs to {}", manifest.outputs.len(), out.display());
            Ok(EXIT_OK)
        }
        Some(e) => {
            eprintln!("error: {e}");
            Ok(EXIT_RUNTIME)
        }
    }
}

fn cache_cmd(action: &CacheAction) -> Result<i32, Error> {
    let cache = Cache::existing(&cache::default_dir())?;
    match action {
        CacheAction::List => {
            println!("hash,kind,bytes,created_unix,n_max,arithmetic");
            for e in cache.list()? {
                println!("{},{},{},{},{},{}", e.hash, e.kind, e.bytes, e.created_unix, e.n_max, e.arithmetic);
            }
        }
        CacheAction::Purge { hashes, all } => {
            let summary = if *all { cache.purge_all()? } else { cache.purge(hashes)? };
            for h in &summary.not_found {
                println!("not found: {h}");
            }
            println!("deleted {} entries", summary.deleted.len());
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    let result = match &cli.command {
        Command::KernelCheck(c) => kernel_check(c),
        Command::Run(c) => run_cmd(c),
        Command::Cache { action } => cache_cmd(action),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            match &e {
                Error::Config { .. } => eprintln!("usage error: {e}"),
                _ => eprintln!("error: {e}"),
            }
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
