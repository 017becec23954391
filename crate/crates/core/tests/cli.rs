use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lace_core::run::Manifest;

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Env {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn lace(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_lace"))
            .args(args)
            .env("LACE_CACHE_DIR", self.path("cache"))
            .output()
            .unwrap()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn kernel_check_exit_codes() {
    let env = Env::new();
    let good = env.config("good.conf", "kernel.d = 3\nkernel.L = 5\n");
    let o = env.lace(&["kernel-check", "--config", s(&good)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 0);

    let bipartite = env.config("two.conf", "kernel.d = 1\nkernel.L = 1\nkernel.exclude_origin = true\n");
    let o = env.lace(&["kernel-check", "--config", s(&bipartite)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("FAILED global bound"), "{}", stderr(&o));

    let out = env.path("kc");
    let o = env.lace(&["kernel-check", "--config", s(&good), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("kernel_report.json").is_file());
}

#[test]
fn usage_errors_exit_two() {
    let env = Env::new();
    let missing = env.config("missing.conf", "model = srw\nkernel.d = 2\nrun.n_max = 10\n");
    let o = env.lace(&["run", "--config", s(&missing), "--out", s(&env.path("o1"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kernel.L"));

    let unknown = env.config("unknown.conf", "model = srw\nkernel.d = 2\nkernel.L = 1\nrun.n_max = 10\nrun.nmax = 3\n");
    let o = env.lace(&["run", "--config", s(&unknown), "--out", s(&env.path("o2"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.nmax"));

    let o = env.lace(&["run"]);
    assert_eq!(o.status.code(), Some(2));
    let o = env.lace(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = env.lace(&["run", "--config", s(&env.path("absent.conf"))]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn srw_run_writes_six_outputs() {
    let env = Env::new();
    let cfg = env.config("srw.conf", "model = srw\nkernel.d = 5\nkernel.L = 1\nrun.n_max = 40\n");
    let out = env.path("run");
    let o = env.lace(&["--threads", "1", "run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = Manifest::read(&out).unwrap();
    assert!(m.ok());
    assert_eq!(m.outputs.len(), 6);
    m.verify(&out).unwrap();
    assert!(!out.join(".lace.lock").exists());
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("critical_trace.json")).unwrap()).unwrap();
    assert_eq!(trace["z"].as_f64(), Some(1.0));
    assert_eq!(trace["z_c"]["z_c"].as_f64(), Some(1.0));
}

#[test]
fn saw_cache_hit_and_purge() {
    let env = Env::new();
    let cfg = env.config("saw.conf", "model = saw\nkernel.d = 2\nkernel.L = 1\nrun.n_max = 7\n");
    let cold = env.path("cold");
    let warm = env.path("warm");
    assert_eq!(env.lace(&["run", "--config", s(&cfg), "--out", s(&cold)]).status.code(), Some(0));
    let o = env.lace(&["run", "--config", s(&cfg), "--out", s(&warm)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (mc, mw) = (Manifest::read(&cold).unwrap(), Manifest::read(&warm).unwrap());
    let status = |m: &Manifest, name: &str| m.stages.iter().find(|s| s.name == name).unwrap().status.clone();
    assert_eq!(status(&mc, "saw-enumeration"), "built");
    assert_eq!(status(&mw, "saw-enumeration"), "cache-hit");
    assert_eq!(mc.outputs, mw.outputs);
    for o in &mc.outputs {
        assert_eq!(fs::read(cold.join(&o.file)).unwrap(), fs::read(warm.join(&o.file)).unwrap());
    }

    let listing = stdout(&env.lace(&["cache", "list"]));
    let hashes: Vec<String> = listing.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(hashes.len(), 2, "{listing}");
    assert!(listing.contains("saw-tables") && listing.contains("pi-tables"));

    let mut args = vec!["cache", "purge"];
    args.extend(hashes.iter().map(String::as_str));
    let first = env.lace(&args);
    assert_eq!(first.status.code(), Some(0));
    assert!(stdout(&first).contains("deleted 2 entries"));
    let second = env.lace(&args);
    assert_eq!(second.status.code(), Some(0));
    assert!(stdout(&second).contains("deleted 0 entries"));
    assert_eq!(stdout(&second).matches("not found").count(), 2);
    assert_eq!(stdout(&env.lace(&["cache", "list"])).lines().count(), 1);
}

#[test]
fn invalid_op_probability_is_a_stage_error() {
    let env = Env::new();
    let cfg = env.config("op.conf", "model = op\nop.z = 30\nop.samples = 100\nkernel.d = 3\nkernel.L = 1\nrun.n_max = 4\n");
    let out = env.path("op");
    let o = env.lace(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.status, "FAILED");
    assert_eq!(m.failed_stage.as_deref(), Some("op-simulation"));
    assert!(m.error.unwrap().starts_with("[op-simulation]"));
    assert!(out.join("kernel_report.json").is_file());
}

#[test]
fn locked_directory_is_refused() {
    let env = Env::new();
    let cfg = env.config("srw.conf", "model = srw\nkernel.d = 1\nkernel.L = 2\nrun.n_max = 10\n");
    let out = env.path("locked");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".lace.lock"), "").unwrap();
    let o = env.lace(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("locked"));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn seed_flag_and_json_config() {
    let env = Env::new();
    let cfg = env.config(
        "op.json",
        r#"{"model": "op", "op": {"z": 1.0, "samples": 2000}, "kernel": {"d": 2, "L": 1}, "run": {"n_max": 5}}"#,
    );
    let run = |name: &str, seed: &str| {
        let out = env.path(name);
        let o = env.lace(&["run", "--config", s(&cfg), "--out", s(&out), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(out.join("manifest.json")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "2");
    assert_ne!(a, b);
    let m: Manifest = serde_json::from_slice(&a).unwrap();
    assert_eq!(m.config["seed"], "1");
}
