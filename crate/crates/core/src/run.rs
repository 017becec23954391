//! Batch commands behind the `lace` binary.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cache::{Cache, CacheKey};
use crate::clt::{
    self, gaussian_profile_check, local_clt_check, local_clt_fourier, pn_from_saw, LocalCltConfig, LocalCltRow,
};
use crate::config::{FlatConfig, KernelConfig, ModelConfig, RunConfig, ZChoice};
use crate::critical::{estimate_a_v, solve_zc_in, susceptibility, vn_sequence, zn_sequence, DEFAULT_BRACKET};
use crate::engine::{laplacian_recursion, run_recursion, CoefficientProvider};
use crate::error::{Error, Result};
use crate::induction::{check_assumption_eg, check_hypotheses, xyz_diagnostics};
use crate::kernels::{check_assumption_d, AssumptionDReport, KPoint, StepKernel};
use crate::models::op::{op_simulate, OpEstimates, OpProvider};
use crate::models::saw::{saw_deconvolve_pi, saw_enumerate, PiTables, SawProvider, SawTables};
use crate::models::srw::SrwProvider;
use crate::models::synthetic::SyntheticProvider;
use crate::output::{self, axis_columns, fmt_f64, Csv};
use crate::quadrature::QuadratureSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lace.lock";

pub const KERNEL_REPORT: &str = "kernel_report.json";
pub const RECURSION_STATE: &str = "recursion_state.csv";
pub const CRITICAL_TRACE: &str = "critical_trace.json";
pub const HYPOTHESIS_REPORT: &str = "hypothesis_report.json";
pub const CLT_PROFILE: &str = "clt_profile.csv";
pub const LOCAL_CLT: &str = "local_clt.csv";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelReport {
    pub kernel_hash: String,
    pub support_size: usize,
    pub assumption_d: AssumptionDReport,
    /// Names of the failed bounds; empty when all hold.
    pub failures: Vec<String>,
}

impl KernelReport {
    pub fn new(kernel: &StepKernel, report: AssumptionDReport) -> Self {
        let mut failures = Vec::new();
        if !report.small_k_pass {
            failures.push("small-k bound: c1 L^2 |k|^2 <= a(k) <= c2 L^2 |k|^2 for |k|_inf <= 1/L".to_string());
        }
        if !report.large_k_pass {
            failures.push("large-k bound: a(k) >= eta for |k|_inf >= 1/L".to_string());
        }
        if !report.global_pass {
            failures.push("global bound: Dhat(k) > -1 + eta on the torus".to_string());
        }
        KernelReport {
            kernel_hash: kernel.content_hash(),
            support_size: kernel.len(),
            assumption_d: report,
            failures,
        }
    }

    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn cmd_kernel_check(config: &KernelConfig) -> Result<KernelReport> {
    let kernel = config.build()?;
    let report = check_assumption_d(&kernel, config.check_resolution)?;
    Ok(KernelReport::new(&kernel, report))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// `done`, `built`, `cache-hit`, `skipped` or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    /// `ok` or `FAILED`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Effective configuration; feeding this manifest back as a config reproduces the run.
    pub config: FlatConfig,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
}

impl Manifest {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }

    /// Every listed output exists and matches its hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for o in &self.outputs {
            let bytes = fs::read(dir.join(&o.file))?;
            if output::sha256_hex(&bytes) != o.sha256 {
                return Err(Error::InvalidArgument(format!("{} does not match its manifest hash", o.file)));
            }
        }
        Ok(())
    }
}

struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::InvalidArgument(format!("run directory {} is locked by another process", dir.display()))
            } else {
                e.into()
            }
        })?;
        Ok(Lock { path })
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

struct Run<'a> {
    dir: &'a Path,
    stages: Vec<StageRecord>,
    outputs: Vec<OutputRecord>,
}

impl Run<'_> {
    fn stage(&mut self, name: &str, status: &str, detail: Option<String>) {
        self.stages.push(StageRecord {
            name: name.into(),
            status: status.into(),
            detail,
        });
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(file), bytes)?;
        self.outputs.push(OutputRecord {
            file: file.into(),
            sha256: output::sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

/// Capability gaps become `null` plus a reason; other errors propagate.
fn optional<T>(r: Result<T>) -> Result<(Option<T>, Option<String>)> {
    match r {
        Ok(v) => Ok((Some(v), None)),
        Err(e @ (Error::Unsupported { .. } | Error::CoefficientUnavailable { .. } | Error::Singular(_))) => {
            Ok((None, Some(e.to_string())))
        }
        Err(e) => Err(e),
    }
}

struct Coefficients {
    provider: Box<dyn CoefficientProvider>,
    saw: Option<SawTables>,
}

fn build_coefficients(
    run: &mut Run,
    cfg: &RunConfig,
    kernel: &Arc<StepKernel>,
    cache_dir: &Path,
    current: &mut String,
) -> Result<Coefficients> {
    match &cfg.model {
        ModelConfig::Srw => {
            run.stage("coefficients", "done", None);
            Ok(Coefficients {
                provider: Box::new(SrwProvider::new(kernel.clone())),
                saw: None,
            })
        }
        ModelConfig::Synthetic { b, p } => {
            run.stage("coefficients", "done", None);
            Ok(Coefficients {
                provider: Box::new(SyntheticProvider::single_g2(kernel.clone(), *b, *p)),
                saw: None,
            })
        }
        ModelConfig::Saw { budget } => {
            let cache = Cache::open(cache_dir)?;
            let arithmetic = if kernel.uniform_count().is_some() { "exact" } else { "float" };
            let key = |kind: &str| CacheKey {
                kind: kind.into(),
                kernel_hash: kernel.content_hash(),
                model: "saw".into(),
                n_max: cfg.n_max,
                arithmetic: arithmetic.into(),
                extra: vec![],
            };
            *current = "saw-enumeration".into();
            let tables: SawTables = match cache.load(&key("saw-tables"))? {
                Some(t) => {
                    run.stage("saw-enumeration", "cache-hit", None);
                    t
                }
                None => {
                    let t = saw_enumerate(kernel, cfg.n_max, *budget)?;
                    cache.store(&key("saw-tables"), &t)?;
                    run.stage("saw-enumeration", "built", Some(format!("{} walks", t.walks_enumerated)));
                    t
                }
            };
            *current = "pi-deconvolution".into();
            let pi: PiTables = match cache.load(&key("pi-tables"))? {
                Some(p) => {
                    run.stage("pi-deconvolution", "cache-hit", None);
                    p
                }
                None => {
                    let p = saw_deconvolve_pi(&tables)?;
                    cache.store(&key("pi-tables"), &p)?;
                    run.stage("pi-deconvolution", "built", Some(format!("residual {}", fmt_f64(p.residual))));
                    p
                }
            };
            Ok(Coefficients {
                provider: Box::new(SawProvider::new(kernel.clone(), &pi)?),
                saw: Some(tables),
            })
        }
        ModelConfig::Op { z, samples } => {
            let cache = Cache::open(cache_dir)?;
            let key = CacheKey {
                kind: "op-estimates".into(),
                kernel_hash: kernel.content_hash(),
                model: "op".into(),
                n_max: cfg.n_max,
                arithmetic: "float".into(),
                extra: vec![
                    ("z".into(), fmt_f64(*z)),
                    ("samples".into(), samples.to_string()),
                    ("seed".into(), cfg.seed.to_string()),
                ],
            };
            *current = "op-simulation".into();
            let est: OpEstimates = match cache.load(&key)? {
                Some(e) => {
                    run.stage("op-simulation", "cache-hit", None);
                    e
                }
                None => {
                    let e = op_simulate(kernel, *z, cfg.n_max, *samples, cfg.seed)?;
                    cache.store(&key, &e)?;
                    run.stage("op-simulation", "built", Some(format!("{samples} samples")));
                    e
                }
            };
            Ok(Coefficients {
                provider: Box::new(OpProvider::new(kernel.clone(), &est)?),
                saw: None,
            })
        }
    }
}

/// `0`, then `j pi / P` along the first axis and the diagonal, then extra points.
pub fn run_kset(d: usize, points: usize, extra: &[KPoint]) -> Result<Vec<KPoint>> {
    let mut ks = vec![KPoint::zero(d)];
    for j in 1..=points {
        let t = std::f64::consts::PI * j as f64 / points as f64;
        ks.push(KPoint::axis(d, 0, t)?);
        if d > 1 {
            ks.push(KPoint::diagonal(d, t)?);
        }
    }
    for p in extra {
        if !ks.iter().any(|q| q.same_bits(p)) {
            ks.push(p.clone());
        }
    }
    Ok(ks)
}

fn axis_points(d: usize, s: &[f64]) -> Vec<Vec<f64>> {
    s.iter()
        .map(|&v| {
            let mut p = vec![0.0; d];
            p[0] = v;
            p
        })
        .collect()
}

fn n_levels(n_max: usize, divisors: &[usize]) -> Vec<usize> {
    let mut ns: Vec<usize> = divisors.iter().map(|q| n_max / q).filter(|&n| n >= 1).collect();
    ns.sort_unstable();
    ns.dedup();
    ns
}

fn local_clt_csv(d: usize, rows: &[LocalCltRow], method: &str) -> Csv {
    let mut header = vec!["n".to_string()];
    header.extend(axis_columns("x", d));
    for h in ["r", "log_r", "lhs", "rhs", "ratio", "method"] {
        header.push(h.into());
    }
    let mut csv = Csv::new(&header);
    for r in rows {
        let mut row = vec![r.n.to_string()];
        row.extend(r.x.iter().map(|&c| fmt_f64(c)));
        row.extend([
            r.r.to_string(),
            fmt_f64(r.log_r),
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.ratio),
            method.to_string(),
        ]);
        csv.row(&row);
    }
    csv
}

fn stages(run: &mut Run, cfg: &RunConfig, cache_dir: &Path, current: &mut String) -> Result<()> {
    *current = "kernel".into();
    let kernel = cfg.build_kernel()?;
    let d = kernel.d();
    let kreport = KernelReport::new(&kernel, check_assumption_d(&kernel, cfg.kernel.check_resolution)?);
    run.write(KERNEL_REPORT, output::to_json(&kreport)?.as_bytes())?;
    run.stage(
        "kernel",
        "done",
        (!kreport.pass()).then(|| format!("{} bound(s) fail", kreport.failures.len())),
    );

    *current = "coefficients".into();
    let coeffs = build_coefficients(run, cfg, &kernel, cache_dir, current)?;
    let provider = coeffs.provider.as_ref();

    *current = "critical-point".into();
    let coeff_n = provider.max_m().map_or(cfg.n_max, |m| m.min(cfg.n_max));
    let (z, z_source, zc) = match (provider.fixed_z(), cfg.z) {
        (Some(z0), ZChoice::Fixed(z)) if z != z0 => {
            return Err(Error::Config {
                key: "run.z".into(),
                message: format!("the {} model only has data at z = {z0}", provider.name()),
            })
        }
        (Some(z0), _) => (z0, "model", None),
        (None, ZChoice::Fixed(z)) => (z, "config", None),
        (None, ZChoice::Auto) => {
            let est = solve_zc_in(provider, coeff_n, 1e-14, DEFAULT_BRACKET)?;
            (est.z_c, "bisection", Some(est))
        }
    };
    run.stage("critical-point", "done", Some(format!("z = {} ({z_source})", fmt_f64(z))));

    *current = "recursion".into();
    let vt = vn_sequence(provider, z, cfg.n_max)?;
    let (av, av_reason) = optional(estimate_a_v(provider, z, cfg.n_max))?;
    let a_const = av.as_ref().map_or(1.0, |a| a.a_formula);
    let v_const = av.as_ref().map_or(vt.v[cfg.n_max], |a| a.v_formula);
    let k_list = axis_points(d, &cfg.clt.k);
    let profile_ns = n_levels(cfg.n_max, &[16, 4, 1]);
    let extra = clt::profile_kset(&kernel, v_const, &k_list, &profile_ns);
    let kset = run_kset(d, cfg.kset_points, &extra)?;
    let mut state = run_recursion(provider, z, cfg.n_max, &kset)?;
    laplacian_recursion(provider, &mut state)?;
    run.write(RECURSION_STATE, output::recursion_state_csv(&state).as_str().as_bytes())?;
    run.stage("recursion", "done", Some(format!("{} k-points", kset.len())));

    *current = "critical-trace".into();
    let (zt, zt_reason) = optional(zn_sequence(provider, coeff_n, cfg.hypothesis.as_ref().map_or(crate::critical::DEFAULT_K1, |h| h.k[0])))?;
    let diffusive = clt::diffusive_check(&state, v_const, &kernel, &n_levels(cfg.n_max, &[cfg.n_max, 4, 2, 1]))?;
    let l1_ns: Vec<usize> = std::iter::successors(Some(8usize), |n| Some(n * 2))
        .take_while(|&n| n <= cfg.n_max)
        .collect();
    let (l1, l1_reason) = if l1_ns.len() >= 2 {
        optional(clt::l1_decay_check(provider, z, &l1_ns, &cfg.quadrature, None))?
    } else {
        (None, Some("n_max below 16".to_string()))
    };
    let (chi, _) = optional(susceptibility(provider, z, cfg.n_max, 1e12))?;
    let trace = json!({
        "model": provider.name(),
        "z": z,
        "z_source": z_source,
        "z_c": zc,
        "z_sequence": zt,
        "z_sequence_unavailable": zt_reason,
        "v_sequence": vt,
        "a_v": av,
        "a_v_unavailable": av_reason,
        "diffusive": diffusive,
        "l1_decay": l1,
        "l1_decay_unavailable": l1_reason,
        "susceptibility": chi,
    });
    run.write(CRITICAL_TRACE, output::to_json(&trace)?.as_bytes())?;
    run.stage("critical-trace", "done", None);

    *current = "hypotheses".into();
    let report: Value = match cfg.constants(d) {
        None => {
            run.stage("hypotheses", "skipped", Some("induction exponents need d > 4".into()));
            json!({"status": "unavailable", "reason": "induction exponents need d > 4"})
        }
        Some(consts) => {
            let rep = check_hypotheses(&state, zt.as_ref(), &vt, &kernel, &consts)?;
            let (eg, eg_reason) = optional(check_assumption_eg(provider, &[z], coeff_n, &kset, consts.eps_prime))?;
            let mut worst_small = 0.0f64;
            let mut worst_large = 0.0f64;
            for n in (1..cfg.n_max).step_by((cfg.n_max / 16).max(1)) {
                for ki in 0..kset.len() {
                    if state.f(n, ki) == 0.0 {
                        continue;
                    }
                    let r = xyz_diagnostics(provider, &state, &vt, n, ki)?;
                    worst_small = worst_small.max(r.small_k_residual);
                    worst_large = worst_large.max(r.large_k_residual);
                }
            }
            let all_pass = rep.all_pass();
            run.stage("hypotheses", "done", Some(if all_pass { "all hold".into() } else { "violations found".into() }));
            json!({
                "status": "checked",
                "all_pass": all_pass,
                "report": rep,
                "assumption_eg": eg,
                "assumption_eg_unavailable": eg_reason,
                "decomposition_residuals": {"small_k": worst_small, "large_k": worst_large},
            })
        }
    };
    run.write(HYPOTHESIS_REPORT, output::to_json(&report)?.as_bytes())?;

    *current = "clt".into();
    let profile = gaussian_profile_check(&state, a_const, v_const, &kernel, &k_list, &profile_ns)?;
    let mut header = vec!["n".to_string()];
    header.extend(axis_columns("k", d));
    for h in ["f", "gaussian", "err"] {
        header.push(h.into());
    }
    let mut csv = Csv::new(&header);
    for r in &profile.rows {
        let mut row = vec![r.n.to_string()];
        row.extend(r.k.iter().map(|&c| fmt_f64(c)));
        row.extend([fmt_f64(r.f), fmt_f64(r.gaussian), fmt_f64(r.err)]);
        csv.row(&row);
    }
    run.write(CLT_PROFILE, csv.as_str().as_bytes())?;

    let lcfg = LocalCltConfig {
        r_rule: cfg.clt.r_rule.clone(),
        xs: axis_points(d, &cfg.clt.x),
        kappa: cfg.clt.kappa,
    };
    let lclt_ns = n_levels(cfg.n_max, &[4, 2, 1]);
    let (rows, method) = if let Some(tables) = &coeffs.saw {
        let mut rows = Vec::new();
        for &n in &lclt_ns {
            let r = lcfg.r_rule.radius(n);
            let reach = lcfg
                .xs
                .iter()
                .map(|x| clt::lattice_center(x, v_const, kernel.sigma_sq(), n).iter().map(|c| c.abs()).max().unwrap_or(0))
                .max()
                .unwrap_or(0);
            let table = pn_from_saw(tables, z, n, reach + r)?;
            rows.extend(local_clt_check(&table, &lcfg, a_const, v_const, &kernel)?);
        }
        (rows, "model")
    } else if d <= 3 {
        // Degree of the integrand bounds the grid needed for an exact midpoint rule.
        let reach = lcfg.xs.iter().map(|x| x[0].abs()).fold(0.0, f64::max) * (v_const.abs() * kernel.sigma_sq() * cfg.n_max as f64).sqrt();
        let degree = kernel.l() as usize * cfg.n_max + lcfg.r_rule.radius(cfg.n_max) as usize + reach.ceil() as usize + 2;
        let q = QuadratureSpec::Tensor {
            resolution: (degree + 1).next_power_of_two(),
        };
        (local_clt_fourier(provider, z, a_const, v_const, &lclt_ns, &lcfg, &q)?, "transform")
    } else {
        (local_clt_fourier(provider, z, a_const, v_const, &lclt_ns, &lcfg, &cfg.quadrature)?, "fourier")
    };
    run.write(LOCAL_CLT, local_clt_csv(d, &rows, method).as_str().as_bytes())?;
    run.stage(
        "clt",
        "done",
        (!profile.skipped.is_empty()).then(|| format!("{} profile points outside the torus skipped", profile.skipped.len())),
    );
    Ok(())
}

/// Runs every stage into `out`. Stage failures are recorded in the returned
/// manifest (status `FAILED`); only lock and manifest I/O errors are returned as `Err`.
pub fn cmd_run(cfg: &RunConfig, out: &Path, cache_dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let _lock = Lock::acquire(out)?;
    let _ = fs::remove_file(out.join(MANIFEST_FILE));
    let mut run = Run {
        dir: out,
        stages: Vec::new(),
        outputs: Vec::new(),
    };
    let mut current = String::new();
    let result = stages(&mut run, cfg, cache_dir, &mut current);
    let (status, failed_stage, error) = match result {
        Ok(()) => ("ok".to_string(), None, None),
        Err(e) => {
            run.stage(&current, "failed", Some(e.to_string()));
            ("FAILED".to_string(), Some(current.clone()), Some(format!("[{current}] {e}")))
        }
    };
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: format!("lace {}", env!("CARGO_PKG_VERSION")),
        status,
        failed_stage,
        error,
        config: cfg.to_flat(),
        stages: run.stages,
        outputs: run.outputs,
    };
    output::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kset_layout() {
        let ks = run_kset(2, 4, &[KPoint::zero(2)]).unwrap();
        assert_eq!(ks.len(), 9);
        assert!(ks[0].is_zero());
    }

    #[test]
    fn levels() {
        assert_eq!(n_levels(200, &[16, 4, 1]), vec![12, 50, 200]);
        assert_eq!(n_levels(3, &[16, 4, 1]), vec![3]);
    }
}
