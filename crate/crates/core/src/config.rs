//! Run configuration: flat `key = value` text or JSON, flattened to dotted keys.
//!
//! The effective configuration (all defaults filled in) is produced by
//! [`RunConfig::to_flat`] and parses back to the same configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde_json::Value;

use crate::clt::RRule;
use crate::error::{Error, Result};
use crate::induction::HypothesisConstants;
use crate::kernels::StepKernel;
use crate::models::saw::DEFAULT_WALK_BUDGET;
use crate::quadrature::QuadratureSpec;

pub type FlatConfig = BTreeMap<String, String>;

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<FlatConfig> {
    let mut map = FlatConfig::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(config_err(&key, "duplicate key"));
        }
    }
    Ok(map)
}

fn flatten(prefix: &str, v: &Value, out: &mut FlatConfig) -> Result<()> {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out)?;
            }
        }
        Value::Array(items) => {
            let parts: Result<Vec<String>> = items
                .iter()
                .map(|i| match i {
                    Value::Number(n) => Ok(n.to_string()),
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(config_err(prefix, "arrays may only hold numbers or strings")),
                })
                .collect();
            out.insert(prefix.to_string(), parts?.join(";"));
        }
        Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        Value::Number(n) => {
            out.insert(prefix.to_string(), n.to_string());
        }
        Value::Bool(b) => {
            out.insert(prefix.to_string(), b.to_string());
        }
        Value::Null => {}
    }
    Ok(())
}

/// Parses JSON, nested or already dotted. A run manifest is accepted and its
/// `config` echo is used.
pub fn parse_json(text: &str) -> Result<FlatConfig> {
    let v: Value = serde_json::from_str(text)?;
    let v = match v.get("config") {
        Some(c) if v.get("outputs").is_some() => c.clone(),
        _ => v,
    };
    if !v.is_object() {
        return Err(config_err("<root>", "JSON config must be an object"));
    }
    let mut out = FlatConfig::new();
    flatten("", &v, &mut out)?;
    Ok(out)
}

pub fn load(path: &Path) -> Result<FlatConfig> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        parse_json(&text)
    } else {
        parse_flat(&text)
    }
}

/// Typed accessor that records which keys were consumed.
struct Reader<'a> {
    map: &'a FlatConfig,
    used: std::cell::RefCell<Vec<String>>,
}

impl<'a> Reader<'a> {
    fn new(map: &'a FlatConfig) -> Self {
        Reader {
            map,
            used: Default::default(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.used.borrow_mut().push(key.to_string());
        self.map.get(key).map(|s| s.as_str())
    }

    fn required(&self, key: &str) -> Result<&'a str> {
        self.raw(key).ok_or_else(|| config_err(key, "missing required key"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, s: &str) -> Result<T> {
        s.parse::<T>()
            .map_err(|_| config_err(key, format!("cannot parse `{s}` as {}", std::any::type_name::<T>())))
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            Some(s) => self.parse(key, s),
            None => Ok(default),
        }
    }

    fn req<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let s = self.required(key)?;
        self.parse(key, s)
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(s) if s.trim().is_empty() => Ok(Vec::new()),
            Some(s) => s.split(';').map(|p| self.parse::<f64>(key, p.trim())).collect(),
        }
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        for k in self.map.keys() {
            if !used.contains(k) {
                return Err(config_err(k, "unknown key"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSource {
    Cube { d: usize, l: u32, exclude_origin: bool },
    /// Kernel JSON file as written by [`StepKernel::to_json`].
    File(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    pub source: KernelSource,
    pub check_resolution: usize,
}

impl KernelConfig {
    fn read(r: &Reader, default_exclude: bool) -> Result<Self> {
        let source = match r.raw("kernel.file") {
            Some(path) => KernelSource::File(path.to_string()),
            None => {
                let d: usize = r.req("kernel.d")?;
                let l: u32 = r.req("kernel.L")?;
                if d == 0 {
                    return Err(config_err("kernel.d", "dimension must be positive"));
                }
                if l == 0 {
                    return Err(config_err("kernel.L", "spread must be positive"));
                }
                KernelSource::Cube {
                    d,
                    l,
                    exclude_origin: r.get("kernel.exclude_origin", default_exclude)?,
                }
            }
        };
        let check_resolution = r.get("kernel.check_resolution", 33usize)?;
        if check_resolution < 2 {
            return Err(config_err("kernel.check_resolution", "need at least 2 grid nodes"));
        }
        Ok(KernelConfig { source, check_resolution })
    }

    /// Reads only the `kernel.*` keys; other keys are ignored.
    pub fn from_flat(map: &FlatConfig) -> Result<Self> {
        let r = Reader::new(map);
        let out = Self::read(&r, false)?;
        for k in map.keys().filter(|k| k.starts_with("kernel.")) {
            if !r.used.borrow().contains(k) {
                return Err(config_err(k, "unknown key"));
            }
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<StepKernel> {
        match &self.source {
            KernelSource::Cube { d, l, exclude_origin } => StepKernel::uniform_cube(*d, *l, *exclude_origin),
            KernelSource::File(path) => StepKernel::from_json(&std::fs::read_to_string(path)?),
        }
    }

    fn write(&self, out: &mut FlatConfig) {
        match &self.source {
            KernelSource::Cube { d, l, exclude_origin } => {
                out.insert("kernel.d".into(), d.to_string());
                out.insert("kernel.L".into(), l.to_string());
                out.insert("kernel.exclude_origin".into(), exclude_origin.to_string());
            }
            KernelSource::File(p) => {
                out.insert("kernel.file".into(), p.clone());
            }
        }
        out.insert("kernel.check_resolution".into(), self.check_resolution.to_string());
    }

    pub fn d(&self) -> Result<usize> {
        match &self.source {
            KernelSource::Cube { d, .. } => Ok(*d),
            KernelSource::File(_) => Ok(self.build()?.d()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Srw,
    /// Single `g_2 = b z^2 Dhat^p` perturbation of the walk.
    Synthetic { b: f64, p: u32 },
    Saw { budget: u128 },
    Op { z: f64, samples: u64 },
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Srw => "srw",
            ModelConfig::Synthetic { .. } => "synthetic",
            ModelConfig::Saw { .. } => "saw",
            ModelConfig::Op { .. } => "op",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZChoice {
    /// Solve for the critical point.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisConfig {
    pub gamma: f64,
    pub delta: f64,
    pub rho: f64,
    pub eps_prime: f64,
    pub k: [f64; 5],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CltConfig {
    pub r_rule: RRule,
    pub kappa: f64,
    /// Local-CLT points `x e_1`.
    pub x: Vec<f64>,
    /// Profile points `k e_1`.
    pub k: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub kernel: KernelConfig,
    pub n_max: usize,
    pub z: ZChoice,
    /// Points per direction in the recursion k-set.
    pub kset_points: usize,
    pub quadrature: QuadratureSpec,
    /// `None` when `d <= 4` and no exponents were given.
    pub hypothesis: Option<HypothesisConfig>,
    pub clt: CltConfig,
    pub seed: u64,
}

pub const DEFAULT_K: [f64; 5] = [10.0, 10.0, 10.0, 100.0, 100.0];

impl RunConfig {
    pub fn from_flat(map: &FlatConfig) -> Result<Self> {
        let r = Reader::new(map);
        let model_name = r.required("model")?;
        let seed: u64 = r.get("seed", 0)?;
        let model = match model_name {
            "srw" => ModelConfig::Srw,
            "synthetic" => ModelConfig::Synthetic {
                b: r.get("synthetic.b", 0.1)?,
                p: r.get("synthetic.p", 2)?,
            },
            "saw" => ModelConfig::Saw {
                budget: r.get("saw.budget", DEFAULT_WALK_BUDGET)?,
            },
            "op" => ModelConfig::Op {
                z: r.req("op.z")?,
                samples: r.get("op.samples", 100_000)?,
            },
            other => return Err(config_err("model", format!("unknown model `{other}` (srw, synthetic, saw, op)"))),
        };
        let default_exclude = matches!(model, ModelConfig::Saw { .. });
        let kernel = KernelConfig::read(&r, default_exclude)?;
        let d = kernel.d()?;
        let n_max: usize = r.req("run.n_max")?;
        if n_max < 2 {
            return Err(config_err("run.n_max", "must be at least 2"));
        }
        let z = match r.get("run.z", "auto".to_string())?.as_str() {
            "auto" => ZChoice::Auto,
            s => ZChoice::Fixed(r.parse("run.z", s)?),
        };
        let kset_points = r.get("run.kset_points", 8usize)?;
        let quadrature = match r.raw("quadrature.kind") {
            None => QuadratureSpec::default_for(d),
            Some("tensor") => QuadratureSpec::Tensor {
                resolution: r.get("quadrature.resolution", 64)?,
            },
            Some("qmc") => QuadratureSpec::Qmc {
                node_count: r.get("quadrature.node_count", 1 << 14)?,
                seed: r.get("quadrature.seed", seed)?,
            },
            Some("graded") => QuadratureSpec::Graded {
                panels: r.get("quadrature.panels", 7)?,
                order: r.get("quadrature.order", 4)?,
            },
            Some(other) => return Err(config_err("quadrature.kind", format!("unknown kind `{other}`"))),
        };
        let k = [
            r.get("hypothesis.k1", DEFAULT_K[0])?,
            r.get("hypothesis.k2", DEFAULT_K[1])?,
            r.get("hypothesis.k3", DEFAULT_K[2])?,
            r.get("hypothesis.k4", DEFAULT_K[3])?,
            r.get("hypothesis.k5", DEFAULT_K[4])?,
        ];
        let given: Vec<Option<&str>> = ["hypothesis.gamma", "hypothesis.delta", "hypothesis.rho", "hypothesis.eps_prime"]
            .iter()
            .map(|key| r.raw(key))
            .collect();
        let hypothesis = if d > 4 {
            let dflt = HypothesisConstants::default_for(d, k).map_err(|e| config_err("hypothesis", e.to_string()))?;
            let pick = |i: usize, key: &str, dv: f64| -> Result<f64> {
                match given[i] {
                    Some(s) => r.parse(key, s),
                    None => Ok(dv),
                }
            };
            let h = HypothesisConfig {
                gamma: pick(0, "hypothesis.gamma", dflt.gamma)?,
                delta: pick(1, "hypothesis.delta", dflt.delta)?,
                rho: pick(2, "hypothesis.rho", dflt.rho)?,
                eps_prime: pick(3, "hypothesis.eps_prime", dflt.eps_prime)?,
                k,
            };
            HypothesisConstants::new(d, h.gamma, h.delta, h.rho, h.eps_prime, h.k)
                .map_err(|e| config_err("hypothesis", e.to_string()))?;
            Some(h)
        } else {
            None
        };
        let r_rule = RRule::Power {
            a: r.get("clt.r_exponent", 0.25)?,
        };
        r_rule.validate().map_err(|e| config_err("clt.r_exponent", e.to_string()))?;
        let kappa = r.get("clt.kappa", 0.5)?;
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(config_err("clt.kappa", "must lie in (0, 1)"));
        }
        let clt = CltConfig {
            r_rule,
            kappa,
            x: r.list("clt.x", &[0.0, 0.5, 1.0])?,
            k: r.list("clt.k", &[0.5, 1.0, 2.0])?,
        };
        if clt.x.iter().any(|x| x.abs() > 1.0) {
            return Err(config_err("clt.x", "points are restricted to |x| <= 1"));
        }
        r.finish()?;
        Ok(RunConfig {
            model,
            kernel,
            n_max,
            z,
            kset_points,
            quadrature,
            hypothesis,
            clt,
            seed,
        })
    }

    /// Effective configuration with every default written out.
    pub fn to_flat(&self) -> FlatConfig {
        let mut out = FlatConfig::new();
        out.insert("model".into(), self.model.name().into());
        out.insert("seed".into(), self.seed.to_string());
        match &self.model {
            ModelConfig::Srw => {}
            ModelConfig::Synthetic { b, p } => {
                out.insert("synthetic.b".into(), fmt(*b));
                out.insert("synthetic.p".into(), p.to_string());
            }
            ModelConfig::Saw { budget } => {
                out.insert("saw.budget".into(), budget.to_string());
            }
            ModelConfig::Op { z, samples } => {
                out.insert("op.z".into(), fmt(*z));
                out.insert("op.samples".into(), samples.to_string());
            }
        }
        self.kernel.write(&mut out);
        out.insert("run.n_max".into(), self.n_max.to_string());
        out.insert(
            "run.z".into(),
            match self.z {
                ZChoice::Auto => "auto".into(),
                ZChoice::Fixed(z) => fmt(z),
            },
        );
        out.insert("run.kset_points".into(), self.kset_points.to_string());
        match &self.quadrature {
            QuadratureSpec::Tensor { resolution } => {
                out.insert("quadrature.kind".into(), "tensor".into());
                out.insert("quadrature.resolution".into(), resolution.to_string());
            }
            QuadratureSpec::Qmc { node_count, seed } => {
                out.insert("quadrature.kind".into(), "qmc".into());
                out.insert("quadrature.node_count".into(), node_count.to_string());
                out.insert("quadrature.seed".into(), seed.to_string());
            }
            QuadratureSpec::Graded { panels, order } => {
                out.insert("quadrature.kind".into(), "graded".into());
                out.insert("quadrature.panels".into(), panels.to_string());
                out.insert("quadrature.order".into(), order.to_string());
            }
        }
        if let Some(h) = &self.hypothesis {
            out.insert("hypothesis.gamma".into(), fmt(h.gamma));
            out.insert("hypothesis.delta".into(), fmt(h.delta));
            out.insert("hypothesis.rho".into(), fmt(h.rho));
            out.insert("hypothesis.eps_prime".into(), fmt(h.eps_prime));
            for (i, k) in h.k.iter().enumerate() {
                out.insert(format!("hypothesis.k{}", i + 1), fmt(*k));
            }
        }
        if let RRule::Power { a } = &self.clt.r_rule {
            out.insert("clt.r_exponent".into(), fmt(*a));
        }
        out.insert("clt.kappa".into(), fmt(self.clt.kappa));
        out.insert("clt.x".into(), crate::output::join_floats(&self.clt.x));
        out.insert("clt.k".into(), crate::output::join_floats(&self.clt.k));
        out
    }

    pub fn build_kernel(&self) -> Result<Arc<StepKernel>> {
        Ok(Arc::new(self.kernel.build()?))
    }

    pub fn constants(&self, d: usize) -> Option<HypothesisConstants> {
        self.hypothesis.as_ref().and_then(|h| {
            HypothesisConstants::new(d, h.gamma, h.delta, h.rho, h.eps_prime, h.k).ok().map(|c| c.0)
        })
    }
}

fn fmt(x: f64) -> String {
    crate::output::fmt_f64(x)
}

pub fn to_flat_text(map: &FlatConfig) -> String {
    map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRW: &str = "model = srw\nkernel.d = 5\nkernel.L = 1\nrun.n_max = 40 # short\n";

    #[test]
    fn flat_defaults_and_echo() {
        let c = RunConfig::from_flat(&parse_flat(SRW).unwrap()).unwrap();
        assert_eq!(c.quadrature, QuadratureSpec::Graded { panels: 7, order: 4 });
        assert!(c.hypothesis.is_some());
        let echo = c.to_flat();
        assert_eq!(RunConfig::from_flat(&echo).unwrap(), c);
        let text = to_flat_text(&echo);
        assert_eq!(RunConfig::from_flat(&parse_flat(&text).unwrap()).unwrap(), c);
    }

    #[test]
    fn json_is_flattened() {
        let j = r#"{"model": "synthetic", "kernel": {"d": 1, "L": 2}, "run": {"n_max": 50, "z": 0.9}, "clt": {"x": [0, 0.25]}}"#;
        let c = RunConfig::from_flat(&parse_json(j).unwrap()).unwrap();
        assert_eq!(c.model, ModelConfig::Synthetic { b: 0.1, p: 2 });
        assert_eq!(c.z, ZChoice::Fixed(0.9));
        assert_eq!(c.clt.x, vec![0.0, 0.25]);
        assert!(c.hypothesis.is_none());
    }

    #[test]
    fn usage_errors_name_the_key() {
        let missing = parse_flat("model = srw\nkernel.d = 2\nrun.n_max = 10\n").unwrap();
        match RunConfig::from_flat(&missing) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "kernel.L"),
            other => panic!("{other:?}"),
        }
        let unknown = parse_flat(&format!("{SRW}kernel.Lx = 3\n")).unwrap();
        assert!(matches!(RunConfig::from_flat(&unknown), Err(Error::Config { key, .. }) if key == "kernel.Lx"));
        let bad = parse_flat("model = srw\nkernel.d = two\nkernel.L = 1\nrun.n_max = 10\n").unwrap();
        assert!(matches!(RunConfig::from_flat(&bad), Err(Error::Config { key, .. }) if key == "kernel.d"));
    }

    #[test]
    fn kernel_section_alone() {
        let k = KernelConfig::from_flat(&parse_flat("kernel.d = 1\nkernel.L = 1\nkernel.exclude_origin = true\n").unwrap()).unwrap();
        let kernel = k.build().unwrap();
        assert_eq!(kernel.len(), 2);
    }
}
