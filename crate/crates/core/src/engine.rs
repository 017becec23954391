//! Forward recursion `f_{n+1}(k) = sum_{m=1}^{n+1} g_m(k) f_{n+1-m}(k) + e_{n+1}(k)`, `f_0 = 1`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{KPoint, StepKernel};
use crate::quadrature::{build_rule, QuadratureSpec};

/// Source of the coefficient sequences `g_m(k; z)` and `e_m(k; z)`, `m >= 1`.
pub trait CoefficientProvider: Send + Sync {
    fn name(&self) -> &str;

    fn kernel(&self) -> &StepKernel;

    /// Largest index available, `None` when unbounded.
    fn max_m(&self) -> Option<usize>;

    fn g(&self, m: usize, k: &KPoint, z: f64) -> Result<f64>;

    fn e(&self, m: usize, k: &KPoint, z: f64) -> Result<f64>;

    /// Largest `m` with possibly nonzero `g_m`, `None` when unknown.
    fn g_support(&self) -> Option<usize> {
        None
    }

    /// Largest `m` with possibly nonzero `e_m`; `Some(0)` when `e` vanishes.
    fn e_support(&self) -> Option<usize> {
        None
    }

    /// Set when the provider only has data at one value of `z`.
    fn fixed_z(&self) -> Option<f64> {
        None
    }

    fn g0(&self, m: usize, z: f64) -> Result<f64> {
        self.g(m, &KPoint::zero(self.kernel().d()), z)
    }

    fn e0(&self, m: usize, z: f64) -> Result<f64> {
        self.e(m, &KPoint::zero(self.kernel().d()), z)
    }

    /// `nabla^2 g_m(0; z)`.
    fn lap_g0(&self, _m: usize, _z: f64) -> Result<f64> {
        Err(self.unsupported("laplacian of g at k = 0"))
    }

    /// `nabla^2 e_m(0; z)`.
    fn lap_e0(&self, _m: usize, _z: f64) -> Result<f64> {
        Err(self.unsupported("laplacian of e at k = 0"))
    }

    /// `d/dz g_m(0; z)`.
    fn dz_g0(&self, _m: usize, _z: f64) -> Result<f64> {
        Err(self.unsupported("z-derivative of g at k = 0"))
    }

    /// Writes `g_m(k; z)` for `m = 1..=out.len()`.
    fn g_column(&self, k: &KPoint, z: f64, out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.g(i + 1, k, z)?;
        }
        Ok(())
    }

    /// Writes `e_m(k; z)` for `m = 1..=out.len()`.
    fn e_column(&self, k: &KPoint, z: f64, out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.e(i + 1, k, z)?;
        }
        Ok(())
    }

    fn unsupported(&self, capability: &str) -> Error {
        Error::Unsupported {
            provider: self.name().to_string(),
            capability: capability.to_string(),
        }
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::InvalidArgument("coefficient index starts at 1".into()));
        }
        match self.max_m() {
            Some(max) if m > max => Err(Error::CoefficientUnavailable { m, max }),
            _ => Ok(()),
        }
    }

    fn check_z(&self, z: f64) -> Result<()> {
        if let Some(z0) = self.fixed_z() {
            if z != z0 {
                return Err(Error::Unsupported {
                    provider: self.name().to_string(),
                    capability: format!("evaluation at z = {z}; data exists only at z = {z0}"),
                });
            }
        }
        Ok(())
    }
}

/// Tuning knobs for the forward recursion.
#[derive(Clone, Debug)]
pub struct RecursionOptions {
    /// Compensated summation of the convolution.
    pub kahan: bool,
    /// Cap on `(n_max + 1) * |kset|` table entries.
    pub max_entries: usize,
}

impl Default for RecursionOptions {
    fn default() -> Self {
        RecursionOptions {
            kahan: false,
            max_entries: 200_000_000,
        }
    }
}

/// Table of `f_n(k; z)` for `0 <= n <= n_max` and `k` in the k-set.
#[derive(Clone, Debug, Serialize)]
pub struct RecursionState {
    pub z: f64,
    pub n_max: usize,
    pub kset: Vec<KPoint>,
    /// Column-major: `f[k_index * (n_max + 1) + n]`.
    f: Vec<f64>,
    pub f0: Vec<f64>,
    pub lapf0: Option<Vec<f64>>,
}

impl RecursionState {
    pub fn f(&self, n: usize, k_index: usize) -> f64 {
        self.f[k_index * (self.n_max + 1) + n]
    }

    pub fn column(&self, k_index: usize) -> &[f64] {
        let w = self.n_max + 1;
        &self.f[k_index * w..(k_index + 1) * w]
    }

    /// Index of a k-point with identical bits.
    pub fn k_index(&self, k: &KPoint) -> Option<usize> {
        self.kset.iter().position(|p| p.same_bits(k))
    }

    pub fn lapf0(&self) -> Result<&[f64]> {
        self.lapf0
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("laplacian recursion has not been run".into()))
    }
}

pub fn run_recursion(provider: &dyn CoefficientProvider, z: f64, n_max: usize, kset: &[KPoint]) -> Result<RecursionState> {
    run_recursion_with(provider, z, n_max, kset, &RecursionOptions::default())
}

pub fn run_recursion_with(
    provider: &dyn CoefficientProvider,
    z: f64,
    n_max: usize,
    kset: &[KPoint],
    opts: &RecursionOptions,
) -> Result<RecursionState> {
    validate(provider, z, n_max)?;
    if kset.is_empty() {
        return Err(Error::InvalidArgument("empty k-set".into()));
    }
    let d = provider.kernel().d();
    if let Some(bad) = kset.iter().find(|k| k.dim() != d) {
        return Err(Error::InvalidKPoint(format!("k-point of dimension {} in a d = {d} run", bad.dim())));
    }
    let entries = (n_max + 1).saturating_mul(kset.len());
    if entries > opts.max_entries {
        return Err(Error::MemoryCap {
            what: "recursion table".into(),
            required: entries as u128,
            cap: opts.max_entries as u128,
        });
    }
    let columns: Vec<Vec<f64>> = kset
        .par_iter()
        .map(|k| solve_column(provider, z, n_max, k, opts.kahan))
        .collect::<Result<_>>()?;
    let f0 = solve_column(provider, z, n_max, &KPoint::zero(d), opts.kahan)?;
    Ok(RecursionState {
        z,
        n_max,
        kset: kset.to_vec(),
        f: columns.concat(),
        f0,
        lapf0: None,
    })
}

fn validate(provider: &dyn CoefficientProvider, z: f64, n_max: usize) -> Result<()> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidArgument(format!("z = {z} must be positive")));
    }
    provider.check_z(z)?;
    if let Some(max) = provider.max_m() {
        if n_max > max {
            return Err(Error::CoefficientUnavailable { m: n_max, max });
        }
    }
    Ok(())
}

/// `f_0(k), ..., f_{n_max}(k)` for a single k-point.
pub fn solve_column(provider: &dyn CoefficientProvider, z: f64, n_max: usize, k: &KPoint, kahan: bool) -> Result<Vec<f64>> {
    let gs = provider.g_support().map_or(n_max, |s| s.min(n_max));
    let es = provider.e_support().map_or(n_max, |s| s.min(n_max));
    let mut g = vec![0.0; gs];
    let mut e = vec![0.0; es];
    provider.g_column(k, z, &mut g)?;
    provider.e_column(k, z, &mut e)?;
    let mut f = vec![0.0; n_max + 1];
    f[0] = 1.0;
    for n1 in 1..=n_max {
        let top = n1.min(gs);
        let mut acc = 0.0;
        if kahan {
            let mut c = 0.0;
            for m in 1..=top {
                let y = g[m - 1] * f[n1 - m] - c;
                let t = acc + y;
                c = (t - acc) - y;
                acc = t;
            }
        } else {
            for m in 1..=top {
                acc += g[m - 1] * f[n1 - m];
            }
        }
        if n1 <= es {
            acc += e[n1 - 1];
        }
        f[n1] = acc;
    }
    Ok(f)
}

/// Runs the companion recursion for `nabla^2 f_n(0)` and stores it in the state.
pub fn laplacian_recursion(provider: &dyn CoefficientProvider, state: &mut RecursionState) -> Result<()> {
    let lap = laplacian_sequence(provider, state.z, &state.f0)?;
    state.lapf0 = Some(lap);
    Ok(())
}

/// `nabla^2 f_n(0)` for `n = 0..f0.len()`, given `f_n(0)`.
pub fn laplacian_sequence(provider: &dyn CoefficientProvider, z: f64, f0: &[f64]) -> Result<Vec<f64>> {
    let n_max = f0.len().saturating_sub(1);
    let gs = provider.g_support().map_or(n_max, |s| s.min(n_max));
    let es = provider.e_support().map_or(n_max, |s| s.min(n_max));
    let mut g0 = Vec::with_capacity(gs);
    let mut lg = Vec::with_capacity(gs);
    for m in 1..=gs {
        g0.push(provider.g0(m, z)?);
        lg.push(provider.lap_g0(m, z)?);
    }
    let mut le = Vec::with_capacity(es);
    for m in 1..=es {
        le.push(provider.lap_e0(m, z)?);
    }
    let mut lap = vec![0.0; n_max + 1];
    for n1 in 1..=n_max {
        let mut acc = 0.0;
        for m in 1..=n1.min(gs) {
            acc += g0[m - 1] * lap[n1 - m] + lg[m - 1] * f0[n1 - m];
        }
        if n1 <= es {
            acc += le[n1 - 1];
        }
        lap[n1] = acc;
    }
    Ok(lap)
}

/// `||Dhat^2 f_j||_1` for each `j` in `js`, via a dedicated recursion on quadrature nodes.
pub fn weighted_l1_norms(provider: &dyn CoefficientProvider, z: f64, js: &[usize], quadrature: &QuadratureSpec) -> Result<Vec<f64>> {
    let d = provider.kernel().d();
    let rule = build_rule(quadrature, d)?;
    let n_max = js.iter().copied().max().unwrap_or(0).max(1);
    validate(provider, z, n_max)?;
    let kernel = provider.kernel();
    let partial: Vec<Vec<f64>> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(k, &w)| {
            let col = solve_column(provider, z, n_max, k, false)?;
            let dh = kernel.dhat(k);
            let dh2 = dh * dh;
            Ok(js.iter().map(|&j| w * dh2 * col[j].abs()).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; js.len()];
    for row in &partial {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok(out)
}

pub fn weighted_l1_norm(provider: &dyn CoefficientProvider, state: &RecursionState, j: usize, quadrature: &QuadratureSpec) -> Result<f64> {
    if j > state.n_max {
        return Err(Error::InvalidArgument(format!("j = {j} exceeds n_max = {}", state.n_max)));
    }
    Ok(weighted_l1_norms(provider, state.z, &[j], quadrature)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::srw::SrwProvider;
    use crate::models::synthetic::SyntheticProvider;
    use std::sync::Arc;

    fn kern(d: usize, l: u32) -> Arc<StepKernel> {
        Arc::new(StepKernel::uniform_cube(d, l, false).unwrap())
    }

    #[test]
    fn srw_is_power_of_dhat() {
        let k = kern(1, 2);
        let p = SrwProvider::new(k.clone());
        let pts = vec![KPoint::new(vec![std::f64::consts::PI / 2.0]).unwrap()];
        let s = run_recursion(&p, 1.0, 3, &pts).unwrap();
        assert!((s.f(3, 0) + 0.008).abs() < 1e-15);
        assert_eq!(s.f0, vec![1.0; 4]);
    }

    #[test]
    fn synthetic_second_step() {
        let k = kern(1, 2);
        let p = SyntheticProvider::single_g2(k, 0.1, 2);
        let s = run_recursion(&p, 1.0, 2, &[KPoint::zero(1)]).unwrap();
        assert!((s.f(2, 0) - 1.1).abs() < 1e-15);
        assert_eq!(s.f(2, 0).to_bits(), s.f0[2].to_bits());
    }

    #[test]
    fn laplacian_matches_closed_forms() {
        let k = kern(1, 2);
        let srw = SrwProvider::new(k.clone());
        let mut s = run_recursion(&srw, 1.0, 50, &[KPoint::zero(1)]).unwrap();
        laplacian_recursion(&srw, &mut s).unwrap();
        for (n, v) in s.lapf0().unwrap().iter().enumerate() {
            assert_eq!(*v, -(n as f64) * 2.0);
        }
        let syn = SyntheticProvider::single_g2(k, 0.1, 2);
        let mut s = run_recursion(&syn, 1.0, 2, &[KPoint::zero(1)]).unwrap();
        laplacian_recursion(&syn, &mut s).unwrap();
        // f_2(k) = 1.1 Dhat(k)^2 at z = 1, so nabla^2 f_2(0) = -2.2 sigma^2.
        assert!((s.lapf0().unwrap()[2] + 4.4).abs() < 1e-14);
    }

    #[test]
    fn argument_errors() {
        let p = SrwProvider::new(kern(1, 1));
        assert!(run_recursion(&p, 1.0, 0, &[KPoint::zero(1)]).is_err());
        assert!(run_recursion(&p, 0.0, 3, &[KPoint::zero(1)]).is_err());
        assert!(run_recursion(&p, 1.0, 3, &[]).is_err());
        let opts = RecursionOptions { kahan: false, max_entries: 10 };
        assert!(matches!(
            run_recursion_with(&p, 1.0, 20, &[KPoint::zero(1)], &opts),
            Err(Error::MemoryCap { .. })
        ));
    }

    #[test]
    fn l1_norm_parseval() {
        let k = kern(1, 2);
        let p = SrwProvider::new(k.clone());
        let q = QuadratureSpec::Tensor { resolution: 64 };
        let v = weighted_l1_norms(&p, 1.0, &[0, 2], &q).unwrap();
        assert!((v[0] - 0.2).abs() < 1e-15);
        // D^{*4}(0) from the x-space convolution.
        let mut c = vec![1.0f64];
        for _ in 0..4 {
            let mut nxt = vec![0.0; c.len() + 4];
            for (i, ci) in c.iter().enumerate() {
                for s in 0..5 {
                    nxt[i + s] += ci * 0.2;
                }
            }
            c = nxt;
        }
        assert!((v[1] - c[8]).abs() < 1e-15);
    }
}
