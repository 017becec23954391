//! Critical-point sequences `z_n`, diffusion sequences `b_n, c_n, v_n`, and
//! estimates of `z_c`, `A`, `v` and the susceptibility.

use serde::{Deserialize, Serialize};

use crate::engine::{laplacian_sequence, solve_column, CoefficientProvider};
use crate::error::{Error, Result};
use crate::kernels::KPoint;

/// Default constant in the interval half-width `K1 beta n^{-(d-2)/2}`.
pub const DEFAULT_K1: f64 = 10.0;

/// `z_0 = z_1 = 1`, `z_{n+1} = 1 - sum_{m=2}^{n+1} g_m(0; z_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZTrace {
    pub z: Vec<f64>,
    pub k1: f64,
    pub beta: f64,
    pub d: usize,
}

impl ZTrace {
    pub fn n_max(&self) -> usize {
        self.z.len() - 1
    }

    /// Half-width of `I_n`.
    pub fn half_width(&self, n: usize) -> f64 {
        self.k1 * self.beta * (n as f64).powf(-(self.d as f64 - 2.0) / 2.0)
    }

    /// `I_n = [z_n - w_n, z_n + w_n]` for `n >= 1`.
    pub fn interval(&self, n: usize) -> (f64, f64) {
        let w = self.half_width(n);
        (self.z[n] - w, self.z[n] + w)
    }

    /// Whether `I_{n+1}` lies inside `I_n`.
    pub fn nested(&self, n: usize) -> bool {
        let (a, b) = self.interval(n);
        let (c, e) = self.interval(n + 1);
        a <= c && e <= b
    }
}

pub fn zn_sequence(provider: &dyn CoefficientProvider, n_max: usize, k1: f64) -> Result<ZTrace> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    if provider.fixed_z().is_some() {
        return Err(provider.unsupported("z-sequence (coefficients exist at a single z)"));
    }
    let mut z = vec![1.0, 1.0];
    for n in 1..n_max {
        let zn = z[n];
        let mut s = 0.0;
        for m in 2..=n + 1 {
            s += provider.g0(m, zn)?;
        }
        z.push(1.0 - s);
    }
    let k = provider.kernel();
    Ok(ZTrace {
        z,
        k1,
        beta: k.beta(),
        d: k.d(),
    })
}

/// `b_n`, `c_n`, `v_n = b_n / (1 + c_n)` and `zeta_n = sum_{m<=n} g_m(0) - 1` at fixed `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VTrace {
    pub z: f64,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub v: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl VTrace {
    pub fn n_max(&self) -> usize {
        self.v.len() - 1
    }
}

pub fn vn_sequence(provider: &dyn CoefficientProvider, z: f64, n_max: usize) -> Result<VTrace> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    let s2 = provider.kernel().sigma_sq();
    let (mut b, mut c, mut v, mut zeta) = (vec![1.0], vec![0.0], vec![1.0], vec![-1.0]);
    let (mut lap_sum, mut c_sum, mut g_sum) = (0.0, 0.0, 0.0);
    for n in 1..=n_max {
        let g0 = provider.g0(n, z)?;
        lap_sum += provider.lap_g0(n, z)?;
        c_sum += (n as f64 - 1.0) * g0;
        g_sum += g0;
        let bn = -lap_sum / s2;
        if 1.0 + c_sum == 0.0 {
            return Err(Error::Singular(format!("1 + c_{n} = 0")));
        }
        b.push(bn);
        c.push(c_sum);
        v.push(bn / (1.0 + c_sum));
        zeta.push(g_sum - 1.0);
    }
    Ok(VTrace { z, b, c, v, zeta })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZcEstimate {
    /// Root of `F(z) = 1 - z - sum_{m=2}^{N} g_m(0; z)` by bisection.
    pub z_c: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// `z_N` from the sequence, when the provider supports it.
    pub z_sequence_limit: Option<f64>,
    pub discrepancy: Option<f64>,
}

pub const DEFAULT_BRACKET: (f64, f64) = (0.5, 1.5);

fn truncated_f(provider: &dyn CoefficientProvider, n_max: usize, z: f64) -> Result<f64> {
    let mut s = 0.0;
    for m in 2..=n_max {
        s += provider.g0(m, z)?;
    }
    Ok(1.0 - z - s)
}

pub fn solve_zc(provider: &dyn CoefficientProvider, n_max: usize, tol: f64) -> Result<ZcEstimate> {
    solve_zc_in(provider, n_max, tol, DEFAULT_BRACKET)
}

pub fn solve_zc_in(provider: &dyn CoefficientProvider, n_max: usize, tol: f64, bracket: (f64, f64)) -> Result<ZcEstimate> {
    if provider.fixed_z().is_some() {
        return Err(provider.unsupported("z_c bisection (coefficients exist at a single z)"));
    }
    let (mut lo, mut hi) = bracket;
    let f_lo = truncated_f(provider, n_max, lo)?;
    let f_hi = truncated_f(provider, n_max, hi)?;
    if f_lo == 0.0 || f_hi == 0.0 {
        let z = if f_lo == 0.0 { lo } else { hi };
        return finish(provider, n_max, z, bracket, 0);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let mut iterations = 0;
    let mut root = 0.5 * (lo + hi);
    while hi - lo > tol {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = truncated_f(provider, n_max, mid)?;
        root = mid;
        if fm == 0.0 {
            break;
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        root = 0.5 * (lo + hi);
    }
    finish(provider, n_max, root, bracket, iterations)
}

fn finish(provider: &dyn CoefficientProvider, n_max: usize, z_c: f64, bracket: (f64, f64), iterations: usize) -> Result<ZcEstimate> {
    let seq = zn_sequence(provider, n_max, DEFAULT_K1).ok().map(|t| t.z[n_max]);
    Ok(ZcEstimate {
        z_c,
        bracket,
        iterations,
        z_sequence_limit: seq,
        discrepancy: seq.map(|s| (s - z_c).abs()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvEstimate {
    pub z: f64,
    pub n_max: usize,
    /// `(1 + sum e_m(0)) / sum m g_m(0)`.
    pub a_formula: f64,
    /// `f_N(0; z)`.
    pub a_limit: f64,
    pub a_discrepancy: f64,
    /// `-sum nabla^2 g_m(0) / (sigma^2 sum m g_m(0))`.
    pub v_formula: f64,
    /// `v_N`.
    pub v_limit: f64,
    pub v_discrepancy: f64,
    /// `-(nabla^2 f_N(0) - nabla^2 f_{N-1}(0)) / (sigma^2 f_N(0))`.
    pub v_increment: f64,
    /// Estimated truncation error of the series, from the decay of `|g_m(0)|`.
    pub tail_bound: f64,
}

pub fn estimate_a_v(provider: &dyn CoefficientProvider, z: f64, n_max: usize) -> Result<AvEstimate> {
    if n_max < 2 {
        return Err(Error::InvalidArgument("n_max must be >= 2".into()));
    }
    let k = provider.kernel();
    let s2 = k.sigma_sq();
    let (mut e_sum, mut mg, mut lap) = (0.0, 0.0, 0.0);
    let mut g_abs = Vec::with_capacity(n_max);
    for m in 1..=n_max {
        let g0 = provider.g0(m, z)?;
        e_sum += provider.e0(m, z)?;
        mg += m as f64 * g0;
        lap += provider.lap_g0(m, z)?;
        g_abs.push(g0.abs());
    }
    if mg == 0.0 {
        return Err(Error::Singular("sum m g_m(0) = 0".into()));
    }
    let a_formula = (1.0 + e_sum) / mg;
    let v_formula = -lap / (s2 * mg);
    let f0 = solve_column(provider, z, n_max, &KPoint::zero(k.d()), false)?;
    let lapf = laplacian_sequence(provider, z, &f0)?;
    let vt = vn_sequence(provider, z, n_max)?;
    let a_limit = f0[n_max];
    let v_limit = vt.v[n_max];
    let v_increment = -(lapf[n_max] - lapf[n_max - 1]) / (s2 * f0[n_max]);
    let finite = provider.g_support().is_some_and(|s| s <= n_max) && provider.e_support().is_some_and(|s| s <= n_max);
    let tail_bound = if finite {
        0.0
    } else {
        let d = k.d() as f64;
        let c = (n_max / 2..=n_max)
            .filter(|&m| m >= 1)
            .map(|m| g_abs[m - 1] * (m as f64).powf(d / 2.0))
            .fold(0.0, f64::max);
        if d > 4.0 {
            c * (n_max as f64).powf(-(d - 4.0) / 2.0) / ((d - 4.0) / 2.0)
        } else {
            f64::INFINITY
        }
    };
    Ok(AvEstimate {
        z,
        n_max,
        a_formula,
        a_limit,
        a_discrepancy: (a_formula - a_limit).abs(),
        v_formula,
        v_limit,
        v_discrepancy: (v_formula - v_limit).abs(),
        v_increment,
        tail_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Susceptibility {
    pub z: f64,
    /// `chi_n = sum_{j<=n} f_j(0; z)`.
    pub partial_sums: Vec<f64>,
    /// `(1 + E) / (1 - z - G)` with truncated series, when finite and positive.
    pub closed_form: Option<f64>,
    pub diverged: bool,
}

pub fn susceptibility(provider: &dyn CoefficientProvider, z: f64, n_max: usize, ceiling: f64) -> Result<Susceptibility> {
    let f0 = solve_column(provider, z, n_max, &KPoint::zero(provider.kernel().d()), false)?;
    let mut partial_sums = Vec::with_capacity(n_max + 1);
    let mut s = 0.0;
    let mut diverged = false;
    for v in &f0 {
        s += v;
        partial_sums.push(s);
        if s.abs() > ceiling || !s.is_finite() {
            diverged = true;
        }
    }
    let (mut e, mut g) = (0.0, 0.0);
    for m in 1..=n_max {
        e += provider.e0(m, z)?;
        if m >= 2 {
            g += provider.g0(m, z)?;
        }
    }
    let den = 1.0 - z - g;
    if den <= 0.0 {
        diverged = true;
    }
    let closed_form = (!diverged).then(|| (1.0 + e) / den);
    Ok(Susceptibility {
        z,
        partial_sums,
        closed_form,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::StepKernel;
    use crate::models::srw::SrwProvider;
    use crate::models::synthetic::SyntheticProvider;
    use std::sync::Arc;

    fn kern() -> Arc<StepKernel> {
        Arc::new(StepKernel::uniform_cube(1, 2, false).unwrap())
    }

    #[test]
    fn srw_sequences() {
        let p = SrwProvider::new(kern());
        let t = zn_sequence(&p, 50, DEFAULT_K1).unwrap();
        assert!(t.z.iter().all(|&z| z == 1.0));
        let v = vn_sequence(&p, 0.8, 10).unwrap();
        assert!(v.v[1..].iter().all(|&x| (x - 0.8).abs() < 1e-15));
        assert_eq!(solve_zc(&p, 20, 1e-14).unwrap().z_c, 1.0);
    }

    #[test]
    fn synthetic_critical_point() {
        let p = SyntheticProvider::single_g2(kern(), 0.1, 2);
        let want = (-1.0 + 1.4f64.sqrt()) / 0.2;
        let zc = solve_zc(&p, 50, 1e-14).unwrap();
        assert!((zc.z_c - want).abs() < 1e-12);
        assert!(zc.discrepancy.unwrap() < 1e-12);
        let t = zn_sequence(&p, 3, DEFAULT_K1).unwrap();
        assert_eq!(t.z[2], 0.9);
        let v = vn_sequence(&p, want, 5).unwrap();
        assert!((v.b[5] - (want + 0.2 * want * want)).abs() < 1e-14);
        assert!((v.c[5] - 0.1 * want * want).abs() < 1e-15);
    }

    #[test]
    fn a_and_v_for_synthetic() {
        let p = SyntheticProvider::single_g2(kern(), 0.1, 2);
        let zc = solve_zc(&p, 50, 1e-15).unwrap().z_c;
        let est = estimate_a_v(&p, zc, 2000).unwrap();
        assert!((est.a_formula - 1.0 / (zc + 0.2 * zc * zc)).abs() < 1e-12);
        assert!(est.a_discrepancy < 1e-6);
        assert!((est.v_formula - 1.0).abs() < 1e-12);
        assert!(est.v_discrepancy < 1e-6);
        assert_eq!(est.tail_bound, 0.0);
    }

    #[test]
    fn susceptibility_cases() {
        let p = SrwProvider::new(kern());
        let s = susceptibility(&p, 1.0, 100, 1e6).unwrap();
        assert!(s.diverged && s.closed_form.is_none());
        assert_eq!(s.partial_sums[100], 101.0);
        let s = susceptibility(&p, 0.5, 60, 1e6).unwrap();
        assert_eq!(s.closed_form, Some(2.0));
        assert!((s.partial_sums[60] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bracket_failure() {
        let p = SyntheticProvider::single_g2(kern(), 0.1, 2);
        assert!(matches!(solve_zc_in(&p, 10, 1e-12, (0.95, 1.5)), Err(Error::Bracket { .. })));
    }
}
