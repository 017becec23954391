//! Gaussian profile, diffusive scaling, L1 decay and the cube-averaged local CLT.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::engine::{solve_column, weighted_l1_norms, CoefficientProvider, RecursionState};
use crate::error::{Error, Result};
use crate::kernels::{KPoint, StepKernel};
use crate::models::saw::SawTables;
use crate::quadrature::{build_rule, QuadratureSpec};

fn scaled_point(k: &[f64], v: f64, sigma_sq: f64, n: usize) -> Vec<f64> {
    let s = (v * sigma_sq * n as f64).sqrt();
    k.iter().map(|c| c / s).collect()
}

/// K-points `k / sqrt(v sigma^2 n)` needed by [`gaussian_profile_check`]; points
/// leaving the torus are dropped.
pub fn profile_kset(kernel: &StepKernel, v: f64, k_list: &[Vec<f64>], n_list: &[usize]) -> Vec<KPoint> {
    let mut out: Vec<KPoint> = Vec::new();
    for &n in n_list {
        for k in k_list {
            if let Ok(p) = KPoint::new(scaled_point(k, v, kernel.sigma_sq(), n)) {
                if !out.iter().any(|q| q.same_bits(&p)) {
                    out.push(p);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub n: usize,
    pub k: Vec<f64>,
    pub f: f64,
    pub gaussian: f64,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub rows: Vec<ProfileRow>,
    /// `(k, n)` pairs whose scaled point left `[-pi, pi]^d` or the k-set.
    pub skipped: Vec<(Vec<f64>, usize)>,
}

impl ProfileReport {
    pub fn err(&self, k: &[f64], n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n && r.k == k).map(|r| r.err)
    }
}

/// `|f_n(k / sqrt(v sigma^2 n)) - A exp(-|k|^2 / (2d))|`.
pub fn gaussian_profile_check(
    state: &RecursionState,
    a: f64,
    v: f64,
    kernel: &StepKernel,
    k_list: &[Vec<f64>],
    n_list: &[usize],
) -> Result<ProfileReport> {
    let d = kernel.d() as f64;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &n in n_list {
        if n > state.n_max {
            return Err(Error::InvalidArgument(format!("n = {n} exceeds n_max = {}", state.n_max)));
        }
        for k in k_list {
            let idx = KPoint::new(scaled_point(k, v, kernel.sigma_sq(), n))
                .ok()
                .and_then(|p| state.k_index(&p));
            match idx {
                Some(i) => {
                    let f = state.f(n, i);
                    let k2: f64 = k.iter().map(|c| c * c).sum();
                    let gaussian = a * (-k2 / (2.0 * d)).exp();
                    rows.push(ProfileRow {
                        n,
                        k: k.clone(),
                        f,
                        gaussian,
                        err: (f - gaussian).abs(),
                    });
                }
                None => skipped.push((k.clone(), n)),
            }
        }
    }
    Ok(ProfileReport { rows, skipped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusiveRow {
    pub n: usize,
    pub ratio: f64,
    pub deviation: f64,
}

/// `ratio_n = -nabla^2 f_n(0) / (f_n(0) v sigma^2 n)`.
pub fn diffusive_check(state: &RecursionState, v: f64, kernel: &StepKernel, n_list: &[usize]) -> Result<Vec<DiffusiveRow>> {
    let lap = state.lapf0()?;
    let s2 = kernel.sigma_sq();
    n_list
        .iter()
        .map(|&n| {
            if n == 0 || n > state.n_max {
                return Err(Error::InvalidArgument(format!("n = {n} outside 1..={}", state.n_max)));
            }
            if state.f0[n] == 0.0 {
                return Err(Error::RatioUndefined { j: n, k_index: usize::MAX });
            }
            let ratio = -lap[n] / (state.f0[n] * v * s2 * n as f64);
            Ok(DiffusiveRow {
                n,
                ratio,
                deviation: (ratio - 1.0).abs(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Row {
    pub n: usize,
    pub norm: f64,
    pub normalised: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    pub exponent: f64,
    pub rows: Vec<L1Row>,
    pub max_over_min: f64,
}

/// `||Dhat^2 f_n||_1 n^exponent / beta` over `n_list`; the theorem's exponent is `d/2`.
pub fn l1_decay_check(
    provider: &dyn CoefficientProvider,
    z: f64,
    n_list: &[usize],
    quadrature: &QuadratureSpec,
    exponent: Option<f64>,
) -> Result<L1Report> {
    let kernel = provider.kernel();
    let exponent = exponent.unwrap_or(kernel.d() as f64 / 2.0);
    let norms = weighted_l1_norms(provider, z, n_list, quadrature)?;
    let beta = kernel.beta();
    let rows: Vec<L1Row> = n_list
        .iter()
        .zip(&norms)
        .map(|(&n, &norm)| L1Row {
            n,
            norm,
            normalised: norm * (n as f64).powf(exponent) / beta,
        })
        .collect();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for r in &rows {
        lo = lo.min(r.normalised);
        hi = hi.max(r.normalised);
    }
    Ok(L1Report {
        exponent,
        rows,
        max_over_min: hi / lo,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XSpaceMethod {
    InverseTransform,
    DirectFromModel,
}

/// `p_n(x)` on the box `|x|_inf <= radius`, stored densely in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XSpaceTable {
    pub n: usize,
    pub d: usize,
    pub radius: i64,
    pub method: XSpaceMethod,
    pub values: Vec<f64>,
}

impl XSpaceTable {
    fn index(&self, x: &[i64]) -> Option<usize> {
        let side = 2 * self.radius + 1;
        let mut idx = 0i64;
        for &c in x {
            if c.abs() > self.radius {
                return None;
            }
            idx = idx * side + c + self.radius;
        }
        Some(idx as usize)
    }

    pub fn get(&self, x: &[i64]) -> Option<f64> {
        self.index(x).map(|i| self.values[i])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn box_points(d: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut x = vec![-r; d];
    loop {
        out.push(x.clone());
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if x[i] < r {
                x[i] += 1;
                break;
            }
            x[i] = -r;
        }
    }
}

/// Grid size used by [`inverse_ft_pn`] when none is given: a power of two above `2 L n + 1`.
pub fn default_grid(kernel: &StepKernel, n: usize) -> usize {
    let need = 2 * kernel.l() as usize * n + 2;
    need.next_power_of_two().max(8)
}

/// `p_n(x) = (2 pi)^{-d} int e^{-ik.x} f_n(k) dk` by a discrete transform on an `M^d` grid.
pub fn inverse_ft_pn(
    provider: &dyn CoefficientProvider,
    z: f64,
    n: usize,
    grid: usize,
    radius: i64,
) -> Result<XSpaceTable> {
    let kernel = provider.kernel();
    let d = kernel.d();
    if d >= 4 {
        return Err(Error::UnsupportedDimension {
            d,
            reason: "transform mode is limited to d <= 3; use model mode or the Fourier local-CLT route".into(),
        });
    }
    if 2 * radius + 1 > grid as i64 {
        return Err(Error::Window {
            required: radius,
            available: (grid as i64 - 1) / 2,
        });
    }
    let total = grid.pow(d as u32);
    let mut data: Vec<Complex<f64>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rem = idx;
            let mut k = vec![0.0; d];
            for i in (0..d).rev() {
                let j = rem % grid;
                rem /= grid;
                let t = 2.0 * PI * j as f64 / grid as f64;
                k[i] = if 2 * j < grid { t } else { t - 2.0 * PI };
            }
            let kp = KPoint::new(k)?;
            let f = if n == 0 { 1.0 } else { solve_column(provider, z, n, &kp, false)?[n] };
            Ok(Complex::new(f, 0.0))
        })
        .collect::<Result<_>>()?;
    fft_nd(&mut data, d, grid);
    let scale = 1.0 / total as f64;
    let values = box_points(d, radius)
        .iter()
        .map(|x| {
            let idx = x
                .iter()
                .fold(0usize, |acc, &c| acc * grid + (c.rem_euclid(grid as i64)) as usize);
            data[idx].re * scale
        })
        .collect();
    Ok(XSpaceTable {
        n,
        d,
        radius,
        method: XSpaceMethod::InverseTransform,
        values,
    })
}

/// Forward transform along every axis of a row-major `m^d` array.
fn fft_nd(data: &mut [Complex<f64>], d: usize, m: usize) {
    let fft = FftPlanner::new().plan_fft_forward(m);
    let mut line = vec![Complex::new(0.0, 0.0); m];
    for axis in 0..d {
        let stride = m.pow((d - 1 - axis) as u32);
        let outer = data.len() / (m * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * m * stride + s;
                for j in 0..m {
                    line[j] = data[base + j * stride];
                }
                fft.process(&mut line);
                for j in 0..m {
                    data[base + j * stride] = line[j];
                }
            }
        }
    }
}

/// `p_n(x) = c_n(x) z^n` read from SAW tables.
pub fn pn_from_saw(tables: &SawTables, z: f64, n: usize, radius: i64) -> Result<XSpaceTable> {
    if n > tables.n_max {
        return Err(Error::CoefficientUnavailable { m: n, max: tables.n_max });
    }
    let zn = z.powi(n as i32);
    let values = box_points(tables.d, radius)
        .iter()
        .map(|x| {
            let xi: Vec<i32> = x.iter().map(|&c| c as i32).collect();
            tables.tables.value(n, &xi) * zn
        })
        .collect();
    Ok(XSpaceTable {
        n,
        d: tables.d,
        radius,
        method: XSpaceMethod::DirectFromModel,
        values,
    })
}

/// Rule for the smoothing radius `R_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RRule {
    /// `floor(n^a)` with `0 < a < 1/2`.
    Power { a: f64 },
    /// Step function: `R` for `n >= n_i`, entries sorted by `n_i`.
    Table { steps: Vec<(usize, i64)> },
}

impl RRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            RRule::Power { a } if *a > 0.0 && *a < 0.5 => Ok(()),
            RRule::Power { a } => Err(Error::InvalidArgument(format!("R_n exponent {a} outside (0, 1/2)"))),
            RRule::Table { steps } => {
                if steps.is_empty() || steps.windows(2).any(|w| w[0].0 >= w[1].0 || w[0].1 > w[1].1) {
                    return Err(Error::InvalidArgument("R_n table must be non-empty and increasing".into()));
                }
                Ok(())
            }
        }
    }

    pub fn radius(&self, n: usize) -> i64 {
        match self {
            RRule::Power { a } => (n as f64).powf(*a).floor() as i64,
            RRule::Table { steps } => steps.iter().filter(|(m, _)| *m <= n).map(|(_, r)| *r).last().unwrap_or(0),
        }
    }
}

impl Default for RRule {
    fn default() -> Self {
        RRule::Power { a: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalCltConfig {
    pub r_rule: RRule,
    /// Points in units of `sqrt(v sigma^2 n)`.
    pub xs: Vec<Vec<f64>>,
    pub kappa: f64,
}

impl LocalCltConfig {
    pub fn validate(&self) -> Result<()> {
        self.r_rule.validate()?;
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidArgument(format!("kappa = {} outside (0, 1)", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalCltRow {
    pub n: usize,
    pub x: Vec<f64>,
    pub center: Vec<i64>,
    pub r: i64,
    pub log_r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Closest lattice point to `x sqrt(v sigma^2 n)`, ties away from zero.
pub fn lattice_center(x: &[f64], v: f64, sigma_sq: f64, n: usize) -> Vec<i64> {
    let s = (v * sigma_sq * n as f64).sqrt();
    x.iter().map(|c| (c * s).round() as i64).collect()
}

/// `A (d / (2 pi n v sigma^2))^{d/2} exp(-d |x|^2 / 2)`.
pub fn local_clt_rhs(a: f64, v: f64, kernel: &StepKernel, n: usize, x: &[f64]) -> f64 {
    let d = kernel.d() as f64;
    let x2: f64 = x.iter().map(|c| c * c).sum();
    a * (d / (2.0 * PI * n as f64 * v * kernel.sigma_sq())).powf(d / 2.0) * (-d * x2 / 2.0).exp()
}

/// Cube average `(2R+1)^{-d} sum_{y in C_R(center)} p_n(y)` against the Gaussian density.
pub fn local_clt_check(table: &XSpaceTable, config: &LocalCltConfig, a: f64, v: f64, kernel: &StepKernel) -> Result<Vec<LocalCltRow>> {
    config.validate()?;
    let n = table.n;
    let r = config.r_rule.radius(n);
    let d = table.d;
    let mut rows = Vec::new();
    for x in &config.xs {
        let center = lattice_center(x, v, kernel.sigma_sq(), n);
        let need = center.iter().map(|c| c.abs()).max().unwrap_or(0) + r;
        if need > table.radius {
            return Err(Error::Window {
                required: need,
                available: table.radius,
            });
        }
        let mut sum = 0.0;
        for off in box_points(d, r) {
            let y: Vec<i64> = off.iter().zip(&center).map(|(o, c)| o + c).collect();
            sum += table.get(&y).expect("inside window");
        }
        let lhs = sum / ((2 * r + 1) as f64).powi(d as i32);
        let rhs = local_clt_rhs(a, v, kernel, n, x);
        rows.push(LocalCltRow {
            n,
            x: x.clone(),
            center,
            r,
            log_r: (r as f64).ln(),
            lhs,
            rhs,
            ratio: lhs / rhs,
        });
    }
    Ok(rows)
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..d).collect();
    fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, p, out);
            if k % 2 == 0 {
                p.swap(i, k - 1);
            } else {
                p.swap(0, k - 1);
            }
        }
    }
    heap(d, &mut p, &mut out);
    out
}

/// Same left-hand side as [`local_clt_check`], computed in Fourier variables as
/// `(2 pi)^{-d} int Qhat_R(k) f_n(k) cos(k.center) dk`.
///
/// The phase is averaged over the lattice symmetry group so the symmetric
/// quadrature rules apply in any dimension.
pub fn local_clt_fourier(
    provider: &dyn CoefficientProvider,
    z: f64,
    a: f64,
    v: f64,
    n_list: &[usize],
    config: &LocalCltConfig,
    quadrature: &QuadratureSpec,
) -> Result<Vec<LocalCltRow>> {
    config.validate()?;
    let kernel = provider.kernel();
    let d = kernel.d();
    let rule = build_rule(quadrature, d)?;
    let n_max = n_list.iter().copied().max().unwrap_or(1).max(1);
    let perms = permutations(d);
    let centers: Vec<Vec<Vec<i64>>> = n_list
        .iter()
        .map(|&n| config.xs.iter().map(|x| lattice_center(x, v, kernel.sigma_sq(), n)).collect())
        .collect();
    let radii: Vec<i64> = n_list.iter().map(|&n| config.r_rule.radius(n)).collect();
    let width = n_list.len() * config.xs.len();
    let partial: Vec<Vec<f64>> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(k, &w)| {
            let col = solve_column(provider, z, n_max, k, false)?;
            let ks = k.as_slice();
            let mut out = Vec::with_capacity(width);
            for (ni, &n) in n_list.iter().enumerate() {
                let q = dirichlet_qhat(radii[ni], k);
                for c in &centers[ni] {
                    let phase = perms
                        .iter()
                        .map(|p| p.iter().zip(c).map(|(&pi, &ci)| (ks[pi] * ci as f64).cos()).product::<f64>())
                        .sum::<f64>()
                        / perms.len() as f64;
                    out.push(w * q * col[n] * phase);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut lhs = vec![0.0; width];
    for row in &partial {
        for (o, v) in lhs.iter_mut().zip(row) {
            *o += v;
        }
    }
    let mut rows = Vec::new();
    for (ni, &n) in n_list.iter().enumerate() {
        for (xi, x) in config.xs.iter().enumerate() {
            let l = lhs[ni * config.xs.len() + xi];
            let rhs = local_clt_rhs(a, v, kernel, n, x);
            rows.push(LocalCltRow {
                n,
                x: x.clone(),
                center: centers[ni][xi].clone(),
                r: radii[ni],
                log_r: (radii[ni] as f64).ln(),
                lhs: l,
                rhs,
                ratio: l / rhs,
            });
        }
    }
    Ok(rows)
}

/// `prod_i sin((2R+1) k_i / 2) / ((2R+1) sin(k_i / 2))`, equal to 1 at `k_i = 0`.
pub fn dirichlet_qhat(r: i64, k: &KPoint) -> f64 {
    let w = (2 * r + 1) as f64;
    k.as_slice()
        .iter()
        .map(|&t| {
            if t.abs() < 1e-8 {
                1.0 - (w * w - 1.0) * t * t / 24.0
            } else {
                (w * t / 2.0).sin() / (w * (t / 2.0).sin())
            }
        })
        .product()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityRow {
    pub n: usize,
    pub r: i64,
    /// `p_n(0)` over the Gaussian density.
    pub unaveraged_ratio: f64,
    /// Cube average over the Gaussian density.
    pub averaged_ratio: f64,
}

/// Pointwise and cube-averaged local CLT ratios at `x = 0` for a walk provider.
pub fn parity_demo(provider: &dyn CoefficientProvider, n_list: &[usize], rule: &RRule) -> Result<Vec<ParityRow>> {
    let kernel = provider.kernel();
    let config = LocalCltConfig {
        r_rule: rule.clone(),
        xs: vec![vec![0.0; kernel.d()]],
        kappa: 0.5,
    };
    n_list
        .iter()
        .map(|&n| {
            let r = rule.radius(n);
            let table = inverse_ft_pn(provider, 1.0, n, default_grid(kernel, n), r.max(1))?;
            let row = &local_clt_check(&table, &config, 1.0, 1.0, kernel)?[0];
            let p0 = table.get(&vec![0; kernel.d()]).unwrap();
            Ok(ParityRow {
                n,
                r,
                unaveraged_ratio: p0 / row.rhs,
                averaged_ratio: row.ratio,
            })
        })
        .collect()
}
