//! Spread-out step kernels on Z^d and their Fourier transforms.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Cap on `d * |box|` integer entries materialised while building a kernel.
pub const DEFAULT_SUPPORT_CAP: u128 = 20_000_000;

/// A point of the torus `[-pi, pi]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KPoint(Vec<f64>);

impl KPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidKPoint("empty coordinate vector".into()));
        }
        for (i, &c) in coords.iter().enumerate() {
            if !c.is_finite() || c.abs() > PI {
                return Err(Error::InvalidKPoint(format!(
                    "coordinate {i} = {c} outside [-pi, pi]"
                )));
            }
        }
        Ok(KPoint(coords))
    }

    pub fn zero(d: usize) -> Self {
        KPoint(vec![0.0; d])
    }

    /// `t * e_axis`.
    pub fn axis(d: usize, axis: usize, t: f64) -> Result<Self> {
        let mut v = vec![0.0; d];
        if axis >= d {
            return Err(Error::InvalidKPoint(format!("axis {axis} >= d = {d}")));
        }
        v[axis] = t;
        KPoint::new(v)
    }

    /// `(t, t, ..., t)`.
    pub fn diagonal(d: usize, t: f64) -> Result<Self> {
        KPoint::new(vec![t; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Bitwise identity, used for table lookups.
    pub fn same_bits(&self, other: &KPoint) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl TryFrom<Vec<f64>> for KPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        KPoint::new(v)
    }
}

impl From<KPoint> for Vec<f64> {
    fn from(k: KPoint) -> Vec<f64> {
        k.0
    }
}

/// A finitely supported, symmetric probability distribution on Z^d.
#[derive(Clone, Debug, PartialEq)]
pub struct StepKernel {
    label: String,
    d: usize,
    l: u32,
    exclude_origin: bool,
    epsilon: f64,
    points: Vec<i32>,
    points_f: Vec<f64>,
    weights: Vec<f64>,
    uniform_count: Option<u64>,
    sigma_sq: f64,
    sup_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct KernelJson {
    label: String,
    d: usize,
    #[serde(rename = "L")]
    l: u32,
    exclude_origin: bool,
    epsilon: f64,
    weights: Vec<(Vec<i32>, f64)>,
}

fn check_dims(d: usize, l: u32) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidKernel("dimension must be >= 1".into()));
    }
    if l == 0 {
        return Err(Error::InvalidKernel("spread-out parameter L must be >= 1".into()));
    }
    Ok(())
}

fn box_entries(d: usize, radius: i64) -> u128 {
    let side = (2 * radius + 1) as u128;
    let mut n: u128 = d as u128;
    for _ in 0..d {
        n = n.saturating_mul(side);
    }
    n
}

/// Lexicographic odometer over `[-r, r]^d`.
fn for_each_box_point(d: usize, r: i32, mut f: impl FnMut(&[i32])) {
    let mut x = vec![-r; d];
    loop {
        f(&x);
        let mut i = d;
        loop {
            if i == 0 {
                return;
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

impl StepKernel {
    /// Uniform distribution on `[-L, L]^d ∩ Z^d`, optionally without the origin.
    pub fn uniform_cube(d: usize, l: u32, exclude_origin: bool) -> Result<Self> {
        Self::uniform_cube_with_cap(d, l, exclude_origin, DEFAULT_SUPPORT_CAP)
    }

    pub fn uniform_cube_with_cap(d: usize, l: u32, exclude_origin: bool, cap: u128) -> Result<Self> {
        check_dims(d, l)?;
        let need = box_entries(d, l as i64);
        if need > cap {
            return Err(Error::MemoryCap {
                what: format!("uniform cube d={d} L={l}"),
                required: need,
                cap,
            });
        }
        let mut points = Vec::new();
        for_each_box_point(d, l as i32, |x| {
            if !(exclude_origin && x.iter().all(|&c| c == 0)) {
                points.extend_from_slice(x);
            }
        });
        let count = points.len() / d;
        let w = 1.0 / count as f64;
        let label = format!(
            "uniform-cube d={d} L={l}{}",
            if exclude_origin { " no-origin" } else { "" }
        );
        Ok(Self::assemble(label, d, l, exclude_origin, 1.0, points, vec![w; count]))
    }

    /// `D(x) = h(x/L) / sum_y h(y/L)` over the box `|x_i| <= floor(radius * L)`.
    pub fn from_density<F>(h: F, d: usize, l: u32, radius: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        Self::from_density_with_cap(h, d, l, radius, DEFAULT_SUPPORT_CAP)
    }

    pub fn from_density_with_cap<F>(h: F, d: usize, l: u32, radius: f64, cap: u128) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        check_dims(d, l)?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidKernel(format!("radius {radius} must be positive")));
        }
        let r = (radius * l as f64).floor() as i64;
        let need = box_entries(d, r);
        if need > cap {
            return Err(Error::MemoryCap {
                what: format!("density box d={d} radius={r}"),
                required: need,
                cap,
            });
        }
        let r = r as i32;
        let lf = l as f64;
        let mut values = Vec::new();
        let mut y = vec![0.0; d];
        let mut bad = None;
        for_each_box_point(d, r, |x| {
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi = xi as f64 / lf;
            }
            let v = h(&y);
            if !(v.is_finite() && v >= 0.0) && bad.is_none() {
                bad = Some((x.to_vec(), v));
            }
            values.push(v);
        });
        if let Some((x, v)) = bad {
            return Err(Error::InvalidKernel(format!("density value {v} at {x:?} is not finite and non-negative")));
        }
        check_box_symmetry(&values, d, r)?;
        let norm: f64 = values.iter().sum();
        if !(norm > 0.0) {
            return Err(Error::InvalidKernel("density normaliser is zero".into()));
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = 0;
        for_each_box_point(d, r, |x| {
            let v = values[idx];
            idx += 1;
            if v > 0.0 {
                points.extend_from_slice(x);
                weights.push(v / norm);
            }
        });
        if weights.len() == 1 && points.iter().all(|&c| c == 0) {
            return Err(Error::InvalidKernel(
                "degenerate normaliser: all mass sits at the origin".into(),
            ));
        }
        let exclude_origin = !has_origin(&points, d);
        let label = format!("density d={d} L={l} radius={radius}");
        Ok(Self::assemble(label, d, l, exclude_origin, 1.0, points, weights))
    }

    /// Override the moment order recorded for the kernel.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidKernel(format!("epsilon {epsilon} must be positive")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    fn assemble(
        label: String,
        d: usize,
        l: u32,
        exclude_origin: bool,
        epsilon: f64,
        points: Vec<i32>,
        weights: Vec<f64>,
    ) -> Self {
        let count = weights.len();
        let uniform = weights.iter().all(|&w| w == 1.0 / count as f64);
        let uniform_count = uniform.then_some(count as u64);
        let sigma_sq = if uniform {
            let s: i128 = points.chunks(d).map(|x| x.iter().map(|&c| (c as i128) * (c as i128)).sum::<i128>()).sum();
            s as f64 / count as f64
        } else {
            points
                .chunks(d)
                .zip(&weights)
                .map(|(x, &w)| w * x.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>())
                .sum()
        };
        let sup_norm = weights.iter().cloned().fold(0.0, f64::max);
        let points_f = points.iter().map(|&c| c as f64).collect();
        StepKernel {
            label,
            d,
            l,
            exclude_origin,
            epsilon,
            points,
            points_f,
            weights,
            uniform_count,
            sigma_sq,
            sup_norm,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn l(&self) -> u32 {
        self.l
    }
    pub fn exclude_origin(&self) -> bool {
        self.exclude_origin
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    /// `L^{-d}`.
    pub fn beta(&self) -> f64 {
        (self.l as f64).powi(-(self.d as i32))
    }
    /// `sum_x |x|^2 D(x)`.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
    /// `sup D * L^d`.
    pub fn sup_constant(&self) -> f64 {
        self.sup_norm * (self.l as f64).powi(self.d as i32)
    }
    /// Support size when every weight equals `1 / |S|`.
    pub fn uniform_count(&self) -> Option<u64> {
        self.uniform_count
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn point(&self, i: usize) -> &[i32] {
        &self.points[i * self.d..(i + 1) * self.d]
    }
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
    /// Support points in lexicographic order with their weights.
    pub fn iter(&self) -> impl Iterator<Item = (&[i32], f64)> + '_ {
        self.points.chunks(self.d).zip(self.weights.iter().copied())
    }

    /// `D(x)`, zero off the support.
    pub fn weight_at(&self, x: &[i32]) -> f64 {
        let n = self.len();
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.point(mid).cmp(x) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return self.weights[mid],
            }
        }
        0.0
    }

    /// `a(k) = sum_x D(x) (1 - cos(k.x))`, evaluated as `2 sin^2(k.x / 2)`.
    pub fn a_raw(&self, k: &[f64]) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        for (x, &w) in self.points_f.chunks(d).zip(&self.weights) {
            let mut dot = 0.0;
            for i in 0..d {
                dot += k[i] * x[i];
            }
            let s = (0.5 * dot).sin();
            acc += w * 2.0 * s * s;
        }
        acc
    }

    /// `Dhat(k)`, defined as `1 - a(k)`.
    pub fn dhat_raw(&self, k: &[f64]) -> f64 {
        1.0 - self.a_raw(k)
    }

    pub fn dhat(&self, k: &KPoint) -> f64 {
        self.dhat_raw(k.as_slice())
    }

    /// `1 - Dhat(k)`.
    pub fn a_of_k(&self, k: &KPoint) -> f64 {
        self.a_raw(k.as_slice())
    }

    /// `sum_x |x|^p D(x)`.
    pub fn moment(&self, p: f64) -> f64 {
        self.points_f
            .chunks(self.d)
            .zip(&self.weights)
            .map(|(x, &w)| {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                w * r.powf(p)
            })
            .sum()
    }

    /// `sum_x D(x)^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn to_json(&self) -> String {
        let j = KernelJson {
            label: self.label.clone(),
            d: self.d,
            l: self.l,
            exclude_origin: self.exclude_origin,
            epsilon: self.epsilon,
            weights: self.iter().map(|(x, w)| (x.to_vec(), w)).collect(),
        };
        serde_json::to_string(&j).expect("kernel serialisation")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: KernelJson = serde_json::from_str(s)?;
        check_dims(j.d, j.l)?;
        if !(j.epsilon.is_finite() && j.epsilon > 0.0) {
            return Err(Error::InvalidKernel("epsilon must be positive".into()));
        }
        if j.weights.is_empty() {
            return Err(Error::InvalidKernel("empty support".into()));
        }
        let mut points = Vec::with_capacity(j.weights.len() * j.d);
        let mut weights = Vec::with_capacity(j.weights.len());
        for (i, (x, w)) in j.weights.iter().enumerate() {
            if x.len() != j.d {
                return Err(Error::InvalidKernel(format!("entry {i} has dimension {}", x.len())));
            }
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidKernel(format!("entry {i} has weight {w}")));
            }
            if i > 0 && j.weights[i - 1].0.as_slice() >= x.as_slice() {
                return Err(Error::InvalidKernel("entries not in strict lexicographic order".into()));
            }
            points.extend_from_slice(x);
            weights.push(*w);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidKernel(format!("weights sum to {total}")));
        }
        if j.exclude_origin == has_origin(&points, j.d) {
            return Err(Error::InvalidKernel("exclude_origin flag contradicts support".into()));
        }
        let k = Self::assemble(j.label, j.d, j.l, j.exclude_origin, j.epsilon, points, weights);
        k.check_symmetry()?;
        Ok(k)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        hex_sha256(self.to_json().as_bytes())
    }

    fn check_symmetry(&self) -> Result<()> {
        let d = self.d;
        let mut y = vec![0i32; d];
        for (x, w) in self.iter() {
            for g in 0..(2 * d - 1) {
                y.copy_from_slice(x);
                if g < d {
                    y[g] = -y[g];
                } else {
                    y.swap(g - d, g - d + 1);
                }
                let wy = self.weight_at(&y);
                if (wy - w).abs() > 1e-12 * w {
                    return Err(Error::InvalidKernel(format!(
                        "asymmetric weights: D({x:?}) = {w}, D({y:?}) = {wy}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn has_origin(points: &[i32], d: usize) -> bool {
    points.chunks(d).any(|x| x.iter().all(|&c| c == 0))
}

fn check_box_symmetry(values: &[f64], d: usize, r: i32) -> Result<()> {
    let side = (2 * r + 1) as usize;
    let index = |x: &[i32]| x.iter().fold(0usize, |acc, &c| acc * side + (c + r) as usize);
    let mut y = vec![0i32; d];
    let mut err = None;
    for_each_box_point(d, r, |x| {
        if err.is_some() {
            return;
        }
        let v = values[index(x)];
        for g in 0..(2 * d - 1) {
            y.copy_from_slice(x);
            if g < d {
                y[g] = -y[g];
            } else {
                y.swap(g - d, g - d + 1);
            }
            let vy = values[index(&y)];
            if (v - vy).abs() > 1e-12 * v.abs().max(vy.abs()) {
                err = Some(Error::InvalidKernel(format!(
                    "density is not lattice-symmetric: h at {x:?} = {v}, at {y:?} = {vy}"
                )));
                return;
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Numerical check of the Fourier bounds required of `D`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AssumptionDReport {
    pub label: String,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub beta: f64,
    pub sigma_sq: f64,
    pub sigma_sq_over_l_sq: f64,
    pub epsilon: f64,
    pub moment_2_2eps: f64,
    pub sup_norm: f64,
    pub sup_constant: f64,
    pub grid_resolution: usize,
    pub grid_points: usize,
    /// Smallest and largest `a(k) / (L^2 |k|^2)` over `0 < |k|_inf <= 1/L`.
    pub c1: f64,
    pub c2: f64,
    /// Smallest `a(k)` over `|k|_inf >= 1/L`.
    pub eta_low: f64,
    /// `2 - max_k a(k)`.
    pub eta_high: f64,
    pub small_k_pass: bool,
    pub large_k_pass: bool,
    pub global_pass: bool,
}

impl AssumptionDReport {
    pub fn all_pass(&self) -> bool {
        self.small_k_pass && self.large_k_pass && self.global_pass
    }
}

const CHECK_FLOOR: f64 = 1e-12;

/// Sample `a(k)` on a symmetric grid and fit the constants of the three Fourier bounds.
///
/// Per axis the grid is `resolution` equispaced nodes on `[0, pi]` joined with
/// `resolution` nodes on `[0, 1/L]`. Lattice symmetry of `a` reduces the tensor
/// product to non-decreasing tuples.
pub fn check_assumption_d(kernel: &StepKernel, resolution: usize) -> Result<AssumptionDReport> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be >= 2".into()));
    }
    let d = kernel.d();
    let lf = kernel.l() as f64;
    let inv_l = (1.0 / lf).min(PI);
    let mut axis: Vec<f64> = (0..resolution)
        .map(|j| PI * j as f64 / (resolution - 1) as f64)
        .chain((0..resolution).map(|j| inv_l * j as f64 / (resolution - 1) as f64))
        .collect();
    axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    axis.dedup();
    let tuples = sorted_tuples(axis.len(), d);
    let grid_points = tuples.len() / d;

    #[derive(Clone, Copy)]
    struct Acc {
        c1: f64,
        c2: f64,
        eta_low: f64,
        a_max: f64,
    }
    let init = Acc {
        c1: f64::INFINITY,
        c2: 0.0,
        eta_low: f64::INFINITY,
        a_max: 0.0,
    };
    let factors = CubeFactors::new(kernel, &axis);
    let acc = tuples
        .par_chunks(d)
        .fold(
            || init,
            |mut acc, t| {
                let k: Vec<f64> = t.iter().map(|&i| axis[i]).collect();
                let a = match &factors {
                    Some(f) => f.a(t),
                    None => kernel.a_raw(&k),
                };
                let ninf = k.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                let k2: f64 = k.iter().map(|c| c * c).sum();
                if ninf > 0.0 && ninf <= inv_l {
                    let ratio = a / (lf * lf * k2);
                    acc.c1 = acc.c1.min(ratio);
                    acc.c2 = acc.c2.max(ratio);
                }
                if ninf >= inv_l {
                    acc.eta_low = acc.eta_low.min(a);
                }
                acc.a_max = acc.a_max.max(a);
                acc
            },
        )
        .reduce(
            || init,
            |x, y| Acc {
                c1: x.c1.min(y.c1),
                c2: x.c2.max(y.c2),
                eta_low: x.eta_low.min(y.eta_low),
                a_max: x.a_max.max(y.a_max),
            },
        );
    let eta_high = 2.0 - acc.a_max;
    Ok(AssumptionDReport {
        label: kernel.label().to_string(),
        d,
        l: kernel.l(),
        beta: kernel.beta(),
        sigma_sq: kernel.sigma_sq(),
        sigma_sq_over_l_sq: kernel.sigma_sq() / (lf * lf),
        epsilon: kernel.epsilon(),
        moment_2_2eps: kernel.moment(2.0 + 2.0 * kernel.epsilon()),
        sup_norm: kernel.sup_norm(),
        sup_constant: kernel.sup_constant(),
        grid_resolution: resolution,
        grid_points,
        c1: acc.c1,
        c2: acc.c2,
        eta_low: acc.eta_low,
        eta_high,
        small_k_pass: acc.c1.is_finite() && acc.c1 > CHECK_FLOOR,
        large_k_pass: acc.eta_low > CHECK_FLOOR,
        global_pass: eta_high > CHECK_FLOOR,
    })
}

/// Per-axis factors of `a(k)` for uniform cube kernels:
/// `a(k) = (N / count) (1 - prod_i (1 - b(k_i)))` with `N = (2L+1)^d`.
struct CubeFactors {
    /// `ln(1 - b)` per grid node, `None` when `1 - b <= 0`.
    log_one_minus: Vec<Option<f64>>,
    one_minus: Vec<f64>,
    scale: f64,
}

impl CubeFactors {
    fn new(kernel: &StepKernel, axis: &[f64]) -> Option<Self> {
        let side = 2 * kernel.l() as u64 + 1;
        let full = side.checked_pow(kernel.d() as u32)?;
        let count = kernel.uniform_count()?;
        let is_cube = count == full - kernel.exclude_origin() as u64
            && kernel.len() as u64 == count
            && kernel.iter().all(|(x, _)| x.iter().all(|c| c.unsigned_abs() <= kernel.l()));
        if !is_cube {
            return None;
        }
        let l = kernel.l() as i64;
        let b: Vec<f64> = axis
            .iter()
            .map(|&t| {
                (-l..=l)
                    .map(|j| {
                        let s = (0.5 * j as f64 * t).sin();
                        2.0 * s * s
                    })
                    .sum::<f64>()
                    / side as f64
            })
            .collect();
        Some(CubeFactors {
            log_one_minus: b.iter().map(|&v| (v < 1.0).then(|| (-v).ln_1p())).collect(),
            one_minus: b.iter().map(|&v| 1.0 - v).collect(),
            scale: full as f64 / count as f64,
        })
    }

    fn a(&self, t: &[usize]) -> f64 {
        let logs: Option<f64> = t.iter().map(|&i| self.log_one_minus[i]).sum();
        let full = match logs {
            Some(s) => -s.exp_m1(),
            None => 1.0 - t.iter().map(|&i| self.one_minus[i]).product::<f64>(),
        };
        self.scale * full
    }
}

/// All non-decreasing index tuples of length `d` over `0..n`, flattened.
pub(crate) fn sorted_tuples(n: usize, d: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = vec![0usize; d];
    loop {
        out.extend_from_slice(&t);
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if t[i] + 1 < n {
                t[i] += 1;
                let v = t[i];
                for tj in t.iter_mut().skip(i + 1) {
                    *tj = v;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_factors_match_direct_sum() {
        for (d, l, ex) in [(1, 1, true), (2, 3, false), (3, 2, true)] {
            let k = StepKernel::uniform_cube(d, l, ex).unwrap();
            let axis: Vec<f64> = (0..9).map(|j| 0.37 * j as f64).collect();
            let f = CubeFactors::new(&k, &axis).unwrap();
            for t in sorted_tuples(axis.len(), d).chunks(d) {
                let kp: Vec<f64> = t.iter().map(|&i| axis[i]).collect();
                let direct = k.a_raw(&kp);
                assert!((f.a(t) - direct).abs() <= 1e-13 * direct.max(1e-3), "{t:?}");
            }
        }
    }

    fn dhat_oracle(k: &StepKernel, kp: &[f64]) -> f64 {
        k.iter()
            .map(|(x, w)| w * x.iter().zip(kp).map(|(&a, b)| a as f64 * b).sum::<f64>().cos())
            .sum()
    }

    #[test]
    fn two_point_kernel() {
        let k = StepKernel::uniform_cube(1, 1, true).unwrap();
        assert_eq!(k.len(), 2);
        assert_eq!(k.weight_at(&[1]), 0.5);
        assert_eq!(k.weight_at(&[0]), 0.0);
        assert_eq!(k.sigma_sq(), 1.0);
        assert_eq!(k.a_of_k(&KPoint::new(vec![PI]).unwrap()), 2.0);
    }

    #[test]
    fn five_point_kernel_values() {
        let k = StepKernel::uniform_cube(1, 2, false).unwrap();
        assert_eq!(k.sigma_sq(), 2.0);
        let v = k.dhat(&KPoint::new(vec![PI / 2.0]).unwrap());
        assert!((v + 0.2).abs() < 1e-15);
        assert_eq!(k.dhat(&KPoint::zero(1)), 1.0);
        assert_eq!(k.beta(), 0.5);
    }

    #[test]
    fn sigma_matches_closed_form() {
        for d in 1..=3 {
            for l in 1..=3u32 {
                let k = StepKernel::uniform_cube(d, l, false).unwrap();
                let lf = l as f64;
                let want = d as f64 * lf * (lf + 1.0) / 3.0;
                assert!((k.sigma_sq() - want).abs() < 1e-12 * want);
            }
        }
    }

    #[test]
    fn dhat_matches_cosine_sum() {
        let k = StepKernel::uniform_cube(2, 2, true).unwrap();
        for kp in [[0.3, -1.1], [PI, 0.2], [-2.5, 2.9]] {
            let got = k.dhat(&KPoint::new(kp.to_vec()).unwrap());
            assert!((got - dhat_oracle(&k, &kp)).abs() < 1e-14);
        }
    }

    #[test]
    fn json_round_trip() {
        let k = StepKernel::uniform_cube(2, 2, true).unwrap();
        let back = StepKernel::from_json(&k.to_json()).unwrap();
        assert_eq!(k, back);
        let g = StepKernel::from_density(|y| (-y.iter().map(|c| c * c).sum::<f64>()).exp(), 2, 3, 2.0).unwrap();
        assert_eq!(StepKernel::from_json(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn indicator_density_equals_uniform_cube() {
        for (d, l) in [(1, 2), (2, 3), (3, 1)] {
            let scale = 2f64.powi(-(d as i32));
            let h = |y: &[f64]| if y.iter().all(|c| c.abs() <= 1.0) { scale } else { 0.0 };
            let a = StepKernel::from_density(h, d, l, 1.5).unwrap();
            let b = StepKernel::uniform_cube(d, l, false).unwrap();
            assert_eq!(a.points, b.points);
            let same = a.weights.iter().zip(&b.weights).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same);
        }
    }

    #[test]
    fn density_errors() {
        let asym = |y: &[f64]| if y[0] >= 0.0 { 1.0 } else { 0.5 };
        assert!(matches!(StepKernel::from_density(asym, 1, 2, 1.0), Err(Error::InvalidKernel(_))));
        let zero = |_: &[f64]| 0.0;
        assert!(StepKernel::from_density(zero, 2, 2, 1.0).is_err());
        let spike = |y: &[f64]| if y.iter().all(|&c| c == 0.0) { 1.0 } else { 0.0 };
        assert!(StepKernel::from_density(spike, 2, 4, 1.0).is_err());
        assert!(matches!(
            StepKernel::uniform_cube_with_cap(6, 10, false, 1000),
            Err(Error::MemoryCap { .. })
        ));
    }

    #[test]
    fn kpoint_validation() {
        assert!(KPoint::new(vec![]).is_err());
        assert!(KPoint::new(vec![4.0]).is_err());
        assert!(KPoint::new(vec![f64::NAN]).is_err());
        assert!(KPoint::new(vec![PI, -PI]).is_ok());
    }

    #[test]
    fn gaussian_sigma_tracks_continuum() {
        let l = 10u32;
        let k = StepKernel::from_density(|y| (-0.5 * y[0] * y[0]).exp(), 1, l, 3.0).unwrap();
        let n = 20000;
        let (mut m0, mut m2) = (0.0, 0.0);
        for i in 0..=n {
            let y = -3.0 + 6.0 * i as f64 / n as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let g = (-0.5 * y * y).exp();
            m0 += w * g;
            m2 += w * g * y * y;
        }
        let cont = m2 / m0 * (l * l) as f64;
        assert!((k.sigma_sq() / cont - 1.0).abs() < 0.05);
    }

    #[test]
    fn assumption_d_flags() {
        let good = StepKernel::uniform_cube(3, 5, false).unwrap();
        let r = check_assumption_d(&good, 8).unwrap();
        assert!(r.all_pass(), "{r:?}");
        let two = StepKernel::uniform_cube(1, 1, true).unwrap();
        let r = check_assumption_d(&two, 16).unwrap();
        assert!(!r.global_pass);
        assert!(r.small_k_pass && r.large_k_pass);
    }

    #[test]
    fn sorted_tuple_count() {
        assert_eq!(sorted_tuples(4, 3).len() / 3, 20);
        assert_eq!(sorted_tuples(5, 1).len(), 5);
    }
}
