//! Induction hypotheses H1-H4, the coefficient bounds, and the diagnostic
//! decompositions used in the advancement of the induction.

use serde::{Deserialize, Serialize};

use crate::critical::{VTrace, ZTrace};
use crate::engine::{CoefficientProvider, RecursionState};
use crate::error::{Error, Result};
use crate::kernels::{KPoint, StepKernel};

/// Exponents and constants of the induction hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub d: usize,
    pub gamma: f64,
    pub delta: f64,
    pub rho: f64,
    pub eps_prime: f64,
    /// `K1..K5`.
    pub k: [f64; 5],
}

impl HypothesisConstants {
    /// Validates `0 < (d-4)/2 - rho < gamma < gamma + delta < min(1, (d-4)/2)`.
    /// Returns the constants and warnings about the initialisation of H4.
    pub fn new(d: usize, gamma: f64, delta: f64, rho: f64, eps_prime: f64, k: [f64; 5]) -> Result<(Self, Vec<String>)> {
        if d <= 4 {
            return Err(Error::InvalidArgument(format!("hypothesis exponents need d > 4, got d = {d}")));
        }
        let half = (d as f64 - 4.0) / 2.0;
        let top = half.min(1.0);
        let lower = half - rho;
        if !(0.0 < lower && lower < gamma && gamma < gamma + delta && gamma + delta < top) {
            return Err(Error::InvalidArgument(format!(
                "exponent ordering violated: need 0 < {lower} < gamma = {gamma} < gamma + delta = {} < {top}",
                gamma + delta
            )));
        }
        if !(eps_prime > 0.0) {
            return Err(Error::InvalidArgument("eps_prime must be positive".into()));
        }
        if k.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument("K constants must be positive".into()));
        }
        let mut warnings = Vec::new();
        let k4_min = 2f64.powf(3.0 + rho);
        let k5_min = 3.0 * 2f64.powf(1.0 + rho);
        if k[3] < k4_min {
            warnings.push(format!("K4 = {} below the initialisation value {k4_min}", k[3]));
        }
        if k[4] < k5_min {
            warnings.push(format!("K5 = {} below the initialisation value {k5_min}", k[4]));
        }
        Ok((
            HypothesisConstants {
                d,
                gamma,
                delta,
                rho,
                eps_prime,
                k,
            },
            warnings,
        ))
    }

    /// Admissible exponents for dimension `d` with the given constants.
    pub fn default_for(d: usize, k: [f64; 5]) -> Result<Self> {
        let half = (d as f64 - 4.0) / 2.0;
        let top = half.min(1.0);
        let gamma = top / 2.0;
        let delta = top / 4.0;
        let rho = half - gamma / 2.0;
        Ok(Self::new(d, gamma, delta, rho, top / 4.0, k)?.0)
    }
}

/// `r_i(k)` and `s_i(k)` on selected k-points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RTrace {
    pub n_max: usize,
    pub k_indices: Vec<usize>,
    /// `a(k)` for each selected point.
    pub a: Vec<f64>,
    /// `r_i(0)`, index 0 unused.
    pub r0: Vec<f64>,
    /// `r[p][i]` for selected point `p`, index 0 unused.
    pub r: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
}

fn check_traces(state: &RecursionState, vt: &VTrace) -> Result<()> {
    if vt.z != state.z {
        return Err(Error::InvalidArgument(format!("trace at z = {} but state at z = {}", vt.z, state.z)));
    }
    if vt.n_max() < state.n_max {
        return Err(Error::InvalidArgument("v-trace shorter than the recursion state".into()));
    }
    Ok(())
}

/// `r_{j+1}(k) = f_{j+1}/f_j - 1 + v_{j+1} a(k)` and the derived `s_i(k)` on every k-point.
pub fn extract_r_s(state: &RecursionState, vt: &VTrace, kernel: &StepKernel) -> Result<RTrace> {
    let all: Vec<usize> = (0..state.kset.len()).collect();
    extract_r_s_on(state, vt, kernel, &all)
}

fn r_step(f_next: f64, f_prev: f64, v: f64, a: f64) -> f64 {
    (f_next - (1.0 - v * a) * f_prev) / f_prev
}

pub fn extract_r_s_on(state: &RecursionState, vt: &VTrace, kernel: &StepKernel, k_indices: &[usize]) -> Result<RTrace> {
    check_traces(state, vt)?;
    let n = state.n_max;
    let mut r0 = vec![0.0; n + 1];
    for i in 1..=n {
        if state.f0[i - 1] == 0.0 {
            return Err(Error::RatioUndefined { j: i - 1, k_index: usize::MAX });
        }
        r0[i] = r_step(state.f0[i], state.f0[i - 1], vt.v[i], 0.0);
    }
    let mut a = Vec::with_capacity(k_indices.len());
    let mut r = Vec::with_capacity(k_indices.len());
    let mut s = Vec::with_capacity(k_indices.len());
    for &ki in k_indices {
        let ak = kernel.a_of_k(&state.kset[ki]);
        let col = state.column(ki);
        let mut ri = vec![0.0; n + 1];
        let mut si = vec![0.0; n + 1];
        for i in 1..=n {
            if col[i - 1] == 0.0 || !col[i - 1].is_normal() {
                return Err(Error::RatioUndefined { j: i - 1, k_index: ki });
            }
            ri[i] = r_step(col[i], col[i - 1], vt.v[i], ak);
            si[i] = (vt.v[i] * ak * r0[i] + (ri[i] - r0[i])) / (1.0 + r0[i]);
        }
        a.push(ak);
        r.push(ri);
        s.push(si);
    }
    Ok(RTrace {
        n_max: n,
        k_indices: k_indices.to_vec(),
        a,
        r0,
        r,
        s,
    })
}

impl RTrace {
    /// `f_j(0) prod_{i<=j} [1 - v_i a(k) + s_i(k)]` for selected point `p`.
    pub fn reconstruct(&self, state: &RecursionState, vt: &VTrace, j: usize, p: usize) -> f64 {
        let mut prod = state.f0[j];
        for i in 1..=j {
            prod *= 1.0 - vt.v[i] * self.a[p] + self.s[p][i];
        }
        prod
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub hypothesis: String,
    pub j: usize,
    pub k_index: Option<usize>,
    /// measured / bound; the hypothesis holds at this cell iff `margin <= 1`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub name: String,
    pub checked: bool,
    pub pass: bool,
    pub cells: usize,
    pub worst_margin: f64,
    pub worst_j: Option<usize>,
    pub worst_k_index: Option<usize>,
    /// Smallest constant for which the sampled cells pass.
    pub minimal_constant: f64,
    /// Largest measured left-hand side.
    pub max_measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub z: f64,
    pub n_max: usize,
    pub constants: HypothesisConstants,
    pub results: Vec<HypothesisResult>,
    pub margins: Vec<MarginRow>,
}

impl HypothesisReport {
    pub fn result(&self, name: &str) -> Option<&HypothesisResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| !r.checked || r.pass)
    }
}

struct Tally {
    name: String,
    k: f64,
    cells: usize,
    worst: f64,
    worst_j: Option<usize>,
    worst_k: Option<usize>,
    max_measured: f64,
    rows: Vec<MarginRow>,
}

impl Tally {
    fn new(name: &str, k: f64) -> Self {
        Tally {
            name: name.into(),
            k,
            cells: 0,
            worst: 0.0,
            worst_j: None,
            worst_k: None,
            max_measured: 0.0,
            rows: Vec::new(),
        }
    }

    fn add(&mut self, j: usize, k_index: Option<usize>, measured: f64, bound: f64) {
        let margin = if measured == 0.0 {
            0.0
        } else if bound > 0.0 {
            measured / bound
        } else {
            f64::INFINITY
        };
        self.cells += 1;
        self.max_measured = self.max_measured.max(measured);
        if self.worst_j.is_none() || margin > self.worst {
            self.worst = margin;
            self.worst_j = Some(j);
            self.worst_k = k_index;
        }
        self.rows.push(MarginRow {
            hypothesis: self.name.clone(),
            j,
            k_index,
            margin,
        });
    }

    fn finish(self, checked: bool, margins: &mut Vec<MarginRow>) -> HypothesisResult {
        margins.extend(self.rows);
        HypothesisResult {
            name: self.name,
            checked,
            pass: self.worst <= 1.0,
            cells: self.cells,
            worst_margin: self.worst,
            worst_j: self.worst_j,
            worst_k_index: self.worst_k,
            minimal_constant: self.k * self.worst,
            max_measured: self.max_measured,
        }
    }
}

/// Evaluate H1-H4 on every cell of the recursion state.
///
/// H3 applies to `(i, k)` when some `j` in `[i, N]` has `a(k) <= gamma log(j) / j`;
/// H4 applies to `(j, k)` when `a(k) > gamma log(j) / j`.
pub fn check_hypotheses(
    state: &RecursionState,
    zt: Option<&ZTrace>,
    vt: &VTrace,
    kernel: &StepKernel,
    c: &HypothesisConstants,
) -> Result<HypothesisReport> {
    check_traces(state, vt)?;
    if c.d != kernel.d() {
        return Err(Error::InvalidArgument("constants built for a different dimension".into()));
    }
    let n = state.n_max;
    let d = c.d as f64;
    let beta = kernel.beta();
    let [k1, k2, k3, k4, k5] = c.k;
    let mut margins = Vec::new();
    let mut results = Vec::new();

    let mut h1 = Tally::new("H1", k1);
    if let Some(zt) = zt {
        if zt.n_max() < n {
            return Err(Error::InvalidArgument("z-trace shorter than the recursion state".into()));
        }
        for j in 1..=n {
            h1.add(j, None, (zt.z[j] - zt.z[j - 1]).abs(), k1 * beta * (j as f64).powf(-d / 2.0));
        }
    }
    results.push(h1.finish(zt.is_some(), &mut margins));

    let mut h2 = Tally::new("H2", k2);
    for j in 1..=n {
        h2.add(j, None, (vt.v[j] - vt.v[j - 1]).abs(), k2 * beta * (j as f64).powf(-(d - 2.0) / 2.0));
    }
    results.push(h2.finish(true, &mut margins));

    let threshold = |j: usize| c.gamma * (j as f64).ln() / j as f64;
    let mut suffix = vec![f64::NEG_INFINITY; n + 2];
    for j in (1..=n).rev() {
        suffix[j] = suffix[j + 1].max(threshold(j));
    }
    let a: Vec<f64> = state.kset.iter().map(|k| kernel.a_of_k(k)).collect();
    let small: Vec<usize> = (0..state.kset.len()).filter(|&i| a[i] <= suffix[1]).collect();
    let rt = extract_r_s_on(state, vt, kernel, &small)?;

    let mut h3 = Tally::new("H3", k3);
    for i in 1..=n {
        h3.add(i, None, rt.r0[i].abs(), k3 * beta * (i as f64).powf(-(d - 2.0) / 2.0));
    }
    for (p, &ki) in rt.k_indices.iter().enumerate() {
        for i in 1..=n {
            if a[ki] <= suffix[i] {
                let diff = (rt.r[p][i] - rt.r0[i]).abs();
                h3.add(i, Some(ki), diff, k3 * beta * a[ki] * (i as f64).powf(-c.delta));
            }
        }
    }
    results.push(h3.finish(true, &mut margins));

    let mut h4 = Tally::new("H4", k4);
    let mut h4d = Tally::new("H4-diff", k5);
    for (ki, &ak) in a.iter().enumerate() {
        let col = state.column(ki);
        for j in 1..=n {
            if ak > threshold(j) {
                let scale = (j as f64).powf(-d / 2.0);
                h4.add(j, Some(ki), col[j].abs(), k4 * ak.powf(-2.0 - c.rho) * scale);
                h4d.add(j, Some(ki), (col[j] - col[j - 1]).abs(), k5 * ak.powf(-1.0 - c.rho) * scale);
            }
        }
    }
    results.push(h4.finish(true, &mut margins));
    results.push(h4d.finish(true, &mut margins));

    Ok(HypothesisReport {
        z: state.z,
        n_max: n,
        constants: c.clone(),
        results,
        margins,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgBound {
    pub name: String,
    pub available: bool,
    /// Smallest `K'` making the sampled bound hold.
    pub minimal_constant: f64,
    pub worst_m: Option<usize>,
    pub worst_k_index: Option<usize>,
    pub worst_z: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgReport {
    pub bounds: Vec<EgBound>,
    pub minimal_constant: f64,
}

struct EgTally {
    b: EgBound,
}

impl EgTally {
    fn new(name: &str) -> Self {
        EgTally {
            b: EgBound {
                name: name.into(),
                available: true,
                minimal_constant: 0.0,
                worst_m: None,
                worst_k_index: None,
                worst_z: None,
            },
        }
    }

    fn add(&mut self, ratio: f64, m: usize, k: Option<usize>, z: f64) {
        if self.b.worst_m.is_none() || ratio > self.b.minimal_constant {
            self.b.minimal_constant = ratio;
            self.b.worst_m = Some(m);
            self.b.worst_k_index = k;
            self.b.worst_z = Some(z);
        }
    }
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Smallest constants `K'` for which the six coefficient bounds hold on the
/// sampled `(z, m, k)` cells, `2 <= m <= n_max`.
pub fn check_assumption_eg(
    provider: &dyn CoefficientProvider,
    z_grid: &[f64],
    n_max: usize,
    kset: &[KPoint],
    eps_prime: f64,
) -> Result<EgReport> {
    let kernel = provider.kernel();
    let d = kernel.d() as f64;
    let beta = kernel.beta();
    let s2 = kernel.sigma_sq();
    let mut g_bound = EgTally::new("g");
    let mut lap_bound = EgTally::new("laplacian-g");
    let mut dz_bound = EgTally::new("dz-g");
    let mut rem_bound = EgTally::new("g-remainder");
    let mut e_bound = EgTally::new("e");
    let mut ediff_bound = EgTally::new("e-difference");
    let a: Vec<f64> = kset.iter().map(|k| kernel.a_of_k(k)).collect();
    for &z in z_grid {
        for m in 2..=n_max {
            let mf = m as f64;
            let g0 = provider.g0(m, z)?;
            let e0 = provider.e0(m, z)?;
            let pd = mf.powf(-d / 2.0);
            let pd2 = mf.powf(-(d - 2.0) / 2.0);
            let lap = match provider.lap_g0(m, z) {
                Ok(v) => {
                    lap_bound.add(safe_ratio(v.abs(), s2 * beta * pd2), m, None, z);
                    Some(v)
                }
                Err(Error::Unsupported { .. }) => {
                    lap_bound.b.available = false;
                    rem_bound.b.available = false;
                    None
                }
                Err(e) => return Err(e),
            };
            match provider.dz_g0(m, z) {
                Ok(v) => dz_bound.add(safe_ratio(v.abs(), beta * pd2), m, None, z),
                Err(Error::Unsupported { .. }) => dz_bound.b.available = false,
                Err(e) => return Err(e),
            }
            for (ki, k) in kset.iter().enumerate() {
                let g = provider.g(m, k, z)?;
                let e = provider.e(m, k, z)?;
                g_bound.add(safe_ratio(g.abs(), beta * pd), m, Some(ki), z);
                e_bound.add(safe_ratio(e.abs(), beta * pd), m, Some(ki), z);
                let ak = a[ki];
                if let Some(lap) = lap {
                    let rem = (g - g0 - ak / s2 * lap).abs();
                    let den = beta * ak.powf(1.0 + eps_prime) * mf.powf(-(d - 2.0 - 2.0 * eps_prime) / 2.0);
                    rem_bound.add(safe_ratio(rem, den), m, Some(ki), z);
                }
                ediff_bound.add(safe_ratio((e - e0).abs(), ak * beta * pd2), m, Some(ki), z);
            }
        }
    }
    let bounds: Vec<EgBound> = [g_bound, lap_bound, dz_bound, rem_bound, e_bound, ediff_bound]
        .into_iter()
        .map(|t| t.b)
        .collect();
    let minimal_constant = bounds
        .iter()
        .filter(|b| b.available)
        .fold(0.0f64, |m, b| m.max(b.minimal_constant));
    Ok(EgReport {
        bounds,
        minimal_constant,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvRegime {
    /// `a, b > 2`: decay `n^{-min(a, b)}`.
    BothAboveTwo,
    /// `a > 2, b > 1`: decay `n^{-min(a-1, b)}`.
    AAboveTwoBAboveOne,
    /// `a > 2, b > 0`: decay `n^{-min(a-2, b)}`.
    AAboveTwoBPositive,
    /// `a, b > 1`: decay `n^{-(min(a, b) - 1)}`.
    BothAboveOne,
}

impl ConvRegime {
    /// The most specific regime that applies.
    pub fn detect(a: f64, b: f64) -> Result<Self> {
        if a > 2.0 && b > 2.0 {
            Ok(ConvRegime::BothAboveTwo)
        } else if a > 2.0 && b > 1.0 {
            Ok(ConvRegime::AAboveTwoBAboveOne)
        } else if a > 2.0 && b > 0.0 {
            Ok(ConvRegime::AAboveTwoBPositive)
        } else if a > 1.0 && b > 1.0 {
            Ok(ConvRegime::BothAboveOne)
        } else {
            Err(Error::RegimeRejected { a, b })
        }
    }

    pub fn power(self, a: f64, b: f64) -> f64 {
        match self {
            ConvRegime::BothAboveTwo => a.min(b),
            ConvRegime::AAboveTwoBAboveOne => (a - 1.0).min(b),
            ConvRegime::AAboveTwoBPositive => (a - 2.0).min(b),
            ConvRegime::BothAboveOne => a.min(b) - 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvProbe {
    pub a: f64,
    pub b: f64,
    pub regime: ConvRegime,
    pub power: f64,
    /// `(n, S(n) n^power)` for `2 <= n <= n_max`.
    pub scaled: Vec<(usize, f64)>,
}

impl ConvProbe {
    /// `sup_{2 <= n <= n_cap} S(n) n^power`.
    pub fn sup_upto(&self, n_cap: usize) -> f64 {
        self.scaled
            .iter()
            .filter(|(n, _)| *n <= n_cap)
            .fold(0.0, |m, (_, v)| m.max(*v))
    }
}

/// `S(n) = sum_{m=2}^n m^{-a} sum_{j=n-m+1}^n j^{-b}`, scaled by the regime's decay.
pub fn conv_bound_probe(a: f64, b: f64, n_max: usize) -> Result<ConvProbe> {
    let regime = ConvRegime::detect(a, b)?;
    let power = regime.power(a, b);
    let mut prefix = vec![0.0f64; n_max + 1];
    for j in 1..=n_max {
        prefix[j] = prefix[j - 1] + (j as f64).powf(-b);
    }
    let ma: Vec<f64> = (0..=n_max).map(|m| if m == 0 { 0.0 } else { (m as f64).powf(-a) }).collect();
    let mut scaled = Vec::with_capacity(n_max.saturating_sub(1));
    for n in 2..=n_max {
        let mut s = 0.0;
        for m in 2..=n {
            s += ma[m] * (prefix[n] - prefix[n - m]);
        }
        scaled.push((n, s * (n as f64).powf(power)));
    }
    Ok(ConvProbe {
        a,
        b,
        regime,
        power,
        scaled,
    })
}

/// Terms of the small-k and large-k decompositions of `f_{n+1} / f_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub n: usize,
    pub k_index: usize,
    pub a: f64,
    pub ratio: f64,
    pub x: f64,
    pub x1: f64,
    pub x2: f64,
    pub y: f64,
    pub z_term: f64,
    pub zeta: f64,
    pub w: f64,
    pub small_k_residual: f64,
    pub large_k_residual: f64,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-9;

/// Decompose `f_{n+1}(k) / f_n(k)` into `X, Y, Z, zeta` and `X_1, X_2, W`.
///
/// The `X` and `X_1` sums start at `m = 1`; their first term vanishes whenever
/// `g_1` is affine in `a(k)`.
pub fn xyz_diagnostics(
    provider: &dyn CoefficientProvider,
    state: &RecursionState,
    vt: &VTrace,
    n: usize,
    k_index: usize,
) -> Result<DiagnosticsRecord> {
    check_traces(state, vt)?;
    if n + 1 > state.n_max {
        return Err(Error::InvalidArgument(format!("need f_{} but n_max = {}", n + 1, state.n_max)));
    }
    let z = state.z;
    let kernel = provider.kernel();
    let s2 = kernel.sigma_sq();
    let k = &state.kset[k_index];
    let a = kernel.a_of_k(k);
    let f = state.column(k_index);
    let fn_ = f[n];
    if fn_ == 0.0 {
        return Err(Error::RatioUndefined { j: n, k_index });
    }
    let v = vt.v[n + 1];
    let (mut x1, mut x2, mut y, mut w) = (0.0, 0.0, 0.0, 0.0);
    for m in 1..=n + 1 {
        let gk = provider.g(m, k, z)?;
        let g0 = provider.g0(m, z)?;
        let lap = provider.lap_g0(m, z)?;
        let fr = f[n + 1 - m] / fn_;
        x1 += gk - g0 - a / s2 * lap;
        if m >= 2 {
            x2 += (gk - g0) * (fr - 1.0);
            y += g0 * (fr - 1.0 - (m as f64 - 1.0) * v * a);
            w += gk * (f[n + 1 - m] - fn_);
        }
    }
    let e = provider.e(n + 1, k, z)?;
    let z_term = e / fn_;
    let zeta = vt.zeta[n + 1];
    let x = x1 + x2;
    let ratio = f[n + 1] / fn_;
    let small = (ratio - (1.0 - v * a + x + y + z_term + zeta)).abs();
    let large_rhs = fn_ * (1.0 - a * vt.b[n + 1] + x1 + zeta) + w + e;
    let large = (f[n + 1] - large_rhs).abs() / fn_.abs();
    let rec = DiagnosticsRecord {
        n,
        k_index,
        a,
        ratio,
        x,
        x1,
        x2,
        y,
        z_term,
        zeta,
        w,
        small_k_residual: small,
        large_k_residual: large,
    };
    if small > IDENTITY_TOLERANCE {
        return Err(Error::IdentityViolation {
            identity: "small-k decomposition".into(),
            n,
            residual: small,
        });
    }
    if large > IDENTITY_TOLERANCE {
        return Err(Error::IdentityViolation {
            identity: "large-k decomposition".into(),
            n,
            residual: large,
        });
    }
    Ok(rec)
}
