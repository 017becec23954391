//! Self-avoiding walk: exact enumeration, lace-coefficient extraction and diagram bounds.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lattice::{self, add_site, convolve, subtract, Ring, Site, Table};
use crate::engine::CoefficientProvider;
use crate::error::{Error, Result};
use crate::kernels::{KPoint, StepKernel};

/// Default cap on the estimated number of enumerated walks.
pub const DEFAULT_WALK_BUDGET: u128 = 10_000_000_000;

/// Cap on dense position boxes used during enumeration.
const DENSE_BOX_CAP: usize = 50_000_000;

/// Tables indexed by `n` holding sparse functions on Z^d.
///
/// With `exact_base = Some(q)`, entry `n` is `numerators[n][x] / q^n` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTables {
    pub exact_base: Option<u64>,
    pub numerators: Option<Vec<Table<i128>>>,
    pub values: Vec<Vec<(Site, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct SiteTablesJson {
    exact_base: Option<u64>,
    numerators: Option<Vec<Vec<(Site, String)>>>,
    values: Vec<Vec<(Site, f64)>>,
}

impl Serialize for SiteTables {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SiteTablesJson {
            exact_base: self.exact_base,
            numerators: self.numerators.as_ref().map(|ts| {
                ts.iter()
                    .map(|t| t.iter().map(|(x, v)| (x.clone(), v.to_string())).collect())
                    .collect()
            }),
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SiteTables {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SiteTablesJson::deserialize(d)?;
        let numerators = match j.numerators {
            None => None,
            Some(ts) => {
                let mut out = Vec::with_capacity(ts.len());
                for t in ts {
                    let mut m = BTreeMap::new();
                    for (x, v) in t {
                        let n: i128 = v.parse().map_err(serde::de::Error::custom)?;
                        m.insert(x, n);
                    }
                    out.push(m);
                }
                Some(out)
            }
        };
        Ok(SiteTables {
            exact_base: j.exact_base,
            numerators,
            values: j.values,
        })
    }
}

impl SiteTables {
    fn from_exact(q: u64, nums: Vec<Table<i128>>) -> Self {
        let values = nums
            .iter()
            .enumerate()
            .map(|(n, t)| {
                let scale = (q as f64).powi(n as i32);
                t.iter().map(|(x, &v)| (x.clone(), v as f64 / scale)).collect()
            })
            .collect();
        SiteTables {
            exact_base: Some(q),
            numerators: Some(nums),
            values,
        }
    }

    fn from_float(ts: Vec<Table<f64>>) -> Self {
        SiteTables {
            exact_base: None,
            numerators: None,
            values: ts.into_iter().map(|t| t.into_iter().collect()).collect(),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.numerators.is_some()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, n: usize, x: &[i32]) -> f64 {
        match self.values[n].binary_search_by(|(s, _)| s.as_slice().cmp(x)) {
            Ok(i) => self.values[n][i].1,
            Err(_) => 0.0,
        }
    }

    pub fn numerator(&self, n: usize, x: &[i32]) -> Option<i128> {
        self.numerators.as_ref().map(|t| t[n].get(x).copied().unwrap_or(0))
    }

    /// `sum_x t_n(x)`.
    pub fn total(&self, n: usize) -> f64 {
        lattice::total(&self.values[n])
    }

    fn float_tables(&self) -> Vec<Table<f64>> {
        self.values.iter().map(|t| t.iter().cloned().collect()).collect()
    }
}

/// SAW two-point function `c_n(x)` for `0 <= n <= n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SawTables {
    pub kernel_hash: String,
    pub d: usize,
    pub n_max: usize,
    pub walks_enumerated: u64,
    pub tables: SiteTables,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PiMethod {
    Deconvolved,
    DirectN1,
    DirectN2,
}

/// Lace coefficients `pi_m(x)` for `0 <= m <= m_max` (entries 0 and 1 vanish).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiTables {
    pub kernel_hash: String,
    pub d: usize,
    pub m_max: usize,
    pub method: PiMethod,
    /// Largest `|c_n - reconvolved c_n|` (zero in exact mode).
    pub residual: f64,
    pub tables: SiteTables,
}

fn dense_side(n_max: usize, l: u32) -> i64 {
    2 * n_max as i64 * l as i64 + 1
}

struct DenseBox {
    d: usize,
    r: i64,
    side: i64,
    size: usize,
}

impl DenseBox {
    fn new(d: usize, r: i64) -> Result<Self> {
        let side = 2 * r + 1;
        let mut size: u128 = 1;
        for _ in 0..d {
            size = size.saturating_mul(side as u128);
        }
        if size > DENSE_BOX_CAP as u128 {
            return Err(Error::MemoryCap {
                what: "dense walk box".into(),
                required: size,
                cap: DENSE_BOX_CAP as u128,
            });
        }
        Ok(DenseBox { d, r, side, size: size as usize })
    }

    fn index(&self, x: &[i32]) -> i64 {
        x.iter().fold(0i64, |acc, &c| acc * self.side + (c as i64 + self.r))
    }

    fn site(&self, mut idx: i64) -> Site {
        let mut x = vec![0i32; self.d];
        for i in (0..self.d).rev() {
            x[i] = (idx % self.side - self.r) as i32;
            idx /= self.side;
        }
        x
    }

    /// Index shift of a step; valid for positions inside the box.
    fn offset(&self, y: &[i32]) -> i64 {
        y.iter().fold(0i64, |acc, &c| acc * self.side + c as i64)
    }
}

enum Acc {
    Count(Vec<Vec<u64>>),
    Weight(Vec<Vec<f64>>),
}

fn walk_dfs(
    path: &mut Vec<i64>,
    weight: f64,
    steps: &[(i64, f64)],
    n_max: usize,
    acc: &mut Acc,
    count: &mut u64,
) {
    let n = path.len() - 1;
    let here = *path.last().unwrap();
    match acc {
        Acc::Count(c) => c[n][here as usize] += 1,
        Acc::Weight(w) => w[n][here as usize] += weight,
    }
    *count += 1;
    if n == n_max {
        return;
    }
    for &(off, w) in steps {
        let next = here + off;
        if path.contains(&next) {
            continue;
        }
        path.push(next);
        walk_dfs(path, weight * w, steps, n_max, acc, count);
        path.pop();
    }
}

/// Enumerate all self-avoiding walks from the origin up to length `n_max`.
///
/// Uniform kernels produce exact tables over the base `|S|`; other kernels use
/// floating point.
pub fn saw_enumerate(kernel: &StepKernel, n_max: usize, budget: u128) -> Result<SawTables> {
    if !kernel.exclude_origin() {
        return Err(Error::InvalidKernel("self-avoiding walks require a kernel without the origin".into()));
    }
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    let s = kernel.len() as u128;
    let mut estimate: u128 = 1;
    for _ in 0..n_max {
        estimate = estimate.saturating_mul(s);
    }
    if estimate > budget {
        return Err(Error::Budget { estimate, budget });
    }
    let bx = DenseBox::new(kernel.d(), (dense_side(n_max, kernel.l()) - 1) / 2)?;
    let origin = bx.index(&vec![0; kernel.d()]);
    let steps: Vec<(i64, f64)> = kernel.iter().map(|(y, w)| (bx.offset(y), w)).collect();
    let exact = kernel.uniform_count();
    let fresh = || -> Acc {
        if exact.is_some() {
            Acc::Count(vec![vec![0u64; bx.size]; n_max + 1])
        } else {
            Acc::Weight(vec![vec![0f64; bx.size]; n_max + 1])
        }
    };
    let branches: Vec<(Acc, u64)> = steps
        .par_iter()
        .map(|&(off, w)| {
            let mut acc = fresh();
            let mut count = 0u64;
            let mut path = vec![origin, origin + off];
            walk_dfs(&mut path, w, &steps, n_max, &mut acc, &mut count);
            (acc, count)
        })
        .collect();
    let mut walks = 1u64;
    let tables = match exact {
        Some(q) => {
            let mut tot = vec![vec![0u64; bx.size]; n_max + 1];
            for (acc, c) in &branches {
                walks += c;
                if let Acc::Count(t) = acc {
                    for (a, b) in tot.iter_mut().zip(t) {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                    }
                }
            }
            tot[0][origin as usize] = 1;
            let nums = tot
                .iter()
                .map(|t| {
                    t.iter()
                        .enumerate()
                        .filter(|(_, &v)| v > 0)
                        .map(|(i, &v)| (bx.site(i as i64), v as i128))
                        .collect()
                })
                .collect();
            SiteTables::from_exact(q, nums)
        }
        None => {
            let mut tot = vec![vec![0f64; bx.size]; n_max + 1];
            for (acc, c) in &branches {
                walks += c;
                if let Acc::Weight(t) = acc {
                    for (a, b) in tot.iter_mut().zip(t) {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                    }
                }
            }
            tot[0][origin as usize] = 1.0;
            let ts = tot
                .iter()
                .map(|t| {
                    t.iter()
                        .enumerate()
                        .filter(|(_, &v)| v != 0.0)
                        .map(|(i, &v)| (bx.site(i as i64), v))
                        .collect()
                })
                .collect();
            SiteTables::from_float(ts)
        }
    };
    Ok(SawTables {
        kernel_hash: kernel.content_hash(),
        d: kernel.d(),
        n_max,
        walks_enumerated: walks,
        tables,
    })
}

fn deconvolve_generic<T: Ring>(c: &[Table<T>]) -> Result<Vec<Table<T>>> {
    let n_max = c.len() - 1;
    let mut pi: Vec<Table<T>> = vec![BTreeMap::new(); n_max + 1];
    for n in 1..n_max {
        let mut rest = subtract(&c[n + 1], &convolve(&c[1], &c[n])?)?;
        for m in 2..=n {
            rest = subtract(&rest, &convolve(&pi[m], &c[n + 1 - m])?)?;
        }
        pi[n + 1] = rest;
    }
    Ok(pi)
}

fn reconvolve_generic<T: Ring>(pi: &[Table<T>], c: &[Table<T>]) -> Result<Vec<Table<T>>> {
    let n_max = c.len() - 1;
    let mut out = vec![c[0].clone(), c[1].clone()];
    for n in 1..n_max {
        let mut next = convolve(&c[1], &out[n])?;
        for m in 2..=n + 1 {
            let term = convolve(&pi[m], &out[n + 1 - m])?;
            for (x, v) in term {
                let e = next.entry(x).or_insert_with(T::zero);
                *e = e.add(v)?;
            }
        }
        next.retain(|_, v| !v.is_zero());
        out.push(next);
    }
    Ok(out)
}

/// Solve `c_{n+1} = c_1 * c_n + sum_{m=2}^{n+1} pi_m * c_{n+1-m}` for `pi`.
pub fn saw_deconvolve_pi(tables: &SawTables) -> Result<PiTables> {
    let (pi_tables, residual) = match (&tables.tables.numerators, tables.tables.exact_base) {
        (Some(nums), Some(q)) => {
            let pi = deconvolve_generic(nums)?;
            let back = reconvolve_generic(&pi, nums)?;
            if &back != nums {
                return Err(Error::IdentityViolation {
                    identity: "exact SAW reconvolution".into(),
                    n: tables.n_max,
                    residual: f64::INFINITY,
                });
            }
            (SiteTables::from_exact(q, pi), 0.0)
        }
        _ => {
            let c = tables.tables.float_tables();
            let pi = deconvolve_generic(&c)?;
            let back = reconvolve_generic(&pi, &c)?;
            let mut res = 0.0f64;
            for (a, b) in back.iter().zip(&c) {
                let diff = subtract(a, b)?;
                res = diff.values().fold(res, |m, v| m.max(v.abs()));
            }
            (SiteTables::from_float(pi), res)
        }
    };
    Ok(PiTables {
        kernel_hash: tables.kernel_hash.clone(),
        d: tables.d,
        m_max: tables.n_max,
        method: PiMethod::Deconvolved,
        residual,
        tables: pi_tables,
    })
}

/// Rebuild `c_n` from `pi` and `c_1`; returns the largest deviation from the tables.
pub fn reconvolution_residual(tables: &SawTables, pi: &PiTables) -> Result<f64> {
    let c = tables.tables.float_tables();
    let p = pi.tables.float_tables();
    let back = reconvolve_generic(&p, &c)?;
    let mut res = 0.0f64;
    for (a, b) in back.iter().zip(&c) {
        res = subtract(a, b)?.values().fold(res, |m, v| m.max(v.abs()));
    }
    Ok(res)
}

/// Directly enumerated lower-order lace terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectPi {
    /// `pi^{(1)}_m`, supported at the origin.
    pub n1: PiTables,
    /// `pi^{(2)}_m`, the theta diagram.
    pub n2: PiTables,
}

impl DirectPi {
    /// `-pi^{(1)}_m(x) + pi^{(2)}_m(x)`.
    pub fn partial(&self, m: usize, x: &[i32]) -> f64 {
        -self.n1.tables.value(m, x) + self.n2.tables.value(m, x)
    }
}

struct WalkRecord {
    end: Site,
    interior: Vec<i64>,
    weight: f64,
}

fn collect_walks(kernel: &StepKernel, len: usize, bx: &DenseBox) -> Vec<WalkRecord> {
    let steps: Vec<(i64, f64)> = kernel.iter().map(|(y, w)| (bx.offset(y), w)).collect();
    let origin = bx.index(&vec![0; kernel.d()]);
    let mut out = Vec::new();
    fn rec(path: &mut Vec<i64>, w: f64, steps: &[(i64, f64)], len: usize, bx: &DenseBox, out: &mut Vec<WalkRecord>) {
        if path.len() - 1 == len {
            let mut interior: Vec<i64> = path[1..len.max(1)].to_vec();
            interior.sort_unstable();
            out.push(WalkRecord {
                end: bx.site(*path.last().unwrap()),
                interior,
                weight: w,
            });
            return;
        }
        let here = *path.last().unwrap();
        for &(off, sw) in steps {
            let next = here + off;
            if path.contains(&next) {
                continue;
            }
            path.push(next);
            rec(path, w * sw, steps, len, bx, out);
            path.pop();
        }
    }
    rec(&mut vec![origin], 1.0, &steps, len, bx, &mut out);
    out
}

fn disjoint(a: &[i64], b: &[i64]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return false,
        }
    }
    true
}

/// Enumerate `pi^{(1)}` (polygons) and `pi^{(2)}` (theta diagrams) up to `m_max`.
pub fn saw_pi_direct(kernel: &StepKernel, m_max: usize) -> Result<DirectPi> {
    if !kernel.exclude_origin() {
        return Err(Error::InvalidKernel("self-avoiding walks require a kernel without the origin".into()));
    }
    let bx = DenseBox::new(kernel.d(), m_max as i64 * kernel.l() as i64)?;
    let q = kernel.uniform_count();
    let d = kernel.d();
    let by_len: Vec<Vec<WalkRecord>> = (0..m_max).map(|l| collect_walks(kernel, l, &bx)).collect();
    let mut n1_exact: Vec<Table<i128>> = vec![BTreeMap::new(); m_max + 1];
    let mut n1_float: Vec<Table<f64>> = vec![BTreeMap::new(); m_max + 1];
    for m in 2..=m_max {
        let (mut cnt, mut w) = (0i128, 0.0);
        for rec in &by_len[m - 1] {
            let back = kernel.weight_at(&rec.end.iter().map(|c| -c).collect::<Vec<_>>());
            if back > 0.0 {
                cnt += 1;
                w += rec.weight * back;
            }
        }
        if cnt > 0 {
            n1_exact[m].insert(vec![0; d], cnt);
            n1_float[m].insert(vec![0; d], w);
        }
    }
    let mut n2_exact: Vec<Table<i128>> = vec![BTreeMap::new(); m_max + 1];
    let mut n2_float: Vec<Table<f64>> = vec![BTreeMap::new(); m_max + 1];
    let mut grouped: Vec<BTreeMap<Site, Vec<&WalkRecord>>> = Vec::new();
    for walks in &by_len {
        let mut g: BTreeMap<Site, Vec<&WalkRecord>> = BTreeMap::new();
        for w in walks {
            g.entry(w.end.clone()).or_default().push(w);
        }
        grouped.push(g);
    }
    for m in 3..=m_max {
        for m1 in 1..m {
            for m2 in 1..(m - m1) {
                let m3 = m - m1 - m2;
                for (y, w1s) in &grouped[m1] {
                    let (Some(w2s), Some(w3s)) = (grouped[m2].get(y), grouped[m3].get(y)) else {
                        continue;
                    };
                    let (mut cnt, mut tot) = (0i128, 0.0);
                    for a in w1s {
                        for b in w2s {
                            if !disjoint(&a.interior, &b.interior) {
                                continue;
                            }
                            for c in w3s {
                                if disjoint(&a.interior, &c.interior) && disjoint(&b.interior, &c.interior) {
                                    cnt += 1;
                                    tot += a.weight * b.weight * c.weight;
                                }
                            }
                        }
                    }
                    if cnt > 0 {
                        *n2_exact[m].entry(y.clone()).or_insert(0) += cnt;
                        *n2_float[m].entry(y.clone()).or_insert(0.0) += tot;
                    }
                }
            }
        }
    }
    let make = |exact: Vec<Table<i128>>, float: Vec<Table<f64>>, method| PiTables {
        kernel_hash: kernel.content_hash(),
        d,
        m_max,
        method,
        residual: 0.0,
        tables: match q {
            Some(q) => SiteTables::from_exact(q, exact),
            None => SiteTables::from_float(float),
        },
    };
    Ok(DirectPi {
        n1: make(n1_exact, n1_float, PiMethod::DirectN1),
        n2: make(n2_exact, n2_float, PiMethod::DirectN2),
    })
}

/// Relaxed lace diagram with `n_edges` lace edges, evaluated with SAW two-point
/// functions on every subwalk, as a function of the endpoint.
///
/// Bounds `pi^{(N)}_m(x)` from above.
pub fn relaxed_diagram(tables: &SawTables, n_edges: usize, m: usize) -> Result<Vec<(Site, f64)>> {
    if n_edges < 2 {
        return Err(Error::InvalidArgument("relaxed diagrams need at least two lace edges".into()));
    }
    if m > tables.n_max {
        return Err(Error::CoefficientUnavailable { m, max: tables.n_max });
    }
    let d = tables.d;
    let reach = tables
        .tables
        .values
        .iter()
        .flat_map(|t| t.iter().flat_map(|(x, _)| x.iter().map(|c| c.abs())))
        .max()
        .unwrap_or(0) as i64;
    let bx = DenseBox::new(d, reach)?;
    let nb = bx.size;
    let c: Vec<Vec<(i64, Site, f64)>> = tables.tables.values[..=m]
        .iter()
        .map(|t| t.iter().map(|(x, v)| (bx.index(x), x.clone(), *v)).collect())
        .collect();
    let cval = |len: usize, x: &[i32]| tables.tables.value(len, x);
    let inside = |x: &[i32]| x.iter().all(|&v| (v as i64).abs() <= bx.r);
    // state[(p_i, p_{i+1}, L)]
    let at = |p: usize, q: usize, l: usize| (l * nb + p) * nb + q;
    let mut state = vec![0.0f64; (m + 1) * nb * nb];
    let o = bx.index(&vec![0; d]) as usize;
    for a in 1..=m {
        for b in 1..=m - a {
            for (pi, p, v) in &c[a] {
                let back: Site = p.iter().map(|x| -x).collect();
                let w = cval(b, &back);
                if w != 0.0 {
                    state[at(o, *pi as usize, a + b)] += v * w;
                }
            }
        }
    }
    for _ in 0..n_edges - 2 {
        let mut next = vec![0.0f64; (m + 1) * nb * nb];
        for l in 0..=m {
            for p in 0..nb {
                let ps = bx.site(p as i64);
                for q in 0..nb {
                    let s = state[at(p, q, l)];
                    if s == 0.0 {
                        continue;
                    }
                    let qs = bx.site(q as i64);
                    for lc in 0..=m - l {
                        for (_, y, vc) in &c[lc] {
                            let r = add_site(&ps, y);
                            if !inside(&r) {
                                continue;
                            }
                            let ri = bx.index(&r) as usize;
                            let diff: Site = qs.iter().zip(&r).map(|(a, b)| a - b).collect();
                            for le in 1..=m - l - lc {
                                let ve = cval(le, &diff);
                                if ve != 0.0 {
                                    next[at(q, ri, l + lc + le)] += s * vc * ve;
                                }
                            }
                        }
                    }
                }
            }
        }
        state = next;
    }
    let mut out: Table<f64> = BTreeMap::new();
    for l in 0..m {
        let f = m - l;
        for p in 0..nb {
            let ps = bx.site(p as i64);
            for q in 0..nb {
                let s = state[at(p, q, l)];
                if s == 0.0 {
                    continue;
                }
                let qs = bx.site(q as i64);
                let diff: Site = qs.iter().zip(&ps).map(|(a, b)| a - b).collect();
                let v = cval(f, &diff);
                if v != 0.0 {
                    *out.entry(qs).or_insert(0.0) += s * v;
                }
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// `sum_{N=3}^{m-1}` of relaxed diagrams: bounds `|pi_m - (-pi^{(1)}_m + pi^{(2)}_m)|`.
pub fn remainder_bound(tables: &SawTables, m: usize) -> Result<Vec<(Site, f64)>> {
    let mut acc: Table<f64> = BTreeMap::new();
    for n in 3..m {
        for (x, v) in relaxed_diagram(tables, n, m)? {
            *acc.entry(x).or_insert(0.0) += v;
        }
    }
    Ok(acc.into_iter().collect())
}

/// Rows `(m, ||c_m||_inf, ||D * D * c_{m-2}||_inf)`.
pub fn sup_norm_chain(kernel: &StepKernel, tables: &SawTables) -> Result<Vec<(usize, f64, f64)>> {
    let dt: Table<f64> = kernel.iter().map(|(x, w)| (x.to_vec(), w)).collect();
    let dd = convolve(&dt, &dt)?;
    let mut rows = Vec::new();
    for m in 2..=tables.n_max {
        let prev: Table<f64> = tables.tables.values[m - 2].iter().cloned().collect();
        let rhs = convolve(&dd, &prev)?.values().fold(0.0f64, |a, v| a.max(v.abs()));
        let lhs = lattice::sup_abs(&tables.tables.values[m]);
        rows.push((m, lhs, rhs));
    }
    Ok(rows)
}

/// `g_1 = z Dhat`, `g_m = pi_m-hat(k) z^m` for `m >= 2`, `e = 0`.
#[derive(Clone, Debug)]
pub struct SawProvider {
    kernel: Arc<StepKernel>,
    pi: Vec<Vec<(Site, f64)>>,
    lap_pi: Vec<f64>,
    m_max: usize,
}

impl SawProvider {
    pub fn new(kernel: Arc<StepKernel>, pi: &PiTables) -> Result<Self> {
        if pi.kernel_hash != kernel.content_hash() {
            return Err(Error::InvalidArgument("pi tables were built for a different kernel".into()));
        }
        let lap_pi = pi.tables.values.iter().map(|t| -lattice::second_moment(t)).collect();
        Ok(SawProvider {
            kernel,
            pi: pi.tables.values.clone(),
            lap_pi,
            m_max: pi.m_max,
        })
    }

    pub fn pi_hat(&self, m: usize, k: &KPoint) -> f64 {
        lattice::fourier(&self.pi[m], k)
    }
}

impl CoefficientProvider for SawProvider {
    fn name(&self) -> &str {
        "saw"
    }

    fn kernel(&self) -> &StepKernel {
        &self.kernel
    }

    fn max_m(&self) -> Option<usize> {
        Some(self.m_max)
    }

    fn g(&self, m: usize, k: &KPoint, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(if m == 1 {
            z * self.kernel.dhat(k)
        } else {
            self.pi_hat(m, k) * z.powi(m as i32)
        })
    }

    fn e(&self, m: usize, _k: &KPoint, _z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(0.0)
    }

    fn e_support(&self) -> Option<usize> {
        Some(0)
    }

    fn lap_g0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(if m == 1 {
            -z * self.kernel.sigma_sq()
        } else {
            self.lap_pi[m] * z.powi(m as i32)
        })
    }

    fn lap_e0(&self, m: usize, _z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(0.0)
    }

    fn dz_g0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(if m == 1 {
            1.0
        } else {
            m as f64 * z.powi(m as i32 - 1) * lattice::total(&self.pi[m])
        })
    }
}
