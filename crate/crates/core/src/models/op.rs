//! Oriented bond percolation on Z^d x Z_+, estimated by Monte Carlo.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lattice::{self, add_site, Site};
use crate::engine::CoefficientProvider;
use crate::error::{Error, Result};
use crate::kernels::{KPoint, StepKernel};

const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_count(count: u64, samples: u64) -> Self {
        let p = count as f64 / samples as f64;
        Estimate {
            mean: p,
            stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        }
    }
}

/// Hit counts for `tau_n(x)` (connection) and `rho_n(x)` (double connection).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpEstimates {
    pub kernel_hash: String,
    pub d: usize,
    pub z: f64,
    pub seed: u64,
    pub samples: u64,
    pub n_max: usize,
    pub tau_counts: Vec<Vec<(Site, u64)>>,
    pub rho_counts: Vec<Vec<(Site, u64)>>,
}

fn lookup(t: &[(Site, u64)], x: &[i32]) -> u64 {
    match t.binary_search_by(|(s, _)| s.as_slice().cmp(x)) {
        Ok(i) => t[i].1,
        Err(_) => 0,
    }
}

impl OpEstimates {
    pub fn tau(&self, n: usize, x: &[i32]) -> Estimate {
        Estimate::from_count(lookup(&self.tau_counts[n], x), self.samples)
    }

    pub fn rho(&self, n: usize, x: &[i32]) -> Estimate {
        Estimate::from_count(lookup(&self.rho_counts[n], x), self.samples)
    }

    /// `rho_m(x)` as a sparse real table.
    pub fn rho_table(&self, m: usize) -> Vec<(Site, f64)> {
        self.rho_counts[m]
            .iter()
            .map(|(x, c)| (x.clone(), *c as f64 / self.samples as f64))
            .collect()
    }

    pub fn tau_table(&self, n: usize) -> Vec<(Site, f64)> {
        self.tau_counts[n]
            .iter()
            .map(|(x, c)| (x.clone(), *c as f64 / self.samples as f64))
            .collect()
    }

    /// Rows `(m, x, rho, tau^2, combined stderr)` for the BK bound `rho <= tau^2`.
    pub fn bk_rows(&self, m_min: usize, m_max: usize) -> Vec<BkRow> {
        let mut rows = Vec::new();
        for m in m_min..=m_max.min(self.n_max) {
            let mut sites: Vec<&Site> = self.tau_counts[m].iter().map(|(x, _)| x).collect();
            sites.extend(self.rho_counts[m].iter().map(|(x, _)| x));
            sites.sort();
            sites.dedup();
            for x in sites {
                let r = self.rho(m, x);
                let t = self.tau(m, x);
                let se = (r.stderr * r.stderr + (2.0 * t.mean * t.stderr).powi(2)).sqrt();
                rows.push(BkRow {
                    m,
                    x: x.clone(),
                    rho: r.mean,
                    tau_sq: t.mean * t.mean,
                    stderr: se,
                });
            }
        }
        rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BkRow {
    pub m: usize,
    pub x: Site,
    pub rho: f64,
    pub tau_sq: f64,
    pub stderr: f64,
}

impl BkRow {
    pub fn holds(&self, sigmas: f64) -> bool {
        self.rho <= self.tau_sq + sigmas * self.stderr
    }
}

/// One sampled cluster of the origin up to time `n_max`.
pub(crate) struct Cluster {
    /// Sites reached at each time.
    pub levels: Vec<Vec<Site>>,
    /// Occupied bonds `(t, from, to)` between levels `t` and `t + 1`.
    pub bonds: Vec<(usize, usize, usize)>,
}

pub(crate) fn sample_cluster(kernel: &StepKernel, z: f64, n_max: usize, rng: &mut ChaCha8Rng) -> Cluster {
    let d = kernel.d();
    let mut levels = vec![vec![vec![0i32; d]]];
    let mut bonds = Vec::new();
    for t in 0..n_max {
        let mut next: Vec<Site> = Vec::new();
        let mut index: HashMap<Site, usize> = HashMap::new();
        for (ui, u) in levels[t].iter().enumerate() {
            for (y, w) in kernel.iter() {
                if rng.gen::<f64>() < z * w {
                    let v = add_site(u, y);
                    let vi = *index.entry(v.clone()).or_insert_with(|| {
                        next.push(v);
                        next.len() - 1
                    });
                    bonds.push((t, ui, vi));
                }
            }
        }
        levels.push(next);
    }
    Cluster { levels, bonds }
}

impl Cluster {
    /// Sites at time `m` reachable from the origin without using bond `skip`.
    fn reach(&self, m: usize, skip: Option<usize>) -> Vec<bool> {
        let mut cur = vec![true];
        for t in 0..m {
            let mut nxt = vec![false; self.levels[t + 1].len()];
            for (bi, &(bt, a, b)) in self.bonds.iter().enumerate() {
                if bt == t && cur[a] && Some(bi) != skip {
                    nxt[b] = true;
                }
            }
            cur = nxt;
        }
        cur
    }

    /// Double connection of the origin to site `v` at time `m`: no pivotal bond.
    pub fn doubly_connected(&self, m: usize, v: usize) -> bool {
        // bonds lying on some path to (v, m)
        let mut back: Vec<Vec<bool>> = self.levels.iter().take(m + 1).map(|l| vec![false; l.len()]).collect();
        back[m][v] = true;
        let mut on_path = Vec::new();
        for t in (0..m).rev() {
            for (bi, &(bt, a, b)) in self.bonds.iter().enumerate() {
                if bt == t && back[t + 1][b] {
                    back[t][a] = true;
                    on_path.push(bi);
                }
            }
        }
        on_path.iter().all(|&bi| self.reach(m, Some(bi))[v])
    }
}

fn check_probability(kernel: &StepKernel, z: f64) -> Result<()> {
    let p = z * kernel.sup_norm();
    if !(z > 0.0) || p > 1.0 {
        return Err(Error::InvalidProbability { value: p });
    }
    Ok(())
}

/// Monte Carlo estimates of `tau_n` and `rho_n` for `n <= n_max`.
///
/// Sample `i` draws from a ChaCha8 stream seeded with `seed` on stream `i`, so
/// results do not depend on the thread count.
pub fn op_simulate(kernel: &StepKernel, z: f64, n_max: usize, samples: u64, seed: u64) -> Result<OpEstimates> {
    check_probability(kernel, z)?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    type Counts = (BTreeMap<(usize, Site), u64>, BTreeMap<(usize, Site), u64>);
    let chunks: Vec<(u64, u64)> = (0..samples)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK as u64).min(samples)))
        .collect();
    let parts: Vec<Counts> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut tau = BTreeMap::new();
            let mut rho = BTreeMap::new();
            for i in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i);
                let c = sample_cluster(kernel, z, n_max, &mut rng);
                for (t, lvl) in c.levels.iter().enumerate() {
                    for (vi, x) in lvl.iter().enumerate() {
                        *tau.entry((t, x.clone())).or_insert(0u64) += 1;
                        if t == 0 || c.doubly_connected(t, vi) {
                            *rho.entry((t, x.clone())).or_insert(0u64) += 1;
                        }
                    }
                }
            }
            (tau, rho)
        })
        .collect();
    let mut tau_counts = vec![BTreeMap::<Site, u64>::new(); n_max + 1];
    let mut rho_counts = vec![BTreeMap::<Site, u64>::new(); n_max + 1];
    for (t, r) in parts {
        for ((n, x), c) in t {
            *tau_counts[n].entry(x).or_insert(0) += c;
        }
        for ((n, x), c) in r {
            *rho_counts[n].entry(x).or_insert(0) += c;
        }
    }
    Ok(OpEstimates {
        kernel_hash: kernel.content_hash(),
        d: kernel.d(),
        z,
        seed,
        samples,
        n_max,
        tau_counts: tau_counts.into_iter().map(|t| t.into_iter().collect()).collect(),
        rho_counts: rho_counts.into_iter().map(|t| t.into_iter().collect()).collect(),
    })
}

/// Provider built from `pi^{(0)}_m = rho_m` (m >= 2): `g_1 = z Dhat`, `g_2 = 0`,
/// `g_m = z Dhat pi_{m-1}-hat`, `e_m = pi_m-hat`. Valid only at the sampled `z`.
#[derive(Clone, Debug)]
pub struct OpProvider {
    kernel: Arc<StepKernel>,
    z: f64,
    pi: Vec<Vec<(Site, f64)>>,
    n_max: usize,
}

impl OpProvider {
    pub fn new(kernel: Arc<StepKernel>, est: &OpEstimates) -> Result<Self> {
        if est.kernel_hash != kernel.content_hash() {
            return Err(Error::InvalidArgument("estimates were sampled with a different kernel".into()));
        }
        let pi = (0..=est.n_max)
            .map(|m| if m >= 2 { est.rho_table(m) } else { Vec::new() })
            .collect();
        Ok(OpProvider {
            kernel,
            z: est.z,
            pi,
            n_max: est.n_max,
        })
    }

    fn pi_hat(&self, m: usize, k: &KPoint) -> f64 {
        lattice::fourier(&self.pi[m], k)
    }
}

impl CoefficientProvider for OpProvider {
    fn name(&self) -> &str {
        "op"
    }

    fn kernel(&self) -> &StepKernel {
        &self.kernel
    }

    fn max_m(&self) -> Option<usize> {
        Some(self.n_max)
    }

    fn fixed_z(&self) -> Option<f64> {
        Some(self.z)
    }

    fn g(&self, m: usize, k: &KPoint, z: f64) -> Result<f64> {
        self.check_m(m)?;
        self.check_z(z)?;
        Ok(match m {
            1 => z * self.kernel.dhat(k),
            2 => 0.0,
            _ => z * self.kernel.dhat(k) * self.pi_hat(m - 1, k),
        })
    }

    fn e(&self, m: usize, k: &KPoint, z: f64) -> Result<f64> {
        self.check_m(m)?;
        self.check_z(z)?;
        Ok(if m >= 2 { self.pi_hat(m, k) } else { 0.0 })
    }

    fn lap_g0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        self.check_z(z)?;
        let s2 = self.kernel.sigma_sq();
        Ok(match m {
            1 => -z * s2,
            2 => 0.0,
            _ => {
                let p = &self.pi[m - 1];
                z * (-s2 * lattice::total(p) - lattice::second_moment(p))
            }
        })
    }

    fn lap_e0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        self.check_z(z)?;
        Ok(-lattice::second_moment(&self.pi[m]))
    }
}
