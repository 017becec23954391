//! Quadrature rules for normalised torus integrals `(2 pi)^{-d} \int_{[-pi,pi]^d}`.
//!
//! Tensor and graded rules assume the integrand is invariant under coordinate
//! sign flips and permutations, and integrate over the sorted half-cell.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{sorted_tuples, KPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuadratureSpec {
    /// Midpoint tensor rule with `resolution` nodes per axis.
    Tensor { resolution: usize },
    /// Randomly shifted Kronecker lattice built on the generalised golden ratio.
    Qmc { node_count: usize, seed: u64 },
    /// Composite Gauss-Legendre on geometrically refined panels towards `k = 0`.
    Graded { panels: usize, order: usize },
}

impl QuadratureSpec {
    pub fn default_for(d: usize) -> Self {
        if d <= 3 {
            QuadratureSpec::Tensor { resolution: 64 }
        } else {
            QuadratureSpec::Graded { panels: 7, order: 4 }
        }
    }
}

/// Nodes and weights with `sum(weights) = 1`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<KPoint>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&KPoint) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(k, w)| w * f(k)).sum()
    }
}

pub fn build_rule(spec: &QuadratureSpec, d: usize) -> Result<QuadratureRule> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    match *spec {
        QuadratureSpec::Tensor { resolution } => {
            if resolution == 0 {
                return Err(Error::InvalidArgument("tensor resolution must be >= 1".into()));
            }
            let h = 2.0 * PI / resolution as f64;
            let mut half = Vec::new();
            if resolution % 2 == 1 {
                half.push((0.0, 1.0 / resolution as f64));
            }
            let first = if resolution % 2 == 1 { 1.0 } else { 0.5 };
            for j in 0..resolution / 2 {
                half.push(((j as f64 + first) * h, 2.0 / resolution as f64));
            }
            Ok(symmetric_product(&half, d))
        }
        QuadratureSpec::Graded { panels, order } => {
            if panels == 0 || order == 0 {
                return Err(Error::InvalidArgument("graded rule needs panels, order >= 1".into()));
            }
            let (x, w) = gauss_legendre(order);
            let mut edges = vec![0.0];
            for i in (0..panels).rev() {
                edges.push(PI * 0.5f64.powi(i as i32));
            }
            let mut half = Vec::new();
            for p in edges.windows(2) {
                let (a, b) = (p[0], p[1]);
                for (xi, wi) in x.iter().zip(&w) {
                    let t = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                    half.push((t, 0.5 * (b - a) * wi / PI));
                }
            }
            Ok(symmetric_product(&half, d))
        }
        QuadratureSpec::Qmc { node_count, seed } => {
            if node_count == 0 {
                return Err(Error::InvalidArgument("qmc node_count must be >= 1".into()));
            }
            let mut phi = 2.0f64;
            for _ in 0..100 {
                let f = phi.powi(d as i32 + 1) - phi - 1.0;
                let df = (d as f64 + 1.0) * phi.powi(d as i32) - 1.0;
                phi -= f / df;
            }
            let alpha: Vec<f64> = (1..=d).map(|i| phi.powi(-(i as i32)).fract()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shift: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let w = 1.0 / node_count as f64;
            let mut nodes = Vec::with_capacity(node_count);
            for j in 0..node_count {
                let k: Vec<f64> = (0..d)
                    .map(|i| {
                        let u = (shift[i] + (j as f64 + 1.0) * alpha[i]).fract();
                        (-PI + 2.0 * PI * u).clamp(-PI, PI)
                    })
                    .collect();
                nodes.push(KPoint::new(k)?);
            }
            Ok(QuadratureRule {
                nodes,
                weights: vec![w; node_count],
            })
        }
    }
}

/// Product of a folded one-dimensional rule over sorted index tuples.
fn symmetric_product(half: &[(f64, f64)], d: usize) -> QuadratureRule {
    let tuples = sorted_tuples(half.len(), d);
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut nodes = Vec::with_capacity(tuples.len() / d);
    let mut weights = Vec::with_capacity(tuples.len() / d);
    for t in tuples.chunks(d) {
        let mut w = fact[d];
        let mut run = 1;
        for i in 0..d {
            w *= half[t[i]].1;
            if i > 0 && t[i] == t[i - 1] {
                run += 1;
            } else {
                run = 1;
            }
            w /= run as f64;
        }
        nodes.push(KPoint::new(t.iter().map(|&i| half[i].0).collect()).expect("node in range"));
        weights.push(w);
    }
    QuadratureRule { nodes, weights }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * p - pm) / (t * t - 1.0);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}
