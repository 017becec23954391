//! User-specified coefficient families of the form `amp * z^q * Dhat(k)^p * m^{-decay}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::CoefficientProvider;
use crate::error::{Error, Result};
use crate::kernels::{KPoint, StepKernel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZPower {
    /// `z^q` with a fixed exponent.
    Fixed(u32),
    /// `z^m`.
    M,
}

/// One term covering indices `m_from..=m_to` (unbounded when `m_to` is `None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTerm {
    pub m_from: usize,
    pub m_to: Option<usize>,
    pub amplitude: f64,
    pub z_power: ZPower,
    pub dhat_power: u32,
    #[serde(default)]
    pub decay: f64,
}

impl SyntheticTerm {
    pub fn single(m: usize, amplitude: f64, z_power: u32, dhat_power: u32) -> Self {
        SyntheticTerm {
            m_from: m,
            m_to: Some(m),
            amplitude,
            z_power: ZPower::Fixed(z_power),
            dhat_power,
            decay: 0.0,
        }
    }

    /// `amp * z^m * Dhat^p * m^{-decay}` for every `m >= m_from`.
    pub fn family(m_from: usize, amplitude: f64, dhat_power: u32, decay: f64) -> Self {
        SyntheticTerm {
            m_from,
            m_to: None,
            amplitude,
            z_power: ZPower::M,
            dhat_power,
            decay,
        }
    }

    fn covers(&self, m: usize) -> bool {
        m >= self.m_from && self.m_to.is_none_or(|t| m <= t)
    }

    fn zq(&self, m: usize) -> u32 {
        match self.z_power {
            ZPower::Fixed(q) => q,
            ZPower::M => m as u32,
        }
    }

    /// Value with `Dhat(k)` supplied.
    fn value(&self, m: usize, dhat: f64, z: f64) -> f64 {
        self.amplitude * z.powi(self.zq(m) as i32) * dhat.powi(self.dhat_power as i32) * (m as f64).powf(-self.decay)
    }

    fn dz0(&self, m: usize, z: f64) -> f64 {
        let q = self.zq(m);
        if q == 0 {
            return 0.0;
        }
        self.amplitude * q as f64 * z.powi(q as i32 - 1) * (m as f64).powf(-self.decay)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Adds the random-walk step `g_1 = z Dhat`.
    pub srw_step: bool,
    pub g_terms: Vec<SyntheticTerm>,
    pub e_terms: Vec<SyntheticTerm>,
    pub max_m: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SyntheticProvider {
    kernel: Arc<StepKernel>,
    spec: SyntheticSpec,
    name: String,
    /// `Dhat(0)` as the kernel evaluates it.
    dhat0: f64,
}

fn support(terms: &[SyntheticTerm]) -> Option<usize> {
    let mut top = 0;
    for t in terms {
        top = top.max(t.m_to?);
    }
    Some(top)
}

impl SyntheticProvider {
    pub fn new(kernel: Arc<StepKernel>, spec: SyntheticSpec) -> Result<Self> {
        for t in spec.g_terms.iter().chain(&spec.e_terms) {
            if t.m_from == 0 || t.m_to.is_some_and(|e| e < t.m_from) {
                return Err(Error::InvalidArgument(format!("bad synthetic index range {t:?}")));
            }
            if !t.amplitude.is_finite() || !t.decay.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite synthetic term {t:?}")));
            }
        }
        let dhat0 = kernel.dhat(&KPoint::zero(kernel.d()));
        Ok(SyntheticProvider {
            dhat0,
            kernel,
            spec,
            name: "synthetic".into(),
        })
    }

    /// `g_1 = z Dhat`, `g_2 = b z^2 Dhat^p`.
    pub fn single_g2(kernel: Arc<StepKernel>, b: f64, p: u32) -> Self {
        let spec = SyntheticSpec {
            srw_step: true,
            g_terms: vec![SyntheticTerm::single(2, b, 2, p)],
            e_terms: vec![],
            max_m: None,
        };
        SyntheticProvider::new(kernel, spec).expect("valid spec")
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    fn sum(&self, terms: &[SyntheticTerm], m: usize, dhat: f64, z: f64) -> f64 {
        terms.iter().filter(|t| t.covers(m)).map(|t| t.value(m, dhat, z)).sum()
    }

    fn g_val(&self, m: usize, dhat: f64, z: f64) -> f64 {
        let step = if m == 1 && self.spec.srw_step { z * dhat } else { 0.0 };
        step + self.sum(&self.spec.g_terms, m, dhat, z)
    }

    fn lap(&self, terms: &[SyntheticTerm], m: usize, z: f64) -> f64 {
        let s2 = self.kernel.sigma_sq();
        terms
            .iter()
            .filter(|t| t.covers(m))
            .map(|t| -(t.dhat_power as f64) * s2 * t.value(m, 1.0, z))
            .sum()
    }
}

impl CoefficientProvider for SyntheticProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn kernel(&self) -> &StepKernel {
        &self.kernel
    }

    fn max_m(&self) -> Option<usize> {
        self.spec.max_m
    }

    fn g(&self, m: usize, k: &KPoint, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(self.g_val(m, self.kernel.dhat(k), z))
    }

    fn e(&self, m: usize, k: &KPoint, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(self.sum(&self.spec.e_terms, m, self.kernel.dhat(k), z))
    }

    fn g0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(self.g_val(m, self.dhat0, z))
    }

    fn e0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(self.sum(&self.spec.e_terms, m, self.dhat0, z))
    }

    fn g_support(&self) -> Option<usize> {
        let s = support(&self.spec.g_terms)?;
        Some(if self.spec.srw_step { s.max(1) } else { s })
    }

    fn e_support(&self) -> Option<usize> {
        support(&self.spec.e_terms)
    }

    fn lap_g0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        let step = if m == 1 && self.spec.srw_step { -z * self.kernel.sigma_sq() } else { 0.0 };
        Ok(step + self.lap(&self.spec.g_terms, m, z))
    }

    fn lap_e0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(self.lap(&self.spec.e_terms, m, z))
    }

    fn dz_g0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        let step = if m == 1 && self.spec.srw_step { 1.0 } else { 0.0 };
        Ok(step + self.spec.g_terms.iter().filter(|t| t.covers(m)).map(|t| t.dz0(m, z)).sum::<f64>())
    }

    fn g_column(&self, k: &KPoint, z: f64, out: &mut [f64]) -> Result<()> {
        if out.is_empty() {
            return Ok(());
        }
        self.check_m(out.len())?;
        let dh = self.kernel.dhat(k);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.g_val(i + 1, dh, z);
        }
        Ok(())
    }

    fn e_column(&self, k: &KPoint, z: f64, out: &mut [f64]) -> Result<()> {
        if out.is_empty() {
            return Ok(());
        }
        self.check_m(out.len())?;
        let dh = self.kernel.dhat(k);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.sum(&self.spec.e_terms, i + 1, dh, z);
        }
        Ok(())
    }
}
