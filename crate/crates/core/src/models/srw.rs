//! Simple random walk: `g_1 = z Dhat`, all other coefficients vanish.

use std::sync::Arc;

use crate::engine::CoefficientProvider;
use crate::error::Result;
use crate::kernels::{KPoint, StepKernel};

#[derive(Clone, Debug)]
pub struct SrwProvider {
    kernel: Arc<StepKernel>,
}

impl SrwProvider {
    pub fn new(kernel: Arc<StepKernel>) -> Self {
        SrwProvider { kernel }
    }
}

impl CoefficientProvider for SrwProvider {
    fn name(&self) -> &str {
        "srw"
    }

    fn kernel(&self) -> &StepKernel {
        &self.kernel
    }

    fn max_m(&self) -> Option<usize> {
        None
    }

    fn g(&self, m: usize, k: &KPoint, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(if m == 1 { z * self.kernel.dhat(k) } else { 0.0 })
    }

    fn e(&self, m: usize, _k: &KPoint, _z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(0.0)
    }

    fn g_support(&self) -> Option<usize> {
        Some(1)
    }

    fn e_support(&self) -> Option<usize> {
        Some(0)
    }

    fn lap_g0(&self, m: usize, z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(if m == 1 { -z * self.kernel.sigma_sq() } else { 0.0 })
    }

    fn lap_e0(&self, m: usize, _z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(0.0)
    }

    fn dz_g0(&self, m: usize, _z: f64) -> Result<f64> {
        self.check_m(m)?;
        Ok(if m == 1 { 1.0 } else { 0.0 })
    }
}
