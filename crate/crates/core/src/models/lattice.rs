//! Sparse functions on Z^d.

use std::collections::BTreeMap;
use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::kernels::KPoint;

pub type Site = Vec<i32>;

/// Sparse table in lexicographic order of sites.
pub type Table<T> = BTreeMap<Site, T>;

/// Arithmetic used by the exact and floating tables.
pub trait Ring: Copy + PartialEq + Debug + Send + Sync {
    fn zero() -> Self;
    fn add(self, o: Self) -> Result<Self>;
    fn sub(self, o: Self) -> Result<Self>;
    fn mul(self, o: Self) -> Result<Self>;
    fn is_zero(self) -> bool {
        self == Self::zero()
    }
}

impl Ring for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, o: Self) -> Result<Self> {
        Ok(self + o)
    }
    fn sub(self, o: Self) -> Result<Self> {
        Ok(self - o)
    }
    fn mul(self, o: Self) -> Result<Self> {
        Ok(self * o)
    }
}

impl Ring for i128 {
    fn zero() -> Self {
        0
    }
    fn add(self, o: Self) -> Result<Self> {
        self.checked_add(o).ok_or_else(|| Error::Overflow(format!("{self} + {o}")))
    }
    fn sub(self, o: Self) -> Result<Self> {
        self.checked_sub(o).ok_or_else(|| Error::Overflow(format!("{self} - {o}")))
    }
    fn mul(self, o: Self) -> Result<Self> {
        self.checked_mul(o).ok_or_else(|| Error::Overflow(format!("{self} * {o}")))
    }
}

pub fn add_site(a: &[i32], b: &[i32]) -> Site {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `(a * b)(x) = sum_y a(y) b(x - y)`.
pub fn convolve<T: Ring>(a: &Table<T>, b: &Table<T>) -> Result<Table<T>> {
    let mut out: Table<T> = BTreeMap::new();
    for (x, &va) in a {
        for (y, &vb) in b {
            let p = va.mul(vb)?;
            let e = out.entry(add_site(x, y)).or_insert_with(T::zero);
            *e = e.add(p)?;
        }
    }
    out.retain(|_, v| !v.is_zero());
    Ok(out)
}

/// `a - b` with zero entries dropped.
pub fn subtract<T: Ring>(a: &Table<T>, b: &Table<T>) -> Result<Table<T>> {
    let mut out = a.clone();
    for (x, &vb) in b {
        let e = out.entry(x.clone()).or_insert_with(T::zero);
        *e = e.sub(vb)?;
    }
    out.retain(|_, v| !v.is_zero());
    Ok(out)
}

/// `sum_x t(x) cos(k.x)`.
pub fn fourier(t: &[(Site, f64)], k: &KPoint) -> f64 {
    let ks = k.as_slice();
    t.iter()
        .map(|(x, v)| v * x.iter().zip(ks).map(|(&a, b)| a as f64 * b).sum::<f64>().cos())
        .sum()
}

pub fn total(t: &[(Site, f64)]) -> f64 {
    t.iter().map(|(_, v)| v).sum()
}

/// `sum_x |x|^2 t(x)`.
pub fn second_moment(t: &[(Site, f64)]) -> f64 {
    t.iter()
        .map(|(x, v)| v * x.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>())
        .sum()
}

pub fn sup_abs(t: &[(Site, f64)]) -> f64 {
    t.iter().fold(0.0, |m, (_, v)| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_of_deltas() {
        let mut a: Table<i128> = BTreeMap::new();
        a.insert(vec![1], 2);
        a.insert(vec![-1], 3);
        let c = convolve(&a, &a).unwrap();
        assert_eq!(c[&vec![2]], 4);
        assert_eq!(c[&vec![0]], 12);
        assert_eq!(c[&vec![-2]], 9);
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(i128::MAX.add(1), Err(Error::Overflow(_))));
    }
}
