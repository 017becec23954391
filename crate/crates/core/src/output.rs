//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::critical::{VTrace, ZTrace};
use crate::engine::RecursionState;
use crate::error::Result;
use crate::induction::HypothesisReport;
use crate::models::op::OpEstimates;

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

/// Plain comma-separated table; fields never contain commas.
#[derive(Clone, Debug, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        let mut c = Csv::default();
        c.row(header);
        c
    }

    pub fn with_header(header: &[&str]) -> Self {
        Csv::new(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn axis_columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}_{i}")).collect()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Columns `n, k_1..k_d, f`.
pub fn recursion_state_csv(state: &RecursionState) -> Csv {
    let d = state.kset.first().map_or(0, |k| k.dim());
    let mut header = vec!["n".to_string()];
    header.extend(axis_columns("k", d));
    header.push("f".into());
    let mut csv = Csv::new(&header);
    for n in 0..=state.n_max {
        for (i, k) in state.kset.iter().enumerate() {
            let mut row = vec![n.to_string()];
            row.extend(k.as_slice().iter().map(|&c| fmt_f64(c)));
            row.push(fmt_f64(state.f(n, i)));
            csv.row(&row);
        }
    }
    csv
}

/// Columns `n, z_n, lo, hi, b, c, v`; z columns are empty when unavailable.
pub fn trace_csv(zt: Option<&ZTrace>, vt: &VTrace) -> Csv {
    let mut csv = Csv::with_header(&["n", "z_n", "lo", "hi", "b", "c", "v"]);
    for n in 0..vt.v.len() {
        let (z, lo, hi) = match zt {
            Some(t) if n < t.z.len() && n >= 1 => {
                let (a, b) = t.interval(n);
                (fmt_f64(t.z[n]), fmt_f64(a), fmt_f64(b))
            }
            Some(t) if n < t.z.len() => (fmt_f64(t.z[n]), String::new(), String::new()),
            _ => (String::new(), String::new(), String::new()),
        };
        csv.row(&[n.to_string(), z, lo, hi, fmt_f64(vt.b[n]), fmt_f64(vt.c[n]), fmt_f64(vt.v[n])]);
    }
    csv
}

/// Columns `hypothesis, j, k_index, margin`.
pub fn margins_csv(report: &HypothesisReport) -> Csv {
    let mut csv = Csv::with_header(&["hypothesis", "j", "k_index", "margin"]);
    for m in &report.margins {
        csv.row(&[
            m.hypothesis.clone(),
            m.j.to_string(),
            m.k_index.map_or(String::new(), |k| k.to_string()),
            fmt_f64(m.margin),
        ]);
    }
    csv
}

/// Columns `quantity, n, x_1..x_d, estimate, stderr` with quantity `tau` or `rho`.
pub fn op_estimates_csv(est: &OpEstimates) -> Csv {
    let mut header = vec!["quantity".to_string(), "n".to_string()];
    header.extend(axis_columns("x", est.d));
    header.push("estimate".into());
    header.push("stderr".into());
    let mut csv = Csv::new(&header);
    for (name, counts) in [("tau", &est.tau_counts), ("rho", &est.rho_counts)] {
        for (n, table) in counts.iter().enumerate() {
            for (x, _) in table {
                let e = if name == "tau" { est.tau(n, x) } else { est.rho(n, x) };
                let mut row = vec![name.to_string(), n.to_string()];
                row.extend(x.iter().map(|c| c.to_string()));
                row.push(fmt_f64(e.mean));
                row.push(fmt_f64(e.stderr));
                csv.row(&row);
            }
        }
    }
    csv
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    crate::kernels::hex_sha256(bytes)
}

pub(crate) fn join_floats(xs: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(';');
        }
        let _ = write!(s, "{}", fmt_f64(*x));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn csv_rows() {
        let mut c = Csv::with_header(&["a", "b"]);
        c.row(&["1".into(), fmt_f64(0.5)]);
        assert_eq!(c.as_str(), "a,b\n1,0.5\n");
    }
}
