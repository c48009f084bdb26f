//! Per-vector sparsity and entropy of raw feature vectors.

use rayon::prelude::*;
use serde::Serialize;

use crate::features::FeatureSet;
use crate::numeric::compensated_sum;

pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Fraction of entries with |v_i| > threshold, per row.
pub fn sparsity_l0(fs: &FeatureSet, threshold: f64) -> Vec<f64> {
    let d = fs.d() as f64;
    fs.rows()
        .map(|row| {
            let support = row.iter().filter(|v| f64::from(v.abs()) > threshold).count();
            support as f64 / d
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shannon entropy (nats) of a single row after sigmoid and sum-normalization.
pub fn row_entropy(row: &[f64]) -> f64 {
    let s: Vec<f64> = row.iter().map(|&v| sigmoid(v)).collect();
    let total = compensated_sum(s.iter().copied());
    let h = compensated_sum(s.iter().map(|&si| {
        let p = si / total;
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    }));
    h.max(0.0)
}

pub fn entropy_nats(fs: &FeatureSet) -> Vec<f64> {
    fs.rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| {
            let v: Vec<f64> = row.iter().map(|&x| f64::from(x)).collect();
            row_entropy(&v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = compensated_sum(values.iter().copied()) / n;
        let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
        Aggregate {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub threshold: f64,
    pub dim: usize,
    pub relative_l0: Vec<f64>,
    pub entropy: Vec<f64>,
    pub relative_l0_summary: Aggregate,
    pub entropy_summary: Aggregate,
}

impl DiagnosticsReport {
    pub fn compute(fs: &FeatureSet, threshold: f64) -> Self {
        let relative_l0 = sparsity_l0(fs, threshold);
        let entropy = entropy_nats(fs);
        DiagnosticsReport {
            threshold,
            dim: fs.d(),
            relative_l0_summary: Aggregate::of(&relative_l0),
            entropy_summary: Aggregate::of(&entropy),
            relative_l0,
            entropy,
        }
    }

    /// One line per vector: `index,relative_l0,entropy_nats`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,relative_l0,entropy_nats\n");
        for (i, (l0, h)) in self.relative_l0.iter().zip(&self.entropy).enumerate() {
            out.push_str(&format!("{i},{l0:.9e},{h:.9e}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureMeta, Role};

    fn one_row(v: &[f64]) -> FeatureSet {
        FeatureSet::from_rows(&[v], FeatureMeta::new(Role::Generated)).unwrap()
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity_l0(&one_row(&[0.0; 100]), 0.01), vec![0.0]);
        assert_eq!(sparsity_l0(&one_row(&[0.5; 100]), 0.01), vec![1.0]);
        assert_eq!(
            sparsity_l0(&one_row(&[0.005, -0.02, 0.3, 0.0]), 0.01),
            vec![0.5]
        );
    }

    #[test]
    fn constant_vector_entropy_is_ln_d() {
        for c in [-3.0, 0.0, 0.7, 12.0] {
            let h = row_entropy(&[c; 100]);
            assert!((h - 100f64.ln()).abs() < 1e-9, "{c}: {h}");
        }
    }

    #[test]
    fn two_dim_hand_value() {
        let h = row_entropy(&[0.0, 3f64.ln()]);
        let expected = -(0.4f64 * 0.4f64.ln() + 0.6 * 0.6f64.ln());
        assert!((h - expected).abs() < 1e-12);
        assert!((h - 0.67301).abs() < 1e-5);
    }

    #[test]
    fn saturated_vector_has_near_zero_entropy() {
        assert!(row_entropy(&[50.0, -50.0]) <= 1e-10);
    }

    #[test]
    fn report_bounds() {
        let fs = FeatureSet::from_rows(
            &[[0.2, -0.5, 0.0, 3.0], [0.0, 0.0, 0.001, -0.02]],
            FeatureMeta::new(Role::Generated),
        )
        .unwrap();
        let r = DiagnosticsReport::compute(&fs, DEFAULT_THRESHOLD);
        assert_eq!(r.relative_l0, vec![0.75, 0.25]);
        assert!(r.entropy.iter().all(|&h| (0.0..=4f64.ln() + 1e-12).contains(&h)));
        assert_eq!(r.to_csv().lines().count(), 3);
    }
}
