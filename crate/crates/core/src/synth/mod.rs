//! Synthetic distributions with known ground truth: elliptical samplers, an
//! exact discrete 2-Wasserstein oracle and simulated quality ladders.

pub mod assignment;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::LadderEntry;
use crate::error::{Error, Result};
use crate::features::{FeatureMeta, FeatureSet, Role};
use crate::moments::{frechet_distance, GaussianSummary};
use crate::numeric::seeded_rng;

/// Largest empirical measure accepted by [`discrete_w2_exact`].
pub const W2_MAX_POINTS: usize = 4096;

/// Radial generator of an elliptical family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Gaussian,
    StudentT { dof: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticalSpec {
    pub mu: Vec<f64>,
    /// Positive-definite scale matrix, one inner vector per row.
    pub scale: Vec<Vec<f64>>,
    pub generator: Generator,
}

impl EllipticalSpec {
    pub fn gaussian(mu: Vec<f64>, scale: Vec<Vec<f64>>) -> Self {
        EllipticalSpec {
            mu,
            scale,
            generator: Generator::Gaussian,
        }
    }

    pub fn student_t(mu: Vec<f64>, scale: Vec<Vec<f64>>, dof: f64) -> Self {
        EllipticalSpec {
            mu,
            scale,
            generator: Generator::StudentT { dof },
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn scale_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::Validation("empty location vector".into()));
        }
        if self.scale.len() != d || self.scale.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                left: d,
                right: self.scale.len(),
            });
        }
        let m = DMatrix::from_fn(d, d, |i, j| self.scale[i][j]);
        if (0..d).any(|i| (0..d).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12)) {
            return Err(Error::Validation("scale matrix is not symmetric".into()));
        }
        Ok(m)
    }

    fn cholesky(&self) -> Result<DMatrix<f64>> {
        if let Generator::StudentT { dof } = self.generator {
            if !(dof > 2.0 && dof.is_finite()) {
                return Err(Error::Validation(format!(
                    "student-t needs dof > 2 for a finite covariance, got {dof}"
                )));
            }
        }
        Cholesky::new(self.scale_matrix()?)
            .map(|c| c.l())
            .ok_or_else(|| Error::Decomposition("scale matrix is not positive definite".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.cholesky().map(|_| ())
    }

    /// Covariance implied by the scale: `A` for Gaussian, `A·ν/(ν−2)` for t.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let a = self.scale_matrix()?;
        Ok(match self.generator {
            Generator::Gaussian => a,
            Generator::StudentT { dof } => a * (dof / (dof - 2.0)),
        })
    }

    /// True mean and covariance.
    pub fn summary(&self) -> Result<GaussianSummary> {
        GaussianSummary::new(DVector::from_column_slice(&self.mu), self.covariance()?)
    }

    fn shifted_scaled(&self, offset: f64, factor: f64) -> Self {
        let unit = 1.0 / (self.dim() as f64).sqrt();
        EllipticalSpec {
            mu: self.mu.iter().map(|m| m + offset * unit).collect(),
            scale: self
                .scale
                .iter()
                .map(|r| r.iter().map(|v| v * factor).collect())
                .collect(),
            generator: self.generator,
        }
    }
}

fn sample_stream(spec: &EllipticalSpec, n: usize, seed: u64, stream: u64, role: Role) -> Result<FeatureSet> {
    if n == 0 {
        return Err(Error::Validation("sample size must be ≥ 1".into()));
    }
    let l = spec.cholesky()?;
    let d = spec.dim();
    let mut rng = seeded_rng(seed, stream);
    let chi = match spec.generator {
        Generator::StudentT { dof } => Some(
            ChiSquared::new(dof).map_err(|e| Error::Validation(e.to_string()))?,
        ),
        Generator::Gaussian => None,
    };
    let mut data = Vec::with_capacity(n * d);
    let mut z = DVector::<f64>::zeros(d);
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let w = match &chi {
            Some(chi) => {
                let dof = match spec.generator {
                    Generator::StudentT { dof } => dof,
                    Generator::Gaussian => unreachable!(),
                };
                (dof / chi.sample(&mut rng)).sqrt()
            }
            None => 1.0,
        };
        let x = &l * &z * w;
        data.extend(x.iter().zip(&spec.mu).map(|(xi, m)| (xi + m) as f32));
    }
    let meta = FeatureMeta::new(role)
        .with_extractor("synthetic")
        .with_source(format!("elliptical:seed={seed}:stream={stream}"));
    FeatureSet::new(data, n, d, meta)
}

/// Draws `x = μ + L·z·w` with `L Lᵀ = A`, `z ~ N(0, I)` and `w = 1`
/// (Gaussian) or `w = √(ν/χ²_ν)` (Student t).
pub fn sample_elliptical(spec: &EllipticalSpec, n: usize, seed: u64) -> Result<FeatureSet> {
    sample_stream(spec, n, seed, 0, Role::Generated)
}

pub fn sample_elliptical_as(spec: &EllipticalSpec, n: usize, seed: u64, role: Role) -> Result<FeatureSet> {
    sample_stream(spec, n, seed, 0, role)
}

/// 2-Wasserstein distance between two equal-size uniform empirical measures,
/// solved exactly as an assignment problem on squared Euclidean costs.
pub fn discrete_w2_exact(xs: &FeatureSet, ys: &FeatureSet) -> Result<f64> {
    if xs.n() != ys.n() {
        return Err(Error::Validation(format!(
            "empirical measures must have equal size, got {} and {}",
            xs.n(),
            ys.n()
        )));
    }
    if xs.d() != ys.d() {
        return Err(Error::DimensionMismatch {
            left: xs.d(),
            right: ys.d(),
        });
    }
    let n = xs.n();
    if n > W2_MAX_POINTS {
        return Err(Error::Infeasible(format!(
            "exact W2 limited to {W2_MAX_POINTS} points, got {n}"
        )));
    }
    let a = xs.to_f64();
    let b = ys.to_f64();
    let d = xs.d();
    let mut cost = vec![0.0; n * n];
    cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let x = &a[i * d..(i + 1) * d];
        for (j, c) in row.iter_mut().enumerate() {
            *c = x
                .iter()
                .zip(&b[j * d..(j + 1) * d])
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
        }
    });
    let sol = assignment::solve_assignment(&cost, n)?;
    Ok((sol.total_cost / n as f64).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    /// Mean shift per step along the unit diagonal direction.
    pub mean_offset: f64,
    /// Multiplicative scale inflation per step.
    pub cov_inflation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub reference: EllipticalSpec,
    pub steps: usize,
    pub drift: Drift,
    pub n_per_step: usize,
    pub seed: u64,
}

impl LadderSpec {
    pub fn validate(&self) -> Result<()> {
        self.reference.validate()?;
        if self.steps < 2 {
            return Err(Error::Validation("a ladder needs at least two steps".into()));
        }
        if self.n_per_step < 2 {
            return Err(Error::Validation("n_per_step must be ≥ 2".into()));
        }
        let Drift {
            mean_offset,
            cov_inflation,
        } = self.drift;
        if !(mean_offset >= 0.0 && cov_inflation >= 1.0)
            || !(mean_offset > 0.0 || cov_inflation > 1.0)
            || !mean_offset.is_finite()
            || !cov_inflation.is_finite()
        {
            return Err(Error::Validation(
                "drift must be strictly monotone: mean_offset ≥ 0, cov_inflation ≥ 1, not both neutral"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Distribution of step `k`: mean moved by `k·mean_offset`, scale
    /// multiplied by `cov_inflation^k`.
    pub fn step_spec(&self, k: usize) -> EllipticalSpec {
        self.reference.shifted_scaled(
            k as f64 * self.drift.mean_offset,
            self.drift.cov_inflation.powi(k as i32),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedStep {
    pub model_id: String,
    pub features: FeatureSet,
    pub ground_truth_fd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLadder {
    /// Sample of the reference distribution, role `real_test`.
    pub reference: FeatureSet,
    pub steps: Vec<SimulatedStep>,
    /// One entry per step carrying `ground_truth_fd`; other metric columns are
    /// left for the caller.
    pub entries: Vec<LadderEntry>,
}

pub fn make_quality_ladder(spec: &LadderSpec, ladder_id: &str) -> Result<SimulatedLadder> {
    spec.validate()?;
    let reference = sample_stream(&spec.reference, spec.n_per_step, spec.seed, 0, Role::RealTest)?;
    let truth = spec.reference.summary()?;
    let mut steps = Vec::with_capacity(spec.steps);
    let mut entries = Vec::with_capacity(spec.steps);
    for k in 0..spec.steps {
        let step = spec.step_spec(k);
        let features = sample_stream(&step, spec.n_per_step, spec.seed, k as u64 + 1, Role::Generated)?;
        let fd = frechet_distance(&truth, &step.summary()?)?;
        let model_id = format!("{ladder_id}-{}", k + 1);
        entries.push(
            LadderEntry::new(model_id.clone(), ladder_id, k as f64).with_metric("ground_truth_fd", fd),
        );
        steps.push(SimulatedStep {
            model_id,
            features,
            ground_truth_fd: fd,
        });
    }
    Ok(SimulatedLadder {
        reference,
        steps,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(d: usize) -> Vec<Vec<f64>> {
        (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    fn set(rows: &[&[f64]]) -> FeatureSet {
        FeatureSet::from_rows(rows, FeatureMeta::new(Role::Generated)).unwrap()
    }

    #[test]
    fn w2_single_pair() {
        let w = discrete_w2_exact(&set(&[&[0.0, 0.0]]), &set(&[&[3.0, 4.0]])).unwrap();
        assert!((w - 5.0).abs() < 1e-12);
    }

    #[test]
    fn w2_identical_sets() {
        let x = set(&[&[0.0, 1.0], &[2.0, 2.0], &[-1.0, 0.5]]);
        assert_eq!(discrete_w2_exact(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn w2_two_point_enumeration() {
        let w = discrete_w2_exact(&set(&[&[0.0], &[2.0]]), &set(&[&[1.0], &[3.0]])).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w2_rejects_unequal_sizes() {
        assert!(discrete_w2_exact(&set(&[&[0.0]]), &set(&[&[1.0], &[2.0]])).is_err());
    }

    #[test]
    fn non_pd_scale_fails() {
        let spec = EllipticalSpec::gaussian(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(sample_elliptical(&spec, 5, 0), Err(Error::Decomposition(_))));
    }

    #[test]
    fn t_needs_dof_above_two() {
        let spec = EllipticalSpec::student_t(vec![0.0], eye(1), 2.0);
        assert!(sample_elliptical(&spec, 5, 0).is_err());
    }

    #[test]
    fn student_t_covariance_is_inflated() {
        let spec = EllipticalSpec::student_t(vec![0.0], vec![vec![2.0]], 6.0);
        assert!((spec.covariance().unwrap()[(0, 0)] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_and_translates() {
        let base = EllipticalSpec::gaussian(vec![0.0, 0.0], eye(2));
        let moved = EllipticalSpec::gaussian(vec![7.0, 7.0], eye(2));
        let a = sample_elliptical(&base, 2000, 5).unwrap();
        assert_eq!(a, sample_elliptical(&base, 2000, 5).unwrap());
        let b = sample_elliptical(&moved, 2000, 5).unwrap();
        let mean: Vec<f64> = (0..2)
            .map(|j| b.rows().map(|r| f64::from(r[j])).sum::<f64>() / 2000.0)
            .collect();
        assert!(mean.iter().all(|m| (m - 7.0).abs() < 0.1), "{mean:?}");
    }

    #[test]
    fn ladder_ground_truth() {
        let spec = LadderSpec {
            reference: EllipticalSpec::gaussian(vec![0.0, 0.0], eye(2)),
            steps: 4,
            drift: Drift {
                mean_offset: 0.5,
                cov_inflation: 1.5,
            },
            n_per_step: 20,
            seed: 1,
        };
        let lad = make_quality_ladder(&spec, "S").unwrap();
        assert!(lad.steps[0].ground_truth_fd.abs() < 1e-9);
        for w in lad.steps.windows(2) {
            assert!(w[1].ground_truth_fd > w[0].ground_truth_fd);
        }
        // closed form: (k·offset)² + tr(I)·(1 − c^{k/2})²
        let k = 3.0f64;
        let expected = ((k * 0.5).powi(2) + 2.0 * (1.0 - 1.5f64.powf(k / 2.0)).powi(2)).sqrt();
        assert!((lad.steps[3].ground_truth_fd - expected).abs() < 1e-9);
        assert_eq!(lad.entries[2].model_id, "S-3");
        assert_eq!(make_quality_ladder(&spec, "S").unwrap(), lad);
    }

    #[test]
    fn ladder_spec_validation() {
        let mut spec = LadderSpec {
            reference: EllipticalSpec::gaussian(vec![0.0], eye(1)),
            steps: 3,
            drift: Drift {
                mean_offset: 0.0,
                cov_inflation: 1.0,
            },
            n_per_step: 10,
            seed: 0,
        };
        assert!(spec.validate().is_err());
        spec.drift.mean_offset = 0.1;
        assert!(spec.validate().is_ok());
        spec.steps = 1;
        assert!(spec.validate().is_err());
    }
}
