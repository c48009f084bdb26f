//! Gaussian summaries and the Fréchet distance between them.
//!
//! For summaries (μ₁, Σ₁) and (μ₂, Σ₂) the squared distance is
//! `‖μ₁ − μ₂‖² + tr(Σ₁ + Σ₂ − 2 (Σ₁ Σ₂)^{1/2})`. The cross term is evaluated
//! through the symmetric product `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, which shares its
//! spectrum with `Σ₁ Σ₂` but can be handled by a symmetric eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureSet;

/// Absolute tolerance on |Σᵢⱼ − Σⱼᵢ| accepted by [`GaussianSummary::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
/// Eigenvalues down to `-EIGEN_FLOOR_REL · λmax` are treated as rounding noise.
pub const EIGEN_FLOOR_REL: f64 = 1e-6;
/// Auto jitter is `JITTER_REL · tr(Σ) / d`.
pub const JITTER_REL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    n_samples: Option<usize>,
}

impl GaussianSummary {
    /// A summary from known parameters (no sample count).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Validation("empty mean vector".into()));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                left: d,
                right: cov.nrows().max(cov.ncols()),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite summary parameter".into()));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(GaussianSummary {
            mean,
            cov,
            n_samples: None,
        })
    }

    pub fn from_slices(mean: &[f64], cov_row_major: &[f64]) -> Result<Self> {
        let d = mean.len();
        if cov_row_major.len() != d * d {
            return Err(Error::DimensionMismatch {
                left: d * d,
                right: cov_row_major.len(),
            });
        }
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(d, d, cov_row_major),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Sample count of a fitted summary; `None` for known parameters.
    pub fn n_samples(&self) -> Option<usize> {
        self.n_samples
    }

    /// Affine image under `x ↦ c·x`.
    pub fn scaled(&self, c: f64) -> Self {
        GaussianSummary {
            mean: &self.mean * c,
            cov: &self.cov * (c * c),
            n_samples: self.n_samples,
        }
    }
}

/// Sample mean and unbiased (n − 1) sample covariance.
pub fn fit_gaussian_summary(fs: &FeatureSet) -> Result<GaussianSummary> {
    let (n, d) = (fs.n(), fs.d());
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mut mean = DVector::<f64>::zeros(d);
    for row in fs.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f64::from(v);
        }
    }
    mean /= n as f64;

    let mut centered = DMatrix::<f64>::zeros(n, d);
    for (i, row) in fs.rows().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            centered[(i, j)] = f64::from(v) - mean[j];
        }
    }
    let raw = centered.tr_mul(&centered) / (n - 1) as f64;
    let cov = (&raw + raw.transpose()) * 0.5;
    Ok(GaussianSummary {
        mean,
        cov,
        n_samples: Some(n),
    })
}

/// Diagonal regularization policy for near-singular covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Jitter {
    /// Add `1e-6 · tr(Σ)/d` to a covariance whose smallest eigenvalue is ≤ 0
    /// but above the indefiniteness floor.
    Auto,
    /// Add the given value to both covariances unconditionally.
    Fixed(f64),
    /// Never regularize; slightly negative eigenvalues are clamped to zero.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrechetOptions {
    pub eigen_floor_rel: f64,
    pub jitter: Jitter,
}

impl Default for FrechetOptions {
    fn default() -> Self {
        FrechetOptions {
            eigen_floor_rel: EIGEN_FLOOR_REL,
            jitter: Jitter::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrechetReport {
    /// FD, the square root of the closed form.
    pub distance: f64,
    /// FD², the value conventionally reported as FID.
    pub squared: f64,
    pub mean_term: f64,
    pub trace_term: f64,
    pub jitter_a: f64,
    pub jitter_b: f64,
}

struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

fn spectrum(m: &DMatrix<f64>) -> Spectrum {
    let eig = SymmetricEigen::new(m.clone());
    Spectrum {
        values: eig.eigenvalues,
        vectors: eig.eigenvectors,
    }
}

fn sqrt_from_spectrum(s: &Spectrum) -> DMatrix<f64> {
    let roots = s.values.map(|l| l.max(0.0).sqrt());
    let scaled = &s.vectors * DMatrix::from_diagonal(&roots);
    let root = scaled * s.vectors.transpose();
    (&root + root.transpose()) * 0.5
}

/// Principal square root of a symmetric PSD matrix, negative eigenvalues clamped.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    sqrt_from_spectrum(&spectrum(m))
}

/// `tr((A B)^{1/2})` as the nuclear norm of `B^{1/2} A^{1/2}`. Singular values
/// carry absolute error near `ε·‖A‖`, where square roots of the eigenvalues
/// of `A^{1/2} B A^{1/2}` would amplify it to `√(ε·‖A‖²)` on small modes.
fn trace_sqrt_from_roots(root_a: &DMatrix<f64>, root_b: &DMatrix<f64>) -> f64 {
    (root_b * root_a).singular_values().iter().sum()
}

/// `tr((A B)^{1/2})` for symmetric PSD `A`, `B`.
pub fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    Ok(trace_sqrt_from_roots(&sqrt_psd(a), &sqrt_psd(b)))
}

/// Checks the indefiniteness floor and resolves the jitter for one side.
fn resolve_jitter(cov: &DMatrix<f64>, spec: &Spectrum, opts: &FrechetOptions) -> Result<f64> {
    let max = spec.values.max();
    let min = spec.values.min();
    let floor = -opts.eigen_floor_rel * max.max(0.0);
    if min < floor {
        return Err(Error::IndefiniteCovariance {
            min_eigenvalue: min,
            floor,
        });
    }
    Ok(match opts.jitter {
        Jitter::Off => 0.0,
        Jitter::Fixed(eps) => eps,
        // eigenvalues within rounding of zero count as singular
        Jitter::Auto if min <= cov.nrows() as f64 * f64::EPSILON * max.max(0.0) => {
            let d = cov.nrows() as f64;
            (JITTER_REL * cov.trace() / d).max(0.0)
        }
        Jitter::Auto => 0.0,
    })
}

pub fn frechet_report(
    a: &GaussianSummary,
    b: &GaussianSummary,
    opts: &FrechetOptions,
) -> Result<FrechetReport> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if let Jitter::Fixed(eps) = opts.jitter {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Validation(format!("jitter must be ≥ 0, got {eps}")));
        }
    }
    let d = a.dim();
    let spec_a = spectrum(&a.cov);
    let spec_b = spectrum(&b.cov);
    let jitter_a = resolve_jitter(&a.cov, &spec_a, opts)?;
    let jitter_b = resolve_jitter(&b.cov, &spec_b, opts)?;

    let shift = |s: Spectrum, eps: f64| Spectrum {
        values: s.values.add_scalar(eps),
        vectors: s.vectors,
    };
    let root_a = sqrt_from_spectrum(&shift(spec_a, jitter_a));
    let root_b = sqrt_from_spectrum(&shift(spec_b, jitter_b));
    let cross = trace_sqrt_from_roots(&root_a, &root_b);

    let diff = &a.mean - &b.mean;
    let mean_term = diff.dot(&diff);
    let tr_a = a.cov.trace() + jitter_a * d as f64;
    let tr_b = b.cov.trace() + jitter_b * d as f64;
    let trace_term = tr_a + tr_b - 2.0 * cross;
    let squared = (mean_term + trace_term).max(0.0);
    Ok(FrechetReport {
        distance: squared.sqrt(),
        squared,
        mean_term,
        trace_term,
        jitter_a,
        jitter_b,
    })
}

/// FD (not squared) with default options.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    frechet_report(a, b, &FrechetOptions::default()).map(|r| r.distance)
}
