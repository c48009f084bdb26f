//! Squared maximum mean discrepancy over a small kernel registry.
//!
//! Within-set and cross-set kernel sums are accumulated with an exactly
//! rounded summation, so results are independent of tiling, thread count and
//! argument order.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::numeric::{exact_sum, mean_and_std_error, median, seeded_rng, ExactSum};

/// Rows per tile when accumulating Gram sums.
const TILE: usize = 64;
/// Pooled samples beyond this size are thinned before the median heuristic.
pub const MEDIAN_MAX_POINTS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    GaussianRbf { sigma: f64 },
    Polynomial { degree: u32, gamma: f64, coef: f64 },
    RationalQuadratic { alpha: f64, lengthscale: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be positive, got {v}")))
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::GaussianRbf { sigma } => positive("sigma", sigma),
            KernelSpec::Polynomial {
                degree,
                gamma,
                coef,
            } => {
                if degree == 0 {
                    return Err(Error::Validation("degree must be ≥ 1".into()));
                }
                positive("gamma", gamma)?;
                if !(coef >= 0.0 && coef.is_finite()) {
                    return Err(Error::Validation(format!("coef must be ≥ 0, got {coef}")));
                }
                Ok(())
            }
            KernelSpec::RationalQuadratic { alpha, lengthscale } => {
                positive("alpha", alpha)?;
                positive("lengthscale", lengthscale)
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        self.validate()?;
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::GaussianRbf { sigma } => {
                (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Polynomial {
                degree,
                gamma,
                coef,
            } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (gamma * dot + coef).powi(degree as i32)
            }
            KernelSpec::RationalQuadratic { alpha, lengthscale } => {
                let z = sq_dist(x, y) / (2.0 * alpha * lengthscale * lengthscale);
                (1.0 + z).powf(-alpha)
            }
        }
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Named kernel configurations resolvable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelPreset {
    /// Cubic polynomial, γ = 1/d, coef = 1.
    #[serde(rename = "kid-poly3")]
    KidPoly3,
    /// Rational quadratic, α = 1, ℓ = √d.
    #[serde(rename = "kid-rq")]
    KidRq,
    /// Gaussian RBF with the median-heuristic bandwidth.
    #[serde(rename = "cmmd-rbf")]
    CmmdRbf,
}

impl KernelPreset {
    pub fn name(self) -> &'static str {
        match self {
            KernelPreset::KidPoly3 => "kid-poly3",
            KernelPreset::KidRq => "kid-rq",
            KernelPreset::CmmdRbf => "cmmd-rbf",
        }
    }

    /// Concrete kernel for feature dimension `d`. The RBF preset needs the
    /// pooled sample to resolve its bandwidth.
    pub fn resolve(self, xs: &FeatureSet, ys: &FeatureSet) -> Result<KernelSpec> {
        let d = xs.d() as f64;
        match self {
            KernelPreset::KidPoly3 => Ok(KernelSpec::Polynomial {
                degree: 3,
                gamma: 1.0 / d,
                coef: 1.0,
            }),
            KernelPreset::KidRq => Ok(KernelSpec::RationalQuadratic {
                alpha: 1.0,
                lengthscale: d.sqrt(),
            }),
            KernelPreset::CmmdRbf => Ok(KernelSpec::GaussianRbf {
                sigma: median_pairwise_distance(xs, ys)?,
            }),
        }
    }
}

impl fmt::Display for KernelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kid-poly3" => Ok(KernelPreset::KidPoly3),
            "kid-rq" => Ok(KernelPreset::KidRq),
            "cmmd-rbf" => Ok(KernelPreset::CmmdRbf),
            other => Err(Error::Validation(format!("unknown kernel preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Biased,
    Unbiased,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(Estimator::Biased),
            "unbiased" => Ok(Estimator::Unbiased),
            other => Err(Error::Validation(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStats {
    pub block_size: usize,
    pub n_blocks: usize,
    pub values: Vec<f64>,
    pub std_error: f64,
}

/// How an RBF bandwidth was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed,
    Median { points_used: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmdEstimate {
    pub value: f64,
    pub estimator: Estimator,
    pub kernel: KernelSpec,
    pub block_stats: Option<BlockStats>,
    pub bandwidth: Option<BandwidthRule>,
}

fn widen(fs: &FeatureSet) -> Vec<f64> {
    fs.to_f64()
}

/// Exact sum of k(a_i, b_j) over all pairs, skipping i == j when `skip_diagonal`.
fn gram_sum(a: &[f64], b: &[f64], d: usize, k: &KernelSpec, skip_diagonal: bool) -> f64 {
    let na = a.len() / d;
    let nb = b.len() / d;
    let tiles: Vec<ExactSum> = (0..na.div_ceil(TILE))
        .into_par_iter()
        .map(|t| {
            let mut acc = ExactSum::default();
            let rows = t * TILE..((t + 1) * TILE).min(na);
            for col0 in (0..nb).step_by(TILE) {
                let cols = col0..(col0 + TILE).min(nb);
                for i in rows.clone() {
                    let x = &a[i * d..(i + 1) * d];
                    for j in cols.clone() {
                        if skip_diagonal && i == j {
                            continue;
                        }
                        acc.add(k.eval_unchecked(x, &b[j * d..(j + 1) * d]));
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = ExactSum::default();
    for t in &tiles {
        total.merge(t);
    }
    total.value()
}

fn mmd2_raw(x: &[f64], y: &[f64], d: usize, k: &KernelSpec, estimator: Estimator) -> f64 {
    let n = (x.len() / d) as f64;
    let m = (y.len() / d) as f64;
    let cross = gram_sum(x, y, d, k, false) / (n * m);
    let (kxx, kyy) = match estimator {
        Estimator::Biased => (
            gram_sum(x, x, d, k, false) / (n * n),
            gram_sum(y, y, d, k, false) / (m * m),
        ),
        Estimator::Unbiased => (
            gram_sum(x, x, d, k, true) / (n * (n - 1.0)),
            gram_sum(y, y, d, k, true) / (m * (m - 1.0)),
        ),
    };
    (kxx + kyy) - 2.0 * cross
}

fn check_pair(xs: &FeatureSet, ys: &FeatureSet, estimator: Estimator) -> Result<()> {
    if xs.d() != ys.d() {
        return Err(Error::DimensionMismatch {
            left: xs.d(),
            right: ys.d(),
        });
    }
    if estimator == Estimator::Unbiased {
        let smallest = xs.n().min(ys.n());
        if smallest < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: smallest,
            });
        }
    }
    Ok(())
}

/// Squared MMD between two feature sets.
pub fn mmd2(
    xs: &FeatureSet,
    ys: &FeatureSet,
    k: &KernelSpec,
    estimator: Estimator,
) -> Result<MmdEstimate> {
    k.validate()?;
    check_pair(xs, ys, estimator)?;
    let value = mmd2_raw(&widen(xs), &widen(ys), xs.d(), k, estimator);
    Ok(MmdEstimate {
        value,
        estimator,
        kernel: *k,
        block_stats: None,
        bandwidth: None,
    })
}

/// Mean unbiased squared MMD over `n_blocks` random subsets of `block_size`
/// rows from each side. Block `b` draws from stream `b` of `seed`.
pub fn kid_score(
    xs: &FeatureSet,
    ys: &FeatureSet,
    k: &KernelSpec,
    block_size: usize,
    n_blocks: usize,
    seed: u64,
) -> Result<MmdEstimate> {
    k.validate()?;
    check_pair(xs, ys, Estimator::Unbiased)?;
    if block_size < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: block_size,
        });
    }
    if block_size > xs.n().min(ys.n()) {
        return Err(Error::Validation(format!(
            "block size {block_size} exceeds the smaller set ({} rows)",
            xs.n().min(ys.n())
        )));
    }
    if n_blocks == 0 {
        return Err(Error::Validation("n_blocks must be ≥ 1".into()));
    }
    let d = xs.d();
    let (x, y) = (widen(xs), widen(ys));
    let gather = |src: &[f64], idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .flat_map(|&i| src[i * d..(i + 1) * d].iter().copied())
            .collect()
    };
    let values: Vec<f64> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seeded_rng(seed, b as u64);
            let ix = index::sample(&mut rng, xs.n(), block_size).into_vec();
            let iy = index::sample(&mut rng, ys.n(), block_size).into_vec();
            mmd2_raw(&gather(&x, &ix), &gather(&y, &iy), d, k, Estimator::Unbiased)
        })
        .collect();
    let value = exact_sum(values.iter().copied()) / n_blocks as f64;
    let (_, std_error) = mean_and_std_error(&values);
    Ok(MmdEstimate {
        value,
        estimator: Estimator::Unbiased,
        kernel: *k,
        block_stats: Some(BlockStats {
            block_size,
            n_blocks,
            values,
            std_error,
        }),
        bandwidth: None,
    })
}

/// Median Euclidean distance over all pairs of the pooled sample, thinned to
/// at most [`MEDIAN_MAX_POINTS`] evenly spaced rows.
pub fn median_pairwise_distance(xs: &FeatureSet, ys: &FeatureSet) -> Result<f64> {
    median_pairwise_distance_with_count(xs, ys).map(|(m, _)| m)
}

fn median_pairwise_distance_with_count(xs: &FeatureSet, ys: &FeatureSet) -> Result<(f64, usize)> {
    if xs.d() != ys.d() {
        return Err(Error::DimensionMismatch {
            left: xs.d(),
            right: ys.d(),
        });
    }
    let pooled: Vec<&[f32]> = xs.rows().chain(ys.rows()).collect();
    let total = pooled.len();
    let used = total.min(MEDIAN_MAX_POINTS);
    let picked: Vec<Vec<f64>> = (0..used)
        .map(|i| {
            pooled[i * total / used]
                .iter()
                .map(|&v| f64::from(v))
                .collect()
        })
        .collect();
    let mut dists = Vec::with_capacity(used * (used - 1) / 2);
    for i in 0..used {
        for j in (i + 1)..used {
            dists.push(sq_dist(&picked[i], &picked[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return Err(Error::InsufficientSamples { needed: 2, got: used });
    }
    let med = median(&mut dists);
    if med <= 0.0 {
        return Err(Error::Validation(
            "median pairwise distance is zero; pass an explicit sigma".into(),
        ));
    }
    Ok((med, used))
}

/// RBF bandwidth choice for [`cmmd_score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

impl FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "median" {
            return Ok(Bandwidth::Median);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Validation(format!("sigma must be a number or \"median\", got {s:?}")))?;
        positive("sigma", v)?;
        Ok(Bandwidth::Fixed(v))
    }
}

pub fn cmmd_score(
    xs: &FeatureSet,
    ys: &FeatureSet,
    sigma: Bandwidth,
    estimator: Estimator,
) -> Result<MmdEstimate> {
    check_pair(xs, ys, Estimator::Unbiased)?;
    let (sigma, rule) = match sigma {
        Bandwidth::Fixed(s) => (s, BandwidthRule::Fixed),
        Bandwidth::Median => {
            let (s, used) = median_pairwise_distance_with_count(xs, ys)?;
            (s, BandwidthRule::Median { points_used: used })
        }
    };
    let mut est = mmd2(xs, ys, &KernelSpec::GaussianRbf { sigma }, estimator)?;
    est.bandwidth = Some(rule);
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureMeta, Role};

    fn set(rows: &[&[f64]]) -> FeatureSet {
        FeatureSet::from_rows(rows, FeatureMeta::new(Role::Generated)).unwrap()
    }

    #[test]
    fn rbf_hand_value() {
        let k = KernelSpec::GaussianRbf { sigma: 1.0 };
        assert!((k.eval(&[0.0], &[2.0]).unwrap() - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(k.eval(&[3.0, 1.0], &[3.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn polynomial_hand_value() {
        let k = KernelSpec::Polynomial {
            degree: 3,
            gamma: 1.0,
            coef: 1.0,
        };
        assert_eq!(k.eval(&[1.0], &[1.0]).unwrap(), 8.0);
    }

    #[test]
    fn rational_quadratic_hand_value() {
        let k = KernelSpec::RationalQuadratic {
            alpha: 1.0,
            lengthscale: 1.0,
        };
        assert!((k.eval(&[0.0], &[2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let k = KernelSpec::GaussianRbf { sigma: 1.0 };
        assert!(matches!(
            k.eval(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_parameters() {
        assert!(KernelSpec::GaussianRbf { sigma: 0.0 }.validate().is_err());
        assert!(KernelSpec::Polynomial {
            degree: 3,
            gamma: 1.0,
            coef: -1.0
        }
        .validate()
        .is_err());
        assert!(KernelSpec::RationalQuadratic {
            alpha: -1.0,
            lengthscale: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn pinned_unbiased_example() {
        let x = set(&[&[0.0], &[2.0]]);
        let y = set(&[&[1.0], &[3.0]]);
        let k = KernelSpec::GaussianRbf { sigma: 1.0 };
        let est = mmd2(&x, &y, &k, Estimator::Unbiased).unwrap();
        let e = |v: f64| v.exp();
        let expected = e(-2.0) + e(-2.0) - 2.0 * (3.0 * e(-0.5) + e(-4.5)) / 4.0;
        assert!((est.value - expected).abs() < 1e-12);
        assert!((est.value - -0.64467).abs() < 1e-5, "{}", est.value);
    }

    #[test]
    fn identical_sets_biased_is_zero() {
        let x = set(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5]]);
        for k in [
            KernelSpec::GaussianRbf { sigma: 1.3 },
            KernelSpec::Polynomial {
                degree: 3,
                gamma: 0.5,
                coef: 1.0,
            },
            KernelSpec::RationalQuadratic {
                alpha: 2.0,
                lengthscale: 0.7,
            },
        ] {
            let v = mmd2(&x, &x, &k, Estimator::Biased).unwrap().value;
            assert!(v.abs() <= 1e-12, "{k:?}: {v}");
        }
    }

    #[test]
    fn unbiased_needs_two_rows() {
        let x = set(&[&[0.0]]);
        let y = set(&[&[1.0], &[2.0]]);
        let k = KernelSpec::GaussianRbf { sigma: 1.0 };
        assert!(matches!(
            mmd2(&x, &y, &k, Estimator::Unbiased),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(mmd2(&x, &y, &k, Estimator::Biased).is_ok());
    }

    #[test]
    fn median_heuristic_on_four_points() {
        let x = set(&[&[0.0], &[1.0]]);
        let y = set(&[&[2.0], &[3.0]]);
        assert_eq!(median_pairwise_distance(&x, &y).unwrap(), 1.5);
        let est = cmmd_score(&x, &y, Bandwidth::Median, Estimator::Unbiased).unwrap();
        assert_eq!(est.kernel, KernelSpec::GaussianRbf { sigma: 1.5 });
        assert_eq!(est.bandwidth, Some(BandwidthRule::Median { points_used: 4 }));
    }

    #[test]
    fn kid_rejects_tiny_blocks() {
        let x = set(&[&[0.0], &[1.0], &[2.0]]);
        let k = KernelSpec::GaussianRbf { sigma: 1.0 };
        assert!(matches!(
            kid_score(&x, &x, &k, 1, 4, 0),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(kid_score(&x, &x, &k, 4, 4, 0).is_err());
        assert!(kid_score(&x, &x, &k, 2, 0, 0).is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for p in [KernelPreset::KidPoly3, KernelPreset::KidRq, KernelPreset::CmmdRbf] {
            assert_eq!(p.name().parse::<KernelPreset>().unwrap(), p);
        }
        assert!("kid".parse::<KernelPreset>().is_err());
    }
}
