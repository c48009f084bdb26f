//! Diagonal-covariance Gaussian mixtures: EM fitting, log densities, Monte
//! Carlo KL divergence and the likelihood-divergence score built on them.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, Role};
use crate::numeric::{compensated_sum, log_sum_exp, mean_and_std_error, seeded_rng};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;
/// Components whose weight falls below this are dropped during EM.
pub const PRUNE_WEIGHT: f64 = 1e-8;
const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    /// K×d, row-major.
    means: Vec<f64>,
    /// K×d per-dimension variances, row-major.
    variances: Vec<f64>,
    d: usize,
    #[serde(skip)]
    log_norms: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>, d: usize) -> Result<Self> {
        Self::with_floor(weights, means, variances, d, DEFAULT_VARIANCE_FLOOR)
    }

    pub fn with_floor(
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
        d: usize,
        variance_floor: f64,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || d == 0 {
            return Err(Error::Validation("mixture needs K ≥ 1 and d ≥ 1".into()));
        }
        if means.len() != k * d || variances.len() != k * d {
            return Err(Error::DimensionMismatch {
                left: k * d,
                right: means.len().max(variances.len()),
            });
        }
        if weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::Validation("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("weights sum to {total}, not 1")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation("non-finite component mean".into()));
        }
        if let Some(v) = variances.iter().find(|&&v| !(v >= variance_floor && v.is_finite())) {
            return Err(Error::Validation(format!(
                "variance {v} below floor {variance_floor}"
            )));
        }
        let log_norms = weights
            .iter()
            .zip(variances.chunks_exact(d))
            .map(|(w, var)| {
                w.ln() - 0.5 * var.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>()
            })
            .collect();
        Ok(GaussianMixture {
            weights,
            means,
            variances,
            d,
            log_norms,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.d..(k + 1) * self.d]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.d..(k + 1) * self.d]
    }

    fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mu = self.mean(k);
            let var = self.variance(k);
            let quad: f64 = x
                .iter()
                .zip(mu)
                .zip(var)
                .map(|((xi, m), v)| (xi - m) * (xi - m) / v)
                .sum();
            *o = self.log_norms[k] - 0.5 * quad;
        }
    }

    fn log_density_unchecked(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.component_log_densities(x, scratch);
        log_sum_exp(scratch)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let k = if self.k() == 1 {
            0
        } else {
            WeightedIndex::new(&self.weights)
                .expect("weights validated at construction")
                .sample(rng)
        };
        for ((o, m), v) in out.iter_mut().zip(self.mean(k)).zip(self.variance(k)) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + v.sqrt() * z;
        }
    }
}

/// `log Σ_k w_k N(x; μ_k, diag σ²_k)`.
pub fn gmm_log_density(g: &GaussianMixture, x: &[f64]) -> Result<f64> {
    if x.len() != g.d {
        return Err(Error::DimensionMismatch {
            left: g.d,
            right: x.len(),
        });
    }
    let mut scratch = vec![0.0; g.k()];
    Ok(g.log_density_unchecked(x, &mut scratch))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub variance_floor: f64,
}

impl EmOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        EmOptions {
            k,
            seed,
            max_iter: 200,
            tol: 1e-6,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrunedComponent {
    pub iteration: usize,
    pub component: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmTrace {
    /// Mean per-sample log-likelihood before each M-step, plus the final one.
    pub log_likelihood: Vec<f64>,
    /// M-steps performed.
    pub iterations: usize,
    pub converged: bool,
    pub pruned: Vec<PrunedComponent>,
}

/// k-means++ seeding: first center uniform, then proportional to D².
fn kmeans_pp(x: &[f64], n: usize, d: usize, k: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, 0);
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(&x[first * d..(first + 1) * d]);
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(&x[i * d..(i + 1) * d], &centers[..d]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            WeightedIndex::new(&d2)
                .map(|w| w.sample(&mut rng))
                .unwrap_or_else(|_| rng.random_range(0..n))
        } else {
            rng.random_range(0..n)
        };
        let c = &x[next * d..(next + 1) * d];
        centers.extend_from_slice(c);
        for (i, di) in d2.iter_mut().enumerate() {
            *di = di.min(sq_dist(&x[i * d..(i + 1) * d], c));
        }
    }
    centers
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// E-step: fills log-responsibilities, returns the mean log-likelihood.
fn e_step(g: &GaussianMixture, x: &[f64], n: usize, resp: &mut [f64]) -> f64 {
    let k = g.k();
    let d = g.d;
    let per_row: Vec<f64> = resp
        .par_chunks_mut(k)
        .enumerate()
        .map(|(i, r)| {
            g.component_log_densities(&x[i * d..(i + 1) * d], r);
            let lse = log_sum_exp(r);
            for v in r.iter_mut() {
                *v = (*v - lse).exp();
            }
            lse
        })
        .collect();
    compensated_sum(per_row) / n as f64
}

/// Fits a diagonal-covariance mixture by expectation-maximization.
pub fn fit_gmm_em(fs: &FeatureSet, opts: &EmOptions) -> Result<(GaussianMixture, EmTrace)> {
    let (n, d) = (fs.n(), fs.d());
    if opts.k == 0 {
        return Err(Error::Validation("K must be ≥ 1".into()));
    }
    if opts.k > n {
        return Err(Error::Infeasible(format!(
            "cannot fit {} components to {n} samples",
            opts.k
        )));
    }
    if opts.variance_floor.is_nan() || opts.variance_floor <= 0.0 {
        return Err(Error::Validation("variance floor must be positive".into()));
    }
    let x = fs.to_f64();
    let floor = opts.variance_floor;

    let mut global_var = vec![0.0; d];
    for j in 0..d {
        let mean = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
        global_var[j] = var.max(floor);
    }
    let mut k = opts.k;
    let mut gmm = GaussianMixture::with_floor(
        vec![1.0 / k as f64; k],
        kmeans_pp(&x, n, d, k, opts.seed),
        global_var.repeat(k),
        d,
        floor,
    )?;

    let mut trace = EmTrace {
        log_likelihood: Vec::new(),
        iterations: 0,
        converged: false,
        pruned: Vec::new(),
    };
    let mut resp = vec![0.0; n * k];
    loop {
        let ll = e_step(&gmm, &x, n, &mut resp);
        let gain = trace.log_likelihood.last().map(|prev| ll - prev);
        trace.log_likelihood.push(ll);
        if gain.is_some_and(|g| g < opts.tol) {
            trace.converged = true;
            break;
        }
        if trace.iterations >= opts.max_iter {
            break;
        }

        // M-step
        let mut nk = vec![0.0; k];
        for r in resp.chunks_exact(k) {
            for (a, b) in nk.iter_mut().zip(r) {
                *a += b;
            }
        }
        let keep: Vec<usize> = (0..k)
            .filter(|&c| {
                let w = nk[c] / n as f64;
                if w < PRUNE_WEIGHT {
                    trace.pruned.push(PrunedComponent {
                        iteration: trace.iterations,
                        component: c,
                        weight: w,
                    });
                    false
                } else {
                    true
                }
            })
            .collect();
        let mut means = vec![0.0; keep.len() * d];
        let mut vars = vec![0.0; keep.len() * d];
        for (slot, &c) in keep.iter().enumerate() {
            let mu = &mut means[slot * d..(slot + 1) * d];
            for i in 0..n {
                let r = resp[i * k + c];
                for (m, xv) in mu.iter_mut().zip(&x[i * d..(i + 1) * d]) {
                    *m += r * xv;
                }
            }
            mu.iter_mut().for_each(|m| *m /= nk[c]);
            let var = &mut vars[slot * d..(slot + 1) * d];
            for i in 0..n {
                let r = resp[i * k + c];
                for ((v, xv), m) in var.iter_mut().zip(&x[i * d..(i + 1) * d]).zip(mu.iter()) {
                    *v += r * (xv - m) * (xv - m);
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / nk[c]).max(floor));
        }
        let kept_mass: f64 = keep.iter().map(|&c| nk[c]).sum();
        let weights: Vec<f64> = keep.iter().map(|&c| nk[c] / kept_mass).collect();
        if keep.len() != k {
            k = keep.len();
            resp = vec![0.0; n * k];
        }
        gmm = GaussianMixture::with_floor(weights, means, vars, d, floor)?;
        trace.iterations += 1;
    }
    Ok((gmm, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Monte Carlo estimate of KL(p ‖ q) from samples of p. Chunk `c` of
/// 4096 samples draws from stream `c` of `seed`.
pub fn kld_mog_mc(
    p: &GaussianMixture,
    q: &GaussianMixture,
    n_samples: usize,
    seed: u64,
) -> Result<KlEstimate> {
    if p.d != q.d {
        return Err(Error::DimensionMismatch {
            left: p.d,
            right: q.d,
        });
    }
    if n_samples < 1000 {
        return Err(Error::InsufficientSamples {
            needed: 1000,
            got: n_samples,
        });
    }
    let d = p.d;
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let terms: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut rng = seeded_rng(seed, c as u64);
            let mut x = vec![0.0; d];
            let mut sp = vec![0.0; p.k()];
            let mut sq = vec![0.0; q.k()];
            (0..len)
                .map(|_| {
                    p.sample(&mut rng, &mut x);
                    p.log_density_unchecked(&x, &mut sp) - q.log_density_unchecked(&x, &mut sq)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (estimate, std_error) = mean_and_std_error(&terms);
    Ok(KlEstimate {
        estimate,
        std_error,
        n_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FldMode {
    EmKl,
    AnchoredNll,
}

impl std::str::FromStr for FldMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em_kl" => Ok(FldMode::EmKl),
            "anchored_nll" => Ok(FldMode::AnchoredNll),
            other => Err(Error::Validation(format!("unknown FLD mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FldParams {
    /// Mixture components; `None` resolves to `min(10, n/20)`, at least 1.
    pub k: Option<usize>,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_samples: usize,
    pub variance_floor: f64,
}

impl Default for FldParams {
    fn default() -> Self {
        FldParams {
            k: None,
            seed: 0,
            max_iter: 200,
            tol: 1e-6,
            n_samples: 10_000,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

/// Score plus every resolved parameter that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FldResult {
    pub score: f64,
    pub mode: FldMode,
    pub k: Option<usize>,
    pub seed: u64,
    pub std_error: Option<f64>,
    pub n_samples: Option<usize>,
    pub bandwidth: Option<f64>,
}

pub fn default_components(n: usize) -> usize {
    (n / 20).clamp(1, 10)
}

fn expect_role(fs: &FeatureSet, want: Role, arg: &str) -> Result<()> {
    if fs.role() != want {
        return Err(Error::Protocol(format!(
            "{arg} must have role {want}, got {}",
            fs.role()
        )));
    }
    Ok(())
}

/// Likelihood-divergence score between generated and real features.
///
/// `EmKl` fits mixtures to the real test set and to the generated set and
/// returns KL(test ‖ generated). `AnchoredNll` places one isotropic component
/// on every generated sample, picks the shared bandwidth that maximizes the
/// likelihood of the real training set, and reports the per-dimension mean
/// negative log-likelihood of the real test set.
pub fn fld_score(
    gen: &FeatureSet,
    real_train: &FeatureSet,
    real_test: &FeatureSet,
    mode: FldMode,
    params: &FldParams,
) -> Result<FldResult> {
    expect_role(gen, Role::Generated, "gen")?;
    expect_role(real_train, Role::RealTrain, "real_train")?;
    expect_role(real_test, Role::RealTest, "real_test")?;
    for other in [real_train, real_test] {
        if other.d() != gen.d() {
            return Err(Error::DimensionMismatch {
                left: gen.d(),
                right: other.d(),
            });
        }
    }
    match mode {
        FldMode::EmKl => {
            let k = params
                .k
                .unwrap_or_else(|| default_components(gen.n().min(real_test.n())));
            let opts = EmOptions {
                k,
                seed: params.seed,
                max_iter: params.max_iter,
                tol: params.tol,
                variance_floor: params.variance_floor,
            };
            let (test_mix, _) = fit_gmm_em(real_test, &opts)?;
            let (gen_mix, _) = fit_gmm_em(gen, &opts)?;
            let kl = kld_mog_mc(&test_mix, &gen_mix, params.n_samples, params.seed)?;
            Ok(FldResult {
                score: kl.estimate,
                mode,
                k: Some(k),
                seed: params.seed,
                std_error: Some(kl.std_error),
                n_samples: Some(params.n_samples),
                bandwidth: None,
            })
        }
        FldMode::AnchoredNll => {
            let (score, h) = anchored_nll(gen, real_train, real_test)?;
            Ok(FldResult {
                score,
                mode,
                k: None,
                seed: params.seed,
                std_error: None,
                n_samples: None,
                bandwidth: Some(h),
            })
        }
    }
}

fn pairwise_sq(a: &FeatureSet, b: &FeatureSet) -> Vec<f64> {
    let bw = b.to_f64();
    let d = a.d();
    a.rows()
        .collect::<Vec<_>>()
        .par_iter()
        .flat_map_iter(|row| {
            let x: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
            bw.chunks_exact(d).map(move |y| sq_dist(&x, y)).collect::<Vec<_>>()
        })
        .collect()
}

/// Mean log-likelihood of rows whose squared distances to the `m` anchors
/// are given, under a uniform isotropic mixture with bandwidth `h`.
fn anchored_mean_ll(dists: &[f64], m: usize, d: usize, log_h: f64) -> f64 {
    let h2 = (2.0 * log_h).exp();
    let norm = -(m as f64).ln() - 0.5 * d as f64 * ((2.0 * PI).ln() + 2.0 * log_h);
    let per_row: Vec<f64> = dists
        .chunks_exact(m)
        .map(|row| {
            let v: Vec<f64> = row.iter().map(|s| -0.5 * s / h2).collect();
            log_sum_exp(&v) + norm
        })
        .collect();
    compensated_sum(per_row.iter().copied()) / per_row.len() as f64
}

fn anchored_nll(gen: &FeatureSet, train: &FeatureSet, test: &FeatureSet) -> Result<(f64, f64)> {
    let d = gen.d();
    let m = gen.n();
    let x = train.to_f64();
    let n = train.n() as f64;
    let mut spread = 0.0;
    for j in 0..d {
        let mean = (0..train.n()).map(|i| x[i * d + j]).sum::<f64>() / n;
        spread += (0..train.n()).map(|i| (x[i * d + j] - mean).powi(2)).sum::<f64>() / n;
    }
    let scale = (spread / d as f64).sqrt();
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let train_d = pairwise_sq(train, gen);
    let objective = |log_h: f64| -anchored_mean_ll(&train_d, m, d, log_h);
    let log_h = golden_section_min(objective, (scale * 1e-3).ln(), (scale * 10.0).ln(), 1e-8);

    let test_d = pairwise_sq(test, gen);
    let nll = -anchored_mean_ll(&test_d, m, d, log_h);
    Ok((nll / d as f64, log_h.exp()))
}

/// Minimizes a unimodal function on `[lo, hi]`.
fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMeta;

    fn single(mu: f64, var: f64) -> GaussianMixture {
        GaussianMixture::new(vec![1.0], vec![mu], vec![var], 1).unwrap()
    }

    #[test]
    fn standard_normal_at_mode() {
        let v = gmm_log_density(&single(0.0, 1.0), &[0.0]).unwrap();
        assert!((v - -0.918938533).abs() < 1e-8);
    }

    #[test]
    fn far_tail_is_finite() {
        let v = gmm_log_density(&single(0.0, 1.0), &[40.0]).unwrap();
        assert!((v - (-800.0 - 0.5 * (2.0 * PI).ln())).abs() < 1e-9);
        assert!((v - -800.919).abs() < 1e-3);
    }

    #[test]
    fn duplicated_component_collapses() {
        let two = GaussianMixture::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![2.0, 2.0], 1).unwrap();
        let one = single(1.0, 2.0);
        for x in [-3.0, 0.0, 1.0, 7.5] {
            let a = gmm_log_density(&two, &[x]).unwrap();
            let b = gmm_log_density(&one, &[x]).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn density_dimension_mismatch() {
        assert!(gmm_log_density(&single(0.0, 1.0), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn invalid_mixtures() {
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![0.0, 1.0], vec![1.0, 1.0], 1).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![0.0], vec![1e-9], 1).is_err());
        assert!(GaussianMixture::new(vec![], vec![], vec![], 1).is_err());
    }

    #[test]
    fn single_component_is_ml_gaussian() {
        let rows: Vec<[f64; 2]> = vec![[0.0, 1.0], [2.0, 5.0], [4.0, 3.0], [1.0, 1.0]];
        let fs = FeatureSet::from_rows(&rows, FeatureMeta::new(Role::RealTest)).unwrap();
        let (g, trace) = fit_gmm_em(&fs, &EmOptions::new(1, 3)).unwrap();
        assert!(trace.converged);
        assert!((g.mean(0)[0] - 1.75).abs() < 1e-12);
        assert!((g.mean(0)[1] - 2.5).abs() < 1e-12);
        // biased variance: denominator n
        assert!((g.variance(0)[0] - 2.1875).abs() < 1e-12);
        assert!((g.variance(0)[1] - 2.75).abs() < 1e-12);
    }

    #[test]
    fn too_many_components() {
        let fs = FeatureSet::from_rows(&[[0.0], [1.0]], FeatureMeta::new(Role::RealTest)).unwrap();
        assert!(matches!(
            fit_gmm_em(&fs, &EmOptions::new(3, 0)),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn kl_of_identical_mixture_is_exactly_zero() {
        let p = GaussianMixture::new(vec![0.3, 0.7], vec![-1.0, 2.0], vec![0.5, 1.5], 1).unwrap();
        let kl = kld_mog_mc(&p, &p, 5000, 9).unwrap();
        assert_eq!(kl.estimate, 0.0);
        assert_eq!(kl.std_error, 0.0);
    }

    #[test]
    fn kl_needs_enough_samples() {
        let p = single(0.0, 1.0);
        assert!(kld_mog_mc(&p, &p, 999, 0).is_err());
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section_min(|x| (x - 1.25).powi(2), -3.0, 4.0, 1e-10);
        assert!((x - 1.25).abs() < 1e-8);
    }

    #[test]
    fn default_component_count() {
        assert_eq!(default_components(5), 1);
        assert_eq!(default_components(100), 5);
        assert_eq!(default_components(6000), 10);
    }
}
