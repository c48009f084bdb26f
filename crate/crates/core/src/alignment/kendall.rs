//! Kendall's τ-b and its significance.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest n for which the exact permutation distribution is enumerated.
pub const EXACT_MAX_N: usize = 10;

/// Pair statistics behind τ-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n: usize,
    /// Concordant minus discordant pairs.
    pub s: i64,
    /// n(n−1)/2.
    pub total: i64,
    /// Pairs tied in x.
    pub ties_x: i64,
    /// Pairs tied in y.
    pub ties_y: i64,
}

impl PairCounts {
    pub fn tau_b(&self) -> Result<f64> {
        let denom = ((self.total - self.ties_x) as f64) * ((self.total - self.ties_y) as f64);
        if denom <= 0.0 {
            return Err(Error::UndefinedCorrelation(
                "at least one sequence is constant".into(),
            ));
        }
        Ok((self.s as f64 / denom.sqrt()).clamp(-1.0, 1.0))
    }
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite value in rank input".into()));
    }
    Ok(())
}

/// Sum of t(t−1)/2 over runs of equal values in a sorted slice.
fn tied_pairs_sorted<T: PartialEq>(sorted: &[T]) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts inversions while merge-sorting `v` in place.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            inv += (mid - i) as i64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inv
}

/// O(n log n) pair statistics (Knight's algorithm).
pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    check_inputs(x, y)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let xy: Vec<(f64, f64)> = order.iter().map(|&i| (x[i], y[i])).collect();
    let ties_x = tied_pairs_sorted(&xs);
    let ties_xy = tied_pairs_sorted(&xy);

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let discordant = count_inversions(&mut ys, &mut Vec::with_capacity(n));
    let ties_y = tied_pairs_sorted(&ys);

    let total = (n as i64) * (n as i64 - 1) / 2;
    let untied = total - ties_x - ties_y + ties_xy;
    Ok(PairCounts {
        n,
        s: untied - 2 * discordant,
        total,
        ties_x,
        ties_y,
    })
}

/// Kendall's τ-b.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    pair_counts(x, y)?.tau_b()
}

/// Significance band for a two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "n.s.")]
    NotSignificant,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
}

impl Band {
    pub fn from_p(p: f64) -> Band {
        if p < 0.001 {
            Band::Three
        } else if p < 0.01 {
            Band::Two
        } else if p < 0.05 {
            Band::One
        } else {
            Band::NotSignificant
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::NotSignificant => "n.s.",
            Band::One => "*",
            Band::Two => "**",
            Band::Three => "***",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    NormalApprox,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauTest {
    pub tau: f64,
    pub p_value: f64,
    pub band: Band,
    /// Method actually used (never `Auto`).
    pub method: PMethod,
    pub n: usize,
}

/// Distribution of the concordance statistic S over all n! orderings of `y`
/// against fixed `x`, as counts keyed by S.
pub fn permutation_null_counts(x: &[f64], y: &[f64]) -> Result<BTreeMap<i64, u64>> {
    check_inputs(x, y)?;
    let n = x.len();
    if n > EXACT_MAX_N {
        return Err(Error::Infeasible(format!(
            "exact enumeration limited to n ≤ {EXACT_MAX_N}, got {n}"
        )));
    }
    let sign = |a: f64, b: f64| -> i64 {
        match a.partial_cmp(&b) {
            Some(std::cmp::Ordering::Less) => -1,
            Some(std::cmp::Ordering::Greater) => 1,
            _ => 0,
        }
    };
    let sx: Vec<i64> = (0..n * n).map(|k| sign(x[k / n], x[k % n])).collect();
    let mut perm: Vec<f64> = y.to_vec();
    let contrib = |p: &[f64], i: usize, j: usize| sx[i * n + j] * sign(p[i], p[j]);
    let touching = |p: &[f64], a: usize, b: usize| -> i64 {
        let mut s = contrib(p, a, b);
        for j in 0..n {
            if j != a && j != b {
                s += contrib(p, a, j) + contrib(p, b, j);
            }
        }
        s
    };

    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += contrib(&perm, i, j);
        }
    }
    let mut counts = BTreeMap::new();
    *counts.entry(s).or_insert(0u64) += 1;

    // Heap's algorithm, iterative form; each step is one transposition.
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let (a, b) = if i % 2 == 0 { (0, i) } else { (c[i], i) };
            let before = touching(&perm, a, b);
            perm.swap(a, b);
            s += touching(&perm, a, b) - before;
            *counts.entry(s).or_insert(0) += 1;
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(counts)
}

fn exact_p(x: &[f64], y: &[f64], observed: i64) -> Result<f64> {
    let counts = permutation_null_counts(x, y)?;
    let total: u64 = counts.values().sum();
    let extreme: u64 = counts
        .iter()
        .filter(|(s, _)| s.abs() >= observed.abs())
        .map(|(_, c)| c)
        .sum();
    Ok(extreme as f64 / total as f64)
}

fn tie_groups(v: &[f64]) -> Vec<i64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut run = 1i64;
    for w in s.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            groups.push(run);
            run = 1;
        }
    }
    groups.push(run);
    groups
}

/// Two-sided p from the normal approximation with tie-corrected variance of S.
fn normal_p(x: &[f64], y: &[f64], counts: &PairCounts) -> f64 {
    let n = counts.n as f64;
    let tx = tie_groups(x);
    let ty = tie_groups(y);
    let poly = |g: &[i64], f: &dyn Fn(f64) -> f64| g.iter().map(|&t| f(t as f64)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = poly(&tx, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = poly(&ty, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let t2 = poly(&tx, &|t| t * (t - 1.0));
    let u2 = poly(&ty, &|t| t * (t - 1.0));
    let t3 = poly(&tx, &|t| t * (t - 1.0) * (t - 2.0));
    let u3 = poly(&ty, &|t| t * (t - 1.0) * (t - 2.0));
    let mut var = (v0 - vt - vu) / 18.0 + t2 * u2 / (2.0 * n * (n - 1.0));
    if n > 2.0 {
        var += t3 * u3 / (9.0 * n * (n - 1.0) * (n - 2.0));
    }
    if var <= 0.0 {
        return 1.0;
    }
    let z = counts.s as f64 / var.sqrt();
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// τ-b with a two-sided p-value and its significance band.
pub fn tau_p_value(x: &[f64], y: &[f64], method: PMethod) -> Result<TauTest> {
    let counts = pair_counts(x, y)?;
    let tau = counts.tau_b()?;
    let method = match method {
        PMethod::Auto if counts.n <= EXACT_MAX_N => PMethod::Exact,
        PMethod::Auto => PMethod::NormalApprox,
        m => m,
    };
    let p_value = match method {
        PMethod::Exact => exact_p(x, y, counts.s)?,
        _ => normal_p(x, y, &counts),
    };
    Ok(TauTest {
        tau,
        p_value,
        band: Band::from_p(p_value),
        method,
        n: counts.n,
    })
}
