//! Rank agreement between metrics, and between metrics and downstream scores.
//!
//! Convention: metrics are lower-is-better and downstream scores are
//! higher-is-better, so τ = −1 marks an ideal metric and τ = 1 the worst.

pub mod kendall;
pub mod ladder;

use serde::Serialize;

use crate::error::{Error, Result};
pub use kendall::{kendall_tau_b, tau_p_value, Band, PMethod, TauTest};
pub use ladder::{LadderEntry, SCORE_COLUMN};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTau {
    pub metric_a: String,
    pub metric_b: String,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderConsistency {
    pub ladder_id: String,
    pub n_entries: usize,
    pub metrics: Vec<String>,
    /// Full symmetric τ matrix with unit diagonal, indexed like `metrics`.
    pub tau: Vec<Vec<f64>>,
    pub pairs: Vec<PairTau>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyMatrix {
    pub ladders: Vec<LadderConsistency>,
    pub pairs_total: usize,
    pub pairs_tau_gt_0_5: usize,
    pub pairs_tau_gt_0_7: usize,
    pub fraction_tau_gt_0_5: f64,
    pub fraction_tau_gt_0_7: f64,
}

/// Values of `metric` across a ladder, failing on the first entry without one.
fn column(entries: &[LadderEntry], ladder_id: &str, metric: &str) -> Result<Vec<f64>> {
    entries
        .iter()
        .map(|e| {
            e.metric(metric).ok_or_else(|| Error::IncompleteLadder {
                ladder: ladder_id.to_string(),
                model_id: e.model_id.clone(),
                metric: metric.to_string(),
            })
        })
        .collect()
}

/// Kendall τ-b for every unordered metric pair within each ladder.
pub fn consistency_matrix(entries: &[LadderEntry]) -> Result<ConsistencyMatrix> {
    let mut ladders = Vec::new();
    for (ladder_id, group) in ladder::group_by_ladder(entries) {
        let metrics = ladder::metric_names(&group);
        if metrics.len() < 2 {
            return Err(Error::Validation(format!(
                "ladder {ladder_id} needs at least two metrics, has {}",
                metrics.len()
            )));
        }
        if group.len() < 2 {
            return Err(Error::Validation(format!(
                "ladder {ladder_id} needs at least two entries"
            )));
        }
        let columns: Vec<Vec<f64>> = metrics
            .iter()
            .map(|m| column(&group, &ladder_id, m))
            .collect::<Result<_>>()?;
        let k = metrics.len();
        let mut tau = vec![vec![1.0; k]; k];
        let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
        for a in 0..k {
            for b in (a + 1)..k {
                let t = kendall_tau_b(&columns[a], &columns[b])?;
                tau[a][b] = t;
                tau[b][a] = t;
                pairs.push(PairTau {
                    metric_a: metrics[a].clone(),
                    metric_b: metrics[b].clone(),
                    tau: t,
                });
            }
        }
        ladders.push(LadderConsistency {
            ladder_id,
            n_entries: group.len(),
            metrics,
            tau,
            pairs,
        });
    }
    let all: Vec<f64> = ladders
        .iter()
        .flat_map(|l| l.pairs.iter().map(|p| p.tau))
        .collect();
    let total = all.len();
    let gt5 = all.iter().filter(|&&t| t > 0.5).count();
    let gt7 = all.iter().filter(|&&t| t > 0.7).count();
    Ok(ConsistencyMatrix {
        ladders,
        pairs_total: total,
        pairs_tau_gt_0_5: gt5,
        pairs_tau_gt_0_7: gt7,
        fraction_tau_gt_0_5: gt5 as f64 / total as f64,
        fraction_tau_gt_0_7: gt7 as f64 / total as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricAlignment {
    pub metric: String,
    #[serde(flatten)]
    pub test: TauTest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub model_id: String,
    pub control_value: f64,
    /// 1/value per metric, `+inf` for a zero value.
    #[serde(serialize_with = "crate::numeric::nonfinite_as_string::serialize_vec")]
    pub reciprocal: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub ladder_id: String,
    pub score_key: String,
    pub n: usize,
    pub metrics: Vec<MetricAlignment>,
    pub plot: Vec<PlotRow>,
    #[serde(skip)]
    entries: Vec<LadderEntry>,
}

/// τ between each metric and the downstream score over one ladder.
///
/// `score_key` is either [`SCORE_COLUMN`] (the entry's downstream score) or
/// the name of a metric column to treat as the score.
pub fn alignment_report(entries: &[LadderEntry], score_key: &str) -> Result<AlignmentReport> {
    let groups = ladder::group_by_ladder(entries);
    if groups.len() != 1 {
        return Err(Error::Validation(format!(
            "alignment runs on one ladder at a time, got {}",
            groups.len()
        )));
    }
    let (ladder_id, group) = groups.into_iter().next().expect("one group");
    let scores: Vec<f64> = group
        .iter()
        .map(|e| {
            let s = if score_key == SCORE_COLUMN {
                e.downstream_score
            } else {
                e.metric(score_key)
            };
            s.ok_or_else(|| {
                Error::Protocol(format!(
                    "entry {} has no downstream score ({score_key})",
                    e.model_id
                ))
            })
        })
        .collect::<Result<_>>()?;
    if group.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: group.len(),
        });
    }
    let names: Vec<String> = ladder::metric_names(&group)
        .into_iter()
        .filter(|m| m != score_key)
        .collect();
    if names.is_empty() {
        return Err(Error::Validation(format!("ladder {ladder_id} has no metrics")));
    }
    let mut metrics = Vec::with_capacity(names.len());
    let mut columns = Vec::with_capacity(names.len());
    for name in &names {
        let col = column(&group, &ladder_id, name)?;
        metrics.push(MetricAlignment {
            metric: name.clone(),
            test: tau_p_value(&col, &scores, PMethod::Auto)?,
        });
        columns.push(col);
    }
    let plot = group
        .iter()
        .enumerate()
        .map(|(i, e)| PlotRow {
            model_id: e.model_id.clone(),
            control_value: e.control_value,
            reciprocal: columns
                .iter()
                .map(|c| if c[i] == 0.0 { f64::INFINITY } else { 1.0 / c[i] })
                .collect(),
            score: scores[i],
        })
        .collect();
    Ok(AlignmentReport {
        ladder_id,
        score_key: score_key.to_string(),
        n: group.len(),
        metrics,
        plot,
        entries: group,
    })
}

impl AlignmentReport {
    /// Plot data: `model_id,control_value,inv_<metric>...,<score_key>`.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("model_id,control_value");
        for m in &self.metrics {
            out.push_str(&format!(",inv_{}", m.metric));
        }
        out.push_str(&format!(",{}\n", self.score_key));
        for row in &self.plot {
            out.push_str(&format!(
                "{},{}",
                row.model_id,
                ladder::format_sig9(row.control_value)
            ));
            for r in &row.reciprocal {
                out.push(',');
                out.push_str(&ladder::format_sig9(*r));
            }
            out.push_str(&format!(",{}\n", ladder::format_sig9(row.score)));
        }
        out
    }

    /// Table with one row per model, then τ and p-band rows.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### Ladder {} (score: {})\n\n", self.ladder_id, self.score_key);
        out.push_str("| Models |");
        for m in &self.metrics {
            out.push_str(&format!(" {} |", m.metric));
        }
        out.push_str(&format!(" {} |\n|:--|", self.score_key));
        out.push_str(&"--:|".repeat(self.metrics.len() + 1));
        out.push('\n');
        for (e, row) in self.entries.iter().zip(&self.plot) {
            out.push_str(&format!("| {} |", e.model_id));
            for m in &self.metrics {
                let v = e.metric(&m.metric).expect("validated column");
                out.push_str(&format!(" {v} |"));
            }
            out.push_str(&format!(" {} |\n", row.score));
        }
        out.push_str("| τ_Kendall |");
        for m in &self.metrics {
            out.push_str(&format!(" {:.2} |", m.test.tau));
        }
        out.push_str(" |\n| p_Kendall |");
        for m in &self.metrics {
            out.push_str(&format!(" {} |", m.test.band));
        }
        out.push_str(" |\n");
        out
    }
}

impl ConsistencyMatrix {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for l in &self.ladders {
            out.push_str(&format!("### Ladder {} ({} entries)\n\n|  |", l.ladder_id, l.n_entries));
            for m in &l.metrics {
                out.push_str(&format!(" {m} |"));
            }
            out.push_str("\n|:--|");
            out.push_str(&"--:|".repeat(l.metrics.len()));
            out.push('\n');
            for (m, row) in l.metrics.iter().zip(&l.tau) {
                out.push_str(&format!("| {m} |"));
                for t in row {
                    out.push_str(&format!(" {t:.2} |"));
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "Pairs: {} total, {} with τ > 0.5 ({:.1}%), {} with τ > 0.7 ({:.1}%)\n",
            self.pairs_total,
            self.pairs_tau_gt_0_5,
            100.0 * self.fraction_tau_gt_0_5,
            self.pairs_tau_gt_0_7,
            100.0 * self.fraction_tau_gt_0_7
        ));
        out
    }
}
