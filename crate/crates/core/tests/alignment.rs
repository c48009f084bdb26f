use std::path::PathBuf;

use fdbench_core::alignment::kendall::{pair_counts, permutation_null_counts};
use fdbench_core::alignment::ladder::read_ladder_csv;
use fdbench_core::alignment::{
    alignment_report, consistency_matrix, kendall_tau_b, tau_p_value, Band, LadderEntry, PMethod,
    SCORE_COLUMN,
};
use fdbench_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn fixtures() -> Vec<LadderEntry> {
    ["table1_stylegan3.csv", "table1_medfusion.csv", "table2_ddpm.csv"]
        .iter()
        .flat_map(|f| read_ladder_csv(fixture(f)).unwrap())
        .collect()
}

fn column(entries: &[LadderEntry], ladder: &str, metric: &str) -> Vec<f64> {
    entries
        .iter()
        .filter(|e| e.ladder_id == ladder)
        .map(|e| e.metric(metric).unwrap())
        .collect()
}

fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut n1, mut n2, mut pairs) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs += 1;
            let a = (x[i] - x[j]).partial_cmp(&0.0).unwrap() as i64;
            let b = (y[i] - y[j]).partial_cmp(&0.0).unwrap() as i64;
            s += a * b;
            n1 += i64::from(a == 0);
            n2 += i64::from(b == 0);
        }
    }
    s as f64 / (((pairs - n1) * (pairs - n2)) as f64).sqrt()
}

#[test]
fn tau_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(2..40);
        let levels = if checked % 2 == 0 { 4 } else { 1_000_000 };
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels))).collect();
        let oracle = brute_tau_b(&x, &y);
        if !oracle.is_finite() {
            assert!(matches!(kendall_tau_b(&x, &y), Err(Error::UndefinedCorrelation(_))));
            continue;
        }
        let tau = kendall_tau_b(&x, &y).unwrap();
        assert!((tau - oracle).abs() < 1e-12, "{x:?} {y:?}: {tau} vs {oracle}");
        checked += 1;
    }
}

fn untied(n: usize) -> impl Strategy<Value = Vec<f64>> {
    Just((0..n).map(|i| i as f64).collect::<Vec<f64>>()).prop_shuffle()
}

fn seq_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..30).prop_flat_map(|n| (prop::collection::vec(0u8..6, n).prop_map(|v| v.into_iter().map(f64::from).collect()), untied(n)))
}

proptest! {
    #[test]
    fn antisymmetric((x, y) in seq_pair()) {
        if let Ok(t) = kendall_tau_b(&x, &y) {
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert_eq!(kendall_tau_b(&x, &neg).unwrap(), -t);
        }
    }

    #[test]
    fn invariant_under_monotone_maps((x, y) in seq_pair(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        if let Ok(t) = kendall_tau_b(&x, &y) {
            let ex: Vec<f64> = x.iter().map(|v| (v / 4.0).exp()).collect();
            let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            prop_assert_eq!(kendall_tau_b(&ex, &ay).unwrap(), t);
        }
    }

    #[test]
    fn null_distribution_sums_to_one((x, y) in (2usize..=7).prop_flat_map(|n| (prop::collection::vec(0u8..3, n), prop::collection::vec(0u8..3, n)))) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let y: Vec<f64> = y.into_iter().map(f64::from).collect();
        let counts = permutation_null_counts(&x, &y).unwrap();
        let total: u64 = counts.values().sum();
        prop_assert_eq!(total, (1..=x.len() as u64).product::<u64>());
        let s = pair_counts(&x, &y).unwrap().s;
        prop_assert!(counts.contains_key(&s));
    }
}

#[test]
fn exact_p_small_cases() {
    let x: Vec<f64> = (0..7).map(f64::from).collect();
    let t = tau_p_value(&x, &x, PMethod::Exact).unwrap();
    assert_eq!(t.tau, 1.0);
    assert!((t.p_value - 2.0 / 5040.0).abs() < 1e-10);
    assert_eq!(t.band, Band::Three);
    let t3 = tau_p_value(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], PMethod::Exact).unwrap();
    assert!((t3.p_value - 2.0 / 6.0).abs() < 1e-12);
    assert_eq!(t3.band, Band::NotSignificant);
}

#[test]
fn band_boundaries() {
    assert_eq!(Band::from_p(0.05), Band::NotSignificant);
    assert_eq!(Band::from_p(0.049), Band::One);
    assert_eq!(Band::from_p(0.01), Band::One);
    assert_eq!(Band::from_p(0.005), Band::Two);
    assert_eq!(Band::from_p(0.001), Band::Two);
    assert_eq!(Band::from_p(0.0009), Band::Three);
    assert_eq!(Band::from_p(1.0), Band::NotSignificant);
}

#[test]
fn table_spot_checks() {
    let e = fixtures();
    let sg = kendall_tau_b(&column(&e, "SG", "fid_inception"), &column(&e, "SG", "cmmd")).unwrap();
    assert_eq!(sg, 1.0);
    let mf = kendall_tau_b(&column(&e, "MF", "fid_inception"), &column(&e, "MF", "kid")).unwrap();
    assert!((mf - 17.0 / 21.0).abs() < 1e-12);
}

#[test]
fn fixture_consistency_counts() {
    let m = consistency_matrix(&fixtures()).unwrap();
    assert_eq!(m.pairs_total, 63);
    assert!(m.pairs_tau_gt_0_5 >= 62);
    for l in &m.ladders {
        let k = l.metrics.len();
        for a in 0..k {
            assert_eq!(l.tau[a][a], 1.0);
            for b in 0..k {
                assert_eq!(l.tau[a][b], l.tau[b][a]);
            }
        }
    }
}

#[test]
fn monotone_transform_column_has_unit_tau() {
    let entries: Vec<LadderEntry> = (0..6)
        .map(|i| {
            let v = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0][i];
            LadderEntry::new(format!("L-{i}"), "L", i as f64)
                .with_metric("a", v)
                .with_metric("b", v.ln() * 2.0 + 1.0)
        })
        .collect();
    let m = consistency_matrix(&entries).unwrap();
    assert_eq!(m.ladders[0].pairs[0].tau, 1.0);
}

#[test]
fn incomplete_ladder_names_entry() {
    let mut entries = fixtures();
    entries[3].metric_values.retain(|(n, _)| n != "kid");
    match consistency_matrix(&entries) {
        Err(Error::IncompleteLadder { model_id, metric, .. }) => {
            assert_eq!(model_id, "SG-4");
            assert_eq!(metric, "kid");
        }
        other => panic!("{other:?}"),
    }
}

fn ladder_with_scores(metric: &[f64], scores: &[f64]) -> Vec<LadderEntry> {
    metric
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (&m, &s))| {
            LadderEntry::new(format!("X-{}", i + 1), "X", i as f64)
                .with_metric("fid", m)
                .with_score(s)
        })
        .collect()
}

#[test]
fn ideal_metric_has_tau_minus_one() {
    let metric = [70.0, 60.0, 50.0, 40.0, 30.0, 20.0, 10.0];
    let scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
    let r = alignment_report(&ladder_with_scores(&metric, &scores), SCORE_COLUMN).unwrap();
    let t = &r.metrics[0].test;
    assert_eq!(t.tau, -1.0);
    assert_eq!(t.band, Band::Three);
    assert!((r.plot[6].reciprocal[0] - 0.1).abs() < 1e-15);
}

#[test]
fn independent_scores_are_mostly_not_significant() {
    let metric: Vec<f64> = (1..=7).map(f64::from).collect();
    let mut ns = 0;
    for seed in 0..1000u64 {
        let mut scores = metric.clone();
        scores.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let r = alignment_report(&ladder_with_scores(&metric, &scores), SCORE_COLUMN).unwrap();
        if r.metrics[0].test.band == Band::NotSignificant {
            ns += 1;
        }
    }
    assert!(ns >= 900, "{ns}/1000");
}

#[test]
fn missing_score_is_protocol_error() {
    let mut entries = ladder_with_scores(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3]);
    entries[1].downstream_score = None;
    match alignment_report(&entries, SCORE_COLUMN) {
        Err(Error::Protocol(msg)) => assert!(msg.contains("X-2"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_metric_gives_infinite_reciprocal() {
    let r = alignment_report(&ladder_with_scores(&[0.0, 2.0, 3.0], &[0.3, 0.2, 0.1]), SCORE_COLUMN).unwrap();
    assert_eq!(r.plot[0].reciprocal[0], f64::INFINITY);
    assert!(r.plot_csv().lines().nth(1).unwrap().contains("inf"));
}
