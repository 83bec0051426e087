mod oracles;

use approx::assert_abs_diff_eq;
use pixmood_core::stats::*;
use pixmood_core::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn partial_matches_first_order_recursion() {
    let mut rng = oracles::rng(21);
    for _ in 0..200 {
        let n = rng.random_range(6..60);
        let z = normals(&mut rng, n);
        let x: Vec<f64> = z.iter().zip(normals(&mut rng, n)).map(|(a, e)| 0.7 * a + e).collect();
        let y: Vec<f64> = z.iter().zip(normals(&mut rng, n)).map(|(a, e)| -0.4 * a + e).collect();
        let got = partial_corr(&x, &y, &[("z", &z)]).unwrap();
        assert!((got.r - oracles::stats::partial_one(&x, &y, &z)).abs() <= 1e-9);
        assert_eq!(got.df, n - 3);
    }
}

#[test]
fn six_row_partial() {
    let x = [1.0, 2.0, 4.0, 3.0, 6.0, 5.0];
    let y = [2.0, 1.0, 5.0, 3.0, 4.0, 7.0];
    let z = [0.5, 1.5, 1.0, 3.0, 2.5, 2.0];
    let got = partial_corr(&x, &y, &[("z", &z)]).unwrap().r;
    assert_abs_diff_eq!(got, oracles::stats::partial_one(&x, &y, &z), epsilon = 1e-9);
}

#[test]
fn bh_matches_enumeration() {
    let mut rng = oracles::rng(4);
    for _ in 0..2000 {
        let m = rng.random_range(1..=10);
        let p: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..4) {
                0 => rng.random_range(0.0..0.02),
                1 => (rng.random_range(0..20) as f64) / 100.0,
                _ => rng.random(),
            })
            .collect();
        let q = [0.01, 0.05, 0.1][rng.random_range(0..3)];
        let got = bh_correct(&p, q).unwrap();
        let (adjusted, flags) = oracles::stats::bh(&p, q);
        assert_eq!(got.adjusted, adjusted, "p = {p:?}");
        assert_eq!(got.significant, flags, "p = {p:?}");
    }
}

#[test]
fn null_fdr_is_controlled() {
    let (q, reps, m, n) = (0.05, 1000, 20, 60);
    let mut rng = oracles::rng(77);
    let mut fdp_sum = 0.0;
    for _ in 0..reps {
        let y = normals(&mut rng, n);
        let p: Vec<f64> = (0..m).map(|_| pearson_r(&normals(&mut rng, n), &y).unwrap().p).collect();
        let flags = bh_correct(&p, q).unwrap().significant;
        // every hypothesis is null, so any discovery makes the proportion 1
        if flags.iter().any(|&f| f) {
            fdp_sum += 1.0;
        }
    }
    let fdr = fdp_sum / reps as f64;
    assert!(fdr <= q + 3.0 * (q / reps as f64).sqrt(), "fdr {fdr}");
}

#[test]
fn p_values_are_uniform_under_null() {
    let mut rng = oracles::rng(8);
    let p: Vec<f64> = (0..4000)
        .map(|_| {
            let n = rng.random_range(5..40);
            pearson_r(&normals(&mut rng, n), &normals(&mut rng, n)).unwrap().p
        })
        .collect();
    for cut in [0.01, 0.05, 0.25, 0.5] {
        let frac = p.iter().filter(|&&v| v <= cut).count() as f64 / p.len() as f64;
        let se = (cut * (1.0 - cut) / p.len() as f64).sqrt();
        assert!((frac - cut).abs() < 4.0 * se, "P(p <= {cut}) = {frac}");
    }
}

#[test]
fn degenerate_inputs() {
    let y = [1.0, 3.0, 2.0, 5.0, 4.0];
    assert!(matches!(partial_corr(&[2.0, 1.0, 2.0, 3.0, 1.0], &y, &[("z", &y)]), Err(Error::DegenerateResidual(_))));
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 4.0, 6.0, 8.0, 10.0];
    match partial_corr(&y, &y, &[("a", &a), ("b", &b)]) {
        Err(Error::Collinear(cols)) => assert_eq!(cols, vec!["b".to_string()]),
        other => panic!("expected collinearity, got {other:?}"),
    }
    assert!(matches!(pearson_r(&[1.0; 4], &a[..4]), Err(Error::DegenerateColumn(_))));
    assert!(partial_corr(&a[..4], &y[..4], &[("a", &a[..4]), ("b", &y[..4])]).is_err());
}

fn outcome_rows(rng: &mut impl Rng, n: usize) -> Vec<OutcomeRecord> {
    (0..n)
        .map(|i| OutcomeRecord {
            user_id: format!("u{i:03}"),
            depression: rng.sample(StandardNormal),
            anxiety: rng.sample(StandardNormal),
            age: rng.random_range(18.0..70.0),
            gender: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        })
        .collect()
}

fn column(name: &str, v: Vec<f64>) -> FeatureColumn {
    FeatureColumn {
        name: name.into(),
        values: v.into_iter().map(Some).collect(),
    }
}

#[test]
fn planted_feature_tops_the_report() {
    let mut rng = oracles::rng(31);
    let rows = outcome_rows(&mut rng, 300);
    let table = OutcomeTable::new(rows.clone()).unwrap();
    let signal: Vec<f64> = rows.iter().map(|r| r.depression + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let noise = normals(&mut rng, 300);
    let age_copy: Vec<f64> = rows.iter().map(|r| r.age).collect();
    let features = FeatureTable {
        user_ids: rows.iter().map(|r| r.user_id.clone()).collect(),
        columns: vec![column("noise", noise), column("signal", signal), column("age_copy", age_copy)],
    };
    let spec = AnalysisSpec::new("depression", &["age", "gender", "anxiety"]);
    let out = correlate_all(&features, &table, &[spec], 0.01).unwrap();
    assert_eq!(out[0].feature, "signal");
    assert!(out[0].r > 0.9 && out[0].significant);
    let age = out.iter().find(|r| r.feature == "age_copy").unwrap();
    assert!(age.r.abs() < 1e-6 && !age.significant);
}

#[test]
fn independent_feature_rarely_flagged() {
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = oracles::rng(1000 + seed);
        let rows = outcome_rows(&mut rng, 500);
        let table = OutcomeTable::new(rows.clone()).unwrap();
        let features = FeatureTable {
            user_ids: rows.iter().map(|r| r.user_id.clone()).collect(),
            columns: vec![column("null", normals(&mut rng, 500))],
        };
        let out = correlate_all(&features, &table, &[AnalysisSpec::new("depression", &["age", "gender"])], 0.01).unwrap();
        if out[0].r.abs() < 0.15 && !out[0].significant {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn pairwise_deletion_reports_n() {
    let mut rng = oracles::rng(2);
    let rows = outcome_rows(&mut rng, 50);
    let table = OutcomeTable::new(rows.clone()).unwrap();
    let mut values: Vec<Option<f64>> = normals(&mut rng, 50).into_iter().map(Some).collect();
    for v in values.iter_mut().step_by(5) {
        *v = None;
    }
    let features = FeatureTable {
        user_ids: rows.iter().map(|r| r.user_id.clone()).collect(),
        columns: vec![FeatureColumn { name: "gappy".into(), values }],
    };
    let out = correlate_all(&features, &table, &[AnalysisSpec::new("anxiety", &["age"])], 0.01).unwrap();
    assert_eq!(out[0].n, 40);
}

#[test]
fn constant_outcome_is_an_error() {
    let mut rng = oracles::rng(3);
    let mut rows = outcome_rows(&mut rng, 20);
    rows.iter_mut().for_each(|r| r.depression = 2.0);
    let table = OutcomeTable::new(rows.clone()).unwrap();
    let features = FeatureTable {
        user_ids: rows.iter().map(|r| r.user_id.clone()).collect(),
        columns: vec![column("f", normals(&mut rng, 20))],
    };
    let err = correlate_all(&features, &table, &[AnalysisSpec::new("depression", &[])], 0.01).unwrap_err();
    assert_eq!(err, Error::DegenerateColumn("depression".into()));
}

#[test]
fn z_normalized_moments() {
    let mut rng = oracles::rng(12);
    for _ in 0..50 {
        let n = rng.random_range(2..200);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let z = z_normalize(&x).unwrap();
        assert!(mean(&z).abs() < 1e-9);
        assert!((sample_sd(&z) - 1.0).abs() < 1e-9);
    }
}

fn arb_data() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (6usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn empty_controls_is_pearson((x, y, _) in arb_data()) {
        if let Ok(c) = pearson_r(&x, &y) {
            prop_assert_eq!(partial_corr(&x, &y, &[]).unwrap().r.to_bits(), c.r.to_bits());
        }
    }

    #[test]
    fn partial_is_symmetric((x, y, z) in arb_data()) {
        if let (Ok(a), Ok(b)) = (partial_corr(&x, &y, &[("z", &z)]), partial_corr(&y, &x, &[("z", &z)])) {
            prop_assert!((a.r - b.r).abs() <= 1e-12);
            prop_assert!(a.r.abs() <= 1.0);
        }
    }

    #[test]
    fn affine_invariance((x, y, _) in arb_data(), a in 0.1..5.0f64, b in -5.0..5.0f64) {
        if let Ok(c) = pearson_r(&x, &y) {
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((pearson_r(&xt, &y).unwrap().r - c.r).abs() < 1e-9);
            prop_assert!((pearson_r(&x, &neg).unwrap().r + c.r).abs() < 1e-12);
        }
    }

    #[test]
    fn bh_flags_are_monotone(p in prop::collection::vec(0.0..=1.0f64, 1..12), idx in any::<prop::sample::Index>(), shrink in 0.0..1.0f64) {
        let before = bh_correct(&p, 0.05).unwrap();
        let i = idx.index(p.len());
        let mut lowered = p.clone();
        lowered[i] *= shrink;
        let after = bh_correct(&lowered, 0.05).unwrap();
        for (b, a) in before.significant.iter().zip(&after.significant) {
            prop_assert!(!b || *a);
        }
        for (adj, raw) in before.adjusted.iter().zip(&p) {
            prop_assert!(adj >= raw);
        }
    }

    #[test]
    fn bh_single_is_identity(p in 0.0..=1.0f64) {
        prop_assert_eq!(bh_correct(&[p], 0.05).unwrap().adjusted, vec![p]);
    }
}
