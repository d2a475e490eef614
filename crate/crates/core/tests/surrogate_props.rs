use a5tune::handover::CopVector;
use a5tune::surrogate::*;
use a5tune::sweep::AggregatedPoint;
use proptest::prelude::*;

fn synthetic(n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let ttt = [64.0, 128.0, 256.0, 512.0, 1024.0];
    let x: Vec<[f64; 3]> = (0..n)
        .map(|i| [ttt[i % 5], -120.0 + ((i * 7) % 31) as f64, -120.0 + ((i * 13) % 31) as f64])
        .collect();
    let y = x
        .iter()
        .map(|r| 90.0 + 0.01 * r[0] + 0.3 * (r[1] + 105.0) - 0.002 * (r[2] + 105.0).powi(2) + (r[1] * 0.7).sin())
        .collect();
    (x, y)
}

fn fast(kind: ModelKind) -> ModelSpec {
    let mut s = ModelSpec::new(kind, Kpi::Hosr);
    s.hyper.n_trees = 20;
    s.hyper.rounds = 40;
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn row_order_does_not_matter(
        kind in prop::sample::select(vec![ModelKind::Linear, ModelKind::Poly4, ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::Gbt]),
        perm_seed in any::<u64>(),
    ) {
        use rand::{seq::SliceRandom, SeedableRng};
        let (x, y) = synthetic(80);
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let xp: Vec<[f64; 3]> = idx.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let spec = fast(kind);
        let a = fit(&spec, &x, &y).unwrap();
        let b = fit(&spec, &xp, &yp).unwrap();
        for cop in [CopVector::new(64, -120, -90), CopVector::new(512, -101, -107), CopVector::new(1024, -90, -90)] {
            let (pa, pb) = (a.predict(&cop), b.predict(&cop));
            prop_assert!((pa - pb).abs() <= 1e-9 * pa.abs().max(1.0), "{kind}: {pa} vs {pb}");
        }
    }
}

#[test]
fn forest_prediction_is_mean_of_its_trees() {
    let (x, y) = synthetic(60);
    let m = fit(&fast(ModelKind::RandomForest), &x, &y).unwrap();
    let ModelState::Forest(forest) = &m.state else { panic!("not a forest") };
    assert_eq!(forest.trees.len(), 20);
    for r in &x {
        let z = m.standardizer.apply(r);
        let mean = forest.trees.iter().map(|t| t.predict(&z)).sum::<f64>() / forest.trees.len() as f64;
        assert!((m.predict_features(r) - mean.clamp(0.0, 100.0)).abs() < 1e-12);
    }
}

#[test]
fn boosting_never_increases_training_error() {
    let (x, y) = synthetic(120);
    let st = Standardizer::fit(&x);
    let z: Vec<[f64; 3]> = x.iter().map(|r| st.apply(r)).collect();
    let params = TreeParams { max_depth: 4, min_leaf: 2, max_features: 3 };
    let (_, trace) = Gbt::fit_with_trace(&z, &y, 100, 0.1, params);
    assert_eq!(trace.len(), 101);
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{trace:?}");
    assert!(trace[100] < trace[0]);
}

#[test]
fn every_family_roundtrips_through_json() {
    let (x, y) = synthetic(50);
    for kind in ModelKind::ALL {
        let m = fit(&fast(kind), &x, &y).unwrap();
        let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for r in &x {
            assert_eq!(back.predict_features(r), m.predict_features(r));
        }
    }
    assert!(TrainedModel::from_json("{\"format_version\": 1}").is_err());
}

#[test]
fn linear_model_recovers_an_affine_target() {
    let (x, _) = synthetic(40);
    let y: Vec<f64> = x.iter().map(|r| 50.0 + 0.01 * r[0] + 0.5 * (r[1] + 105.0) - 0.2 * (r[2] + 105.0)).collect();
    let m = fit(&ModelSpec::new(ModelKind::Linear, Kpi::Hosr), &x, &y).unwrap();
    for (r, t) in x.iter().zip(&y) {
        assert!((m.predict_features(r) - t).abs() < 1e-6);
    }
}

#[test]
fn split_is_a_seeded_partition() {
    let pts: Vec<AggregatedPoint> = (0..31)
        .map(|i| AggregatedPoint { cop: CopVector::new(64, -120 + i, -100), mean_rsrp_dbm: -90.0, hosr_pct: 99.0 })
        .collect();
    let (tr, te) = split(&pts, 0.8, 3).unwrap();
    assert_eq!(tr.len(), 24);
    assert_eq!(tr.len() + te.len(), pts.len());
    assert!(te.iter().all(|p| !tr.contains(p)));
    assert_eq!(split(&pts, 0.8, 3).unwrap(), (tr, te));
    assert!(split(&pts[..4], 0.8, 3).is_err());
}
