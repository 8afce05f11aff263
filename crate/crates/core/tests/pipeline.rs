use proptest::prelude::*;
use warpfda::simulate::{run_pair, SimSpec};
use warpfda::{
    plugin_estimate, pooled_nw, sup_distance, EstimateConfig, FunctionalDataset, Identity, ParseOptions,
    PiecewiseLinearWarp, PointFlag, RegistrationConfig,
};

fn small_spec(seed: u64) -> SimSpec {
    SimSpec {
        n1: 150,
        n2: 150,
        noise_frac: 0.02,
        seed,
        ..SimSpec::default()
    }
}

#[test]
fn registered_pooling_beats_identity_pooling() {
    let spec = small_spec(4);
    let (d1, d2) = run_pair(&spec, 0).unwrap();
    let reg = RegistrationConfig {
        knots: 12,
        ..RegistrationConfig::default()
    };
    let grid = spec.imse_grid();
    let est = EstimateConfig::default().with_bandwidth(4.0).with_grid(grid.clone());
    let (fit, curve) = plugin_estimate(&d1, &d2, &reg, &est).unwrap();
    let naive = pooled_nw(&d1, Some(&d2), &Identity, &est).unwrap();
    let sq_err = |c: &warpfda::MeanCurve| {
        c.ok_points().map(|(t, m)| (m - spec.mean.eval(t)).powi(2)).sum::<f64>() / c.ok_points().count() as f64
    };
    assert!(sq_err(&curve) < sq_err(&naive));
    let before = sup_distance(&Identity, &spec.warp, d2.support(), 4096);
    let after = sup_distance(&fit.warp, &spec.warp, d2.support(), 4096);
    assert!(after < before);
}

#[test]
fn csv_round_trip_is_exact() {
    let (d1, _) = run_pair(&small_spec(5), 0).unwrap();
    let mut buf = Vec::new();
    d1.write_csv(&mut buf).unwrap();
    let back = FunctionalDataset::from_csv_reader(buf.as_slice(), &ParseOptions::default()).unwrap();
    assert_eq!(back.times(), d1.times());
    assert_eq!(back.values(), d1.values());
}

#[test]
fn warp_json_round_trip_is_exact() {
    let w = PiecewiseLinearWarp::new(vec![0.0, 1.0, 2.0], vec![0.1, 0.7, 2.5]).unwrap();
    let back = PiecewiseLinearWarp::from_json(&w.to_json()).unwrap();
    assert_eq!(back.knots(), w.knots());
    assert_eq!(back.values(), w.values());
}

proptest! {
    #[test]
    fn estimate_stays_within_value_range(
        pts in prop::collection::btree_map(0u32..10_000, -100.0f64..100.0, 2..40),
        h in 0.05f64..5.0,
    ) {
        let times: Vec<f64> = pts.keys().map(|&k| k as f64 / 1000.0).collect();
        let values: Vec<f64> = pts.values().copied().collect();
        let ds = FunctionalDataset::new("p", times, values.clone()).unwrap();
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let curve = pooled_nw(&ds, None, &Identity, &EstimateConfig::default().with_bandwidth(h).with_grid(grid)).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (m, flag) in curve.estimate.iter().zip(&curve.flags) {
            if *flag == PointFlag::Ok {
                prop_assert!(*m >= lo - 1e-9 && *m <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn shifting_values_shifts_estimate(
        pts in prop::collection::btree_map(0u32..1000, -10.0f64..10.0, 3..30),
        delta in -50.0f64..50.0,
    ) {
        let times: Vec<f64> = pts.keys().map(|&k| k as f64 / 100.0).collect();
        let values: Vec<f64> = pts.values().copied().collect();
        let ds = FunctionalDataset::new("p", times, values).unwrap();
        let cfg = EstimateConfig::default().with_bandwidth(0.7).with_grid(vec![1.0, 4.0, 8.0]);
        let a = pooled_nw(&ds, None, &Identity, &cfg).unwrap();
        let b = pooled_nw(&ds.shifted(delta), None, &Identity, &cfg).unwrap();
        for i in 0..3 {
            if a.flags[i] == PointFlag::Ok {
                prop_assert!((b.estimate[i] - a.estimate[i] - delta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn warp_inverse_round_trips(
        increments in prop::collection::vec(0.01f64..5.0, 1..30),
        start in -10.0f64..10.0,
        u in 0.0f64..1.0,
    ) {
        let k = increments.len() + 1;
        let knots: Vec<f64> = (0..k).map(|i| i as f64).collect();
        let mut values = vec![start];
        for d in &increments {
            values.push(values.last().unwrap() + d);
        }
        let w = PiecewiseLinearWarp::new(knots, values).unwrap();
        let t = u * (k - 1) as f64;
        prop_assert!((w.inverse(w.eval(t)) - t).abs() < 1e-10);
    }
}
