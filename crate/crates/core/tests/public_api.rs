use lpunit::datasets::{gen_curvature_dataset, read_csv_from, write_csv_to, CURVATURE_POSITIVE_FRACTION};
use lpunit::lp::{inverse_reparam, lp_forward, lp_norm, reparam_p, OrderInit};
use lpunit::network::{Network, NetworkSpec};
use lpunit::trainer::{train, TrainConfig};
use proptest::prelude::*;

fn power_mean(d: &[f64], p: f64) -> f64 {
    (d.iter().map(|x| x.abs().powf(p)).sum::<f64>() / d.len() as f64).powf(1.0 / p)
}

proptest! {
    #[test]
    fn lp_matches_direct_power_mean(
        d in prop::collection::vec(-10.0..10.0f64, 1..9),
        p in 1.0..12.0f64,
    ) {
        let expect = power_mean(&d, p);
        prop_assert!((lp_norm(&d, p) - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn lp_is_monotone_in_order(
        d in prop::collection::vec(-10.0..10.0f64, 1..9),
        p in 1.0..8.0f64,
        dp in 0.0..4.0f64,
    ) {
        prop_assert!(lp_norm(&d, p) <= lp_norm(&d, p + dp) * (1.0 + 1e-12));
    }

    #[test]
    fn lp_is_bounded_by_mean_and_max(
        a in prop::collection::vec(-10.0..10.0f64, 1..9),
        rho in -2.0..3.0f64,
    ) {
        let c = vec![0.0; a.len()];
        let u = lp_forward(&a, &c, rho);
        let mean = a.iter().map(|x| x.abs()).sum::<f64>() / a.len() as f64;
        let max = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        prop_assert!(u >= mean * (1.0 - 1e-12) && u <= max * (1.0 + 1e-12));
    }

    #[test]
    fn reparam_round_trips(p in 1.001..50.0f64) {
        let back = reparam_p(inverse_reparam(p).unwrap());
        prop_assert!((back - p).abs() <= 1e-9 * p);
    }
}

#[test]
fn curvature_csv_round_trip_preserves_points() {
    let data = gen_curvature_dataset(400, 8).unwrap();
    let mut buf = Vec::new();
    write_csv_to(&data, &mut buf).unwrap();
    let back = read_csv_from(buf.as_slice()).unwrap();
    assert_eq!(back, data);
    let positive = data.labels.iter().filter(|&&l| l == 1).count() as f64 / 400.0;
    assert!((positive - CURVATURE_POSITIVE_FRACTION).abs() < 0.1);
}

#[test]
fn trained_network_survives_json() {
    let data = gen_curvature_dataset(200, 1).unwrap();
    let spec = NetworkSpec::lp_classifier(2, 3, 2, OrderInit::Learned { initial_p: 3.0 }, 2);
    let cfg = TrainConfig { epochs: 20, valid_fraction: 0.0, ..Default::default() };
    let (net, _) = train(&spec, &data, None, &cfg).unwrap();
    let back = Network::from_json(&net.to_json().unwrap()).unwrap();
    assert_eq!(back.flatten(), net.flatten());
    assert_eq!(back.predict(&data.x).unwrap(), net.predict(&data.x).unwrap());
    assert!(net.lp_orders().iter().all(|&p| p > 1.0));
}
