use proptest::prelude::*;
use rand::SeedableRng;

use polltri::experiments::{busy_period_check, classify_tail, clopper_pearson, drift_check, queues_on_side, TailClass};
use polltri::node::Node;
use polltri::sim::{
    replica_rng, run_busy_period, side_coordinate, simulate, threshold_decision, BusyMode, Magnitude, PollingState, Rule,
    ServiceModel, SimConfig,
};

fn cfg(mode: BusyMode, service: ServiceModel) -> SimConfig {
    SimConfig { lambda: [0.45; 3], service, rule: Rule::Thresholds([0.5; 3]), mode, budget: 1 << 40 }
}

#[test]
fn records_are_consistent() {
    let c = cfg(BusyMode::Generations, ServiceModel::exponential([1.0; 3]));
    let recs = simulate(&c, [300, 200, 100], Node::N1, 200, 4, 0).unwrap();
    assert_eq!(recs.len(), 200);
    for w in recs.windows(2) {
        assert_eq!(w[0].next_node, Some(w[1].server));
        assert!(w[1].tau.ln() >= w[0].tau.ln());
        assert_eq!(w[1].n, w[0].n + 1);
    }
    for r in &recs {
        let q: Vec<f64> = r.queues.iter().map(Magnitude::as_f64).collect();
        assert_eq!(q[r.server.index()], 0.0);
        assert!((q.iter().sum::<f64>() - r.total.as_f64()).abs() < 1e-6 * r.total.as_f64().max(1.0));
        let x = side_coordinate(&r.zeta, r.server);
        assert_eq!(x, r.zeta_x);
        // The recorded decision follows the threshold.
        let want = if x < 0.5 { r.server.next() } else { r.server.prev() };
        if x != 0.5 {
            assert_eq!(r.next_node, Some(want));
        }
    }
}

#[test]
fn streams_are_independent_of_scheduling() {
    let c = cfg(BusyMode::Generations, ServiceModel::exponential([1.0; 3]));
    let a = simulate(&c, [500, 0, 0], Node::N1, 50, 1, 3).unwrap();
    let b = std::thread::spawn(move || simulate(&c, [500, 0, 0], Node::N1, 50, 1, 3).unwrap()).join().unwrap();
    assert_eq!(a, b);
    let other = simulate(&cfg(BusyMode::Generations, ServiceModel::exponential([1.0; 3])), [500, 0, 0], Node::N1, 50, 1, 4).unwrap();
    assert_ne!(a, other);
}

/// Per-service and generation-wise busy periods have the same law.
#[test]
fn busy_modes_agree() {
    let service = ServiceModel::gamma([1.0; 3], [0.5; 3]).unwrap();
    let mean_of = |mode: BusyMode, seed: u64| {
        let c = cfg(mode, service.clone());
        let xs: Vec<f64> = (0..4000)
            .map(|r| {
                let mut s = PollingState::new([200, 0, 0], Node::N1, replica_rng(seed, r));
                run_busy_period(&mut s, &c, 0).unwrap().services
            })
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, v / xs.len() as f64)
    };
    let (a, va) = mean_of(BusyMode::PerService, 1);
    let (b, vb) = mean_of(BusyMode::Generations, 2);
    assert!((a - b).abs() < 4.0 * (va + vb).sqrt(), "{a} vs {b}");
    assert!((a - 200.0 / 0.55).abs() < 4.0 * va.sqrt());
}

#[test]
fn deterministic_service_without_arrivals() {
    let c = SimConfig { lambda: [0.0; 3], ..cfg(BusyMode::PerService, ServiceModel::deterministic([0.5; 3])) };
    let mut s = PollingState::new([0, 9, 0], Node::N2, replica_rng(0, 0));
    let r = run_busy_period(&mut s, &c, 0).unwrap();
    assert_eq!(r.services, 9.0);
    assert_eq!(r.tau.as_f64(), 18.0);
}

#[test]
fn validators_accept_exact_moments() {
    for service in [ServiceModel::exponential([1.0; 3]), ServiceModel::deterministic([1.0; 3])] {
        let c = cfg(BusyMode::Generations, service);
        for m in drift_check(&c, [100, 50, 20], Node::N1, 2000, 8).unwrap() {
            assert!(m.within(4.0), "{m:?}");
        }
        for m in busy_period_check(&c, 50, Node::N2, 2000, 8).unwrap() {
            assert!(m.within(4.0), "{m:?}");
        }
    }
}

#[test]
fn clopper_pearson_reference_values() {
    let (lo, hi) = clopper_pearson(0, 10, 0.95);
    assert_eq!(lo, 0.0);
    assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
    let (lo, hi) = clopper_pearson(10, 10, 0.95);
    assert!((lo - 0.025f64.powf(0.1)).abs() < 1e-9);
    assert_eq!(hi, 1.0);
    let (lo, hi) = clopper_pearson(50, 100, 0.95);
    assert!((lo - 0.398_321).abs() < 1e-5 && (hi - 0.601_679).abs() < 1e-5);
}

#[test]
fn tail_classes() {
    let cyc: Vec<Node> = (0..300).map(|k| [Node::N1, Node::N3, Node::N2][k % 3]).collect();
    assert_eq!(classify_tail(&cyc, 12, 100), TailClass::LockedPeriod3);
    let other: Vec<Node> = (0..300).map(|k| [Node::N1, Node::N2, Node::N3][k % 3]).collect();
    assert_eq!(classify_tail(&other, 12, 100), TailClass::Other);
    // Fibonacci word over two letters has no short period.
    let (mut a, mut b) = (vec![Node::N1], vec![Node::N1, Node::N2]);
    while b.len() < 400 {
        let c = [b.clone(), a].concat();
        a = b;
        b = c;
    }
    assert_eq!(classify_tail(&b, 12, 300), TailClass::NoShortPeriod);
}

#[test]
fn starting_queues_sit_on_requested_side() {
    let q = queues_on_side(1000, Node::N2, 0.25);
    assert_eq!(q, [250, 0, 750]);
    assert_eq!(side_coordinate(&q.map(|v| v as f64 / 1000.0), Node::N2), 0.25);
}

proptest! {
    #[test]
    fn threshold_rule_picks_by_side_coordinate(j in 0usize..3, a in 1u32..1000, b in 1u32..1000, d in 0.01f64..0.99) {
        let j = Node::from_index(j);
        let mut zeta = [0.0; 3];
        zeta[j.next().index()] = a as f64;
        zeta[j.prev().index()] = b as f64;
        let x = b as f64 / (a + b) as f64;
        prop_assume!(x != d);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let got = threshold_decision(&Rule::Thresholds([d; 3]), j, &zeta, &mut rng);
        prop_assert_eq!(got, Some(if x < d { j.next() } else { j.prev() }));
    }
}
