mod common;

use proptest::prelude::*;

use common::{drift_oracle, side_point};
use polltri::dynamics::{forward_map, inverse_map, step, switch_rule, trajectory, BranchPolicy, Legitimacy};
use polltri::node::Node;
use polltri::num::{q, Q};
use polltri::params::{reweight, validate_params, BoundaryPoint, DecisionPoints, SystemParams};

fn loads() -> impl Strategy<Value = [i64; 3]> {
    [1i64..1000, 1i64..1000, 1i64..1000].prop_filter("transient", |r| r.iter().sum::<i64>() > 1000)
}

fn params_of(r: [i64; 3]) -> SystemParams {
    SystemParams::normalized_loads(r.map(|n| q(n, 1000))).unwrap()
}

fn node() -> impl Strategy<Value = Node> {
    (0usize..3).prop_map(Node::from_index)
}

fn unit() -> impl Strategy<Value = Q> {
    (0i64..=10_000).prop_map(|n| q(n, 10_000))
}

#[test]
fn projected_map_examples() {
    let p = SystemParams::normalized_loads([q(1, 2), q(2, 5), q(3, 10)]).unwrap();
    let z = BoundaryPoint::new(Node::N1, q(1, 2)).unwrap();
    assert_eq!(forward_map(&p, Node::N2, &z).unwrap().x, q(5, 14));

    let general = validate_params([q(1, 2), q(1, 2), q(1, 2)], [q(1, 1), q(2, 1), q(1, 1)], std::array::from_fn(|_| q(0, 1))).unwrap();
    let (_, _, t) = reweight(&general, &DecisionPoints::uniform(q(1, 2)).unwrap());
    assert_eq!(t.apply(&z).x, q(2, 3));
}

#[test]
fn branch_fixed_point_solves_quadratic() {
    let p = common::symmetric();
    // Iterate the lower branch 1 -> 2 -> 3 -> 1 from the midpoint.
    let mut z = BoundaryPoint::new(Node::N1, q(1, 2)).unwrap();
    for _ in 0..60 {
        for t in [Node::N2, Node::N3, Node::N1] {
            z = forward_map(&p, t, &z).unwrap();
            z.x = polltri::num::round_dyadic(&z.x, 200);
        }
    }
    let x = z.x_f64();
    assert!((7.0 * x * x - 27.0 * x + 9.0).abs() < 1e-12 || (7.0 * x * x + 13.0 * x - 11.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn forward_map_matches_drift_oracle(r in loads(), side in node(), off in 1usize..3, x in unit()) {
        let p = params_of(r);
        let j = Node::from_index(side.index() + off);
        let z = BoundaryPoint::new(side, x.clone()).unwrap();
        let got = forward_map(&p, j, &z).unwrap();
        let want = drift_oracle(&p.lambda, &p.mu, j.label(), &side_point(side.label(), &x));
        prop_assert_eq!(got.side, j);
        prop_assert_eq!(got.x, want);
    }

    #[test]
    fn general_rates_match_drift_oracle(
        r in loads(),
        mu in [1i64..20, 1i64..20, 1i64..20],
        side in node(),
        off in 1usize..3,
        x in unit(),
    ) {
        let mu = mu.map(|m| q(m, 4));
        let rho = r.map(|n| q(n, 1000));
        let lambda: [Q; 3] = std::array::from_fn(|i| &rho[i] * &mu[i]);
        let p = validate_params(lambda.clone(), mu.clone(), [q(1, 1), q(1, 1), q(1, 1)]).unwrap();
        let j = Node::from_index(side.index() + off);
        let z = BoundaryPoint::new(side, x.clone()).unwrap();
        let got = forward_map(&p, j, &z).unwrap();
        prop_assert_eq!(got.x, drift_oracle(&lambda, &mu, j.label(), &side_point(side.label(), &x)));
    }

    #[test]
    fn forward_map_is_strictly_monotone(r in loads(), side in node(), off in 1usize..3, a in unit(), b in unit()) {
        prop_assume!(a != b);
        let p = params_of(r);
        let j = Node::from_index(side.index() + off);
        let fa = forward_map(&p, j, &BoundaryPoint::new(side, a.clone()).unwrap()).unwrap().x;
        let fb = forward_map(&p, j, &BoundaryPoint::new(side, b.clone()).unwrap()).unwrap().x;
        // Every branch reverses orientation.
        prop_assert_eq!(a < b, fa > fb);
    }

    #[test]
    fn inverse_undoes_forward(r in loads(), side in node(), off in 1usize..3, x in (1i64..10_000).prop_map(|n| q(n, 10_000))) {
        let p = params_of(r);
        let d = DecisionPoints::uniform(q(1, 2)).unwrap();
        let j = Node::from_index(side.index() + off);
        let z = BoundaryPoint::new(side, x).unwrap();
        let w = forward_map(&p, j, &z).unwrap();
        let back = inverse_map(&p, &d, &w).unwrap();
        prop_assert!(back.point.same_point(&z));
        let selected = switch_rule(&d, &z).contains(&j);
        prop_assert_eq!(back.legitimate.admits(), selected);
        if selected && switch_rule(&d, &z).len() == 1 {
            prop_assert_eq!(back.legitimate, Legitimacy::Yes);
        }
    }

    #[test]
    fn step_follows_threshold(r in loads(), side in node(), x in unit(), dn in 1i64..1000) {
        let p = params_of(r);
        let d = DecisionPoints::uniform(q(dn, 1000)).unwrap();
        let z = BoundaryPoint::new(side, x.clone()).unwrap();
        let s = step(&p, &d, &z).unwrap();
        let dv = q(dn, 1000);
        let want: Vec<Node> = if x < dv { vec![side.next()] } else if x > dv { vec![side.prev()] } else { vec![side.next(), side.prev()] };
        prop_assert_eq!(s.chosen_nodes(), want);
    }

    #[test]
    fn reweighting_conjugates_trajectories(
        r in loads(),
        mu in [1i64..12, 1i64..12, 1i64..12],
        dn in [1i64..100, 1i64..100, 1i64..100],
        side in node(),
        x in (1i64..1000).prop_map(|n| q(n, 1000)),
    ) {
        let mu = mu.map(|m| q(m, 3));
        let rho = r.map(|n| q(n, 1000));
        let lambda: [Q; 3] = std::array::from_fn(|i| &rho[i] * &mu[i]);
        let general = validate_params(lambda, mu, [q(1, 1), q(1, 1), q(1, 1)]).unwrap();
        let d = DecisionPoints::new(dn.map(|n| q(n, 100))).unwrap();
        let (norm, dt, t) = reweight(&general, &d);
        let z0 = BoundaryPoint::new(side, x).unwrap();
        let a = trajectory(&general, &d, &z0, 25, BranchPolicy::Lower).unwrap();
        let b = trajectory(&norm, &dt, &t.apply(&z0), 25, BranchPolicy::Lower).unwrap();
        prop_assert_eq!(a.itinerary, b.itinerary);
        for (u, v) in a.points.iter().zip(&b.points) {
            prop_assert_eq!(&t.apply(u), v);
            prop_assert_eq!(&t.invert(v), u);
        }
    }
}
