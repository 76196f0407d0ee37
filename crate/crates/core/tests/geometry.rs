mod common;

use num_traits::Signed;
use proptest::prelude::*;

use polltri::dynamics::forward_map;
use polltri::node::Node;
use polltri::num::{q, to_f64, Q};
use polltri::params::{geometry, in_contraction_region, BoundaryPoint, SystemParams};

fn loads() -> impl Strategy<Value = [i64; 3]> {
    [1i64..1000, 1i64..1000, 1i64..1000].prop_filter("transient", |r| r.iter().sum::<i64>() > 1000)
}

#[test]
fn symmetric_foci() {
    let g = geometry(&common::symmetric()).unwrap();
    assert_eq!(g.theta, q(7, 20));
    assert_eq!(g.foci[0][0], q(-11, 7));
    assert_eq!(g.foci[0][1], q(9, 7));
    assert!(g.all_j_empty());
    for f in &g.foci {
        assert_eq!(f.iter().sum::<Q>(), q(1, 1));
    }
}

#[test]
fn corner_regions_follow_loads() {
    let p = SystemParams::normalized_loads([q(1, 5), q(3, 5), q(3, 5)]).unwrap();
    let g = geometry(&p).unwrap();
    // θ = 2/5: only ρ_1 < θ leaves a nonempty corner region.
    assert!(g.j_corners[0].is_some());
    assert!(g.j_corners[1].is_none() && g.j_corners[2].is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Each focus lies on every drift line of its node: the exit point of
    /// any side point is collinear with the start and the focus.
    #[test]
    fn images_lie_on_lines_through_focus(r in loads(), side in 0usize..3, off in 1usize..3, x in 0i64..=1000) {
        let p = SystemParams::normalized_loads(r.map(|n| q(n, 1000))).unwrap();
        let side = Node::from_index(side);
        let j = Node::from_index(side.index() + off);
        let g = geometry(&p).unwrap();
        let z = BoundaryPoint::new(side, q(x, 1000)).unwrap();
        let w = forward_map(&p, j, &z).unwrap();
        let (a, b, v) = (z.simplex(), w.simplex(), &g.foci[j.index()]);
        // Vanishing 3x3 determinant of affine points in the plane Σ = 1.
        let det = &a[0] * (&b[1] * &v[2] - &b[2] * &v[1]) - &a[1] * (&b[0] * &v[2] - &b[2] * &v[0])
            + &a[2] * (&b[0] * &v[1] - &b[1] * &v[0]);
        prop_assert_eq!(det, q(0, 1));
    }

    #[test]
    fn lipschitz_ratio_bounded_in_contraction_region(
        r in loads(),
        side in 0usize..3,
        off in 1usize..3,
        a in 0i64..=100_000,
        b in 0i64..=100_000,
    ) {
        prop_assume!(a != b);
        let p = SystemParams::normalized_loads(r.map(|n| q(n, 1000))).unwrap();
        let g = geometry(&p).unwrap();
        let side = Node::from_index(side);
        let j = Node::from_index(side.index() + off);
        let (u, w) = (BoundaryPoint::new(side, q(a, 100_000)).unwrap(), BoundaryPoint::new(side, q(b, 100_000)).unwrap());
        prop_assume!(in_contraction_region(&p, &g.gamma, j, &u) && in_contraction_region(&p, &g.gamma, j, &w));
        let fu = forward_map(&p, j, &u).unwrap().x;
        let fw = forward_map(&p, j, &w).unwrap().x;
        let ratio = to_f64(&((&fu - &fw) / (&u.x - &w.x)).abs());
        prop_assert!(ratio <= to_f64(&g.gamma) + 1e-9, "ratio {ratio} gamma {}", to_f64(&g.gamma));
    }
}

#[test]
fn distortion_within_frozen_constant() {
    for (log_ratio, width) in common::distortion_samples(2024, 400) {
        assert!(log_ratio <= common::KAPPA * width, "log ratio {log_ratio} exceeds {} x {width}", common::KAPPA);
    }
}
