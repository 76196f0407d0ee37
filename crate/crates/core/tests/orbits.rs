mod common;

use num_traits::{Signed, Zero};
use proptest::prelude::*;

use polltri::intervals::{escape_certificate, iterate_boundary_sets, EscapeCertificate};
use polltri::node::Node;
use polltri::num::{q, qi, ten_pow_neg, Q};
use polltri::orbit::{basin_sample, find_orbits, preimage_tree, verify_certificate, BasinOptions, EngineOptions, Stability};
use polltri::params::{geometry, BoundaryPoint, DecisionPoints, SystemParams};

fn half() -> DecisionPoints {
    DecisionPoints::uniform(q(1, 2)).unwrap()
}

fn eval_poly(c: [i64; 3], x: &Q) -> Q {
    qi(c[0]) * x * x + qi(c[1]) * x + qi(c[2])
}

/// Whether the enclosure `[lo, hi]` brackets a root of `c₀x² + c₁x + c₂`.
fn brackets(c: [i64; 3], lo: &Q, hi: &Q) -> bool {
    let (a, b) = (eval_poly(c, lo), eval_poly(c, hi));
    a.is_zero() || b.is_zero() || a.signum() != b.signum()
}

#[test]
fn symmetric_benchmark_roots() {
    let p = common::symmetric();
    let orbits = find_orbits(&p, &half(), &EngineOptions::default()).unwrap();
    assert_eq!(orbits.len(), 2);
    let width = ten_pow_neg(30);
    // (27 − √477)/14 and (−13 + √477)/14.
    let polys = [[7, -27, 9], [7, 13, -11]];
    for poly in polys {
        let hit = orbits.iter().flat_map(|o| &o.points).any(|pt| {
            &pt.hi - &pt.lo <= width && brackets(poly, &pt.lo, &pt.hi) && pt.lo > qi(0) && pt.hi < qi(1)
        });
        assert!(hit, "no enclosure brackets a root of {poly:?}");
    }
    let g = geometry(&p).unwrap();
    for o in &orbits {
        assert_eq!(o.period(), 3);
        assert_eq!(o.stability, Stability::Stable);
        verify_certificate(&p, &half(), &g, o).unwrap();
    }
    let mut cycles: Vec<Vec<u8>> = orbits.iter().map(|o| rotate_min(o.node_cycle.iter().map(|n| n.label()).collect())).collect();
    cycles.sort();
    assert_eq!(cycles, vec![vec![1, 2, 3], vec![1, 3, 2]]);
}

fn rotate_min(mut v: Vec<u8>) -> Vec<u8> {
    let k = (0..v.len()).min_by_key(|&i| v[i]).unwrap_or(0);
    v.rotate_left(k);
    v
}

#[test]
fn symmetric_basins_cover_grid() {
    let p = common::symmetric();
    let orbits = find_orbits(&p, &half(), &EngineOptions::default()).unwrap();
    let basin = basin_sample(&p, &half(), &orbits, 300, &BasinOptions::default()).unwrap();
    assert_eq!(basin.len(), 300);
    assert!(basin.iter().all(|b| b.orbit.is_some()));
    for k in 0..orbits.len() {
        assert!(basin.iter().any(|b| b.orbit == Some(k)));
    }
}

#[test]
fn escape_certificate_and_preimages() {
    let p = common::symmetric();
    assert_eq!(escape_certificate(&p, &half(), 200).unwrap(), EscapeCertificate::FiniteP(2));
    let tree = preimage_tree(&p, &half(), 3).unwrap();
    assert!(tree.is_finite());
    // A^t shrinks monotonically.
    let sets = iterate_boundary_sets(&p, &half(), 4).unwrap();
    for w in sets.windows(2) {
        assert!(w[1].is_subset_of(&w[0]));
    }
}

#[test]
fn orbit_count_cap_is_enforced() {
    let p = common::symmetric();
    let opts = EngineOptions { max_orbits: 1, ..EngineOptions::default() };
    assert!(find_orbits(&p, &half(), &opts).is_err());
}

#[test]
fn stable_loads_rejected() {
    assert!(SystemParams::normalized_loads([q(1, 5), q(1, 5), q(1, 5)]).is_err());
    assert!(SystemParams::normalized_loads([q(1, 1), q(1, 5), q(1, 5)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every certified orbit point maps into the next enclosure under the
    /// threshold rule and the count never exceeds four.
    #[test]
    fn certified_orbits_are_invariant(
        r in [200i64..900, 200i64..900, 200i64..900].prop_filter("transient", |r| r.iter().sum::<i64>() > 1000),
        dn in [1i64..1000, 1i64..1000, 1i64..1000],
    ) {
        let p = SystemParams::normalized_loads(r.map(|n| q(n, 1000))).unwrap();
        let d = DecisionPoints::new(dn.map(|n| q(n, 1000))).unwrap();
        prop_assume!(matches!(escape_certificate(&p, &d, 200).unwrap(), EscapeCertificate::FiniteP(_)));
        let orbits = find_orbits(&p, &d, &EngineOptions { max_orbits: usize::MAX, ..EngineOptions::default() }).unwrap();
        prop_assert!(orbits.len() <= 4);
        let g = geometry(&p).unwrap();
        for o in &orbits {
            verify_certificate(&p, &d, &g, o).unwrap();
            // The cycle map really fixes a point of the first enclosure.
            let p0 = &o.points[0];
            let a = o.cycle_map.eval(&p0.lo) - &p0.lo;
            let b = o.cycle_map.eval(&p0.hi) - &p0.hi;
            prop_assert!(a.is_zero() || b.is_zero() || a.signum() != b.signum());
            let c = BoundaryPoint { side: p0.side, x: p0.center() };
            prop_assert!(g.in_va(&c));
            prop_assert!(o.node_cycle.iter().all(|n| Node::ALL.contains(n)));
        }
    }
}
