//! Pre-image trees of the decision points, periodic-orbit enumeration through
//! the partition of the boundary at those pre-images, certificates and basins.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{branch_mobius, inverse_map, step, switch_rule, BranchPolicy, Legitimacy};
use crate::error::{Error, Result};
use crate::intervals::{escape_certificate, EscapeCertificate};
use crate::node::{Node, Side};
use crate::num::{bisect_fixed_point, round_dyadic, ten_pow_neg, to_f64, Mobius, Q};
use crate::params::{geometry, BoundaryPoint, DecisionPoints, GeometrySummary, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Illegitimate,
    DepthLimit,
    CycleDetected,
}

/// `d, ψ(d), ψ²(d), …` while legitimate.
#[derive(Clone, Debug)]
pub struct PreImageChain {
    pub side: Side,
    /// `chain[0]` is the decision point itself.
    pub chain: Vec<(BoundaryPoint, Legitimacy)>,
    /// The candidate that ended the chain, when it was illegitimate.
    pub rejected: Option<BoundaryPoint>,
    pub termination: Termination,
}

impl PreImageChain {
    /// Number of legitimate pre-images found (excluding `d` itself).
    pub fn depth(&self) -> usize {
        self.chain.len() - 1
    }

    pub fn last(&self) -> &BoundaryPoint {
        &self.chain.last().expect("chain holds its root").0
    }
}

#[derive(Clone, Debug)]
pub struct PreImageTree {
    pub chains: [PreImageChain; 3],
}

impl PreImageTree {
    pub fn is_finite(&self) -> bool {
        self.chains.iter().all(|c| c.termination == Termination::Illegitimate)
    }

    /// All points of `P`, deduplicated by simplex position.
    pub fn points(&self) -> Vec<BoundaryPoint> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.chains {
            for (p, _) in &c.chain {
                if seen.insert(p.loop_position()) {
                    out.push(p.clone());
                }
            }
        }
        out
    }
}

pub fn preimage_chain(params: &SystemParams, d: &DecisionPoints, start: BoundaryPoint, depth: usize) -> Result<PreImageChain> {
    let side = start.side;
    let mut chain = vec![(start, Legitimacy::Yes)];
    let mut seen = BTreeSet::new();
    seen.insert(chain[0].0.loop_position());
    loop {
        if chain.len() > depth {
            return Ok(PreImageChain { side, chain, rejected: None, termination: Termination::DepthLimit });
        }
        let pre = inverse_map(params, d, &chain.last().expect("nonempty").0)?;
        if !pre.legitimate.admits() {
            return Ok(PreImageChain { side, chain, rejected: Some(pre.point), termination: Termination::Illegitimate });
        }
        if !seen.insert(pre.point.loop_position()) {
            chain.push((pre.point, pre.legitimate));
            return Ok(PreImageChain { side, chain, rejected: None, termination: Termination::CycleDetected });
        }
        chain.push((pre.point, pre.legitimate));
    }
}

pub fn preimage_tree(params: &SystemParams, d: &DecisionPoints, depth: usize) -> Result<PreImageTree> {
    let chains = [
        preimage_chain(params, d, d.point(Node::N1), depth)?,
        preimage_chain(params, d, d.point(Node::N2), depth)?,
        preimage_chain(params, d, d.point(Node::N3), depth)?,
    ];
    Ok(PreImageTree { chains })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    OneSided,
    Unstable,
}

/// A point of an orbit known to lie in `[lo, hi]` on `side`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitPoint {
    pub side: Side,
    pub lo: Q,
    pub hi: Q,
}

impl OrbitPoint {
    pub fn center(&self) -> Q {
        (&self.lo + &self.hi) / Q::from_integer(2.into())
    }

    pub fn radius(&self) -> Q {
        (&self.hi - &self.lo) / Q::from_integer(2.into())
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Q) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn overlaps(&self, other: &OrbitPoint) -> bool {
        self.side == other.side && self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn center_f64(&self) -> f64 {
        to_f64(&self.center())
    }
}

#[derive(Clone, Debug)]
pub struct OrbitCertificate {
    pub points: Vec<OrbitPoint>,
    pub node_cycle: Vec<Side>,
    /// `|(f^{(m)})′|` at the enclosure center of the first point.
    pub contraction: f64,
    /// Rigorous upper bound of the cycle derivative over the first enclosure.
    pub contraction_bound: Q,
    pub stability: Stability,
    pub contains_decision_point: bool,
    /// Composed branch map fixing the first point.
    pub cycle_map: Mobius,
}

impl OrbitCertificate {
    pub fn period(&self) -> usize {
        self.points.len()
    }
}

#[derive(Clone, Debug)]
pub struct EngineOptions {
    pub t_max: usize,
    /// Enclosure width for irrational orbit points.
    pub width: Q,
    pub max_orbits: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { t_max: 200, width: ten_pow_neg(30), max_orbits: 4 }
    }
}

/// One side-wise open arc between consecutive partition points.
#[derive(Clone, Debug)]
struct Arc {
    side: Side,
    lo: Q,
    hi: Q,
}

fn build_arcs(points: &[BoundaryPoint]) -> Vec<Arc> {
    let mut cuts: BTreeSet<Q> = points.iter().map(BoundaryPoint::loop_position).collect();
    for k in 0..3 {
        cuts.insert(Q::from_integer(k.into()));
    }
    let cuts: Vec<Q> = cuts.into_iter().collect();
    let three = Q::from_integer(3.into());
    (0..cuts.len())
        .map(|i| {
            let a = &cuts[i];
            let b = if i + 1 < cuts.len() { cuts[i + 1].clone() } else { three.clone() };
            let side = BoundaryPoint::from_loop_position(a).side;
            let base = Q::from_integer(side.index().into());
            Arc { side, lo: a - &base, hi: b - base }
        })
        .collect()
}

fn arc_of(arcs: &[Arc], z: &BoundaryPoint) -> Option<usize> {
    arcs.iter().position(|a| a.side == z.side && a.lo < z.x && z.x < a.hi)
}

/// Target node of the unique branch active on an open arc.
fn arc_target(d: &DecisionPoints, arc: &Arc) -> Node {
    let mid = BoundaryPoint { side: arc.side, x: (&arc.lo + &arc.hi) / Q::from_integer(2.into()) };
    switch_rule(d, &mid)[0]
}

fn cycle_map(params: &SystemParams, sides: &[Side]) -> Result<Mobius> {
    let mut m = Mobius::identity();
    for (i, &s) in sides.iter().enumerate() {
        let target = sides[(i + 1) % sides.len()];
        m = branch_mobius(params, target, s)?.compose(&m);
    }
    Ok(m)
}

fn enclose_fixed_point(map: &Mobius, lo: &Q, hi: &Q, width: &Q) -> Result<(Q, Q)> {
    bisect_fixed_point(map, lo, hi, width)
        .ok_or_else(|| Error::OrbitVerification(format!("no sign change of M(x) - x on [{lo}, {hi}]")))
}

/// Enumerates the periodic orbits of a configuration whose decision points
/// have finitely many pre-images.
pub fn find_orbits(params: &SystemParams, d: &DecisionPoints, options: &EngineOptions) -> Result<Vec<OrbitCertificate>> {
    let t0 = match escape_certificate(params, d, options.t_max)? {
        EscapeCertificate::FiniteP(t) => t,
        EscapeCertificate::Undecided => return Err(Error::NotFiniteP),
    };
    let tree = preimage_tree(params, d, t0 + 1)?;
    if !tree.is_finite() {
        return Err(Error::NotFiniteP);
    }
    let arcs = build_arcs(&tree.points());
    let targets: Vec<Node> = arcs.iter().map(|a| arc_target(d, a)).collect();
    let h: Vec<usize> = arcs
        .iter()
        .zip(&targets)
        .map(|(a, &t)| {
            let mid = BoundaryPoint { side: a.side, x: (&a.lo + &a.hi) / Q::from_integer(2.into()) };
            let img = BoundaryPoint { side: t, x: branch_mobius(params, t, a.side)?.eval(&mid.x) };
            arc_of(&arcs, &img).ok_or_else(|| Error::OrbitVerification(format!("arc image {img} hits a partition point")))
        })
        .collect::<Result<_>>()?;

    let mut core: BTreeSet<usize> = (0..arcs.len()).collect();
    for _ in 0..arcs.len() {
        core = core.iter().map(|&i| h[i]).collect();
    }

    let geo = geometry(params)?;
    let mut visited = BTreeSet::new();
    let mut certs: Vec<OrbitCertificate> = Vec::new();
    for &start in &core {
        if visited.contains(&start) {
            continue;
        }
        let mut cycle = vec![start];
        visited.insert(start);
        let mut i = h[start];
        while i != start {
            visited.insert(i);
            cycle.push(i);
            i = h[i];
        }
        let cert = certify_cycle(params, d, &geo, &arcs, &cycle, &options.width)?;
        if !certs.iter().any(|c| same_orbit(c, &cert)) {
            certs.push(cert);
        }
    }
    certs.sort_by(|a, b| a.points[0].lo.cmp(&b.points[0].lo).then(a.points[0].side.cmp(&b.points[0].side)));
    certs.sort_by_key(|c| (c.period(), c.points[0].side));
    if certs.len() > options.max_orbits {
        return Err(Error::AssertionTriggered(format!("{} periodic orbits found, more than {}", certs.len(), options.max_orbits)));
    }
    Ok(certs)
}

fn same_orbit(a: &OrbitCertificate, b: &OrbitCertificate) -> bool {
    a.period() == b.period() && a.points.iter().all(|p| b.points.iter().any(|q| p.overlaps(q)))
}

fn certify_cycle(
    params: &SystemParams,
    d: &DecisionPoints,
    geo: &GeometrySummary,
    arcs: &[Arc],
    cycle: &[usize],
    width: &Q,
) -> Result<OrbitCertificate> {
    let m = cycle.len();
    let sides: Vec<Side> = cycle.iter().map(|&i| arcs[i].side).collect();
    let mut points = Vec::with_capacity(m);
    let mut maps = Vec::with_capacity(m);
    for k in 0..m {
        let rotated: Vec<Side> = (0..m).map(|i| sides[(k + i) % m]).collect();
        let map = cycle_map(params, &rotated)?;
        let arc = &arcs[cycle[k]];
        let (lo, hi) = enclose_fixed_point(&map, &arc.lo, &arc.hi, width)?;
        points.push(OrbitPoint { side: arc.side, lo, hi });
        maps.push(map);
    }
    // Canonical rotation: start at the smallest loop position.
    let first = (0..m)
        .min_by(|&a, &b| {
            let pa = BoundaryPoint { side: points[a].side, x: points[a].lo.clone() }.loop_position();
            let pb = BoundaryPoint { side: points[b].side, x: points[b].lo.clone() }.loop_position();
            pa.cmp(&pb)
        })
        .unwrap_or(0);
    points.rotate_left(first);
    maps.rotate_left(first);
    let node_cycle: Vec<Side> = points.iter().map(|p| p.side).collect();
    let map = maps.swap_remove(0);

    let contains_decision_point = points.iter().any(|p| p.is_exact() && &p.lo == d.on(p.side));
    let c = points[0].center();
    let contraction = to_f64(&map.derivative(&c).abs());
    let contraction_bound = {
        let a = map.derivative(&points[0].lo).abs();
        let b = map.derivative(&points[0].hi).abs();
        if a > b {
            a
        } else {
            b
        }
    };
    let mut cert = OrbitCertificate {
        points,
        node_cycle,
        contraction,
        contraction_bound,
        stability: Stability::Stable,
        contains_decision_point,
        cycle_map: map,
    };
    verify_certificate(params, d, geo, &cert)?;
    cert.stability = stability_classify(&cert, d);
    Ok(cert)
}

/// Re-checks a certificate: sign change of the cycle map, a pole-free cycle
/// map on the enclosure, image overlap with the next enclosure under a
/// consistent branch, and membership in `ⱽA`.
pub fn verify_certificate(
    params: &SystemParams,
    d: &DecisionPoints,
    geo: &GeometrySummary,
    cert: &OrbitCertificate,
) -> Result<()> {
    let fail = |msg: String| Err(Error::OrbitVerification(msg));
    let m = cert.period();
    let p0 = &cert.points[0];
    if !cert.cycle_map.pole_free_on(&p0.lo, &p0.hi) {
        return fail("cycle map has a pole on the enclosure".into());
    }
    if p0.is_exact() {
        if cert.cycle_map.eval(&p0.lo) != p0.lo {
            return fail("exact orbit point is not fixed".into());
        }
    } else if cert.cycle_map.fixed_point_sign(&p0.lo) == cert.cycle_map.fixed_point_sign(&p0.hi) {
        return fail("no sign change on the first enclosure".into());
    }
    for k in 0..m {
        let p = &cert.points[k];
        let next = &cert.points[(k + 1) % m];
        let dv = d.on(p.side);
        let strictly_inside = &p.lo < dv && dv < &p.hi;
        if strictly_inside {
            return fail(format!("decision point inside enclosure on side {}", p.side));
        }
        let probe = BoundaryPoint { side: p.side, x: p.lo.clone() };
        let allowed = switch_rule(d, &probe);
        let probe_hi = BoundaryPoint { side: p.side, x: p.hi.clone() };
        let allowed_hi = switch_rule(d, &probe_hi);
        if !allowed.contains(&next.side) || !allowed_hi.contains(&next.side) {
            return fail(format!("branch from side {} does not select side {}", p.side, next.side));
        }
        let f = branch_mobius(params, next.side, p.side)?;
        let (a, b) = (f.eval(&p.lo), f.eval(&p.hi));
        let img = OrbitPoint { side: next.side, lo: a.clone().min(b.clone()), hi: a.max(b) };
        if !img.overlaps(next) {
            return fail(format!("image of point {k} misses point {}", (k + 1) % m));
        }
        let (va_lo, va_hi) = &geo.va_intervals[p.side.index()];
        if &p.lo < va_lo || &p.hi > va_hi {
            return fail(format!(
                "orbit point {k} at {:.6} on side {} lies outside the focus triangle [{:.6}, {:.6}]",
                p.center_f64(),
                p.side,
                to_f64(va_lo),
                to_f64(va_hi)
            ));
        }
        if geo.j_corners.iter().flatten().any(|j| j.contains(&BoundaryPoint { side: p.side, x: p.center() })) {
            return fail(format!("orbit point {k} inside a corner region"));
        }
    }
    Ok(())
}

pub fn stability_classify(cert: &OrbitCertificate, d: &DecisionPoints) -> Stability {
    let hits = cert.points.iter().any(|p| p.is_exact() && &p.lo == d.on(p.side));
    if hits {
        if cert.period() % 2 == 1 {
            Stability::Unstable
        } else {
            Stability::OneSided
        }
    } else if cert.contraction_bound < Q::one() {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasinEntry {
    pub start_side: Side,
    pub start_x: String,
    /// Index into the orbit list, `None` when not captured within budget.
    pub orbit: Option<usize>,
    /// Index of the matched point within the orbit.
    pub phase: Option<usize>,
    pub steps: u64,
}

#[derive(Clone, Debug)]
pub struct BasinOptions {
    pub tolerance: f64,
    pub budget: u64,
    pub round_bits: u32,
    pub policy: BranchPolicy,
}

impl Default for BasinOptions {
    fn default() -> Self {
        Self { tolerance: 1e-12, budget: 100_000, round_bits: 128, policy: BranchPolicy::Lower }
    }
}

/// Uniform grid of `n` starting points along the boundary loop.
pub fn boundary_grid(n: usize) -> Vec<BoundaryPoint> {
    (0..n)
        .map(|k| {
            let p = Q::new((3 * k as i64).into(), (n as i64).into());
            BoundaryPoint::from_loop_position(&p)
        })
        .collect()
}

pub fn capture_one(
    params: &SystemParams,
    d: &DecisionPoints,
    orbits: &[OrbitCertificate],
    z0: &BoundaryPoint,
    options: &BasinOptions,
) -> Result<BasinEntry> {
    let centers: Vec<Vec<(Side, f64)>> =
        orbits.iter().map(|o| o.points.iter().map(|p| (p.side, p.center_f64())).collect()).collect();
    let mut z = z0.clone();
    let mut entry = BasinEntry { start_side: z0.side, start_x: z0.x.to_string(), orbit: None, phase: None, steps: 0 };
    for t in 0..=options.budget {
        let x = z.x_f64();
        for (oi, pts) in centers.iter().enumerate() {
            for (pi, &(s, c)) in pts.iter().enumerate() {
                if s == z.side && (x - c).abs() < options.tolerance {
                    entry.orbit = Some(oi);
                    entry.phase = Some(pi);
                    entry.steps = t;
                    return Ok(entry);
                }
            }
        }
        let mut res = step(params, d, &z)?;
        let next = if res.is_branch() {
            match options.policy {
                BranchPolicy::Lower => res.successors.swap_remove(0).1,
                BranchPolicy::Upper => res.successors.swap_remove(1).1,
                BranchPolicy::Error => return Err(Error::BranchEncountered { step: t as usize, side: z.side }),
            }
        } else {
            res.successors.swap_remove(0).1
        };
        z = BoundaryPoint { side: next.side, x: round_dyadic(&next.x, options.round_bits) };
    }
    entry.steps = options.budget;
    Ok(entry)
}

/// Assigns each grid start to the orbit it converges onto.
pub fn basin_sample(
    params: &SystemParams,
    d: &DecisionPoints,
    orbits: &[OrbitCertificate],
    grid: usize,
    options: &BasinOptions,
) -> Result<Vec<BasinEntry>> {
    boundary_grid(grid).par_iter().map(|z| capture_one(params, d, orbits, z, options)).collect()
}

/// Whether `z` lies strictly inside the arc and is not a corner.
pub fn is_interior(z: &BoundaryPoint) -> bool {
    z.x.is_positive() && z.x < Q::one() && !z.x.is_zero()
}
