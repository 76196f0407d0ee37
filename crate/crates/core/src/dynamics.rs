//! One-step maps of the triangle process: the forward maps `f_j`, the
//! threshold rule, the step map `φ`, the inverse `ψ` and trajectories.

use std::fmt::Write as _;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::{Node, Side};
use crate::num::{decimal_string, round_dyadic, Mobius, Q};
use crate::params::{BoundaryPoint, DecisionPoints, SystemParams};

/// The fractional-linear map carrying side `source` onto side `target`
/// for normalized parameters, in the side coordinates of each.
pub fn branch_mobius(params: &SystemParams, target: Node, source: Side) -> Result<Mobius> {
    params.require_normalized()?;
    if source == target {
        return Err(Error::SameSide(target));
    }
    let theta = params.theta_normalized();
    let ri = params.rho(target.prev());
    let rj = params.rho(target);
    let rk = params.rho(target.next());
    let one = Q::one();
    let m = if source == target.prev() {
        Mobius::from_rationals(&-ri.clone(), ri, &-theta, &(ri + rk))
    } else {
        Mobius::from_rationals(&(ri + rj - &one), &(&one - rj), &theta, &(&one - rj))
    };
    Ok(m)
}

/// Composition of branch maps from side `start` through the served nodes
/// `targets`, in order.
pub fn composed_branch(params: &SystemParams, start: Side, targets: &[Node]) -> Result<Mobius> {
    let mut m = Mobius::identity();
    let mut side = start;
    for &t in targets {
        m = branch_mobius(params, t, side)?.compose(&m);
        side = t;
    }
    Ok(m)
}

/// Exit point of the mean-drift line from `z` with the server at `j`,
/// projected back to the simplex. Works for arbitrary rates.
fn forward_map_general(params: &SystemParams, j: Node, z: &BoundaryPoint) -> Result<BoundaryPoint> {
    let xi = z.simplex();
    let one = Q::one();
    let ji = j.index();
    let rate = |i: usize| -> Q {
        let r = &params.lambda[i] / &params.mu[ji];
        if i == ji {
            r - &one
        } else {
            r
        }
    };
    let s = &xi[ji] / (&one - &params.rho[ji]);
    let mut out: [Q; 3] = std::array::from_fn(|i| &xi[i] + &s * rate(i));
    out[ji] = Q::zero();
    BoundaryPoint::from_simplex(j, &out)
}

/// `f_j(z)`: the point of side `j` reached from `z` with the server at `j`.
pub fn forward_map(params: &SystemParams, j: Node, z: &BoundaryPoint) -> Result<BoundaryPoint> {
    if z.side == j {
        return Err(Error::SameSide(j));
    }
    if params.is_normalized() {
        let m = branch_mobius(params, j, z.side)?;
        return Ok(BoundaryPoint { side: j, x: m.eval(&z.x) });
    }
    forward_map_general(params, j, z)
}

/// Nodes selected on `z`'s side: `ĵ` below the threshold, `k̂` above,
/// both (in that order) on it.
pub fn switch_rule(d: &DecisionPoints, z: &BoundaryPoint) -> Vec<Node> {
    let dv = d.on(z.side);
    let (lower, upper) = (z.side.next(), z.side.prev());
    match z.x.cmp(dv) {
        std::cmp::Ordering::Less => vec![lower],
        std::cmp::Ordering::Greater => vec![upper],
        std::cmp::Ordering::Equal => vec![lower, upper],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// One entry, or two when `z` is a decision point (`ĵ` first).
    pub successors: Vec<(Node, BoundaryPoint)>,
}

impl StepResult {
    pub fn is_branch(&self) -> bool {
        self.successors.len() > 1
    }

    pub fn chosen_nodes(&self) -> Vec<Node> {
        self.successors.iter().map(|(n, _)| *n).collect()
    }
}

pub fn step(params: &SystemParams, d: &DecisionPoints, z: &BoundaryPoint) -> Result<StepResult> {
    let successors = switch_rule(d, z)
        .into_iter()
        .map(|n| forward_map(params, n, z).map(|p| (n, p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepResult { successors })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Legitimacy {
    Yes,
    No,
    Boundary,
}

impl Legitimacy {
    /// `Boundary` counts: the point is a branch whose lower or upper image is `z`.
    pub fn admits(self) -> bool {
        !matches!(self, Legitimacy::No)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreImage {
    pub point: BoundaryPoint,
    pub legitimate: Legitimacy,
}

/// Coordinate on side `t` of the common image of the corner `e_t`.
pub fn corner_image(params: &SystemParams, t: Side) -> Q {
    let ri = params.rho(t.prev());
    ri / (ri + params.rho(t.next()))
}

/// `ψ(z)`, the unique pre-image of `z` under `f_{Side(z)}`, with its
/// legitimacy under the threshold rule.
pub fn inverse_map(params: &SystemParams, d: &DecisionPoints, z: &BoundaryPoint) -> Result<PreImage> {
    params.require_normalized()?;
    let t = z.side;
    if z.is_corner() {
        // The corner is its own pre-image, reached from a side that never
        // selects node t.
        let point = if z.x.is_zero() {
            BoundaryPoint { side: t.prev(), x: Q::one() }
        } else {
            BoundaryPoint { side: t.next(), x: Q::zero() }
        };
        return Ok(PreImage { point, legitimate: Legitimacy::No });
    }
    let c = corner_image(params, t);
    if z.x == c {
        return Ok(PreImage {
            point: BoundaryPoint { side: t.next(), x: Q::one() },
            legitimate: Legitimacy::Yes,
        });
    }
    let source = if z.x < c { t.prev() } else { t.next() };
    let w = branch_mobius(params, t, source)?.inverse().eval(&z.x);
    let dv = d.on(source);
    let legitimate = match (source == t.prev(), w.cmp(dv)) {
        (_, std::cmp::Ordering::Equal) => Legitimacy::Boundary,
        (true, std::cmp::Ordering::Less) | (false, std::cmp::Ordering::Greater) => Legitimacy::Yes,
        _ => Legitimacy::No,
    };
    Ok(PreImage { point: BoundaryPoint { side: source, x: w }, legitimate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchPolicy {
    /// Follow the `ĵ` image.
    Lower,
    /// Follow the `k̂` image.
    Upper,
    Error,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub points: Vec<BoundaryPoint>,
    pub itinerary: Vec<Side>,
    /// Indices `t` at which `points[t]` was a decision point.
    pub branch_log: Vec<usize>,
    /// Set when coordinates were rounded to a dyadic grid after each step.
    pub approximate: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,side,x_decimal,x_rational,branched\n");
        for (t, p) in self.points.iter().enumerate() {
            let branched = self.branch_log.binary_search(&t).is_ok();
            let _ = writeln!(out, "{t},{},{},{},{}", p.side, decimal_string(&p.x, 17), p.x, branched as u8);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrajectoryOptions {
    /// Round coordinates to `2^-bits` after each step once their
    /// denominators exceed that width (approximation mode).
    pub round_bits: Option<u32>,
}

pub fn trajectory(
    params: &SystemParams,
    d: &DecisionPoints,
    z0: &BoundaryPoint,
    n: usize,
    policy: BranchPolicy,
) -> Result<Trajectory> {
    trajectory_with(params, d, z0, n, policy, TrajectoryOptions::default())
}

pub fn trajectory_with(
    params: &SystemParams,
    d: &DecisionPoints,
    z0: &BoundaryPoint,
    n: usize,
    policy: BranchPolicy,
    options: TrajectoryOptions,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        points: Vec::with_capacity(n + 1),
        itinerary: Vec::with_capacity(n + 1),
        branch_log: Vec::new(),
        approximate: options.round_bits.is_some(),
    };
    let mut z = z0.clone();
    for t in 0..n {
        let mut res = step(params, d, &z)?;
        let chosen = if res.is_branch() {
            traj.branch_log.push(t);
            match policy {
                BranchPolicy::Lower => res.successors.swap_remove(0).1,
                BranchPolicy::Upper => res.successors.swap_remove(1).1,
                BranchPolicy::Error => return Err(Error::BranchEncountered { step: t, side: z.side }),
            }
        } else {
            res.successors.swap_remove(0).1
        };
        traj.itinerary.push(z.side);
        traj.points.push(z);
        z = match options.round_bits {
            Some(bits) => BoundaryPoint { side: chosen.side, x: round_dyadic(&chosen.x, bits) },
            None => chosen,
        };
    }
    traj.itinerary.push(z.side);
    traj.points.push(z);
    Ok(traj)
}
