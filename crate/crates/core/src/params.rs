//! System parameters, boundary points, decision points, the re-weighting
//! isomorphism and the static geometry of the projected system.

use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::node::{Node, Side};
use crate::num::{qi, to_f64, Q};

/// Arrival and service rates of the three nodes with derived loads.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    pub lambda: [Q; 3],
    pub mu: [Q; 3],
    pub rho: [Q; 3],
    /// `θ_j = μ_j⁻¹ Σ λ_i − 1`.
    pub theta: [Q; 3],
    /// Service-time variance per node (only used by the simulator).
    pub service_variance: [Q; 3],
}

pub fn validate_params(lambda: [Q; 3], mu: [Q; 3], sigma2: [Q; 3]) -> Result<SystemParams> {
    for (i, (l, m)) in lambda.iter().zip(&mu).enumerate() {
        if !l.is_positive() || !m.is_positive() {
            return Err(Error::InvalidParameter(format!("rates at node {} must be strictly positive", i + 1)));
        }
    }
    if sigma2.iter().any(|s| s.is_negative()) {
        return Err(Error::InvalidParameter("service variances must be non-negative".into()));
    }
    let rho: [Q; 3] = std::array::from_fn(|i| &lambda[i] / &mu[i]);
    for (i, r) in rho.iter().enumerate() {
        if *r >= Q::one() {
            return Err(Error::LoadTooHigh(Node::from_index(i)));
        }
    }
    let total: Q = rho.iter().sum();
    if total <= Q::one() {
        return Err(Error::SystemRecurrent);
    }
    let arrivals: Q = lambda.iter().sum();
    let theta = std::array::from_fn(|j| &arrivals / &mu[j] - Q::one());
    Ok(SystemParams { lambda, mu, rho, theta, service_variance: sigma2 })
}

impl SystemParams {
    /// Unit service rates, unit-mean service variances.
    pub fn normalized_loads(rho: [Q; 3]) -> Result<Self> {
        validate_params(rho, std::array::from_fn(|_| Q::one()), std::array::from_fn(|_| Q::one()))
    }

    pub fn is_normalized(&self) -> bool {
        self.mu.iter().all(|m| m.is_one())
    }

    pub fn require_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::NotNormalized)
        }
    }

    pub fn total_load(&self) -> Q {
        self.rho.iter().sum()
    }

    /// Common drift constant of the normalized process, `Σρ − 1`.
    pub fn theta_normalized(&self) -> Q {
        self.total_load() - Q::one()
    }

    pub fn rho(&self, n: Node) -> &Q {
        &self.rho[n.index()]
    }

    /// Parameters of the isomorphic process with `μ ≡ 1` and `λ = ρ`; the
    /// service variance is expressed in units of the mean service time.
    pub fn normalized(&self) -> SystemParams {
        let sigma2 = std::array::from_fn(|i| &self.service_variance[i] * &self.mu[i] * &self.mu[i]);
        validate_params(self.rho.clone(), std::array::from_fn(|_| Q::one()), sigma2)
            .expect("normalizing valid parameters keeps them valid")
    }

    pub fn rho_f64(&self) -> [f64; 3] {
        std::array::from_fn(|i| to_f64(&self.rho[i]))
    }
}

/// A point `(x, side)` on the triangle boundary, meaning
/// `z = (1 − x) e_{side+1} + x e_{side+2}` (indices cyclic).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoundaryPoint {
    pub side: Side,
    pub x: Q,
}

impl BoundaryPoint {
    pub fn new(side: Side, x: Q) -> Result<Self> {
        if x.is_negative() || x > Q::one() {
            return Err(Error::InvalidParameter(format!("boundary coordinate {x} outside [0, 1]")));
        }
        Ok(Self { side, x })
    }

    pub fn corner(n: Node) -> Self {
        // e_n is x = 0 on side n − 1.
        Self { side: n.prev(), x: Q::zero() }
    }

    /// Position on the boundary loop `[0, 3)`; corners get a single value,
    /// so `(1, k̂)` and `(0, î)` coincide.
    pub fn loop_position(&self) -> Q {
        let p = qi(self.side.index() as i64) + &self.x;
        if p >= qi(3) {
            p - qi(3)
        } else {
            p
        }
    }

    pub fn from_loop_position(p: &Q) -> Self {
        let three = qi(3);
        let mut p = p.clone();
        while p >= three {
            p -= &three;
        }
        while p.is_negative() {
            p += &three;
        }
        let idx = p.floor();
        let side = Node::from_index(num_traits::ToPrimitive::to_usize(idx.numer()).unwrap_or(0));
        Self { side, x: p - idx }
    }

    pub fn same_point(&self, other: &BoundaryPoint) -> bool {
        self.loop_position() == other.loop_position()
    }

    pub fn is_corner(&self) -> bool {
        self.x.is_zero() || self.x.is_one()
    }

    /// Barycentric coordinates in the unit simplex.
    pub fn simplex(&self) -> [Q; 3] {
        let mut z: [Q; 3] = std::array::from_fn(|_| Q::zero());
        z[self.side.next().index()] = Q::one() - &self.x;
        z[self.side.prev().index()] = self.x.clone();
        z
    }

    /// Reads a simplex point with `z[side] = 0` as a side coordinate.
    pub fn from_simplex(side: Side, z: &[Q; 3]) -> Result<Self> {
        if !z[side.index()].is_zero() {
            return Err(Error::InvalidParameter(format!("point does not lie on side {side}")));
        }
        let total = &z[side.next().index()] + &z[side.prev().index()];
        if total.is_zero() {
            return Err(Error::InvalidParameter("zero vector has no projection".into()));
        }
        Self::new(side, &z[side.prev().index()] / total)
    }

    pub fn x_f64(&self) -> f64 {
        to_f64(&self.x)
    }
}

impl fmt::Display for BoundaryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, side {})", self.x, self.side)
    }
}

/// One threshold per side, each strictly inside its side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionPoints {
    pub d: [Q; 3],
}

impl DecisionPoints {
    pub fn new(d: [Q; 3]) -> Result<Self> {
        for (i, v) in d.iter().enumerate() {
            if !v.is_positive() || *v >= Q::one() {
                return Err(Error::InvalidParameter(format!("decision point on side {} must lie in (0, 1)", i + 1)));
            }
        }
        Ok(Self { d })
    }

    /// `d_î = (1 + b_îk̂ / b_îĵ)⁻¹` from positive switching weights
    /// `weights[i][k] = b_ik`.
    pub fn from_weights(weights: &[[Q; 3]; 3]) -> Result<Self> {
        let d = std::array::from_fn(|i| {
            let side = Node::from_index(i);
            let b = &weights[i];
            let bj = &b[side.next().index()];
            let bk = &b[side.prev().index()];
            (Q::one() + bk / bj).recip()
        });
        for row in weights {
            if row.iter().enumerate().any(|(_, v)| !v.is_positive()) {
                return Err(Error::InvalidParameter("switching weights must be positive".into()));
            }
        }
        Self::new(d)
    }

    pub fn uniform(v: Q) -> Result<Self> {
        Self::new([v.clone(), v.clone(), v])
    }

    pub fn on(&self, side: Side) -> &Q {
        &self.d[side.index()]
    }

    pub fn point(&self, side: Side) -> BoundaryPoint {
        BoundaryPoint { side, x: self.d[side.index()].clone() }
    }
}

/// `F_α(x) = x / (α + (1 − α) x)`.
pub fn fractional_linear(alpha: &Q, x: &Q) -> Q {
    x / (alpha + (Q::one() - alpha) * x)
}

/// The side-wise rescaling `T` relating a general process to its
/// normalized version.
#[derive(Clone, Debug, PartialEq)]
pub struct Reweighting {
    /// `μ_k̂ / μ_ĵ` for side î.
    pub alpha: [Q; 3],
}

impl Reweighting {
    pub fn new(params: &SystemParams) -> Self {
        let alpha = std::array::from_fn(|i| {
            let s = Node::from_index(i);
            &params.mu[s.prev().index()] / &params.mu[s.next().index()]
        });
        Self { alpha }
    }

    pub fn is_identity(&self) -> bool {
        self.alpha.iter().all(|a| a.is_one())
    }

    pub fn apply(&self, z: &BoundaryPoint) -> BoundaryPoint {
        BoundaryPoint { side: z.side, x: fractional_linear(&self.alpha[z.side.index()], &z.x) }
    }

    pub fn invert(&self, z: &BoundaryPoint) -> BoundaryPoint {
        BoundaryPoint { side: z.side, x: fractional_linear(&self.alpha[z.side.index()].recip(), &z.x) }
    }

    pub fn apply_f64(&self, side: Side, x: f64) -> f64 {
        let a = to_f64(&self.alpha[side.index()]);
        x / (a + (1.0 - a) * x)
    }
}

/// Maps a general process onto the normalized one (`μ ≡ 1`, `λ = ρ`).
pub fn reweight(params: &SystemParams, d: &DecisionPoints) -> (SystemParams, DecisionPoints, Reweighting) {
    let t = Reweighting::new(params);
    let d2 = DecisionPoints {
        d: std::array::from_fn(|i| fractional_linear(&t.alpha[i], &d.d[i])),
    };
    (params.normalized(), d2, t)
}

/// Excluded corner region `J_k` around `e_k`: `x > lower_on_first` on one
/// side and `x < upper_on_second` on the other.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JCorner {
    pub corner: Node,
    pub first_side: Side,
    pub first_above: String,
    pub second_side: Side,
    pub second_below: String,
    #[serde(skip)]
    pub first_above_q: Q,
    #[serde(skip)]
    pub second_below_q: Q,
}

impl JCorner {
    pub fn contains(&self, z: &BoundaryPoint) -> bool {
        (z.side == self.first_side && z.x > self.first_above_q)
            || (z.side == self.second_side && z.x < self.second_below_q)
    }
}

/// `C_j(γ)` restricted to one source side, as a floating-point interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionRegion {
    pub target: Node,
    pub source: Side,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug)]
pub struct GeometrySummary {
    pub theta: Q,
    pub foci: [[Q; 3]; 3],
    /// Closed interval of the side lying inside the focus triangle.
    pub va_intervals: [(Q, Q); 3],
    pub j_corners: [Option<JCorner>; 3],
    pub gamma: Q,
    /// Endpoint derivative bound per (target, source).
    pub gamma_parts: Vec<(Node, Side, Q)>,
    pub c_region: Vec<ContractionRegion>,
    /// Corners with `ρ_i + ρ_j = 1` exactly (classified as `J = ∅`).
    pub degenerate: Vec<Node>,
}

impl GeometrySummary {
    pub fn in_va(&self, z: &BoundaryPoint) -> bool {
        let (lo, hi) = &self.va_intervals[z.side.index()];
        lo <= &z.x && &z.x <= hi
    }

    pub fn all_j_empty(&self) -> bool {
        self.j_corners.iter().all(Option::is_none)
    }
}

/// Derivative of the branch map serving `target` from `source`, at `x`.
pub fn branch_derivative(params: &SystemParams, target: Node, source: Side, x: &Q) -> Q {
    let theta = params.theta_normalized();
    let ri = params.rho(target.prev());
    let rj = params.rho(target);
    let rk = params.rho(target.next());
    let one = Q::one();
    if source == target.prev() {
        let den = ri + rk - &theta * x;
        -(ri * (&one - rj)) / (&den * &den)
    } else {
        let den = &one - rj + &theta * x;
        -(rk * (&one - rj)) / (&den * &den)
    }
}

pub fn geometry(params: &SystemParams) -> Result<GeometrySummary> {
    params.require_normalized()?;
    let theta = params.theta_normalized();
    let one = Q::one();
    let foci = std::array::from_fn(|j| {
        std::array::from_fn(|i| {
            let r = &params.rho[i];
            if i == j {
                (r - &one) / &theta
            } else {
                r / &theta
            }
        })
    });

    let mut degenerate = Vec::new();
    let j_corners: [Option<JCorner>; 3] = std::array::from_fn(|k| {
        let corner = Node::from_index(k);
        let rk = params.rho(corner);
        if *rk == theta {
            degenerate.push(corner);
        }
        if *rk < theta {
            let a = rk / &theta;
            let first_side = corner.next();
            let second_side = corner.prev();
            Some(JCorner {
                corner,
                first_side,
                first_above: a.to_string(),
                second_side,
                second_below: (&one - &a).to_string(),
                first_above_q: a.clone(),
                second_below_q: &one - a,
            })
        } else {
            None
        }
    });

    let va_intervals = std::array::from_fn(|i| {
        let s = Node::from_index(i);
        // e_{s+2} sits at x = 1, e_{s+1} at x = 0.
        let hi = match &j_corners[s.prev().index()] {
            Some(j) => j.first_above_q.clone(),
            None => one.clone(),
        };
        let lo = match &j_corners[s.next().index()] {
            Some(j) => j.second_below_q.clone(),
            None => Q::zero(),
        };
        (lo, hi)
    });

    let mut gamma_parts = Vec::with_capacity(6);
    for target in Node::ALL {
        let ri = params.rho(target.prev());
        let rj = params.rho(target);
        let rk = params.rho(target.next());
        let gi = if *rk >= theta { ri / (&one - rj) } else { (&one - rj) / ri };
        let gk = if *ri >= theta { rk / (&one - rj) } else { (&one - rj) / rk };
        gamma_parts.push((target, target.prev(), gi));
        gamma_parts.push((target, target.next(), gk));
    }
    let gamma = gamma_parts.iter().map(|(_, _, g)| g.clone()).max().expect("six parts");

    let th = to_f64(&theta);
    let g = to_f64(&gamma);
    let c_region = Node::ALL
        .iter()
        .flat_map(|&target| {
            let ri = to_f64(params.rho(target.prev()));
            let rj = to_f64(params.rho(target));
            let rk = to_f64(params.rho(target.next()));
            let hi = ((ri + rk - (ri * (1.0 - rj) / g).sqrt()) / th).clamp(0.0, 1.0);
            let lo = (((rk * (1.0 - rj) / g).sqrt() - (1.0 - rj)) / th).clamp(0.0, 1.0);
            [
                ContractionRegion { target, source: target.prev(), lo: 0.0, hi },
                ContractionRegion { target, source: target.next(), lo, hi: 1.0 },
            ]
        })
        .collect();

    Ok(GeometrySummary { theta, foci, va_intervals, j_corners, gamma, gamma_parts, c_region, degenerate })
}

/// Exact membership test for `C_target(γ)`.
pub fn in_contraction_region(params: &SystemParams, gamma: &Q, target: Node, z: &BoundaryPoint) -> bool {
    z.side != target && branch_derivative(params, target, z.side, &z.x).abs() <= *gamma
}
