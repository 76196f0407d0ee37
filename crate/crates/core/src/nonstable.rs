//! Decision points with infinitely many pre-images: the staircase sequence
//! of `q = 1001` / `r = 0110` quadruples, extended legitimacy, and the
//! finite-depth classification of the complementary intervals.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::node::Node;
use crate::num::{parse_rational, qi, to_f64, Q};
use crate::orbit::OrbitPoint;
use crate::params::{BoundaryPoint, SystemParams};
use crate::symbolic::{decode, in_legitimacy_interval, symbolic_psi, BitCode, DEFAULT_COMPARE_CAP};

/// Quadruples materialized for a staircase code when no length is given.
pub const DEFAULT_STREAM_QUADRUPLES: usize = 32_768;

pub const Q_WORD: [u8; 4] = [1, 0, 0, 1];
pub const R_WORD: [u8; 4] = [0, 1, 1, 0];

/// An irrational slope: an exact quadratic surd or a rational enclosure.
#[derive(Clone, Debug, PartialEq)]
pub enum Alpha {
    /// `(p + q√n) / r` with `n` not a perfect square and `r > 0`.
    Surd { p: BigInt, q: BigInt, n: BigInt, r: BigInt },
    Enclosure { lo: Q, hi: Q },
}

impl Alpha {
    pub fn sqrt(n: i64) -> Self {
        Alpha::Surd { p: BigInt::zero(), q: BigInt::one(), n: BigInt::from(n), r: BigInt::one() }
    }

    /// `"sqrt2"`, `"sqrt(3)"`, `"(1+sqrt5)/2"` or `"[lo,hi]"`.
    pub fn parse(text: &str) -> Result<Self> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Parse(format!("invalid alpha {text:?}"));
        if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
            let (lo, hi) = (parse_rational(lo)?, parse_rational(hi)?);
            if lo >= hi {
                return Err(bad());
            }
            return Ok(Alpha::Enclosure { lo, hi });
        }
        let (num, r) = match s.rsplit_once('/') {
            Some((num, r)) if num.starts_with('(') && num.ends_with(')') => {
                (&num[1..num.len() - 1], r.parse::<BigInt>().map_err(|_| bad())?)
            }
            _ => (s.as_str(), BigInt::one()),
        };
        let idx = num.find("sqrt").ok_or_else(bad)?;
        let radicand = num[idx + 4..].trim_start_matches('(').trim_end_matches(')');
        let n: BigInt = radicand.parse().map_err(|_| bad())?;
        let (p, q) = if idx == 0 {
            (BigInt::zero(), BigInt::one())
        } else {
            let head = &num[..idx];
            let (p_part, sign) = if let Some(p) = head.strip_suffix('+') {
                (p, 1)
            } else if let Some(p) = head.strip_suffix('-') {
                (p, -1)
            } else {
                return Err(bad());
            };
            (p_part.parse::<BigInt>().map_err(|_| bad())?, BigInt::from(sign))
        };
        if !r.is_positive() || n.sqrt().pow(2) == n || n.is_negative() {
            return Err(bad());
        }
        Ok(Alpha::Surd { p, q, n, r })
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Alpha::Surd { p, q, n, r } => {
                let f = |b: &BigInt| num_traits::ToPrimitive::to_f64(b).unwrap_or(f64::NAN);
                (f(p) + f(q) * f(n).sqrt()) / f(r)
            }
            Alpha::Enclosure { lo, hi } => (to_f64(lo) + to_f64(hi)) / 2.0,
        }
    }

    /// Sign of `α·b − a` for rational `a` and `b > 0`.
    pub fn cmp_scaled(&self, b: &Q, a: &Q) -> Result<Ordering> {
        match self {
            Alpha::Surd { p, q, n, r } => {
                // r(αb − a) = (p b − a r) + q b √n
                let u = Q::from_integer(p.clone()) * b - a * Q::from_integer(r.clone());
                let v = Q::from_integer(q.clone()) * b;
                let su = u.signum();
                let sv = v.signum();
                if !su.is_negative() && !sv.is_negative() {
                    return Ok(if u.is_zero() && v.is_zero() { Ordering::Equal } else { Ordering::Greater });
                }
                if !su.is_positive() && !sv.is_positive() {
                    return Ok(Ordering::Less);
                }
                let lhs = &u * &u;
                let rhs = &v * &v * Q::from_integer(n.clone());
                // Opposite signs: the larger magnitude wins.
                let mag = rhs.cmp(&lhs);
                Ok(if sv.is_positive() { mag } else { mag.reverse() })
            }
            Alpha::Enclosure { lo, hi } => {
                if lo * b > *a {
                    Ok(Ordering::Greater)
                } else if hi * b <= *a {
                    Ok(Ordering::Less)
                } else {
                    Err(Error::EnclosureTooCoarse)
                }
            }
        }
    }

    pub fn in_unit_range(&self) -> bool {
        let one = Q::one();
        matches!(self.cmp_scaled(&one, &one), Ok(Ordering::Greater))
            && matches!(self.cmp_scaled(&one, &qi(2)), Ok(Ordering::Less))
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Surd { p, q, n, r } if p.is_zero() && q.is_one() && r.is_one() => write!(f, "sqrt{n}"),
            Alpha::Surd { p, q, n, r } => write!(f, "({p}{}{}sqrt{n})/{r}", if q.is_negative() { "-" } else { "+" }, q.abs()),
            Alpha::Enclosure { lo, hi } => write!(f, "[{lo},{hi}]"),
        }
    }
}

/// `y = y₁y₂…` over `{q, r}`; `true` is `q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadrupleSequence {
    pub y: Vec<bool>,
}

impl QuadrupleSequence {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn bits(&self) -> Vec<u8> {
        self.y.iter().flat_map(|&b| if b { Q_WORD } else { R_WORD }).collect()
    }

    pub fn letters(&self) -> String {
        self.y.iter().map(|&b| if b { 'q' } else { 'r' }).collect()
    }

    /// Lexicographic comparison of the tail starting at `start` with the
    /// whole sequence, over the materialized part.
    fn tail_vs_head(&self, start: usize) -> Option<Ordering> {
        let n = self.y.len();
        (0..n - start).find_map(|i| {
            let (a, b) = (self.y[start + i], self.y[i]);
            (a != b).then(|| a.cmp(&b))
        })
    }
}

/// `y₁ = q`, `y₂ = r` and `y_{t+1} = q` iff `1 + Q_t < α(1 + R_t) + β`,
/// applied from `t = 2`.
pub fn staircase(alpha: &Alpha, beta: &Q, n: usize) -> Result<QuadrupleSequence> {
    if n < 2 {
        return Err(Error::InvalidParameter("staircase needs at least two quadruples".into()));
    }
    if beta.abs() > Q::one() {
        return Err(Error::InvalidParameter("beta must lie in [-1, 1]".into()));
    }
    let mut y = Vec::with_capacity(n);
    y.push(true);
    y.push(false);
    let (mut qs, mut rs) = (1i64, 1i64);
    while y.len() < n {
        let a = qi(1 + qs) - beta;
        let b = qi(1 + rs);
        let next = alpha.cmp_scaled(&b, &a)? == Ordering::Greater;
        if next {
            qs += 1;
        } else {
            rs += 1;
        }
        y.push(next);
    }
    Ok(QuadrupleSequence { y })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LegitimacyReport {
    pub pass: bool,
    pub checked: usize,
    /// First quadruple index (1-based) where a condition fails or cannot
    /// be resolved within the materialized sequence.
    pub first_failure: Option<usize>,
    pub witness: Option<String>,
}

/// Conditions (a) `y_t = r ⇒ y_{t+1}… > y` and (b) `y_t = q ⇒ y_{t+1}… < y`
/// for `3 ≤ t ≤ n`, checked against the materialized sequence.
pub fn extended_legitimacy_check(y: &QuadrupleSequence, n: usize) -> LegitimacyReport {
    let n = n.min(y.len());
    for t in 3..=n {
        let cmp = y.tail_vs_head(t);
        let want = if y.y[t - 1] { Ordering::Less } else { Ordering::Greater };
        if cmp != Some(want) {
            let witness = match cmp {
                Some(c) => format!("y_{t} = {} but tail compares {c:?}", if y.y[t - 1] { 'q' } else { 'r' }),
                None => format!("tail at {t} agrees with the sequence over the materialized length"),
            };
            return LegitimacyReport { pass: false, checked: t - 3, first_failure: Some(t), witness: Some(witness) };
        }
    }
    LegitimacyReport { pass: true, checked: n.saturating_sub(2), first_failure: None, witness: None }
}

/// Whether some tail equals the sequence within the checked range.
pub fn has_period(y: &QuadrupleSequence, n: usize) -> Option<usize> {
    (1..n.min(y.len())).find(|&t| y.tail_vs_head(t).is_none())
}

pub fn fixed_d2() -> BitCode {
    BitCode::terminating(Node::N2, vec![1, 0, 1, 0, 1])
}

pub fn fixed_d3() -> BitCode {
    BitCode::terminating(Node::N3, vec![0, 1])
}

/// `d₁ = 1:y(α, β)` backed by `quadruples` materialized letters, with
/// `d₂`, `d₃` as fixed.
pub fn build_nonstable_with(alpha: &Alpha, beta: &Q, quadruples: usize) -> Result<[BitCode; 3]> {
    if !alpha.in_unit_range() {
        return Err(Error::InvalidParameter("alpha must lie in (1, 2)".into()));
    }
    let y = staircase(alpha, beta, quadruples)?;
    let d1 = BitCode::stream(Node::N1, y.bits(), &format!("staircase(alpha={alpha},beta={beta})"));
    Ok([d1, fixed_d2(), fixed_d3()])
}

pub fn build_nonstable(alpha: &Alpha) -> Result<[BitCode; 3]> {
    build_nonstable_with(alpha, &Q::zero(), DEFAULT_STREAM_QUADRUPLES)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PreimageReport {
    pub pass: bool,
    pub depth: usize,
    /// Index `t` such that `ψ^{(t)}(d₁)` has no legitimate pre-image.
    pub first_failure: Option<usize>,
    /// Set when a comparison could not be resolved; holds the bit depth.
    pub undecidable_at: Option<usize>,
}

/// Checks that `ψ^{(t)}(d₁)` stays in its side's legitimacy interval for
/// `t < depth`, so that `ψ^{(1)}, …, ψ^{(depth)}` are legitimate.
pub fn verify_infinite_preimages(d: &[BitCode; 3], depth: usize) -> PreimageReport {
    let mut z = d[0].clone();
    for t in 0..depth {
        match in_legitimacy_interval(&z, d, DEFAULT_COMPARE_CAP) {
            Ok(true) => {}
            Ok(false) => return PreimageReport { pass: false, depth, first_failure: Some(t), undecidable_at: None },
            Err(Error::Undecidable(k)) => {
                return PreimageReport { pass: false, depth, first_failure: Some(t), undecidable_at: Some(k) }
            }
            Err(_) => return PreimageReport { pass: false, depth, first_failure: Some(t), undecidable_at: None },
        }
        z = match symbolic_psi(&z) {
            Ok(n) => n,
            Err(_) => return PreimageReport { pass: false, depth, first_failure: Some(t), undecidable_at: Some(0) },
        };
    }
    PreimageReport { pass: true, depth, first_failure: None, undecidable_at: None }
}

/// Legitimate `ψ`-chain of a code, ending at the first code outside its
/// legitimacy interval or at `max_len` entries.
pub fn symbolic_chain(start: &BitCode, d: &[BitCode; 3], max_len: usize) -> Result<Vec<BitCode>> {
    let mut out = vec![start.clone()];
    while out.len() < max_len {
        let z = out.last().expect("nonempty");
        if !in_legitimacy_interval(z, d, DEFAULT_COMPARE_CAP)? {
            break;
        }
        out.push(symbolic_psi(z)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    /// A pre-image of `d₂` or `d₃`.
    Fixed,
    /// A pre-image of `d₁`.
    Aperiodic,
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopArc {
    /// Loop positions in `[0, 3)` of the endpoints (centers of enclosures).
    pub lo: f64,
    pub hi: f64,
    #[serde(skip)]
    pub length: Q,
    pub kinds: (EndpointKind, EndpointKind),
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalClassification {
    pub depth: usize,
    pub d2_chain: usize,
    pub d3_chain: usize,
    pub periodic: Vec<LoopArc>,
    pub semi_periodic: Vec<LoopArc>,
    pub aperiodic: Vec<LoopArc>,
    /// Shortest periodic or semi-periodic arc length.
    pub delta: f64,
}

fn loop_center(e: &OrbitPoint) -> Q {
    BoundaryPoint { side: e.side, x: e.center() }.loop_position()
}

/// Classifies the arcs between the computed pre-images of the decision
/// points: `d₂`/`d₃` pre-images are computed completely, `d₁` pre-images to
/// `depth`. Arcs are read on the boundary loop.
pub fn classify_intervals(params: &SystemParams, d: &[BitCode; 3], depth: usize) -> Result<IntervalClassification> {
    let precision = crate::num::ten_pow_neg(60);
    let fixed_cap = 4096;
    let c2 = symbolic_chain(&d[1], d, fixed_cap)?;
    let c3 = symbolic_chain(&d[2], d, fixed_cap)?;
    if c2.len() >= fixed_cap || c3.len() >= fixed_cap {
        return Err(Error::InvalidParameter("d2 or d3 has no finite pre-image chain".into()));
    }
    let c1 = symbolic_chain(&d[0], d, depth + 1)?;
    let mut pts: Vec<(Q, EndpointKind)> = Vec::new();
    for c in c2.iter().chain(&c3) {
        pts.push((loop_center(&decode(c, params, &precision)?), EndpointKind::Fixed));
    }
    for c in &c1 {
        pts.push((loop_center(&decode(c, params, &precision)?), EndpointKind::Aperiodic));
    }
    pts.sort_by(|a, b| a.0.cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let three = qi(3);
    let mut periodic = Vec::new();
    let mut semi = Vec::new();
    let mut aperiodic = Vec::new();
    for i in 0..pts.len() {
        let (a, ka) = &pts[i];
        let (b, kb) = &pts[(i + 1) % pts.len()];
        let length = if i + 1 < pts.len() { b - a } else { b + &three - a };
        let arc = LoopArc { lo: to_f64(a), hi: to_f64(b), length, kinds: (*ka, *kb) };
        match (ka, kb) {
            (EndpointKind::Fixed, EndpointKind::Fixed) => periodic.push(arc),
            (EndpointKind::Aperiodic, EndpointKind::Aperiodic) => aperiodic.push(arc),
            _ => semi.push(arc),
        }
    }
    let delta = periodic.iter().chain(&semi).map(|a| to_f64(&a.length)).fold(f64::INFINITY, f64::min);
    Ok(IntervalClassification {
        depth,
        d2_chain: c2.len() - 1,
        d3_chain: c3.len() - 1,
        periodic,
        semi_periodic: semi,
        aperiodic,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt2_staircase_prefix() {
        let y = staircase(&Alpha::sqrt(2), &Q::zero(), 7).unwrap();
        assert_eq!(y.letters(), "qrqrqqr");
    }

    #[test]
    fn surd_comparisons_are_exact() {
        let a = Alpha::sqrt(2);
        assert_eq!(a.cmp_scaled(&qi(1), &crate::num::q(141, 100)).unwrap(), Ordering::Greater);
        assert_eq!(a.cmp_scaled(&qi(1), &crate::num::q(142, 100)).unwrap(), Ordering::Less);
        let g = Alpha::parse("(1+sqrt5)/2").unwrap();
        assert!((g.to_f64() - 1.618_033_988_75).abs() < 1e-10);
        assert_eq!(g.cmp_scaled(&qi(1), &crate::num::q(1618, 1000)).unwrap(), Ordering::Greater);
        assert!(Alpha::parse("sqrt4").is_err());
        let coarse = Alpha::Enclosure { lo: crate::num::q(14, 10), hi: crate::num::q(15, 10) };
        assert!(matches!(coarse.cmp_scaled(&qi(1), &crate::num::q(145, 100)), Err(Error::EnclosureTooCoarse)));
    }

    #[test]
    fn constant_q_fails_legitimacy() {
        let y = QuadrupleSequence { y: vec![true; 20] };
        let r = extended_legitimacy_check(&y, 10);
        assert!(!r.pass);
        assert_eq!(r.first_failure, Some(3));
    }

    #[test]
    fn fixed_code_prefix() {
        let d = build_nonstable_with(&Alpha::sqrt(2), &Q::zero(), 64).unwrap();
        assert_eq!(d[0].prefix(8), vec![1, 0, 0, 1, 0, 1, 1, 0]);
        let r = verify_infinite_preimages(&d, 8);
        assert!(r.pass);
    }

    #[test]
    fn fixed_chains_end_at_corners() {
        let d = build_nonstable_with(&Alpha::sqrt(2), &Q::zero(), 256).unwrap();
        let c2 = symbolic_chain(&d[1], &d, 100).unwrap();
        let c3 = symbolic_chain(&d[2], &d, 100).unwrap();
        assert_eq!(c2.len() - 1, 5);
        assert_eq!(c3.len() - 1, 2);
        assert_eq!(c2.last().unwrap().to_string(), "1:(1)");
        assert_eq!(c3.last().unwrap().to_string(), "1:(0)");
    }
}
