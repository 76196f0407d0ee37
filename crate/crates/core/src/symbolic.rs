//! Binary itinerary codes of boundary points: `ψ` as shift-with-complement,
//! `φ` as prepend-with-complement, the unit-interval form of `φ`, the
//! b-distance and exact encoding/decoding against side coordinates.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::dynamics::{branch_mobius, corner_image, inverse_map};
use crate::error::{Error, Result};
use crate::node::{Node, Side};
use crate::num::{qi, Mobius, Q};
use crate::orbit::OrbitPoint;
use crate::params::{geometry, BoundaryPoint, SystemParams};

/// Default cap on the number of bits inspected by a lazy comparison.
pub const DEFAULT_COMPARE_CAP: usize = 1 << 16;

#[derive(Clone, Debug)]
enum Source {
    /// A finite word; later bits are unknown.
    Finite(Arc<[u8]>),
    /// `pre · period^∞`.
    Periodic { pre: Arc<[u8]>, period: Arc<[u8]> },
    /// A materialized prefix of an infinite generated sequence.
    Stream { bits: Arc<[u8]>, label: Arc<str> },
}

/// A side label and a binary digit sequence, read through a cursor so
/// that shifts and complements never copy the shared source.
#[derive(Clone, Debug)]
pub struct BitCode {
    pub side: Side,
    head: Vec<u8>,
    source: Source,
    offset: usize,
    flip: bool,
}

fn to_bits(word: &str) -> Result<Vec<u8>> {
    word.chars()
        .map(|c| match c {
            '0' => Ok(0u8),
            '1' => Ok(1u8),
            _ => Err(Error::Parse(format!("invalid binary digit {c:?}"))),
        })
        .collect()
}

impl BitCode {
    pub fn finite(side: Side, bits: Vec<u8>) -> Self {
        Self { side, head: Vec::new(), source: Source::Finite(bits.into()), offset: 0, flip: false }
    }

    /// `pre · period^∞` in canonical form.
    pub fn periodic(side: Side, pre: Vec<u8>, period: Vec<u8>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::Parse("empty period".into()));
        }
        let (pre, period) = canonicalize(&pre, &period);
        Ok(Self {
            side,
            head: Vec::new(),
            source: Source::Periodic { pre: pre.into(), period: period.into() },
            offset: 0,
            flip: false,
        })
    }

    /// `bits` followed by zeros.
    pub fn terminating(side: Side, bits: Vec<u8>) -> Self {
        Self::periodic(side, bits, vec![0]).expect("nonempty period")
    }

    pub fn stream(side: Side, bits: Vec<u8>, label: &str) -> Self {
        Self { side, head: Vec::new(), source: Source::Stream { bits: bits.into(), label: label.into() }, offset: 0, flip: false }
    }

    /// Parses `"2:10101(0)"`, `"1:(10)"`, `"3:0110"` (finite) and
    /// `"1:staircase(alpha=sqrt2,beta=0)"`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid code literal {text:?}"));
        let (side, body) = text.trim().split_once(':').ok_or_else(bad)?;
        let side = Node::from_label(side.trim().parse().map_err(|_| bad())?).ok_or_else(bad)?;
        let body = body.trim();
        if let Some(args) = body.strip_prefix("staircase(").and_then(|r| r.strip_suffix(')')) {
            let mut alpha = crate::nonstable::Alpha::sqrt(2);
            let mut beta = Q::zero();
            let mut quads = None;
            for kv in args.split(',').filter(|s| !s.trim().is_empty()) {
                let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                match k.trim() {
                    "alpha" => alpha = crate::nonstable::Alpha::parse(v.trim())?,
                    "beta" => beta = crate::num::parse_rational(v.trim())?,
                    "n" | "quadruples" => quads = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
                    _ => return Err(bad()),
                }
            }
            let n = quads.unwrap_or(crate::nonstable::DEFAULT_STREAM_QUADRUPLES);
            let y = crate::nonstable::staircase(&alpha, &beta, n)?;
            return Ok(Self::stream(side, y.bits(), &format!("staircase(alpha={alpha},beta={beta})")));
        }
        match body.find('(') {
            Some(pos) => {
                let period = body[pos + 1..].strip_suffix(')').ok_or_else(bad)?;
                Self::periodic(side, to_bits(&body[..pos])?, to_bits(period)?)
            }
            None => Ok(Self::finite(side, to_bits(body)?)),
        }
    }

    /// Bit `i` (0-based), or `None` past the known part.
    pub fn bit(&self, i: usize) -> Option<u8> {
        if i < self.head.len() {
            return Some(self.head[i]);
        }
        let k = self.offset + (i - self.head.len());
        let raw = match &self.source {
            Source::Finite(b) | Source::Stream { bits: b, .. } => *b.get(k)?,
            Source::Periodic { pre, period } => {
                if k < pre.len() {
                    pre[k]
                } else {
                    period[(k - pre.len()) % period.len()]
                }
            }
        };
        Some(raw ^ self.flip as u8)
    }

    /// Number of known bits, `None` for eventually periodic codes.
    pub fn known_len(&self) -> Option<usize> {
        match &self.source {
            Source::Finite(b) | Source::Stream { bits: b, .. } => Some(self.head.len() + b.len().saturating_sub(self.offset)),
            Source::Periodic { .. } => None,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.source, Source::Periodic { .. })
    }

    pub fn is_stream(&self) -> bool {
        matches!(self.source, Source::Stream { .. })
    }

    /// `(preperiod, period)` lengths of the view, not necessarily minimal.
    fn periodic_shape(&self) -> Option<(usize, usize)> {
        match &self.source {
            Source::Periodic { pre, period } => Some((self.head.len() + pre.len().saturating_sub(self.offset), period.len())),
            _ => None,
        }
    }

    /// Canonical `(pre, period)` words of an eventually periodic code.
    pub fn canonical_words(&self) -> Option<(Vec<u8>, Vec<u8>)> {
        let (p, l) = self.periodic_shape()?;
        let pre: Vec<u8> = (0..p).map(|i| self.bit(i).expect("periodic")).collect();
        let per: Vec<u8> = (p..p + l).map(|i| self.bit(i).expect("periodic")).collect();
        Some(canonicalize(&pre, &per))
    }

    pub fn prefix(&self, n: usize) -> Vec<u8> {
        (0..n).map_while(|i| self.bit(i)).collect()
    }

    fn normalize_offset(&mut self) {
        if let Source::Periodic { pre, period } = &self.source {
            let base = pre.len() + period.len();
            if self.offset >= base {
                self.offset = pre.len() + (self.offset - pre.len()) % period.len();
            }
        }
    }

    /// Drops the first bit and complements the remainder.
    fn shifted(&self) -> Option<(u8, BitCode)> {
        let first = self.bit(0)?;
        let mut out = self.clone();
        if out.head.is_empty() {
            out.offset += 1;
        } else {
            out.head.remove(0);
            for b in &mut out.head {
                *b ^= 1;
            }
        }
        out.flip = !out.flip;
        out.normalize_offset();
        Some((first, out))
    }

    /// Prepends `bit` in front of the complement.
    fn prepended(&self, side: Side, bit: u8) -> BitCode {
        let mut out = self.clone();
        out.side = side;
        for b in &mut out.head {
            *b ^= 1;
        }
        out.head.insert(0, bit);
        out.flip = !out.flip;
        if out.is_periodic() {
            if let Some((pre, per)) = out.canonical_words() {
                return BitCode::periodic(side, pre, per).expect("nonempty period");
            }
        }
        out
    }

    /// Lexicographic comparison of the digit sequences (sides ignored).
    pub fn compare(&self, other: &BitCode, cap: usize) -> Result<Ordering> {
        if let (Some((p1, l1)), Some((p2, l2))) = (self.periodic_shape(), other.periodic_shape()) {
            let limit = p1.max(p2) + l1.lcm(&l2);
            for i in 0..limit {
                let (a, b) = (self.bit(i).expect("periodic"), other.bit(i).expect("periodic"));
                if a != b {
                    return Ok(a.cmp(&b));
                }
            }
            return Ok(Ordering::Equal);
        }
        for i in 0..cap {
            match (self.bit(i), other.bit(i)) {
                (Some(a), Some(b)) if a != b => return Ok(a.cmp(&b)),
                (Some(_), Some(_)) => {}
                _ => return Err(Error::Undecidable(i)),
            }
        }
        Err(Error::Undecidable(cap))
    }

    pub fn complement(&self) -> BitCode {
        let mut out = self.clone();
        for b in &mut out.head {
            *b ^= 1;
        }
        out.flip = !out.flip;
        out
    }

    pub fn with_side(&self, side: Side) -> BitCode {
        let mut out = self.clone();
        out.side = side;
        out
    }
}

/// Minimal period, then minimal preperiod.
fn canonicalize(pre: &[u8], period: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let l = period.len();
    let q = (1..=l)
        .find(|&q| l % q == 0 && (0..l).all(|i| period[i] == period[i % q]))
        .unwrap_or(l);
    let mut per: Vec<u8> = period[..q].to_vec();
    let mut pre = pre.to_vec();
    while let Some(&last) = pre.last() {
        if last == per[q - 1] {
            pre.pop();
            per.rotate_right(1);
        } else {
            break;
        }
    }
    (pre, per)
}

impl PartialEq for BitCode {
    fn eq(&self, other: &Self) -> bool {
        if self.side != other.side {
            return false;
        }
        match (self.canonical_words(), other.canonical_words()) {
            (Some(a), Some(b)) => a == b,
            (None, None) => self.known_len() == other.known_len() && self.prefix(usize::MAX) == other.prefix(usize::MAX),
            _ => false,
        }
    }
}

fn word(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

impl fmt::Display for BitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((pre, per)) = self.canonical_words() {
            return write!(f, "{}:{}({})", self.side, word(&pre), word(&per));
        }
        if let Source::Stream { label, .. } = &self.source {
            if self.offset == 0 && self.head.is_empty() && !self.flip {
                return write!(f, "{}:{label}", self.side);
            }
        }
        let shown = self.prefix(64);
        let more = self.known_len().is_some_and(|n| n > 64);
        write!(f, "{}:{}{}", self.side, word(&shown), if more { "..." } else { "" })
    }
}

/// `î:0x → k̂:x̄`, `î:1x → ĵ:x̄`.
pub fn symbolic_psi(c: &BitCode) -> Result<BitCode> {
    let (first, mut rest) = c.shifted().ok_or(Error::Undecidable(0))?;
    rest.side = if first == 0 { c.side.prev() } else { c.side.next() };
    Ok(rest)
}

/// `î:x → ĵ:0x̄` below `d_î`, `î:x → k̂:1x̄` above; both on it.
pub fn symbolic_phi(c: &BitCode, d: &[BitCode; 3], cap: usize) -> Result<Vec<BitCode>> {
    let lower = || c.prepended(c.side.next(), 0);
    let upper = || c.prepended(c.side.prev(), 1);
    Ok(match c.compare(&d[c.side.index()], cap)? {
        Ordering::Less => vec![lower()],
        Ordering::Greater => vec![upper()],
        Ordering::Equal => vec![lower(), upper()],
    })
}

/// Codes on `side` with at least one legitimate `ψ`-image lie in
/// `[0 d̄_{side−1}, 1 d̄_{side+1}]`.
pub fn legitimacy_interval(d: &[BitCode; 3], side: Side) -> (BitCode, BitCode) {
    (d[side.prev().index()].prepended(side, 0), d[side.next().index()].prepended(side, 1))
}

pub fn in_legitimacy_interval(c: &BitCode, d: &[BitCode; 3], cap: usize) -> Result<bool> {
    let (lo, hi) = legitimacy_interval(d, c.side);
    Ok(c.compare(&lo, cap)? != Ordering::Less && c.compare(&hi, cap)? != Ordering::Greater)
}

/// `u = (side − 1)/3 + v/3` with `v = Σ x_j 2^{−j}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct UnitPoint {
    pub u: Q,
}

impl UnitPoint {
    pub fn side(&self) -> Side {
        let s = (&self.u * qi(3)).floor();
        Node::from_index(num_traits::ToPrimitive::to_usize(s.numer()).unwrap_or(0).min(2))
    }

    pub fn fraction(&self) -> Q {
        let s = qi(self.side().index() as i64);
        &self.u * qi(3) - s
    }
}

fn word_value(bits: &[u8]) -> Q {
    let mut n = BigInt::zero();
    for &b in bits {
        n = (n << 1) + BigInt::from(b);
    }
    Q::new(n, BigInt::one() << bits.len())
}

/// Exact `Σ x_j 2^{−j}`; finite and stream codes are read with a zero tail.
pub fn code_value(c: &BitCode) -> Q {
    match c.canonical_words() {
        Some((pre, per)) => {
            let scale = Q::new(BigInt::one(), BigInt::one() << pre.len());
            let p = word_value(&per) * Q::new(BigInt::one() << per.len(), (BigInt::one() << per.len()) - 1);
            word_value(&pre) + scale * p
        }
        None => word_value(&c.prefix(usize::MAX)),
    }
}

pub fn unit_repr(c: &BitCode) -> UnitPoint {
    UnitPoint { u: (qi(c.side.index() as i64) + code_value(c)) / qi(3) }
}

/// The two-slope form of `φ` on `[0, 1)`; both images at a threshold.
pub fn iet_step(u: &UnitPoint, d: &[UnitPoint; 3]) -> Vec<UnitPoint> {
    let s = u.side();
    let v = u.fraction();
    let one = Q::one();
    let six = qi(6);
    let lower = || UnitPoint { u: qi(s.next().index() as i64) / qi(3) + (&one - &v) / &six };
    let upper = || UnitPoint { u: qi(s.prev().index() as i64) / qi(3) + (qi(2) - &v) / &six };
    match u.cmp(&d[s.index()]) {
        Ordering::Less => vec![lower()],
        Ordering::Greater => vec![upper()],
        Ordering::Equal => vec![lower(), upper()],
    }
}

/// `Σ |x_t − x′_t| 2^{−t}`; exact for eventually periodic codes, over the
/// common known prefix otherwise.
pub fn b_distance(c1: &BitCode, c2: &BitCode) -> Result<Q> {
    if c1.side != c2.side {
        return Err(Error::DifferentSides);
    }
    if let (Some((p1, l1)), Some((p2, l2))) = (c1.periodic_shape(), c2.periodic_shape()) {
        let p = p1.max(p2);
        let l = l1.lcm(&l2);
        let pre: Vec<u8> = (0..p).map(|i| c1.bit(i).unwrap() ^ c2.bit(i).unwrap()).collect();
        let per: Vec<u8> = (p..p + l).map(|i| c1.bit(i).unwrap() ^ c2.bit(i).unwrap()).collect();
        return Ok(code_value(&BitCode::periodic(c1.side, pre, per)?));
    }
    let n = c1.known_len().unwrap_or(usize::MAX).min(c2.known_len().unwrap_or(usize::MAX));
    let xor: Vec<u8> = (0..n).map_while(|i| Some(c1.bit(i)? ^ c2.bit(i)?)).collect();
    Ok(word_value(&xor))
}

fn require_j_empty(params: &SystemParams) -> Result<()> {
    if geometry(params)?.all_j_empty() {
        Ok(())
    } else {
        Err(Error::RegionUnsupported)
    }
}

/// First `nbits` digits of the code of `z`.
pub fn encode(z: &BoundaryPoint, params: &SystemParams, nbits: usize) -> Result<BitCode> {
    require_j_empty(params)?;
    let d = crate::params::DecisionPoints::uniform(crate::num::q(1, 2))?;
    let mut bits = Vec::with_capacity(nbits);
    let mut w = z.clone();
    for n in 0..nbits {
        let first = (w.x >= corner_image(params, w.side)) as u8;
        bits.push(first ^ (n % 2) as u8);
        if n + 1 < nbits {
            // Legitimacy is irrelevant for the encoding, only the pre-image.
            w = inverse_map(params, &d, &w)?.point;
        }
    }
    Ok(BitCode::finite(z.side, bits))
}

/// An enclosure of the point with code `c`. Eventually constant codes
/// decode exactly; otherwise the nested images shrink until `precision`
/// or until the known digits run out.
pub fn decode(c: &BitCode, params: &SystemParams, precision: &Q) -> Result<OrbitPoint> {
    require_j_empty(params)?;
    const MAX_STEPS: usize = 1 << 20;
    let mut map = Mobius::identity();
    let mut cur = c.clone();
    let (zero, one) = (Q::zero(), Q::one());
    for _ in 0..MAX_STEPS {
        if let Some((pre, per)) = cur.canonical_words() {
            if pre.is_empty() && per.len() == 1 {
                let x = map.eval(if per[0] == 0 { &zero } else { &one });
                return Ok(OrbitPoint { side: c.side, lo: x.clone(), hi: x });
            }
        }
        let (a, b) = (map.eval(&zero), map.eval(&one));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if &(&hi - &lo) <= precision {
            return Ok(OrbitPoint { side: c.side, lo, hi });
        }
        let next = match symbolic_psi(&cur) {
            Ok(n) => n,
            Err(_) => return Ok(OrbitPoint { side: c.side, lo, hi }),
        };
        map = map.compose(&branch_mobius(params, cur.side, next.side)?);
        cur = next;
    }
    Err(Error::BudgetExceeded(MAX_STEPS as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::q;

    fn code(s: &str) -> BitCode {
        BitCode::parse(s).unwrap()
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(code("2:10101(0)").to_string(), "2:10101(0)");
        assert_eq!(code("1:(1010)").to_string(), "1:(10)");
        assert_eq!(code("1:0(10)").to_string(), "1:(01)");
        assert_eq!(code("3:0110").to_string(), "3:0110");
        assert!(BitCode::parse("4:01").is_err());
        assert!(BitCode::parse("1:01(2)").is_err());
    }

    #[test]
    fn quadruple_collapse() {
        let c = code("1:1001(011)");
        let mut z = c.clone();
        let mut sides = vec![];
        for _ in 0..4 {
            z = symbolic_psi(&z).unwrap();
            sides.push(z.side);
        }
        assert_eq!(sides, vec![Node::N2, Node::N3, Node::N2, Node::N1]);
        assert_eq!(z, code("1:(011)"));
        let mut z = code("1:0110(011)");
        for _ in 0..4 {
            z = symbolic_psi(&z).unwrap();
        }
        assert_eq!(z, code("1:(011)"));
    }

    #[test]
    fn period_three_orbit_under_reference_points() {
        let d = [code("1:10010110(1001)"), code("2:1010100(0)"), code("3:0100(0)")];
        let mut z = code("1:(10)");
        let mut sides = vec![];
        for _ in 0..3 {
            let next = symbolic_phi(&z, &d, DEFAULT_COMPARE_CAP).unwrap();
            assert_eq!(next.len(), 1);
            z = next.into_iter().next().unwrap();
            sides.push(z.side);
        }
        assert_eq!(sides, vec![Node::N3, Node::N2, Node::N1]);
        assert_eq!(z, code("1:(10)"));
    }

    #[test]
    fn legitimacy_interval_digits() {
        let d = [code("1:10010110(1001)"), code("2:1010100(0)"), code("3:0100(0)")];
        let (lo, hi) = legitimacy_interval(&d, Node::N1);
        assert_eq!(lo.to_string(), "1:010(1)");
        assert_eq!(hi.to_string(), "1:101010(1)");
    }

    #[test]
    fn unit_and_distance() {
        assert_eq!(unit_repr(&code("1:(10)")).u, q(2, 9));
        assert_eq!(b_distance(&code("1:(10)"), &code("1:(10)")).unwrap(), qi(0));
        assert_eq!(b_distance(&code("1:1(0)"), &code("1:0(0)")).unwrap(), q(1, 2));
        assert_eq!(b_distance(&code("1:(10)"), &code("1:(01)")).unwrap(), qi(1));
        assert!(matches!(b_distance(&code("1:(10)"), &code("2:(01)")), Err(Error::DifferentSides)));
    }

    #[test]
    fn decode_symmetric_orbit_point() {
        let p = SystemParams::normalized_loads([q(9, 20), q(9, 20), q(9, 20)]).unwrap();
        let e = decode(&code("1:(10)"), &p, &crate::num::ten_pow_neg(30)).unwrap();
        let root = (-13.0 + 477f64.sqrt()) / 14.0;
        assert!((e.center_f64() - root).abs() < 1e-12);
        let z = decode(&code("1:(0)"), &p, &crate::num::ten_pow_neg(30)).unwrap();
        assert_eq!((z.lo, z.hi), (qi(0), qi(0)));
        let half = encode(&BoundaryPoint::new(Node::N1, q(1, 2)).unwrap(), &p, 8).unwrap();
        assert_eq!(half.prefix(8), vec![1, 0, 0, 0, 0, 0, 0, 0]);
    }
}
