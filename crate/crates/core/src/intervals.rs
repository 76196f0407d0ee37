//! Exact unions of closed intervals on the three sides and the forward
//! iteration `A^{t+1} = φ(A^t)`.

use num_traits::{One, Zero};

use crate::dynamics::branch_mobius;
use crate::error::Result;
use crate::node::{Node, Side};
use crate::num::Q;
use crate::params::{DecisionPoints, SystemParams};

/// Per-side sorted disjoint closed intervals inside `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IntervalSet {
    pub sides: [Vec<(Q, Q)>; 3],
}

impl IntervalSet {
    pub fn full() -> Self {
        Self { sides: std::array::from_fn(|_| vec![(Q::zero(), Q::one())]) }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a set from arbitrary closed pieces, merging overlaps and
    /// touching endpoints.
    pub fn from_pieces(pieces: impl IntoIterator<Item = (Side, Q, Q)>) -> Self {
        let mut sides: [Vec<(Q, Q)>; 3] = Default::default();
        for (s, a, b) in pieces {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            sides[s.index()].push((a, b));
        }
        for list in &mut sides {
            list.sort();
            let mut merged: Vec<(Q, Q)> = Vec::with_capacity(list.len());
            for (a, b) in list.drain(..) {
                match merged.last_mut() {
                    Some(last) if a <= last.1 => {
                        if b > last.1 {
                            last.1 = b;
                        }
                    }
                    _ => merged.push((a, b)),
                }
            }
            *list = merged;
        }
        Self { sides }
    }

    pub fn on(&self, side: Side) -> &[(Q, Q)] {
        &self.sides[side.index()]
    }

    pub fn interval_count(&self) -> usize {
        self.sides.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, side: Side, x: &Q) -> bool {
        let list = &self.sides[side.index()];
        let idx = list.partition_point(|(_, b)| b < x);
        idx < list.len() && &list[idx].0 <= x
    }

    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        Node::ALL.iter().all(|&s| {
            self.on(s).iter().all(|(a, b)| {
                other.on(s).iter().any(|(c, d)| c <= a && b <= d)
            })
        })
    }

    pub fn total_length(&self) -> Q {
        self.sides.iter().flatten().map(|(a, b)| b - a).sum()
    }

    /// `φ` applied to the set: each interval is split at its side's decision
    /// point (which goes to both images) and mapped by the monotone branches.
    pub fn image(&self, params: &SystemParams, d: &DecisionPoints) -> Result<IntervalSet> {
        let mut pieces = Vec::with_capacity(self.interval_count() * 2);
        for s in Node::ALL {
            let dv = d.on(s);
            let lower = branch_mobius(params, s.next(), s)?;
            let upper = branch_mobius(params, s.prev(), s)?;
            for (a, b) in self.on(s) {
                if a <= dv {
                    let hi = if b < dv { b } else { dv };
                    pieces.push((s.next(), lower.eval(hi), lower.eval(a)));
                }
                if b >= dv {
                    let lo = if a > dv { a } else { dv };
                    pieces.push((s.prev(), upper.eval(b), upper.eval(lo)));
                }
            }
        }
        Ok(IntervalSet::from_pieces(pieces))
    }
}

/// `A^0, A^1, …, A^{t_max}`.
pub fn iterate_boundary_sets(params: &SystemParams, d: &DecisionPoints, t_max: usize) -> Result<Vec<IntervalSet>> {
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(IntervalSet::full());
    for t in 0..t_max {
        let next = out[t].image(params, d)?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EscapeCertificate {
    /// First `t` with every decision point outside `A^t`.
    FiniteP(usize),
    Undecided,
}

pub fn escape_certificate(params: &SystemParams, d: &DecisionPoints, t_max: usize) -> Result<EscapeCertificate> {
    let mut a = IntervalSet::full();
    for t in 1..=t_max {
        a = a.image(params, d)?;
        if Node::ALL.iter().all(|&s| !a.contains(s, d.on(s))) {
            return Ok(EscapeCertificate::FiniteP(t));
        }
    }
    Ok(EscapeCertificate::Undecided)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{q, qi};

    #[test]
    fn merge_and_contains() {
        let s = IntervalSet::from_pieces([
            (Node::N1, q(1, 2), q(3, 4)),
            (Node::N1, q(0, 1), q(1, 4)),
            (Node::N1, q(1, 4), q(1, 3)),
        ]);
        assert_eq!(s.on(Node::N1), &[(qi(0), q(1, 3)), (q(1, 2), q(3, 4))]);
        assert!(s.contains(Node::N1, &q(1, 3)));
        assert!(!s.contains(Node::N1, &q(2, 5)));
        assert!(!s.contains(Node::N2, &q(1, 2)));
    }

    #[test]
    fn first_image_is_three_intervals_without_corners() {
        let p = SystemParams::normalized_loads([q(9, 20), q(9, 20), q(9, 20)]).unwrap();
        let d = DecisionPoints::uniform(q(1, 2)).unwrap();
        let a1 = IntervalSet::full().image(&p, &d).unwrap();
        assert_eq!(a1.interval_count(), 3);
        for s in Node::ALL {
            assert!(!a1.contains(s, &qi(0)) && !a1.contains(s, &qi(1)));
        }
    }
}
