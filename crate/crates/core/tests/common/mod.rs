#![allow(dead_code)]

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polltri::dynamics::branch_mobius;
use polltri::node::Node;
use polltri::num::{q, to_f64 as q_to_f64, Q};
use polltri::params::{geometry, SystemParams};

/// 1-based labels of the cyclic successor and predecessor, written out by hand.
pub fn next_label(k: u8) -> u8 {
    k % 3 + 1
}

pub fn prev_label(k: u8) -> u8 {
    (k + 1) % 3 + 1
}

/// Simplex coordinates of the point `x` on side `s`: zero at `s`, `1 − x` at
/// the successor, `x` at the predecessor.
pub fn side_point(s: u8, x: &Q) -> [Q; 3] {
    let mut z: [Q; 3] = std::array::from_fn(|_| Q::zero());
    z[(next_label(s) - 1) as usize] = Q::one() - x;
    z[(prev_label(s) - 1) as usize] = x.clone();
    z
}

/// Exit point of the drift line in `R³` from `z` with the server at `j`,
/// rescaled onto the simplex; returns the coordinate on side `j`.
pub fn drift_oracle(lambda: &[Q; 3], mu: &[Q; 3], j: u8, z: &[Q; 3]) -> Q {
    let ji = (j - 1) as usize;
    let t = &z[ji] / (&mu[ji] - &lambda[ji]);
    let y: [Q; 3] = std::array::from_fn(|i| if i == ji { Q::zero() } else { &z[i] + &lambda[i] * &t });
    let total: Q = y.iter().sum();
    &y[(prev_label(j) - 1) as usize] / total
}

/// Loads on a `1/den` grid in `[lo, hi]` with total above one.
pub fn random_loads(rng: &mut ChaCha8Rng, lo: i64, hi: i64, den: i64) -> [Q; 3] {
    loop {
        let r: [i64; 3] = std::array::from_fn(|_| rng.random_range(lo..=hi));
        if r.iter().sum::<i64>() > den {
            return r.map(|n| q(n, den));
        }
    }
}

pub fn random_unit(rng: &mut ChaCha8Rng, den: i64) -> Q {
    q(rng.random_range(1..den), den)
}

pub fn random_node(rng: &mut ChaCha8Rng) -> Node {
    Node::from_index(rng.random_range(0..3))
}

pub fn symmetric() -> SystemParams {
    SystemParams::normalized_loads([q(9, 20), q(9, 20), q(9, 20)]).unwrap()
}

pub fn to_f64(x: &BigRational) -> f64 {
    polltri::num::to_f64(x)
}

/// Frozen distortion constant, measured against the side-coordinate width
/// (the largest fitted exponent was about 2.9).
pub const KAPPA: f64 = 4.0;

/// `|f(v) − f(u)| / |f(w) − f(u)|` against `|v − u| / |w − u|` along a random
/// admissible itinerary that keeps all three points in the focus triangle.
pub fn distortion_samples(seed: u64, n: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let rho = random_loads(&mut rng, 340, 600, 1000);
        let p = SystemParams::normalized_loads(rho).unwrap();
        let g = geometry(&p).unwrap();
        let side = random_node(&mut rng);
        let (lo, hi) = &g.va_intervals[side.index()];
        let (lo, hi) = (q_to_f64(lo), q_to_f64(hi));
        let len = 10f64.powf(rng.random_range(-4.0..(0.05f64).log10()));
        if hi - lo <= len {
            continue;
        }
        let start = rng.random_range(lo..hi - len);
        let t: f64 = rng.random_range(0.05..0.95);
        let grid = |v: f64| polltri::num::round_dyadic(&polltri::num::from_f64_decimal(v).unwrap(), 80);
        let (mut u, mut v, mut w) = (grid(start), grid(start + t * len), grid(start + len));
        if !(u < v && v < w) {
            continue;
        }
        let r0 = q_to_f64(&((&v - &u) / (&w - &u)));
        let width = q_to_f64(&(&w - &u));
        let steps = rng.random_range(1..=30);
        let mut s = side;
        let mut ok = true;
        for _ in 0..steps {
            let target = Node::from_index(s.index() + rng.random_range(1..3));
            let m = branch_mobius(&p, target, s).unwrap();
            (u, v, w) = (m.eval(&u), m.eval(&v), m.eval(&w));
            s = target;
            let (a, b) = &g.va_intervals[s.index()];
            if [&u, &v, &w].iter().any(|x| *x < a || *x > b) {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let rt = q_to_f64(&((&v - &u) / (&w - &u)).abs());
        out.push(((rt / r0).ln().abs(), width));
    }
    out
}
