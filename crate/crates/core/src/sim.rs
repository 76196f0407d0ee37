//! Discrete-event simulation of the exhaustive three-queue polling system
//! and its embedded chain at switching epochs.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::Node;

/// Totals above this switch the busy-period sampler to its Gaussian fluid
/// continuation, where counts are tracked on a log scale.
pub const FLUID_THRESHOLD: f64 = 1_125_899_906_842_624.0; // 2^50

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Exponential,
    Deterministic,
    Gamma,
}

/// Per-node service distributions with mean `1/μ_i` and variance `σ_i²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ServiceModel {
    pub kind: [ServiceKind; 3],
    pub mean: [f64; 3],
    pub variance: [f64; 3],
}

impl ServiceModel {
    pub fn exponential(mu: [f64; 3]) -> Self {
        Self { kind: [ServiceKind::Exponential; 3], mean: mu.map(|m| 1.0 / m), variance: mu.map(|m| 1.0 / (m * m)) }
    }

    pub fn deterministic(mu: [f64; 3]) -> Self {
        Self { kind: [ServiceKind::Deterministic; 3], mean: mu.map(|m| 1.0 / m), variance: [0.0; 3] }
    }

    pub fn gamma(mu: [f64; 3], variance: [f64; 3]) -> Result<Self> {
        if variance.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter("gamma service needs positive finite variances".into()));
        }
        Ok(Self { kind: [ServiceKind::Gamma; 3], mean: mu.map(|m| 1.0 / m), variance })
    }

    pub fn of_kind(kind: ServiceKind, mu: [f64; 3], variance: [f64; 3]) -> Result<Self> {
        match kind {
            ServiceKind::Exponential => Ok(Self::exponential(mu)),
            ServiceKind::Deterministic => Ok(Self::deterministic(mu)),
            ServiceKind::Gamma => Self::gamma(mu, variance),
        }
    }

    /// Total duration of `n` services at `node`, sampled exactly.
    pub fn sample_sum<R: Rng + ?Sized>(&self, node: Node, n: f64, rng: &mut R) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        let i = node.index();
        let m = self.mean[i];
        match self.kind[i] {
            ServiceKind::Deterministic => n * m,
            ServiceKind::Exponential => Gamma::new(n, m).expect("positive shape").sample(rng),
            ServiceKind::Gamma => {
                let shape = m * m / self.variance[i];
                let scale = self.variance[i] / m;
                Gamma::new(n * shape, scale).expect("positive shape").sample(rng)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, node: Node, rng: &mut R) -> f64 {
        let i = node.index();
        match self.kind[i] {
            ServiceKind::Exponential => Exp::new(1.0 / self.mean[i]).expect("positive rate").sample(rng),
            _ => self.sample_sum(node, 1.0, rng),
        }
    }
}

/// Next-node rule at a switching epoch.
#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    /// Decision point per side on projected coordinates.
    Thresholds([f64; 3]),
    /// `weights[j][i] = b_ji`; argmax of `b_ji ξ_i` over `i ≠ j`.
    Weights([[f64; 3]; 3]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusyMode {
    /// One service at a time.
    PerService,
    /// Whole generations of the busy-period branching process at once.
    #[default]
    Generations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub lambda: [f64; 3],
    pub service: ServiceModel,
    pub rule: Rule,
    pub mode: BusyMode,
    /// Guard on the number of generations (or services) per busy period.
    pub budget: u64,
}

impl SimConfig {
    pub fn rho(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.lambda[i] * self.service.mean[i])
    }
}

/// A count or time that may have left the range of exact integers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Magnitude {
    Count(u64),
    Real(f64),
    /// Natural logarithm of the value.
    Log(f64),
}

impl Magnitude {
    pub fn ln(&self) -> f64 {
        match *self {
            Magnitude::Count(n) => (n as f64).ln(),
            Magnitude::Real(x) => x.ln(),
            Magnitude::Log(l) => l,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Magnitude::Count(n) => n as f64,
            Magnitude::Real(x) => x,
            Magnitude::Log(l) => l.exp(),
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Magnitude::Count(n) => write!(f, "{n}"),
            Magnitude::Real(x) => write!(f, "{x}"),
            Magnitude::Log(l) => {
                if l == f64::NEG_INFINITY {
                    return write!(f, "0");
                }
                let log10 = l / std::f64::consts::LN_10;
                let e = log10.floor();
                write!(f, "{:.6}e{}", 10f64.powf(log10 - e), e as i64)
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Load {
    Exact([u64; 3]),
    /// `ln W` and the normalized queue vector.
    Fluid { ln_w: f64, y: [f64; 3] },
}

/// Queues, server and clock of one replica.
#[derive(Clone, Debug)]
pub struct PollingState {
    load: Load,
    pub server: Node,
    /// Clock, with `Log` once in fluid mode.
    pub clock: Magnitude,
    pub rng: ChaCha8Rng,
}

/// Per-replica stream of the master seed.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

impl PollingState {
    pub fn new(queues: [u64; 3], server: Node, rng: ChaCha8Rng) -> Self {
        Self { load: Load::Exact(queues), server, clock: Magnitude::Real(0.0), rng }
    }

    pub fn queues(&self) -> Option<[u64; 3]> {
        match &self.load {
            Load::Exact(q) => Some(*q),
            Load::Fluid { .. } => None,
        }
    }

    pub fn is_fluid(&self) -> bool {
        matches!(self.load, Load::Fluid { .. })
    }

    pub fn zeta(&self) -> [f64; 3] {
        match &self.load {
            Load::Exact(q) => {
                let w: u64 = q.iter().sum();
                if w == 0 {
                    [0.0; 3]
                } else {
                    q.map(|v| v as f64 / w as f64)
                }
            }
            Load::Fluid { y, .. } => *y,
        }
    }

    pub fn total(&self) -> Magnitude {
        match &self.load {
            Load::Exact(q) => Magnitude::Count(q.iter().sum()),
            Load::Fluid { ln_w, .. } => Magnitude::Log(*ln_w),
        }
    }

    pub fn queue_magnitudes(&self) -> [Magnitude; 3] {
        match &self.load {
            Load::Exact(q) => q.map(Magnitude::Count),
            Load::Fluid { ln_w, y } => y.map(|v| Magnitude::Log(ln_w + v.ln())),
        }
    }

    fn advance_clock(&mut self, dt: f64) {
        self.clock = match self.clock {
            Magnitude::Log(l) => {
                let ld = dt.ln();
                let (a, b) = if l > ld { (l, ld) } else { (ld, l) };
                Magnitude::Log(a + (b - a).exp().ln_1p())
            }
            c => {
                let t = c.as_f64() + dt;
                if t.is_finite() {
                    Magnitude::Real(t)
                } else {
                    Magnitude::Log(c.as_f64().ln().max(dt.ln()) + std::f64::consts::LN_2)
                }
            }
        };
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchRecord {
    pub n: u64,
    pub tau: Magnitude,
    pub queues: [Magnitude; 3],
    /// Node whose queue has just been emptied.
    pub server: Node,
    pub zeta: [f64; 3],
    /// `(side, x)` reading of `ζ` on the emptied node's side.
    pub zeta_side: Node,
    pub zeta_x: f64,
    /// `None` when the system is empty.
    pub next_node: Option<Node>,
    pub total: Magnitude,
    /// Services (or, in fluid mode, jobs) completed during the busy period.
    pub services: f64,
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite mean").sample(rng) as u64
}

/// Side coordinate on side `j` of a simplex point, `ζ_{j+2} / (ζ_{j+1} + ζ_{j+2})`.
pub fn side_coordinate(zeta: &[f64; 3], j: Node) -> f64 {
    let a = zeta[j.next().index()];
    let b = zeta[j.prev().index()];
    if a + b == 0.0 {
        0.0
    } else {
        b / (a + b)
    }
}

/// Next node after emptying node `j`; `None` when both other queues are empty.
pub fn threshold_decision<R: Rng + ?Sized>(rule: &Rule, j: Node, zeta: &[f64; 3], rng: &mut R) -> Option<Node> {
    let (lo, hi) = (j.next(), j.prev());
    if zeta[lo.index()] == 0.0 && zeta[hi.index()] == 0.0 {
        return None;
    }
    let (a, b) = match rule {
        Rule::Thresholds(d) => (d[j.index()], side_coordinate(zeta, j)),
        Rule::Weights(w) => (w[j.index()][lo.index()] * zeta[lo.index()], w[j.index()][hi.index()] * zeta[hi.index()]),
    };
    // Thresholds: below d goes to ĵ. Weights: larger weighted queue wins.
    let pick_lo = match rule {
        Rule::Thresholds(_) => b < a,
        Rule::Weights(_) => a > b,
    };
    if a == b {
        return Some(if rng.random::<bool>() { lo } else { hi });
    }
    Some(if pick_lo { lo } else { hi })
}

/// Waits for the first arrival into an empty system.
fn wait_for_arrival(state: &mut PollingState, cfg: &SimConfig) {
    let total: f64 = cfg.lambda.iter().sum();
    let dt = Exp::new(total).expect("positive rate").sample(&mut state.rng);
    state.advance_clock(dt);
    let u: f64 = state.rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut node = Node::N3;
    for n in Node::ALL {
        acc += cfg.lambda[n.index()];
        if u < acc {
            node = n;
            break;
        }
    }
    let mut q = [0u64; 3];
    q[node.index()] = 1;
    state.load = Load::Exact(q);
    state.server = node;
}

/// A single service at the current node (the one-step drift of the chain).
pub fn service_step(state: &mut PollingState, cfg: &SimConfig) -> Result<()> {
    let Load::Exact(q) = &mut state.load else {
        return Err(Error::InvalidParameter("single services need exact counts".into()));
    };
    let j = state.server;
    if q[j.index()] == 0 {
        return Err(Error::InvalidParameter("served queue is empty".into()));
    }
    let s = cfg.service.sample(j, &mut state.rng);
    q[j.index()] -= 1;
    for i in 0..3 {
        q[i] += poisson(cfg.lambda[i] * s, &mut state.rng);
    }
    state.advance_clock(s);
    Ok(())
}

fn busy_exact(state: &mut PollingState, cfg: &SimConfig) -> Result<f64> {
    let j = state.server;
    let mut services = 0f64;
    let mut rounds = 0u64;
    loop {
        let Load::Exact(q) = &mut state.load else { unreachable!() };
        let n = q[j.index()];
        if n == 0 {
            return Ok(services);
        }
        rounds += 1;
        if rounds > cfg.budget {
            return Err(Error::BudgetExceeded(cfg.budget));
        }
        let batch = match cfg.mode {
            BusyMode::PerService => 1,
            BusyMode::Generations => n,
        };
        let s = cfg.service.sample_sum(j, batch as f64, &mut state.rng);
        q[j.index()] -= batch;
        for i in 0..3 {
            q[i] += poisson(cfg.lambda[i] * s, &mut state.rng);
        }
        services += batch as f64;
        let w: u64 = q.iter().sum();
        let snapshot = *q;
        state.advance_clock(s);
        if cfg.mode == BusyMode::Generations && w as f64 > FLUID_THRESHOLD {
            let ln_w = (w as f64).ln();
            let y = snapshot.map(|v| v as f64 / w as f64);
            state.load = Load::Fluid { ln_w, y };
            return busy_fluid(state, cfg).map(|s| services + s);
        }
    }
}

/// Gaussian continuation of a busy period with `ξ_j = y_j W`: the busy
/// time and the arrival counts are moment-matched normals.
fn busy_fluid(state: &mut PollingState, cfg: &SimConfig) -> Result<f64> {
    let j = state.server;
    let ji = j.index();
    let Load::Fluid { ln_w, y } = &mut state.load else { unreachable!() };
    let w = ln_w.exp();
    let m = cfg.service.mean[ji];
    let rho = cfg.lambda[ji] * m;
    let yj = y[ji];
    let mean_b = yj / (1.0 - rho) * m;
    let var_b = yj * (cfg.service.variance[ji] + rho * m * m) / (1.0 - rho).powi(3);
    let z: f64 = StandardNormal.sample(&mut state.rng);
    // B / W
    let b = (mean_b + (var_b / w).sqrt() * z).max(0.0);
    let mut next = *y;
    next[ji] = 0.0;
    for i in 0..3 {
        if i == ji {
            continue;
        }
        let lb = cfg.lambda[i] * b;
        let z: f64 = StandardNormal.sample(&mut state.rng);
        next[i] += (lb + (lb / w).sqrt() * z).max(0.0);
    }
    let total: f64 = next.iter().sum();
    let served = yj * w / (1.0 - rho);
    *ln_w += total.ln();
    *y = next.map(|v| v / total);
    let lb = b.ln() + w.ln();
    state.clock = match state.clock {
        Magnitude::Log(l) => {
            let (a, c) = if l > lb { (l, lb) } else { (lb, l) };
            Magnitude::Log(a + (c - a).exp().ln_1p())
        }
        c => {
            let l = c.as_f64().ln();
            let (a, c) = if l > lb { (l, lb) } else { (lb, l) };
            Magnitude::Log(a + (c - a).exp().ln_1p())
        }
    };
    Ok(served)
}

/// Serves the current node exhaustively and returns the record at the
/// switching epoch (the decision for the next node included).
pub fn run_busy_period(state: &mut PollingState, cfg: &SimConfig, n: u64) -> Result<SwitchRecord> {
    if let Some(q) = state.queues() {
        if q.iter().all(|&v| v == 0) {
            wait_for_arrival(state, cfg);
        }
    }
    let services = match state.load {
        Load::Exact(_) => busy_exact(state, cfg)?,
        Load::Fluid { .. } => busy_fluid(state, cfg)?,
    };
    let j = state.server;
    let zeta = state.zeta();
    let next_node = threshold_decision(&cfg.rule, j, &zeta, &mut state.rng);
    Ok(SwitchRecord {
        n,
        tau: state.clock,
        queues: state.queue_magnitudes(),
        server: j,
        zeta,
        zeta_side: j,
        zeta_x: side_coordinate(&zeta, j),
        next_node,
        total: state.total(),
        services,
    })
}

/// Runs `n_switches` busy periods from `queues` with the server at `node`.
pub fn simulate(
    cfg: &SimConfig,
    queues: [u64; 3],
    node: Node,
    n_switches: u64,
    seed: u64,
    replica: u64,
) -> Result<Vec<SwitchRecord>> {
    let mut state = start_state(cfg, queues, node, replica_rng(seed, replica));
    let mut out = Vec::with_capacity(n_switches as usize);
    run_switches(&mut state, cfg, n_switches, |r| {
        out.push(r.clone());
        true
    })?;
    Ok(out)
}

/// State whose server is `node` with its queue just emptied; the rule picks
/// the first node to serve. A nonempty `node` queue is served first.
pub fn start_state(cfg: &SimConfig, queues: [u64; 3], node: Node, rng: ChaCha8Rng) -> PollingState {
    let mut state = PollingState::new(queues, node, rng);
    if queues[node.index()] == 0 && queues.iter().any(|&v| v > 0) {
        let zeta = state.zeta();
        if let Some(next) = threshold_decision(&cfg.rule, node, &zeta, &mut state.rng) {
            state.server = next;
        }
    }
    state
}

/// Runs up to `n_switches` busy periods, handing every record to `visit`
/// until it returns `false`. Returns the number of records produced.
pub fn run_switches<F: FnMut(&SwitchRecord) -> bool>(
    state: &mut PollingState,
    cfg: &SimConfig,
    n_switches: u64,
    mut visit: F,
) -> Result<u64> {
    for n in 0..n_switches {
        let rec = run_busy_period(state, cfg, n)?;
        if let Some(next) = rec.next_node {
            state.server = next;
        }
        if !visit(&rec) {
            return Ok(n + 1);
        }
    }
    Ok(n_switches)
}

pub fn records_csv_header() -> &'static str {
    "replica,n,tau,q1,q2,q3,server,zeta_side,zeta_x,W"
}

pub fn record_csv_row(replica: u64, r: &SwitchRecord) -> String {
    format!(
        "{replica},{},{},{},{},{},{},{},{:.12},{}",
        r.n, r.tau, r.queues[0], r.queues[1], r.queues[2], r.server, r.zeta_side, r.zeta_x, r.total
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: [f64; 3], service: ServiceModel) -> SimConfig {
        SimConfig { lambda, service, rule: Rule::Thresholds([0.5; 3]), mode: BusyMode::PerService, budget: 1 << 40 }
    }

    #[test]
    fn no_arrivals_deterministic_service() {
        let c = cfg([0.0; 3], ServiceModel::deterministic([1.0; 3]));
        let mut s = PollingState::new([7, 0, 0], Node::N1, replica_rng(1, 0));
        let r = run_busy_period(&mut s, &c, 0).unwrap();
        assert_eq!(r.services, 7.0);
        assert_eq!(r.tau, Magnitude::Real(7.0));
        assert_eq!(r.next_node, None);
    }

    #[test]
    fn weights_rule() {
        let mut rng = replica_rng(3, 0);
        let eq = Rule::Weights([[1.0; 3]; 3]);
        let z = [0.0, 5.0 / 12.0, 7.0 / 12.0];
        assert_eq!(threshold_decision(&eq, Node::N1, &z, &mut rng), Some(Node::N3));
        let w = Rule::Weights([[1.0, 7.0, 5.0], [1.0; 3], [1.0; 3]]);
        let picks: Vec<_> = (0..64).map(|_| threshold_decision(&w, Node::N1, &z, &mut rng).unwrap()).collect();
        assert!(picks.contains(&Node::N2) && picks.contains(&Node::N3));
    }

    #[test]
    fn reproducible_streams() {
        let mut c = cfg([0.45; 3], ServiceModel::exponential([1.0; 3]));
        c.mode = BusyMode::Generations;
        let a = simulate(&c, [1000, 500, 200], Node::N1, 40, 9, 2).unwrap();
        let b = simulate(&c, [1000, 500, 200], Node::N1, 40, 9, 2).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert_eq!(r.zeta[r.server.index()], 0.0);
            assert!((r.zeta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fluid_mode_keeps_running() {
        let mut c = cfg([0.45; 3], ServiceModel::exponential([1.0; 3]));
        c.mode = BusyMode::Generations;
        let recs = simulate(&c, [1 << 20, 1 << 19, 1 << 18], Node::N1, 600, 5, 0).unwrap();
        let last = recs.last().unwrap();
        assert!(matches!(last.total, Magnitude::Log(_)));
        assert!(last.total.ln() > 100.0);
        assert!((last.zeta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
