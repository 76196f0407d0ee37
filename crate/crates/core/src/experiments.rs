//! Monte Carlo validators for the moment formulas of the stochastic system
//! and the capture / aperiodicity experiments on the embedded chain.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::Result;
use crate::node::Node;
use crate::orbit::OrbitCertificate;
use crate::sim::{
    replica_rng, run_busy_period, run_switches, service_step, start_state, PollingState, ServiceKind, ServiceModel,
    SimConfig,
};

/// One empirical mean (or variance) against its formula value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentCheck {
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    pub standard_error: f64,
    pub replicas: usize,
}

impl MomentCheck {
    /// Deviation in standard errors.
    pub fn z_score(&self) -> f64 {
        if self.standard_error == 0.0 {
            if self.observed == self.expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.observed - self.expected).abs() / self.standard_error
        }
    }

    pub fn within(&self, k: f64) -> bool {
        self.z_score() <= k
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m4: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        Self { n, mean, m2, m4 }
    }

    fn variance(&self) -> f64 {
        self.m2 * self.n / (self.n - 1.0)
    }

    fn mean_check(&self, name: String, expected: f64) -> MomentCheck {
        MomentCheck {
            name,
            expected,
            observed: self.mean,
            standard_error: (self.variance() / self.n).sqrt(),
            replicas: self.n as usize,
        }
    }

    fn variance_check(&self, name: String, expected: f64) -> MomentCheck {
        MomentCheck {
            name,
            expected,
            observed: self.variance(),
            standard_error: ((self.m4 - self.m2 * self.m2).max(0.0) / self.n).sqrt(),
            replicas: self.n as usize,
        }
    }
}

/// The three service families with means `1/μ_i`; the gamma family has
/// shape 2.
pub fn service_models(mu: [f64; 3]) -> Vec<ServiceModel> {
    let gamma_var = mu.map(|m| 0.5 / (m * m));
    [ServiceKind::Exponential, ServiceKind::Deterministic, ServiceKind::Gamma]
        .into_iter()
        .map(|k| ServiceModel::of_kind(k, mu, gamma_var).expect("valid family"))
        .collect()
}

fn kind_name(s: &ServiceModel, node: Node) -> &'static str {
    match s.kind[node.index()] {
        ServiceKind::Exponential => "exponential",
        ServiceKind::Deterministic => "deterministic",
        ServiceKind::Gamma => "gamma",
    }
}

fn replicate<T: Send, F: Fn(u64) -> Result<T> + Sync + Send>(replicas: usize, f: F) -> Result<Vec<T>> {
    (0..replicas as u64).into_par_iter().map(f).collect()
}

/// One-service drift `E(ξ_i(t+1) − ξ_i(t)) = λ_i/μ_j − 1{i=j}` at a fixed state.
pub fn drift_check(cfg: &SimConfig, queues: [u64; 3], node: Node, replicas: usize, seed: u64) -> Result<Vec<MomentCheck>> {
    let deltas = replicate(replicas, |r| {
        let mut s = PollingState::new(queues, node, replica_rng(seed, r));
        service_step(&mut s, cfg)?;
        let q = s.queues().expect("exact counts");
        Ok(std::array::from_fn::<f64, 3, _>(|i| q[i] as f64 - queues[i] as f64))
    })?;
    let mj = cfg.service.mean[node.index()];
    Ok(Node::ALL
        .iter()
        .map(|&i| {
            let xs: Vec<f64> = deltas.iter().map(|d| d[i.index()]).collect();
            let expected = cfg.lambda[i.index()] * mj - if i == node { 1.0 } else { 0.0 };
            Moments::of(&xs).mean_check(format!("drift {} node {i} serving {node}", kind_name(&cfg.service, node)), expected)
        })
        .collect())
}

/// Exact conditional moments of the arrivals to node `i` during the busy
/// period that empties `ξ_j` jobs at node `j`.
pub fn switch_epoch_moments(cfg: &SimConfig, xi_j: f64, j: Node, i: Node) -> (f64, f64) {
    let m = cfg.service.mean[j.index()];
    let rho_j = cfg.lambda[j.index()] * m;
    let eb = xi_j * m / (1.0 - rho_j);
    let vb = xi_j * (cfg.service.variance[j.index()] + rho_j * m * m) / (1.0 - rho_j).powi(3);
    let li = cfg.lambda[i.index()];
    (li * eb, li * eb + li * li * vb)
}

/// Chebyshev bound on `P(|ξ_i(τ_{n+1}) − E| > ξ_j^{2/3})`.
pub fn chebyshev_bound(cfg: &SimConfig, xi_j: f64, j: Node, i: Node) -> f64 {
    let (_, var) = switch_epoch_moments(cfg, xi_j, j, i);
    var / xi_j.powf(4.0 / 3.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct SwitchEpochReport {
    pub checks: Vec<MomentCheck>,
    /// `(node, empirical exceedance frequency, bound)`.
    pub chebyshev: Vec<(Node, f64, f64)>,
}

impl SwitchEpochReport {
    pub fn chebyshev_respected(&self) -> bool {
        self.chebyshev.iter().all(|(_, f, b)| f <= b)
    }
}

/// Increments over one busy period from `queues` with the server at `node`:
/// means and variances for the other nodes, the total `W` drift and the
/// Chebyshev frequencies.
pub fn switch_epoch_check(
    cfg: &SimConfig,
    queues: [u64; 3],
    node: Node,
    replicas: usize,
    seed: u64,
) -> Result<SwitchEpochReport> {
    let ends = replicate(replicas, |r| {
        let mut s = PollingState::new(queues, node, replica_rng(seed, r));
        run_busy_period(&mut s, cfg, 0)?;
        Ok(s.queues().expect("exact counts"))
    })?;
    let xi_j = queues[node.index()] as f64;
    let kind = kind_name(&cfg.service, node);
    let mut checks = Vec::new();
    let mut chebyshev = Vec::new();
    for i in [node.next(), node.prev()] {
        let xs: Vec<f64> = ends.iter().map(|q| q[i.index()] as f64 - queues[i.index()] as f64).collect();
        let mo = Moments::of(&xs);
        let (mean, var) = switch_epoch_moments(cfg, xi_j, node, i);
        checks.push(mo.mean_check(format!("switch-epoch mean {kind} node {i}"), mean));
        checks.push(mo.variance_check(format!("switch-epoch variance {kind} node {i}"), var));
        let band = xi_j.powf(2.0 / 3.0);
        let freq = xs.iter().filter(|x| (*x - mean).abs() > band).count() as f64 / xs.len() as f64;
        chebyshev.push((i, freq, chebyshev_bound(cfg, xi_j, node, i)));
    }
    let w0: u64 = queues.iter().sum();
    let dw: Vec<f64> = ends.iter().map(|q| q.iter().sum::<u64>() as f64 - w0 as f64).collect();
    let m = cfg.service.mean[node.index()];
    let rho_j = cfg.lambda[node.index()] * m;
    let others: f64 = [node.next(), node.prev()].iter().map(|i| cfg.lambda[i.index()]).sum();
    let expected = xi_j * (others * m / (1.0 - rho_j) - 1.0);
    checks.push(Moments::of(&dw).mean_check(format!("W drift {kind}"), expected));
    Ok(SwitchEpochReport { checks, chebyshev })
}

/// Services `T_c` needed to empty `c` jobs at `node`: mean `c/(1−ρ_j)` and
/// variance `cσ²/(1−ρ_j)³` with `σ²` the variance of the per-service
/// arrival count at that node.
pub fn busy_period_check(cfg: &SimConfig, c: u64, node: Node, replicas: usize, seed: u64) -> Result<Vec<MomentCheck>> {
    let mut queues = [0u64; 3];
    queues[node.index()] = c;
    let counts = replicate(replicas, |r| {
        let mut s = PollingState::new(queues, node, replica_rng(seed, r));
        Ok(run_busy_period(&mut s, cfg, 0)?.services)
    })?;
    let j = node.index();
    let rho = cfg.lambda[j] * cfg.service.mean[j];
    let sigma2 = rho + cfg.lambda[j].powi(2) * cfg.service.variance[j];
    let c = c as f64;
    let mo = Moments::of(&counts);
    let kind = kind_name(&cfg.service, node);
    Ok(vec![
        mo.mean_check(format!("E(T_c) {kind}"), c / (1.0 - rho)),
        mo.variance_check(format!("Var(T_c) {kind}"), c * sigma2 / (1.0 - rho).powi(3)),
    ])
}

/// Exact `95%` Clopper–Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let a = (1.0 - confidence) / 2.0;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 { 0.0 } else { Beta::new(kf, nf - kf + 1.0).expect("shape").inverse_cdf(a) };
    let hi = if k == n { 1.0 } else { Beta::new(kf + 1.0, nf - kf).expect("shape").inverse_cdf(1.0 - a) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureOptions {
    pub epsilon: f64,
    /// Window length as a multiple of the orbit period.
    pub window_periods: usize,
    pub horizon: u64,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        Self { epsilon: 1e-3, window_periods: 3, horizon: 400 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CaptureOutcome {
    Captured { orbit: usize, index: u64 },
    NotCaptured,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub w0: u64,
    pub outcomes: Vec<CaptureOutcome>,
    pub captured: usize,
    pub fraction: f64,
    pub interval: (f64, f64),
    /// Captures per orbit index.
    pub per_orbit: Vec<usize>,
}

/// Orbit points as `(side, x)` in `f64`.
fn orbit_targets(orbits: &[OrbitCertificate]) -> Vec<Vec<(Node, f64)>> {
    orbits.iter().map(|o| o.points.iter().map(|p| (p.side, p.center_f64())).collect()).collect()
}

/// Matches the trailing window against every orbit and phase.
fn matched_orbit(window: &[(Node, f64)], targets: &[Vec<(Node, f64)>], eps: f64) -> Option<usize> {
    targets.iter().position(|pts| {
        let m = pts.len();
        (0..m).any(|phase| {
            window.iter().enumerate().all(|(k, (side, x))| {
                let (ts, tx) = pts[(phase + k) % m];
                ts == *side && (x - tx).abs() < eps
            })
        })
    })
}

/// Starting queues at load `w0` in direction `(side, x)`.
pub fn queues_on_side(w0: u64, side: Node, x: f64) -> [u64; 3] {
    let mut q = [0u64; 3];
    let b = (w0 as f64 * x).round() as u64;
    q[side.prev().index()] = b;
    q[side.next().index()] = w0 - b.min(w0);
    q
}

/// Independent replicas from uniformly sampled boundary directions at load
/// `w0`; a replica is captured once a full window of switch records tracks
/// one orbit within `ε`.
pub fn convergence_experiment(
    cfg: &SimConfig,
    orbits: &[OrbitCertificate],
    w0: u64,
    replicas: usize,
    seed: u64,
    opts: &CaptureOptions,
) -> Result<ConvergenceReport> {
    let targets = orbit_targets(orbits);
    let outcomes = replicate(replicas, |r| {
        let mut rng = replica_rng(seed, r);
        let side = Node::from_index(rand::Rng::random_range(&mut rng, 0..3));
        let x: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
        let mut state = start_state(cfg, queues_on_side(w0, side, x), side, rng);
        Ok(track_capture(&mut state, cfg, &targets, opts)?)
    })?;
    Ok(summarize_capture(w0, outcomes, orbits.len()))
}

fn track_capture(
    state: &mut PollingState,
    cfg: &SimConfig,
    targets: &[Vec<(Node, f64)>],
    opts: &CaptureOptions,
) -> Result<CaptureOutcome> {
    let window = targets.iter().map(|t| t.len()).max().unwrap_or(1) * opts.window_periods;
    let mut recent: Vec<(Node, f64)> = Vec::new();
    let mut outcome = CaptureOutcome::NotCaptured;
    run_switches(state, cfg, opts.horizon, |r| {
        recent.push((r.server, r.zeta_x));
        if recent.len() > window {
            recent.remove(0);
        }
        if recent.len() == window {
            if let Some(orbit) = matched_orbit(&recent, targets, opts.epsilon) {
                outcome = CaptureOutcome::Captured { orbit, index: r.n + 1 - window as u64 };
                return false;
            }
        }
        true
    })?;
    Ok(outcome)
}

fn summarize_capture(w0: u64, outcomes: Vec<CaptureOutcome>, n_orbits: usize) -> ConvergenceReport {
    let mut per_orbit = vec![0usize; n_orbits];
    for o in &outcomes {
        if let CaptureOutcome::Captured { orbit, .. } = o {
            per_orbit[*orbit] += 1;
        }
    }
    let captured = per_orbit.iter().sum();
    let n = outcomes.len();
    ConvergenceReport {
        w0,
        captured,
        fraction: captured as f64 / n.max(1) as f64,
        interval: clopper_pearson(captured, n, 0.95),
        per_orbit,
        outcomes,
    }
}

/// Whether a replica started on orbit point `phase` of `orbit` at load `w0`
/// stays within `ε` of the orbit at every switch of the horizon.
pub fn tracking_run(
    cfg: &SimConfig,
    orbit: &OrbitCertificate,
    w0: u64,
    seed: u64,
    opts: &CaptureOptions,
) -> Result<bool> {
    let pts: Vec<(Node, f64)> = orbit.points.iter().map(|p| (p.side, p.center_f64())).collect();
    let (side, x) = pts[0];
    let mut state = start_state(cfg, queues_on_side(w0, side, x), side, replica_rng(seed, 0));
    let mut k = 1usize;
    let mut ok = true;
    run_switches(&mut state, cfg, opts.horizon, |r| {
        let (ts, tx) = pts[k % pts.len()];
        k += 1;
        ok = r.server == ts && (r.zeta_x - tx).abs() < opts.epsilon;
        ok
    })?;
    Ok(ok)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailClass {
    LockedPeriod3,
    NoShortPeriod,
    Other,
}

/// Smallest `p ≤ max_period` such that the sequence is `p`-periodic.
pub fn shortest_period(seq: &[Node], max_period: usize) -> Option<usize> {
    (1..=max_period.min(seq.len().saturating_sub(1))).find(|&p| (p..seq.len()).all(|k| seq[k] == seq[k - p]))
}

/// Tail classification of the served-node itinerary: the period-3 cycle
/// `1 → 3 → 2`, no period up to `max_period`, or anything else.
pub fn classify_tail(servers: &[Node], max_period: usize, tail: usize) -> TailClass {
    let seq = &servers[servers.len().saturating_sub(tail)..];
    match shortest_period(seq, max_period) {
        None => TailClass::NoShortPeriod,
        Some(3) if seq.windows(2).all(|w| w[1] == w[0].prev()) => TailClass::LockedPeriod3,
        Some(_) => TailClass::Other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailOptions {
    pub w0: u64,
    pub horizon: u64,
    /// Largest period tested by the aperiodicity proxy.
    pub max_period: usize,
    pub tail: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self { w0: 10_000, horizon: 10_000, max_period: 12, tail: 1000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NoZeroOneReport {
    pub replicas: usize,
    pub horizon: u64,
    pub classes: Vec<TailClass>,
    pub locked_period3: usize,
    pub no_short_period: usize,
    pub other: usize,
    pub locked_interval: (f64, f64),
    pub no_short_interval: (f64, f64),
    pub max_period: usize,
    pub tail: usize,
}

/// Classifies the itinerary tails of independent replicas from uniformly
/// sampled boundary directions.
pub fn no_zero_one_experiment(cfg: &SimConfig, replicas: usize, seed: u64, opts: &TailOptions) -> Result<NoZeroOneReport> {
    let classes = replicate(replicas, |r| {
        let mut rng = replica_rng(seed, r);
        let side = Node::from_index(rand::Rng::random_range(&mut rng, 0..3));
        let x: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
        let mut state = start_state(cfg, queues_on_side(opts.w0, side, x), side, rng);
        let mut servers = Vec::with_capacity(opts.horizon as usize);
        run_switches(&mut state, cfg, opts.horizon, |rec| {
            servers.push(rec.server);
            true
        })?;
        Ok(classify_tail(&servers, opts.max_period, opts.tail))
    })?;
    let count = |c: TailClass| classes.iter().filter(|x| **x == c).count();
    let locked = count(TailClass::LockedPeriod3);
    let aperiodic = count(TailClass::NoShortPeriod);
    Ok(NoZeroOneReport {
        replicas,
        horizon: opts.horizon,
        locked_period3: locked,
        no_short_period: aperiodic,
        other: count(TailClass::Other),
        locked_interval: clopper_pearson(locked, replicas, 0.95),
        no_short_interval: clopper_pearson(aperiodic, replicas, 0.95),
        max_period: opts.max_period,
        tail: opts.tail,
        classes,
    })
}

impl NoZeroOneReport {
    pub fn to_text(&self) -> String {
        format!(
            "replicas {}\nhorizon {}\nlocked_period3 {} [{:.4}, {:.4}]\nno_short_period {} [{:.4}, {:.4}] (proxy: no period <= {} over the last {} switches)\nother {}\n",
            self.replicas,
            self.horizon,
            self.locked_period3,
            self.locked_interval.0,
            self.locked_interval.1,
            self.no_short_period,
            self.no_short_interval.0,
            self.no_short_interval.1,
            self.max_period,
            self.tail,
            self.other
        )
    }
}

impl ConvergenceReport {
    pub fn to_text(&self) -> String {
        format!(
            "w0 {}\nreplicas {}\ncaptured {} fraction {:.4} [{:.4}, {:.4}]\nper_orbit {:?}\n",
            self.w0,
            self.outcomes.len(),
            self.captured,
            self.fraction,
            self.interval.0,
            self.interval.1,
            self.per_orbit
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_known_values() {
        let (lo, hi) = clopper_pearson(0, 10, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.308_5).abs() < 1e-3);
        let (lo, hi) = clopper_pearson(5, 10, 0.95);
        assert!((lo - 0.187_1).abs() < 1e-3 && (hi - 0.812_9).abs() < 1e-3);
    }

    #[test]
    fn tail_classes() {
        use Node::*;
        let locked: Vec<Node> = [N1, N3, N2].iter().cycle().take(60).copied().collect();
        assert_eq!(classify_tail(&locked, 12, 30), TailClass::LockedPeriod3);
        let other: Vec<Node> = [N1, N2, N3].iter().cycle().take(60).copied().collect();
        assert_eq!(classify_tail(&other, 12, 30), TailClass::Other);
        let mixed: Vec<Node> = (0..200).map(|k| if (k * k) % 7 < 3 { N1 } else { N2 }).collect();
        assert_eq!(shortest_period(&mixed, 12), Some(7));
    }
}
