//! Experiment configuration files (TOML). Unknown keys are rejected and
//! every tolerance or budget has a documented default here.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dynamics::BranchPolicy;
use crate::error::{Error, Result};
use crate::experiments::{CaptureOptions, TailOptions};
use crate::nonstable::{build_nonstable_with, Alpha, DEFAULT_STREAM_QUADRUPLES};
use crate::num::{decimal_string, parse_rational, to_f64, Q};
use crate::orbit::{BasinOptions, EngineOptions};
use crate::params::{validate_params, DecisionPoints, SystemParams};
use crate::sim::{BusyMode, Rule, ServiceKind, ServiceModel, SimConfig};
use crate::symbolic::{decode, BitCode, DEFAULT_COMPARE_CAP};

/// A rational given as a string (`"9/20"`, `"0.45"`, `"1e-30"`), an integer
/// or a decimal float literal.
#[derive(Clone, Debug, PartialEq)]
pub struct Rational(pub Q);

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(de)? {
            Raw::Int(i) => i.to_string(),
            Raw::Float(f) => format!("{f}"),
            Raw::Text(s) => s,
        };
        parse_rational(&text).map(Rational).map_err(serde::de::Error::custom)
    }
}

fn qs(v: &[Rational; 3]) -> [Q; 3] {
    std::array::from_fn(|i| v[i].0.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentTag {
    Orbits,
    Sweep,
    Simulate,
    Convergence,
    NoZeroOne,
    Moments,
    Nonstable,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentTag>,
    #[serde(default)]
    pub seed: u64,
    pub params: ParamsBlock,
    #[serde(default)]
    pub rule: RuleBlock,
    #[serde(default)]
    pub engine: EngineBlock,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    /// Either `lambda` (with `mu`) or `rho` (with unit service rates).
    pub lambda: Option<[Rational; 3]>,
    pub rho: Option<[Rational; 3]>,
    pub mu: Option<[Rational; 3]>,
    pub service_variance: Option<[Rational; 3]>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBlock {
    pub decision_points: Option<[Rational; 3]>,
    /// `weights[j][i] = b_ji`; diagonal entries are ignored.
    pub weights: Option<[[Rational; 3]; 3]>,
    /// Bit codes per side, decoded to numeric decision points.
    pub codes: Option<[String; 3]>,
    pub nonstable: Option<NonstableBlock>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonstableBlock {
    #[serde(default = "default_alpha")]
    pub alpha: String,
    #[serde(default = "default_beta")]
    pub beta: Rational,
    #[serde(default = "default_quadruples")]
    pub quadruples: usize,
    /// Length of the extended-legitimacy check in quadruples.
    #[serde(default = "default_legitimacy")]
    pub legitimacy_quadruples: usize,
    /// Depth of the pre-image verification and of the interval classification.
    #[serde(default = "default_preimage_depth")]
    pub preimage_depth: usize,
    #[serde(default = "default_classify_depth")]
    pub classify_depth: usize,
}

fn default_alpha() -> String {
    "sqrt2".into()
}
fn default_beta() -> Rational {
    Rational(Q::from_integer(0.into()))
}
fn default_quadruples() -> usize {
    DEFAULT_STREAM_QUADRUPLES
}
fn default_legitimacy() -> usize {
    10_000
}
fn default_preimage_depth() -> usize {
    40_000
}
fn default_classify_depth() -> usize {
    12
}

impl Default for NonstableBlock {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            quadruples: default_quadruples(),
            legitimacy_quadruples: default_legitimacy(),
            preimage_depth: default_preimage_depth(),
            classify_depth: default_classify_depth(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineBlock {
    pub t_max: usize,
    pub width: Rational,
    pub max_orbits: usize,
    pub basin_grid: usize,
    pub basin_budget: u64,
    pub basin_tolerance: f64,
    pub round_bits: u32,
    pub branch_policy: String,
    pub compare_cap: usize,
    /// Decimal digits of exact values in reports.
    pub digits: usize,
}

impl Default for EngineBlock {
    fn default() -> Self {
        Self {
            t_max: 200,
            width: Rational(crate::num::ten_pow_neg(30)),
            max_orbits: 4,
            basin_grid: 300,
            basin_budget: 100_000,
            basin_tolerance: 1e-12,
            round_bits: 128,
            branch_policy: "lower".into(),
            compare_cap: DEFAULT_COMPARE_CAP,
            digits: 40,
        }
    }
}

impl EngineBlock {
    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions { t_max: self.t_max, width: self.width.0.clone(), max_orbits: self.max_orbits }
    }

    pub fn basin_options(&self) -> Result<BasinOptions> {
        let policy = match self.branch_policy.as_str() {
            "lower" => BranchPolicy::Lower,
            "upper" => BranchPolicy::Upper,
            "error" => BranchPolicy::Error,
            other => return Err(Error::Config(format!("unknown branch_policy {other:?}"))),
        };
        Ok(BasinOptions {
            tolerance: self.basin_tolerance,
            budget: self.basin_budget,
            round_bits: self.round_bits,
            policy,
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub service: ServiceKind,
    pub mode: BusyMode,
    pub budget: u64,
    pub replicas: usize,
    pub switches: u64,
    pub initial: [u64; 3],
    /// One-based node whose queue was just emptied (or that is served first).
    pub initial_node: u8,
    pub w0: Vec<u64>,
    pub epsilon: f64,
    pub window_periods: usize,
    pub capture_horizon: u64,
    pub tail_horizon: u64,
    pub tail: usize,
    pub max_period: usize,
    pub tail_w0: u64,
    /// Control decision points for the aperiodicity experiment.
    pub control: Option<[Rational; 3]>,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            service: ServiceKind::Exponential,
            mode: BusyMode::Generations,
            budget: 1 << 40,
            replicas: 200,
            switches: 1000,
            initial: [1000, 500, 200],
            initial_node: 1,
            w0: vec![1000, 10_000, 100_000],
            epsilon: 1e-3,
            window_periods: 3,
            capture_horizon: 400,
            tail_horizon: 10_000,
            tail: 1000,
            max_period: 12,
            tail_w0: 10_000,
            control: None,
        }
    }
}

impl SimulationBlock {
    pub fn capture_options(&self) -> CaptureOptions {
        CaptureOptions { epsilon: self.epsilon, window_periods: self.window_periods, horizon: self.capture_horizon }
    }

    pub fn tail_options(&self) -> TailOptions {
        TailOptions { w0: self.tail_w0, horizon: self.tail_horizon, max_period: self.max_period, tail: self.tail }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    /// Stop after this many configurations with a finite certificate.
    pub finite_configurations: usize,
    /// Hard cap on the number of sampled configurations.
    pub max_samples: usize,
    pub rho_min: Rational,
    pub rho_max: Rational,
    /// Grid resolution of sampled loads and decision points.
    pub denominator: i64,
    pub batch: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            finite_configurations: 1000,
            max_samples: 20_000,
            rho_min: Rational(crate::num::q(1, 10)),
            rho_max: Rational(crate::num::q(19, 20)),
            denominator: 1000,
            batch: 256,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

/// Rule resolved to exact decision points (when available) and numeric
/// thresholds for simulation.
#[derive(Clone, Debug)]
pub struct ResolvedRule {
    pub exact: Option<DecisionPoints>,
    pub codes: Option<[BitCode; 3]>,
    pub numeric: [f64; 3],
    pub weights: Option<[[f64; 3]; 3]>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let one = || Q::from_integer(1.into());
        let mu = self.params.mu.as_ref().map(qs).unwrap_or_else(|| [one(), one(), one()]);
        let lambda = match (&self.params.lambda, &self.params.rho) {
            (Some(l), None) => qs(l),
            (None, Some(r)) => {
                let r = qs(r);
                std::array::from_fn(|i| &r[i] * &mu[i])
            }
            _ => return Err(Error::Config("give exactly one of params.lambda and params.rho".into())),
        };
        let sigma2 = match &self.params.service_variance {
            Some(v) => qs(v),
            None => std::array::from_fn(|i| one() / (&mu[i] * &mu[i])),
        };
        validate_params(lambda, mu, sigma2)
    }

    /// Decision points in the frame of `params`.
    pub fn resolve_rule(&self, params: &SystemParams) -> Result<ResolvedRule> {
        let r = &self.rule;
        let given = [r.decision_points.is_some(), r.weights.is_some(), r.codes.is_some(), r.nonstable.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(Error::Config(
                "give exactly one of rule.decision_points, rule.weights, rule.codes, rule.nonstable".into(),
            ));
        }
        if let Some(d) = &r.decision_points {
            let d = DecisionPoints::new(qs(d))?;
            let numeric = std::array::from_fn(|i| to_f64(&d.d[i]));
            return Ok(ResolvedRule { exact: Some(d), codes: None, numeric, weights: None });
        }
        if let Some(w) = &r.weights {
            let wq: [[Q; 3]; 3] = std::array::from_fn(|j| qs(&w[j]));
            let d = DecisionPoints::from_weights(&wq)?;
            let numeric = std::array::from_fn(|i| to_f64(&d.d[i]));
            let weights = std::array::from_fn(|j| std::array::from_fn(|i| to_f64(&wq[j][i])));
            return Ok(ResolvedRule { exact: Some(d), codes: None, numeric, weights: Some(weights) });
        }
        let codes = if let Some(texts) = &r.codes {
            let mut out = Vec::with_capacity(3);
            for t in texts {
                out.push(BitCode::parse(t)?);
            }
            [out[0].clone(), out[1].clone(), out[2].clone()]
        } else {
            let b = r.nonstable.as_ref().expect("checked above");
            build_nonstable_with(&Alpha::parse(&b.alpha)?, &b.beta.0, b.quadruples)?
        };
        for (i, c) in codes.iter().enumerate() {
            if c.side.index() != i {
                return Err(Error::Config(format!("code {} must lie on side {}", c, i + 1)));
            }
        }
        let precision = crate::num::ten_pow_neg(40);
        let mut numeric = [0.0; 3];
        for (i, c) in codes.iter().enumerate() {
            numeric[i] = decode(c, params, &precision)?.center_f64();
        }
        Ok(ResolvedRule { exact: None, codes: Some(codes), numeric, weights: None })
    }

    pub fn sim_config(&self, params: &SystemParams, rule: &ResolvedRule) -> Result<SimConfig> {
        let lambda = params.lambda.clone().map(|x| to_f64(&x));
        let mu = params.mu.clone().map(|x| to_f64(&x));
        let var = params.service_variance.clone().map(|x| to_f64(&x));
        let service = ServiceModel::of_kind(self.simulation.service, mu, var)?;
        let rule = match rule.weights {
            Some(w) => Rule::Weights(w),
            None => Rule::Thresholds(rule.numeric),
        };
        Ok(SimConfig { lambda, service, rule, mode: self.simulation.mode, budget: self.simulation.budget })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Human-readable summary printed by `validate`.
pub fn describe(cfg: &ExperimentConfig, params: &SystemParams, rule: &ResolvedRule, digits: usize) -> String {
    let mut s = String::new();
    let show = |v: &[Q; 3]| v.iter().map(|x| decimal_string(x, digits.min(12))).collect::<Vec<_>>().join(", ");
    s.push_str(&format!("experiment {:?}\nseed {}\n", cfg.experiment, cfg.seed));
    s.push_str(&format!("lambda [{}]\nmu [{}]\nrho [{}]\n", show(&params.lambda), show(&params.mu), show(&params.rho)));
    s.push_str(&format!("theta [{}]\n", show(&params.theta)));
    match (&rule.exact, &rule.codes) {
        (Some(d), _) => s.push_str(&format!("decision points [{}]\n", show(&d.d))),
        (None, Some(c)) => {
            s.push_str(&format!("codes [{}, {}, {}]\n", c[0], c[1], c[2]));
            s.push_str(&format!("decoded [{:.15}, {:.15}, {:.15}]\n", rule.numeric[0], rule.numeric[1], rule.numeric[2]));
        }
        _ => {}
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_symmetric_config() {
        let cfg = ExperimentConfig::parse(
            "experiment = \"orbits\"\nseed = 3\n[params]\nrho = [\"9/20\", 0.45, \"0.45\"]\n[rule]\ndecision_points = [\"1/2\", \"1/2\", \"1/2\"]\n",
        )
        .unwrap();
        let p = cfg.system_params().unwrap();
        assert_eq!(p.rho[1], crate::num::q(9, 20));
        let r = cfg.resolve_rule(&p).unwrap();
        assert_eq!(r.numeric, [0.5; 3]);
    }

    #[test]
    fn rejects_unknown_keys() {
        let e = ExperimentConfig::parse("[params]\nrho = [1, 1, 1]\nbogus = 2\n");
        assert!(matches!(e, Err(Error::Config(_))));
        let cfg = ExperimentConfig::parse("[params]\nrho = [\"9/20\", \"9/20\", \"9/20\"]\n[rule]\n").unwrap();
        let p = cfg.system_params().unwrap();
        assert!(matches!(cfg.resolve_rule(&p), Err(Error::Config(_))));
    }
}
