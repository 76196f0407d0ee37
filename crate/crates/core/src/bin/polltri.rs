use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use polltri::config::{describe, ExperimentConfig, ExperimentTag};
use polltri::error::Error;
use polltri::experiments::{
    busy_period_check, convergence_experiment, drift_check, no_zero_one_experiment, switch_epoch_check, MomentCheck,
};
use polltri::export::{atlas, atlas_json, basin_csv, orbits_csv};
use polltri::intervals::{escape_certificate, EscapeCertificate};
use polltri::node::Node;
use polltri::nonstable::{
    classify_intervals, extended_legitimacy_check, staircase, symbolic_chain, verify_infinite_preimages, Alpha,
};
use polltri::num::to_f64;
use polltri::orbit::{basin_sample, find_orbits, preimage_tree};
use polltri::params::{reweight, DecisionPoints, SystemParams};
use polltri::plot::{parse_plot_input, render_svg, PlotData};
use polltri::sim::{record_csv_row, records_csv_header, replica_rng, run_switches, start_state};
use polltri::sweep::run_sweep;

const EXIT_USAGE: u8 = 2;
const EXIT_ENGINE: u8 = 3;
const EXIT_ASSERTION: u8 = 4;
const EXIT_UNDECIDED: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "polltri", version, about = "Triangle-process orbits and three-queue polling simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and check a configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Escape certificate, orbit atlas and basins.
    Orbits {
        #[command(flatten)]
        common: Common,
        /// Largest `t` tried by the escape certificate.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Random sweep with the orbit-count assertion.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Stochastic runs: switch records or one of the experiments.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Symbolic construction of decision points with infinitely many pre-images.
    Nonstable {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// SVG of a trajectory, orbit or run CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse(_) => EXIT_USAGE,
            Error::AssertionTriggered(_) => EXIT_ASSERTION,
            _ => EXIT_ENGINE,
        };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        match error.downcast::<Error>() {
            Ok(e) => e.into(),
            Err(error) => Failure { code: EXIT_ENGINE, error },
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Orbits { common, depth } => with_pool(&common, || cmd_orbits(&common, depth)),
        Command::Sweep { common } => with_pool(&common, || cmd_sweep(&common)),
        Command::Simulate { common, replicas } => with_pool(&common, || cmd_simulate(&common, replicas)),
        Command::Nonstable { common, depth } => with_pool(&common, || cmd_nonstable(&common, depth)),
        Command::Plot { input, config, out } => cmd_plot(&input, config.as_deref(), &out),
    }
}

fn with_pool(common: &Common, f: impl FnOnce() -> Outcome + Send) -> Outcome {
    match common.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Failure { code: EXIT_USAGE, error: e.into() })?;
            pool.install(f)
        }
        None => f(),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Failure { code: EXIT_USAGE, error: anyhow::Error::new(io).context(format!("reading {}", path.display())) },
        other => other.into(),
    })
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_validate(config: &Path) -> Outcome {
    let cfg = load(config)?;
    let params = cfg.system_params()?;
    let rule = cfg.resolve_rule(&params)?;
    cfg.engine.basin_options()?;
    print!("{}", describe(&cfg, &params, &rule, cfg.engine.digits));
    println!("valid");
    Ok(0)
}

/// Normalized parameters and decision points for the exact engine.
fn normalized_frame(params: &SystemParams, d: &DecisionPoints) -> (SystemParams, DecisionPoints, Option<Vec<String>>) {
    if params.is_normalized() {
        return (params.clone(), d.clone(), None);
    }
    let (p, d, t) = reweight(params, d);
    (p, d, Some(t.alpha.iter().map(|a| a.to_string()).collect()))
}

fn cmd_orbits(common: &Common, depth: Option<usize>) -> Outcome {
    let cfg = load(&common.config)?;
    let params = cfg.system_params()?;
    let rule = cfg.resolve_rule(&params)?;
    let dir = out_dir(common, &cfg)?;
    let mut engine = cfg.engine.engine_options();
    if let Some(t) = depth {
        engine.t_max = t;
    }
    let decoded;
    let exact = match (&rule.exact, &rule.codes) {
        (Some(d), _) => d,
        (None, Some(codes)) => {
            // Rational approximations of the coded points, far below the scale
            // the certificate can resolve within `t_max` steps.
            let precision = polltri::num::ten_pow_neg(120);
            let mut xs = Vec::with_capacity(3);
            for c in codes {
                xs.push(polltri::symbolic::decode(c, &params, &precision)?.center());
            }
            decoded = DecisionPoints::new([xs[0].clone(), xs[1].clone(), xs[2].clone()])?;
            &decoded
        }
        _ => unreachable!("rules resolve to exact points or codes"),
    };
    let (p, d, alpha) = normalized_frame(&params, exact);
    let certificate = escape_certificate(&p, &d, engine.t_max)?;
    let digits = cfg.engine.digits;
    if certificate == EscapeCertificate::Undecided {
        let doc = atlas(&p, &d, alpha, certificate, None, &[], &[], digits);
        write(&dir.join("atlas.json"), &atlas_json(&doc))?;
        println!("certificate undecided at t_max = {}", engine.t_max);
        return Ok(EXIT_UNDECIDED);
    }
    let EscapeCertificate::FiniteP(t0) = certificate else { unreachable!() };
    let tree = preimage_tree(&p, &d, t0 + 1)?;
    let orbits = find_orbits(&p, &d, &engine)?;
    let basin = basin_sample(&p, &d, &orbits, cfg.engine.basin_grid, &cfg.engine.basin_options()?)?;
    let doc = atlas(&p, &d, alpha, certificate, Some(&tree), &orbits, &basin, digits);
    write(&dir.join("atlas.json"), &atlas_json(&doc))?;
    write(&dir.join("orbits.csv"), &orbits_csv(&orbits, digits))?;
    write(&dir.join("basin.csv"), &basin_csv(&basin))?;
    println!("certificate finite t0 = {t0}");
    for o in &doc.orbits {
        let cyc: Vec<String> = o.node_cycle.iter().map(u8::to_string).collect();
        println!("orbit {} period {} cycle {} {:?} basin {}", o.id, o.period, cyc.join("-"), o.stability, o.basin_count);
    }
    println!("unassigned {}", doc.unassigned);
    Ok(0)
}

fn cmd_sweep(common: &Common) -> Outcome {
    let cfg = load(&common.config)?;
    let dir = out_dir(common, &cfg)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let sw = &cfg.sweep;
    let opts = cfg.engine.engine_options();
    let report = match run_sweep(
        seed,
        sw.finite_configurations,
        sw.max_samples,
        (&sw.rho_min.0, &sw.rho_max.0),
        sw.denominator,
        sw.batch,
        &opts,
    ) {
        Err(Error::AssertionTriggered(text)) => {
            write(&dir.join("reproducer.toml"), &text)?;
            return Err(Failure {
                code: EXIT_ASSERTION,
                error: anyhow::anyhow!("more than {} orbits; reproducer written to {}", opts.max_orbits, dir.join("reproducer.toml").display()),
            });
        }
        other => other?,
    };
    write(&dir.join("sweep.csv"), &report.to_csv())?;
    write(&dir.join("sweep.txt"), &report.summary())?;
    print!("{}", report.summary());
    Ok(0)
}

fn moment_lines(checks: &[MomentCheck]) -> String {
    checks
        .iter()
        .map(|c| {
            format!(
                "{}: expected {:.6} observed {:.6} se {:.6} z {:.3}\n",
                c.name,
                c.expected,
                c.observed,
                c.standard_error,
                c.z_score()
            )
        })
        .collect()
}

fn cmd_simulate(common: &Common, replicas: Option<usize>) -> Outcome {
    let cfg = load(&common.config)?;
    let params = cfg.system_params()?;
    let rule = cfg.resolve_rule(&params)?;
    let sim = cfg.sim_config(&params, &rule)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let s = &cfg.simulation;
    let replicas = replicas.unwrap_or(s.replicas);
    let node = Node::from_label(s.initial_node).ok_or_else(|| Error::Config("initial_node must be 1, 2 or 3".into()))?;
    match cfg.experiment.unwrap_or(ExperimentTag::Simulate) {
        ExperimentTag::Convergence => {
            let exact = rule.exact.as_ref().ok_or_else(|| Error::Config("convergence needs exact decision points".into()))?;
            let (p, d, _) = normalized_frame(&params, exact);
            let orbits = find_orbits(&p, &d, &cfg.engine.engine_options())?;
            let mut text = String::new();
            for &w0 in &s.w0 {
                let r = convergence_experiment(&sim, &orbits, w0, replicas, seed, &s.capture_options())?;
                text.push_str(&r.to_text());
            }
            emit(common, &cfg, "convergence.txt", &text)?;
        }
        ExperimentTag::NoZeroOne => {
            let r = no_zero_one_experiment(&sim, replicas, seed, &s.tail_options())?;
            let mut text = format!("decision points [{:.15}, {:.15}, {:.15}]\n", rule.numeric[0], rule.numeric[1], rule.numeric[2]);
            text.push_str(&r.to_text());
            if let Some(c) = &s.control {
                let mut control = sim.clone();
                control.rule = polltri::sim::Rule::Thresholds(std::array::from_fn(|i| to_f64(&c[i].0)));
                let rc = no_zero_one_experiment(&control, replicas, seed, &s.tail_options())?;
                text.push_str("control\n");
                text.push_str(&rc.to_text());
            }
            emit(common, &cfg, "no_zero_one.txt", &text)?;
        }
        ExperimentTag::Moments => {
            let mut text = String::new();
            text.push_str(&moment_lines(&drift_check(&sim, s.initial, node, replicas, seed)?));
            let r = switch_epoch_check(&sim, s.initial, node, replicas, seed)?;
            text.push_str(&moment_lines(&r.checks));
            for (i, f, b) in &r.chebyshev {
                text.push_str(&format!("chebyshev node {i}: frequency {f:.6} bound {b:.6}\n"));
            }
            text.push_str(&moment_lines(&busy_period_check(&sim, s.initial[node.index()], node, replicas, seed)?));
            emit(common, &cfg, "moments.txt", &text)?;
        }
        _ => {
            let rows: Vec<String> = (0..replicas as u64)
                .into_par_iter()
                .map(|r| {
                    let mut state = start_state(&sim, s.initial, node, replica_rng(seed, r));
                    let mut rows = Vec::new();
                    run_switches(&mut state, &sim, s.switches, |rec| {
                        rows.push(record_csv_row(r, rec));
                        true
                    })?;
                    Ok(rows.join("\n"))
                })
                .collect::<Result<_, Error>>()?;
            let mut text = String::from(records_csv_header());
            text.push('\n');
            for r in rows.iter().filter(|r| !r.is_empty()) {
                text.push_str(r);
                text.push('\n');
            }
            let path = match &common.out {
                Some(p) if p.extension().is_some() => p.clone(),
                _ => out_dir(common, &cfg)?.join("runs.csv"),
            };
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(Error::from)?;
            }
            write(&path, &text)?;
            println!("wrote {} switch records to {}", replicas as u64 * s.switches, path.display());
        }
    }
    Ok(0)
}

fn emit(common: &Common, cfg: &ExperimentConfig, name: &str, text: &str) -> anyhow::Result<()> {
    let path = match &common.out {
        Some(p) if p.extension().is_some() => p.clone(),
        _ => out_dir(common, cfg)?.join(name),
    };
    write(&path, text)?;
    print!("{text}");
    Ok(())
}

fn cmd_nonstable(common: &Common, depth: Option<usize>) -> Outcome {
    let cfg = load(&common.config)?;
    let params = cfg.system_params()?;
    let rule = cfg.resolve_rule(&params)?;
    let dir = out_dir(common, &cfg)?;
    let codes = rule.codes.clone().ok_or_else(|| Error::Config("nonstable needs rule.codes or rule.nonstable".into()))?;
    let block = cfg.rule.nonstable.clone().unwrap_or_default();
    let mut text = String::new();
    text.push_str(&format!("d1 {}\nd2 {}\nd3 {}\n", codes[0], codes[1], codes[2]));
    if cfg.rule.nonstable.is_some() {
        let alpha = Alpha::parse(&block.alpha)?;
        let y = staircase(&alpha, &block.beta.0, 4 * block.legitimacy_quadruples)?;
        let r = extended_legitimacy_check(&y, block.legitimacy_quadruples);
        text.push_str(&format!(
            "extended legitimacy to {}: {}{}\n",
            block.legitimacy_quadruples,
            if r.pass { "pass" } else { "fail" },
            r.first_failure.map(|t| format!(" at {t}")).unwrap_or_default()
        ));
    }
    let depth = depth.unwrap_or(block.preimage_depth);
    let pre = verify_infinite_preimages(&codes, depth);
    text.push_str(&format!(
        "legitimate pre-images of d1 to depth {depth}: {}{}\n",
        if pre.pass { "pass" } else { "fail" },
        pre.first_failure.map(|t| format!(" at {t}")).unwrap_or_default()
    ));
    for (k, c) in codes.iter().enumerate().skip(1) {
        let chain = symbolic_chain(c, &codes, 4096)?;
        let last = chain.last().expect("chain holds its root");
        text.push_str(&format!("d{} chain length {} ending at {}\n", k + 1, chain.len() - 1, last));
    }
    let cls = classify_intervals(&params, &codes, block.classify_depth)?;
    text.push_str(&format!(
        "intervals at depth {}: periodic {} semi-periodic {} aperiodic {} delta {:.6e}\n",
        cls.depth,
        cls.periodic.len(),
        cls.semi_periodic.len(),
        cls.aperiodic.len(),
        cls.delta
    ));
    text.push_str(&format!(
        "decoded decision points [{:.15}, {:.15}, {:.15}]\n",
        rule.numeric[0], rule.numeric[1], rule.numeric[2]
    ));
    write(&dir.join("nonstable.txt"), &text)?;
    print!("{text}");
    Ok(0)
}

fn cmd_plot(input: &Path, config: Option<&Path>, out: &Path) -> Outcome {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))
        .map_err(|e| Failure { code: EXIT_USAGE, error: e })?;
    let mut data: PlotData = parse_plot_input(&text)?;
    if let Some(c) = config {
        let cfg = load(c)?;
        let params = cfg.system_params()?;
        let rule = cfg.resolve_rule(&params)?;
        data.decision_points = Some(rule.numeric);
        if params.is_normalized() {
            let g = polltri::params::geometry(&params)?;
            data.foci = Some(g.foci.clone().map(|f| f.map(|x| to_f64(&x))));
        }
    }
    data.title = input.file_name().map(|n| n.to_string_lossy().into_owned());
    write(out, &render_svg(&data))?;
    Ok(0)
}
