use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use polltri::dynamics::{forward_map as forward, trajectory as run_trajectory, BranchPolicy};
use polltri::error::Error;
use polltri::intervals::{escape_certificate as escape, EscapeCertificate};
use polltri::node::Node;
use polltri::nonstable::{build_nonstable, staircase as build_staircase, verify_infinite_preimages, Alpha};
use polltri::num::{parse_rational, Q};
use polltri::orbit::{find_orbits as engine_find_orbits, EngineOptions, Stability};
use polltri::params::{BoundaryPoint, DecisionPoints, SystemParams};
use polltri::sim::{simulate as run_simulation, BusyMode, Rule, ServiceKind, ServiceModel, SimConfig};
use polltri::symbolic::{decode as decode_code, BitCode};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rational(s: &str) -> PyResult<Q> {
    parse_rational(s).map_err(err)
}

fn triple(v: [String; 3]) -> PyResult<[Q; 3]> {
    Ok([rational(&v[0])?, rational(&v[1])?, rational(&v[2])?])
}

fn node(label: u8) -> PyResult<Node> {
    Node::from_label(label).ok_or_else(|| PyValueError::new_err(format!("node label must be 1, 2 or 3, got {label}")))
}

fn setup(rho: [String; 3], d: [String; 3]) -> PyResult<(SystemParams, DecisionPoints)> {
    let p = SystemParams::normalized_loads(triple(rho)?).map_err(err)?;
    let d = DecisionPoints::new(triple(d)?).map_err(err)?;
    Ok((p, d))
}

/// A certified periodic orbit of the triangle process.
#[pyclass(frozen, get_all)]
struct Orbit {
    period: usize,
    node_cycle: Vec<u8>,
    sides: Vec<u8>,
    /// `(lo, hi)` enclosures as rational strings.
    enclosures: Vec<(String, String)>,
    centers: Vec<f64>,
    contraction: f64,
    stability: String,
}

#[pymethods]
impl Orbit {
    fn __repr__(&self) -> String {
        format!("Orbit(period={}, node_cycle={:?}, stability={:?})", self.period, self.node_cycle, self.stability)
    }
}

/// First `t` with every decision point outside `A^t`, or `None`.
#[pyfunction]
#[pyo3(signature = (rho, d, t_max = 200))]
fn escape_certificate(rho: [String; 3], d: [String; 3], t_max: usize) -> PyResult<Option<usize>> {
    let (p, d) = setup(rho, d)?;
    Ok(match escape(&p, &d, t_max).map_err(err)? {
        EscapeCertificate::FiniteP(t) => Some(t),
        EscapeCertificate::Undecided => None,
    })
}

#[pyfunction]
#[pyo3(signature = (rho, d, t_max = 200))]
fn find_orbits(rho: [String; 3], d: [String; 3], t_max: usize) -> PyResult<Vec<Orbit>> {
    let (p, d) = setup(rho, d)?;
    let opts = EngineOptions { t_max, ..EngineOptions::default() };
    let orbits = engine_find_orbits(&p, &d, &opts).map_err(err)?;
    Ok(orbits
        .into_iter()
        .map(|o| Orbit {
            period: o.period(),
            node_cycle: o.node_cycle.iter().map(|n| n.label()).collect(),
            sides: o.points.iter().map(|p| p.side.label()).collect(),
            enclosures: o.points.iter().map(|p| (p.lo.to_string(), p.hi.to_string())).collect(),
            centers: o.points.iter().map(|p| p.center_f64()).collect(),
            contraction: o.contraction,
            stability: match o.stability {
                Stability::Stable => "stable",
                Stability::OneSided => "one-sided",
                Stability::Unstable => "unstable",
            }
            .to_string(),
        })
        .collect())
}

/// `f_j` applied to `(side, x)`; returns the image coordinate as a rational string.
#[pyfunction]
fn forward_map(rho: [String; 3], j: u8, side: u8, x: &str) -> PyResult<String> {
    let p = SystemParams::normalized_loads(triple(rho)?).map_err(err)?;
    let z = BoundaryPoint::new(node(side)?, rational(x)?).map_err(err)?;
    Ok(forward(&p, node(j)?, &z).map_err(err)?.x.to_string())
}

/// `n` steps of the triangle process as `(side, x)` pairs, taking the lower
/// branch on decision points.
#[pyfunction]
fn trajectory(rho: [String; 3], d: [String; 3], side: u8, x: &str, n: usize) -> PyResult<Vec<(u8, String)>> {
    let (p, d) = setup(rho, d)?;
    let z = BoundaryPoint::new(node(side)?, rational(x)?).map_err(err)?;
    let t = run_trajectory(&p, &d, &z, n, BranchPolicy::Lower).map_err(err)?;
    Ok(t.points.iter().map(|p| (p.side.label(), p.x.to_string())).collect())
}

/// Enclosure `(side, lo, hi)` of the point with bit code `code`.
#[pyfunction]
#[pyo3(signature = (code, rho, precision = "1e-30"))]
fn decode(code: &str, rho: [String; 3], precision: &str) -> PyResult<(u8, String, String)> {
    let p = SystemParams::normalized_loads(triple(rho)?).map_err(err)?;
    let c = BitCode::parse(code).map_err(err)?;
    let e = decode_code(&c, &p, &rational(precision)?).map_err(err)?;
    Ok((e.side.label(), e.lo.to_string(), e.hi.to_string()))
}

/// The q/r quadruple letters of the staircase sequence.
#[pyfunction]
#[pyo3(signature = (alpha, n, beta = "0"))]
fn staircase(alpha: &str, n: usize, beta: &str) -> PyResult<String> {
    let a = Alpha::parse(alpha).map_err(err)?;
    Ok(build_staircase(&a, &rational(beta)?, n).map_err(err)?.letters())
}

/// Whether the staircase decision point keeps legitimate pre-images to `depth`.
#[pyfunction]
#[pyo3(signature = (alpha = "sqrt2", depth = 1000))]
fn nonstable_preimages(alpha: &str, depth: usize) -> PyResult<bool> {
    let codes = build_nonstable(&Alpha::parse(alpha).map_err(err)?).map_err(err)?;
    Ok(verify_infinite_preimages(&codes, depth).pass)
}

/// Switch records of one replica as `(server, zeta_x, log_total)` tuples.
#[pyfunction]
#[pyo3(signature = (rates, d, queues, node_label, n_switches, seed, replica = 0, service = "exponential"))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    rates: [f64; 3],
    d: [f64; 3],
    queues: [u64; 3],
    node_label: u8,
    n_switches: u64,
    seed: u64,
    replica: u64,
    service: &str,
) -> PyResult<Vec<(u8, f64, f64)>> {
    let kind = match service {
        "exponential" => ServiceKind::Exponential,
        "deterministic" => ServiceKind::Deterministic,
        "gamma" => ServiceKind::Gamma,
        other => return Err(PyValueError::new_err(format!("unknown service model {other:?}"))),
    };
    let model = ServiceModel::of_kind(kind, [1.0; 3], [0.5; 3]).map_err(err)?;
    let cfg = SimConfig { lambda: rates, service: model, rule: Rule::Thresholds(d), mode: BusyMode::Generations, budget: 1 << 40 };
    let recs = run_simulation(&cfg, queues, node(node_label)?, n_switches, seed, replica).map_err(err)?;
    Ok(recs.iter().map(|r| (r.server.label(), r.zeta_x, r.total.ln())).collect())
}

#[pymodule]
fn polltri_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Orbit>()?;
    m.add_function(wrap_pyfunction!(escape_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(find_orbits, m)?)?;
    m.add_function(wrap_pyfunction!(forward_map, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(staircase, m)?)?;
    m.add_function(wrap_pyfunction!(nonstable_preimages, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
