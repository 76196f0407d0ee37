//! Orbit atlas documents and CSV tables.

use std::fmt::Write as _;

use serde::Serialize;

use crate::intervals::EscapeCertificate;
use crate::num::{decimal_string, Q};
use crate::orbit::{BasinEntry, OrbitCertificate, PreImageTree, Stability};
use crate::params::{DecisionPoints, SystemParams};

#[derive(Clone, Debug, Serialize)]
pub struct ExactValue {
    pub rational: String,
    pub decimal: String,
}

impl ExactValue {
    pub fn new(x: &Q, digits: usize) -> Self {
        Self { rational: x.to_string(), decimal: decimal_string(x, digits) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AtlasPoint {
    pub side: u8,
    pub lo: ExactValue,
    pub hi: ExactValue,
    pub center: String,
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AtlasOrbit {
    pub id: usize,
    pub period: usize,
    pub node_cycle: Vec<u8>,
    pub points: Vec<AtlasPoint>,
    pub contraction: f64,
    pub contraction_bound: String,
    pub stability: Stability,
    pub contains_decision_point: bool,
    pub basin_count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AtlasDocument {
    pub rho: Vec<ExactValue>,
    pub theta: ExactValue,
    pub decision_points: Vec<ExactValue>,
    /// Reweighting coefficients applied before the analysis, when rates differ.
    pub reweighting: Option<Vec<String>>,
    pub certificate: String,
    pub t0: Option<usize>,
    pub preimage_counts: Vec<usize>,
    pub orbits: Vec<AtlasOrbit>,
    pub basin_grid: usize,
    pub unassigned: usize,
}

fn cert_text(c: EscapeCertificate) -> (String, Option<usize>) {
    match c {
        EscapeCertificate::FiniteP(t) => ("finite".into(), Some(t)),
        EscapeCertificate::Undecided => ("undecided".into(), None),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn atlas(
    params: &SystemParams,
    d: &DecisionPoints,
    reweighting: Option<Vec<String>>,
    certificate: EscapeCertificate,
    tree: Option<&PreImageTree>,
    orbits: &[OrbitCertificate],
    basin: &[BasinEntry],
    digits: usize,
) -> AtlasDocument {
    let (certificate, t0) = cert_text(certificate);
    let orbits = orbits
        .iter()
        .enumerate()
        .map(|(id, o)| AtlasOrbit {
            id,
            period: o.period(),
            node_cycle: o.node_cycle.iter().map(|n| n.label()).collect(),
            points: o
                .points
                .iter()
                .map(|p| AtlasPoint {
                    side: p.side.label(),
                    lo: ExactValue::new(&p.lo, digits),
                    hi: ExactValue::new(&p.hi, digits),
                    center: decimal_string(&p.center(), digits),
                    exact: p.is_exact(),
                })
                .collect(),
            contraction: o.contraction,
            contraction_bound: decimal_string(&o.contraction_bound, 20),
            stability: o.stability,
            contains_decision_point: o.contains_decision_point,
            basin_count: basin.iter().filter(|b| b.orbit == Some(id)).count(),
        })
        .collect();
    AtlasDocument {
        rho: params.rho.iter().map(|r| ExactValue::new(r, digits)).collect(),
        theta: ExactValue::new(&params.theta_normalized(), digits),
        decision_points: d.d.iter().map(|x| ExactValue::new(x, digits)).collect(),
        reweighting,
        certificate,
        t0,
        preimage_counts: tree.map(|t| t.chains.iter().map(|c| c.depth()).collect()).unwrap_or_default(),
        orbits,
        basin_grid: basin.len(),
        unassigned: basin.iter().filter(|b| b.orbit.is_none()).count(),
    }
}

pub fn atlas_json(doc: &AtlasDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("serializable atlas");
    s.push('\n');
    s
}

/// One row per orbit point.
pub fn orbits_csv(orbits: &[OrbitCertificate], digits: usize) -> String {
    let mut out = String::from("orbit,period,index,side,lo,hi,center,stability\n");
    for (id, o) in orbits.iter().enumerate() {
        for (k, p) in o.points.iter().enumerate() {
            let _ = writeln!(
                out,
                "{id},{},{k},{},{},{},{},{:?}",
                o.period(),
                p.side,
                decimal_string(&p.lo, digits),
                decimal_string(&p.hi, digits),
                decimal_string(&p.center(), digits),
                o.stability
            );
        }
    }
    out
}

pub fn basin_csv(entries: &[BasinEntry]) -> String {
    let mut out = String::from("start_side,start_x,orbit,phase,steps\n");
    for e in entries {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", e.start_side, e.start_x, opt(e.orbit), opt(e.phase), e.steps);
    }
    out
}
