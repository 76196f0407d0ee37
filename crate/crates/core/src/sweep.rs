//! Random parameter sweeps with the at-most-four-orbits assertion.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::intervals::{escape_certificate, EscapeCertificate};
use crate::num::{q, Q};
use crate::orbit::{find_orbits, EngineOptions, OrbitCertificate, Stability};
use crate::params::{DecisionPoints, SystemParams};
use crate::sim::replica_rng;

#[derive(Clone, Debug)]
pub struct SweepSample {
    pub index: usize,
    pub rho: [Q; 3],
    pub d: [Q; 3],
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub sample: SweepSample,
    pub certificate: EscapeCertificate,
    pub orbits: Vec<OrbitCertificate>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub finite: usize,
    pub undecided: usize,
    pub max_orbits: usize,
    /// Indices of configurations with exactly four orbits.
    pub flagged_four: Vec<usize>,
}

/// Sweep sample `index`: loads on a `1/den` grid in `[lo, hi]` conditioned
/// on transience, decision points on the open `1/den` grid.
pub fn sample(seed: u64, index: usize, lo: &Q, hi: &Q, den: i64) -> SweepSample {
    let mut rng = replica_rng(seed, index as u64);
    let big = Q::from_integer(den.into());
    let a = (lo * &big).ceil().to_integer();
    let b = (hi * &big).floor().to_integer();
    let (a, b): (i64, i64) = (a.try_into().unwrap_or(1), b.try_into().unwrap_or(den - 1));
    let b = b.min(den - 1);
    loop {
        let rho: [Q; 3] = std::array::from_fn(|_| q(rng.random_range(a..=b), den));
        let total: Q = rho.iter().sum();
        if total <= Q::from_integer(1.into()) {
            continue;
        }
        let d = std::array::from_fn(|_| q(rng.random_range(1..den), den));
        return SweepSample { index, rho, d };
    }
}

fn evaluate(s: SweepSample, opts: &EngineOptions) -> Result<SweepRow> {
    let params = SystemParams::normalized_loads(s.rho.clone())?;
    let d = DecisionPoints::new(s.d.clone())?;
    let certificate = escape_certificate(&params, &d, opts.t_max)?;
    let orbits = match certificate {
        EscapeCertificate::FiniteP(_) => {
            let unlimited = EngineOptions { max_orbits: usize::MAX, ..opts.clone() };
            find_orbits(&params, &d, &unlimited)?
        }
        EscapeCertificate::Undecided => Vec::new(),
    };
    Ok(SweepRow { sample: s, certificate, orbits })
}

/// Samples configurations in index order until `finite_target` of them have
/// a finite certificate (or `max_samples` are drawn). More than
/// `opts.max_orbits` orbits anywhere aborts with `AssertionTriggered`
/// and writes `reproducer` text into the error.
pub fn run_sweep(
    seed: u64,
    finite_target: usize,
    max_samples: usize,
    rho_range: (&Q, &Q),
    den: i64,
    batch: usize,
    opts: &EngineOptions,
) -> Result<SweepReport> {
    let mut rows = Vec::new();
    let mut finite = 0;
    let mut next = 0usize;
    while finite < finite_target && next < max_samples {
        let end = (next + batch.max(1)).min(max_samples);
        let batch_rows: Vec<SweepRow> = (next..end)
            .into_par_iter()
            .map(|i| evaluate(sample(seed, i, rho_range.0, rho_range.1, den), opts))
            .collect::<Result<_>>()?;
        next = end;
        for row in batch_rows {
            if finite >= finite_target {
                break;
            }
            if row.orbits.len() > opts.max_orbits {
                return Err(Error::AssertionTriggered(reproducer(&row)));
            }
            if matches!(row.certificate, EscapeCertificate::FiniteP(_)) {
                finite += 1;
            }
            rows.push(row);
        }
    }
    let undecided = rows.iter().filter(|r| r.certificate == EscapeCertificate::Undecided).count();
    let max_orbits = rows.iter().map(|r| r.orbits.len()).max().unwrap_or(0);
    let flagged_four = rows.iter().filter(|r| r.orbits.len() == 4).map(|r| r.sample.index).collect();
    Ok(SweepReport { rows, finite, undecided, max_orbits, flagged_four })
}

/// Config text reproducing a single sweep row.
pub fn reproducer(row: &SweepRow) -> String {
    let s = &row.sample;
    let list = |v: &[Q; 3]| v.iter().map(|x| format!("\"{x}\"")).collect::<Vec<_>>().join(", ");
    format!(
        "# sweep sample {} produced {} orbits\nexperiment = \"orbits\"\n[params]\nrho = [{}]\n[rule]\ndecision_points = [{}]\n",
        s.index,
        row.orbits.len(),
        list(&s.rho),
        list(&s.d)
    )
}

fn stability_tag(s: Stability) -> &'static str {
    match s {
        Stability::Stable => "stable",
        Stability::OneSided => "one-sided",
        Stability::Unstable => "unstable",
    }
}

impl SweepReport {
    pub fn undecided_fraction(&self) -> f64 {
        self.undecided as f64 / self.rows.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,rho1,rho2,rho3,d1,d2,d3,certificate,t0,orbits,periods,stability\n");
        for r in &self.rows {
            let s = &r.sample;
            let (cert, t0) = match r.certificate {
                EscapeCertificate::FiniteP(t) => ("finite", t.to_string()),
                EscapeCertificate::Undecided => ("undecided", String::new()),
            };
            let periods = r.orbits.iter().map(|o| o.period().to_string()).collect::<Vec<_>>().join(";");
            let stab = r.orbits.iter().map(|o| stability_tag(o.stability)).collect::<Vec<_>>().join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{cert},{t0},{},{periods},{stab}",
                s.index,
                s.rho[0],
                s.rho[1],
                s.rho[2],
                s.d[0],
                s.d[1],
                s.d[2],
                r.orbits.len()
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut hist = [0usize; 5];
        for r in &self.rows {
            if r.certificate != EscapeCertificate::Undecided {
                hist[r.orbits.len().min(4)] += 1;
            }
        }
        format!(
            "samples {}\nfinite {}\nundecided {} ({:.4})\nmax_orbits {}\norbit_count_histogram {:?}\nfour_orbit_samples {:?}\n",
            self.rows.len(),
            self.finite,
            self.undecided,
            self.undecided_fraction(),
            self.max_orbits,
            hist,
            self.flagged_four
        )
    }
}
