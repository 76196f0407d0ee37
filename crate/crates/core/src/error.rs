use thiserror::Error;

use crate::node::Node;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("load at node {0} is at least 1")]
    LoadTooHigh(Node),
    #[error("total load is at most 1: the system is positive recurrent, orbit analysis needs the transient regime")]
    SystemRecurrent,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operation needs normalized parameters (all service rates equal to 1)")]
    NotNormalized,
    #[error("point already lies on side {0}; node {0} cannot be served from it")]
    SameSide(Node),
    #[error("trajectory hit decision point on side {side} at step {step}")]
    BranchEncountered { step: usize, side: Node },
    #[error("decision points have no finite pre-image certificate")]
    NotFiniteP,
    #[error("orbit certificate failed verification: {0}")]
    OrbitVerification(String),
    #[error("distance is only defined for codes on the same side")]
    DifferentSides,
    #[error("binary encoding needs every corner region J to be empty")]
    RegionUnsupported,
    #[error("comparison undecidable within {0} bits")]
    Undecidable(usize),
    #[error("irrational enclosure too coarse to resolve a comparison")]
    EnclosureTooCoarse,
    #[error("step budget of {0} exceeded")]
    BudgetExceeded(u64),
    #[error("assertion triggered: {0}")]
    AssertionTriggered(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
