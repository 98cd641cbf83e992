use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("ball radius {radius} must be below the injectivity radius {injectivity}")]
    RadiusTooLarge { radius: f64, injectivity: f64 },

    #[error("ball radius {radius} is unresolved (needs at least {min})")]
    UnresolvedBall { radius: f64, min: f64 },

    #[error("map leaves the target: constraint residual {residual:e}")]
    OffTarget { residual: f64 },

    #[error("spinor is not tangent along the map: residual {residual:e}")]
    NotTangent { residual: f64 },

    #[error("degenerate projection onto the target (|y| = {norm:e})")]
    DegenerateProjection { norm: f64 },

    #[error("non-finite value produced by term `{term}`")]
    NonFinite { term: &'static str },

    #[error("time step {dt:e} fell below the floor {min_dt:e}")]
    TimeStepFloor { dt: f64, min_dt: f64 },

    #[error("step rejected after {retries} retries: {reason}")]
    StepRejected { retries: usize, reason: String },

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("bad checkpoint magic")]
    BadMagic,

    #[error("unsupported version {0:?}")]
    UnsupportedVersion(String),

    #[error("truncated checkpoint")]
    Truncated,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { key: key.into(), msg: msg.into() }
    }
}
