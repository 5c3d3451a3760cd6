//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The mechanical torque exceeds the maximum electrical torque at the
    /// given voltage, so no motoring equilibrium exists.
    #[error("no motor equilibrium at u = {voltage}: torque_mech exceeds pull-out torque by {torque_gap}")]
    NoEquilibrium { voltage: f64, torque_gap: f64 },

    /// A simulated state left the sanity bounds (|E| > 10 pu or s outside
    /// [-0.5, 1.5]), or an algebraic network solve failed to converge.
    #[error("simulation diverged: {0}")]
    Diverged(String),

    /// Two PFR bundles do not share the same fault count or time grid.
    #[error("PFR grid mismatch: {0}")]
    GridMismatch(String),

    /// The reference series of a fitting-degree computation is constant,
    /// making the denominator zero.
    #[error("fitting degree undefined: reference series is constant")]
    ConstantReference,

    /// A compressed record points outside the representative sets.
    #[error("compressed-record index out of range: {0}")]
    IndexOutOfRange(String),

    /// A perturbed model kept failing feasibility screening.
    #[error("model generation infeasible after {retries} retries (basic model {basic})")]
    InfeasibleAfterRetries { basic: usize, retries: usize },

    /// An operation received parameters outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A text input (model file, suite, manifest, matrix CSV) failed to parse
    /// or violated a schema invariant.
    #[error("parse error: {0}")]
    Parse(String),

    /// Error inside one fault scenario of a bundle.
    #[error("scenario '{label}': {source}")]
    Scenario {
        label: String,
        #[source]
        source: Box<Error>,
    },

    /// Error while processing one bus.
    #[error("bus '{bus_id}': {source}")]
    Bus {
        bus_id: String,
        #[source]
        source: Box<Error>,
    },

    /// Error in one spatial component stage (active/reactive/dynamic).
    #[error("{component} component: {source}")]
    Component {
        component: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
