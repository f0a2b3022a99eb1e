use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown domain id `{0}`")]
    UnknownDomain(String),

    #[error("speed must be a finite non-negative number, got {0}")]
    InvalidSpeed(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("policy/domain mismatch: {0}")]
    SpaceMismatch(String),

    #[error("observation {observation} or action {action} out of range ({n_obs} observations, {n_actions} actions)")]
    OutOfRange { observation: usize, action: usize, n_obs: usize, n_actions: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("unknown policy preset `{0}`")]
    UnknownPreset(String),

    /// A logged or sampled action has zero behavior probability, so the
    /// support condition π/β < ∞ is violated.
    #[error(
        "zero behavior probability for action {action} at observation {observation} (support assumption violated)"
    )]
    ZeroBehaviorProbability { observation: usize, action: usize },

    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("weights must be non-negative with positive total mass")]
    ZeroWeightMass,

    /// Importance-weight mass is numerically zero.
    #[error("ineffective sample: {0}")]
    IneffectiveSample(String),

    #[error("insufficient episodes: need at least {needed}, have {available}")]
    InsufficientEpisodes { needed: usize, available: usize },

    #[error("instrument is uncorrelated with the regressor (Z'X = 0)")]
    WeakInstrument,

    #[error("Fourier basis of size {basis} needs more than {basis} samples, have {samples}")]
    BasisTooLarge { basis: usize, samples: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}

impl Error {
    /// Short taxonomy label used in failure rows of sweep results.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IneffectiveSample(_) | Error::ZeroWeightMass => "ineffective-sample",
            Error::WeakInstrument => "weak-instrument",
            Error::InsufficientEpisodes { .. } | Error::BasisTooLarge { .. } => "insufficient-data",
            Error::NonFinite(_) => "non-finite",
            Error::ZeroBehaviorProbability { .. } => "support-violation",
            _ => "error",
        }
    }
}
