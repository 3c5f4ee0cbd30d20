use thiserror::Error;

/// Everything that can go wrong across the crate.
///
/// Messages are stable strings; the CLI prints them verbatim and scripts may
/// match on them.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("off-grid shift: {0}")]
    OffGridShift(String),

    #[error("empty set has no distance field")]
    EmptySetDistance,

    #[error("resolution exhausted: {0}")]
    ResolutionExhausted(String),

    #[error("sub-resolution epsilon: {eps} is below grid spacing {spacing}")]
    SubResolutionEpsilon { eps: f64, spacing: f64 },

    #[error("degenerate ladder: {0}")]
    DegenerateLadder(String),

    #[error("insufficient scaling range: {got} usable points, need at least {need}")]
    InsufficientScalingRange { got: usize, need: usize },

    #[error("beta-model prediction is stated for d=3 only, got d={0}")]
    BetaModelDimension(usize),

    #[error("kernel under grid scale: delta {delta} needs delta*n >= 4")]
    KernelUnderGridScale { delta: f64 },

    #[error("mollification reaches singular set: delta {delta} > epsilon {eps}")]
    MollificationReachesSet { delta: f64, eps: f64 },

    #[error("empty theorem regime: threshold {threshold} <= 0 for theta={theta}, r={r}, kappa={kappa}, d={d}")]
    EmptyTheoremRegime {
        threshold: f64,
        theta: f64,
        r: String,
        kappa: f64,
        d: usize,
    },

    #[error("h too large for eps0: need 2|h| <= epsilon < eps0, got |h|={h}, eps0={eps0}")]
    HTooLargeForEps0 { h: f64, eps0: f64 },

    #[error("unresolved shells: finest shell 2^-{i} is below grid scale 2/n")]
    UnresolvedShells { i: u32 },

    #[error("need >= 3 targets for a threshold sweep, got {0}")]
    NeedThreeTargets(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed container: {0}")]
    Container(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
