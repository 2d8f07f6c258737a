use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid too coarse: {samples_per_tooth:.2} samples per tooth width, need at least {required}")]
    GridTooCoarse { samples_per_tooth: f64, required: f64 },

    #[error("comb bandwidth {bandwidth} MHz exceeds half the grid span {span} MHz")]
    BandwidthExceedsGrid { bandwidth: f64, span: f64 },

    #[error("one comb period ({period} MHz) is not contained in the grid")]
    PeriodNotContained { period: f64 },

    #[error("absorption profile contains non-finite values")]
    NonFiniteProfile,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no resonance found in transfer function")]
    NoResonance,

    #[error("pulse clipped by grid: {0}")]
    PulseClipped(String),

    #[error("echo window overlaps the reflection window (tau {tau} µs < window {window} µs)")]
    OverlappingWindows { tau: f64, window: f64 },

    #[error("unmatched configuration: R_in = {r_in} exceeds R_out - eps = {effective}")]
    UnmatchedConfiguration { r_in: f64, effective: f64 },

    #[error("non-positive efficiency {eta} at tau = {tau} µs")]
    NonPositiveEfficiency { tau: f64, eta: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("analyzer delay 1/Delta = {delay} µs does not match the bin separation {bin_separation} µs")]
    MismatchedDelay { delay: f64, bin_separation: f64 },

    #[error("no analyzer balance found for peak OD in (0, {max_od}]")]
    NoBalanceFound { max_od: f64 },

    #[error("reference histogram has no signal counts above the dark expectation")]
    ZeroReferenceCounts,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
