use thiserror::Error;

use crate::fit::PeakFit;
use crate::inversion::FieldEstimate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time step {dt_us} us exceeds the anti-aliasing limit {limit_us} us (1/(20 * {f_max_mhz} MHz))")]
    StepTooLarge {
        dt_us: f64,
        limit_us: f64,
        f_max_mhz: f64,
    },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("eigenstates are strongly mixed: no eigenstate has |<0|psi>|^2 > 1/3 (max overlap {max_overlap:.4})")]
    AmbiguousBrightState { max_overlap: f64 },

    #[error("peak fit did not converge after {iterations} iterations")]
    Unconverged {
        iterations: usize,
        best: Vec<PeakFit>,
    },

    #[error("no significant peak: fitted amplitude {amplitude:.3e} is not above residual level {residual_rms:.3e}")]
    NoSignificantPeak {
        amplitude: f64,
        residual_rms: f64,
        best: Vec<PeakFit>,
    },

    #[error("calibration table has only {filled} of {total} cells filled")]
    SparseCalibration { filled: usize, total: usize },

    #[error("calibration audit failed: {0}")]
    Audit(String),

    #[error("no confident field estimate: residual {:.4} MHz exceeds threshold {threshold:.4} MHz", best.residual)]
    NoConfidentEstimate {
        threshold: f64,
        best: Box<FieldEstimate>,
    },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(msg()))
    }
}
