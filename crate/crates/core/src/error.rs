use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("correlation window [{start}, {end}) exceeds signal length {len}")]
    WindowOutOfRange { start: usize, end: usize, len: usize },

    #[error("design block for frame {frame} is rank deficient")]
    RankDeficient { frame: usize },

    #[error("scaling-factor system is rank deficient")]
    ScalingRankDeficient,

    #[error("degenerate {what}: magnitude {magnitude:e} below threshold")]
    Degenerate { what: &'static str, magnitude: f64 },

    #[error("finite-difference derivative unstable: forward and central differ by {relative:.3e}")]
    StepInstability { relative: f64 },

    #[error("iteration {iteration}{}: {source}", station_suffix(*station))]
    Iteration {
        iteration: usize,
        /// `None` when the failing step is shared by all stations.
        station: Option<usize>,
        #[source]
        source: Box<Error>,
    },
}

fn station_suffix(station: Option<usize>) -> String {
    station.map(|k| alloc::format!(", station {k}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by the data rather than by the caller's
    /// configuration (rank loss, vanishing correlations, unstable steps).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Parameter { .. } | Error::WindowOutOfRange { .. } => false,
            Error::Iteration { source, .. } => source.is_numerical(),
            _ => true,
        }
    }
}
