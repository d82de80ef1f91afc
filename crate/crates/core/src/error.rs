use thiserror::Error;

/// Errors raised by the physics and analysis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AfcError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("spectral span too narrow: {0}")]
    Span(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("echo overlaps leakage: {0}")]
    Overlap(String),

    #[error("temporal modes overlap: {0}")]
    ModeOverlap(String),

    #[error("comb bandwidth clips the input spectrum ({clipped_fraction:.3e} of the energy lies outside the comb): {message}")]
    SpectralClipping {
        clipped_fraction: f64,
        message: String,
    },

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("noise per retrieved photon is undefined for zero efficiency")]
    UndefinedNoise,
}

pub type Result<T> = std::result::Result<T, AfcError>;
