use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid loudspeaker layout: {0}")]
    InvalidLayout(String),

    #[error("unknown layout kind `{0}`")]
    UnknownLayoutKind(String),

    #[error("array extent {extent} m does not fit inside shell of radius {shell_radius} m")]
    ArrayTooLarge { extent: f64, shell_radius: f64 },

    #[error("trajectory segment {segment} places a microphone at {radius:.4} m, outside shell radius {shell_radius} m")]
    TrajectoryEscapes {
        segment: usize,
        radius: f64,
        shell_radius: f64,
    },

    #[error("invalid band: {0}")]
    InvalidBand(String),

    #[error(
        "quadrature did not converge to {tol:e} within {max_depth} refinement levels on [{a}, {b}]"
    )]
    Quadrature {
        a: f64,
        b: f64,
        tol: f64,
        max_depth: u32,
    },

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("spherical Bessel order {order} exceeds supported maximum {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("spherical harmonic degree m={m} out of range for order n={n}")]
    InvalidHarmonic { n: usize, m: i64 },

    #[error("directional gain is not normalized (integral = {integral})")]
    UnnormalizedGain { integral: f64 },

    #[error("series truncation order {order} too small; need at least {required}")]
    TruncationTooSmall { order: usize, required: usize },

    #[error("sample rate {fs} Hz cannot represent {f_max} Hz without aliasing")]
    Aliasing { fs: f64, f_max: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("recording too short: {actual:.3} s, need at least {required} s")]
    TooShort { actual: f64, required: f64 },

    #[error("distance bin near {distance:.5} m has {count} sample(s); at least 2 are required")]
    EmptyBin { distance: f64, count: usize },

    #[error("frequency {0} Hz lies outside the analysis band")]
    OutOfBand(f64),

    #[error("channel count mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("filter design failed: {0}")]
    FilterDesign(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGeometry(_)
                | Error::InvalidLayout(_)
                | Error::UnknownLayoutKind(_)
                | Error::ArrayTooLarge { .. }
                | Error::TrajectoryEscapes { .. }
                | Error::InvalidBand(_)
                | Error::InvalidConfig(_)
                | Error::Aliasing { .. }
                | Error::ChannelMismatch { .. }
                | Error::Toml(_)
        )
    }
}
