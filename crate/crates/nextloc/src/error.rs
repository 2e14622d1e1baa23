use std::path::PathBuf;

/// Errors surfaced by the harness.
///
/// Per-row problems (malformed check-in rows, unparseable model output) are
/// deliberately *not* errors: they land in rejects reports or failure tallies
/// so a batch never aborts on third-party data. `Error` is reserved for
/// conditions the caller must handle: unreadable files, broken configuration,
/// out-of-range inputs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: no rows parsed ({detail})")]
    EmptyInput { path: PathBuf, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("api key environment variable `{0}` is not set")]
    MissingApiKey(String),

    #[error("authentication rejected by endpoint (status {0})")]
    AuthFailure(u16),

    #[error("point ({lat}, {lon}) lies outside the grid bounding box")]
    OutOfBounds { lat: f64, lon: f64 },

    #[error("quiz generation: {0}")]
    QuizMaterial(String),

    #[error("malformed {kind} line {line}: {detail}")]
    MalformedLine {
        kind: &'static str,
        line: usize,
        detail: String,
    },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
