use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical input outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Plane-wave band structure not converged at the requested basis size.
    #[error("band structure not converged: {0}")]
    Convergence(String),

    /// Fock-space window clipped at n = 0 with significant lost norm.
    #[error("Fock truncation lost {lost:.3e} of the norm (limit 1e-8)")]
    Truncation { lost: f64 },

    /// Hilbert space of an exact model exceeds the supported size.
    #[error("exact model dimension {dim} exceeds the limit {limit}")]
    Size { dim: usize, limit: usize },

    /// Inconsistent or unusable configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Integration step too coarse for the requested accuracy.
    #[error("step-size error: norm drift {drift:.3e} exceeds {limit:.1e}")]
    StepSize { drift: f64, limit: f64 },

    /// The imaging field of view truncates the signal.
    #[error("field of view clips {fraction:.3} of the signal (limit 0.02)")]
    Clipping { fraction: f64 },

    /// A fit failed outright (as opposed to converging poorly).
    #[error("fit failed: {0}")]
    Fit(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
