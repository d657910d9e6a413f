use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("did not converge after {iterations} iterations (best estimate {estimate:.6e})")]
    Convergence { iterations: usize, estimate: f64 },

    #[error("diverged at iteration {iteration} (value {value:.6e})")]
    Divergence {
        iteration: usize,
        value: f64,
        last_finite: Box<nalgebra::DMatrix<f64>>,
    },

    #[error("precondition violated: {0}")]
    Domain(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("stale critical point: gradient norm {0:.3e}")]
    StalePoint(f64),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("plugin evaluation failed ({context}): {source}")]
    Plugin {
        context: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_error(
    context: &'static str,
    expected: (usize, usize),
    actual: (usize, usize),
) -> Error {
    Error::Dimension {
        context,
        expected: format!("{}x{}", expected.0, expected.1),
        actual: format!("{}x{}", actual.0, actual.1),
    }
}

pub(crate) fn check_shape(
    context: &'static str,
    m: &nalgebra::DMatrix<f64>,
    expected: (usize, usize),
) -> Result<()> {
    if m.shape() != expected {
        return Err(shape_error(context, expected, m.shape()));
    }
    Ok(())
}
