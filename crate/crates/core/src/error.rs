use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CssaError {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("filter of side {side} does not fit a {height}x{width} grid")]
    FilterTooLarge {
        side: usize,
        height: usize,
        width: usize,
    },

    #[error("spectrum is not conjugate-symmetric: imaginary residual {residual:e} exceeds 1e-8 x norm {norm:e}")]
    NonRealSpectrum { residual: f64, norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, CssaError>;

pub(crate) fn check_same_shape(
    context: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(CssaError::ShapeMismatch {
            context,
            expected,
            found,
        })
    }
}
