//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Query outside a tabulated material's wavelength range.
    #[error("wavelength {wavelength_nm} nm is outside the table range [{min_nm}, {max_nm}] nm")]
    WavelengthOutOfRange {
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    /// Invalid input data or geometry; the message names the offending field.
    #[error("validation: {0}")]
    Validation(String),

    /// Inputs outside the mathematical domain of an operation.
    #[error("domain: {0}")]
    Domain(String),

    /// A pair with F_perp <= F_par cannot feed the conditional rate density;
    /// callers must use the degenerate (delta) path instead.
    #[error("degenerate Purcell pair (F_perp = {f_perp}, F_par = {f_par}); use the delta path")]
    DegeneratePair { f_perp: f64, f_par: f64 },

    /// Zero-width rate ensemble; the density is a delta distribution and
    /// callers must use the degenerate path.
    #[error("rate ensemble has zero width; density is a delta at gamma_c = {gamma_c}")]
    DeltaEnsemble { gamma_c: f64 },

    /// Quadrature failed to reach the requested tolerance. Carries the best
    /// estimate achieved and its error bound.
    #[error("quadrature did not converge: estimate {estimate} with error {error_estimate} (requested {requested})")]
    Accuracy {
        estimate: f64,
        error_estimate: f64,
        requested: f64,
    },

    /// Complex root search failed after all fallback seeds.
    #[error("root finding did not converge; best residual {best_residual}")]
    RootFinding { best_residual: f64 },

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
