use thiserror::Error;

/// Errors raised by the numerical and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("theta = {theta} outside the Laplace exponent domain ({lower}, {upper})")]
    Domain { theta: f64, lower: f64, upper: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("rate {r} exceeds the supremum {sup} of the rate function")]
    Range { r: f64, sup: f64 },

    /// `r > Gamma(c)`: the killed process has no QSD with absorption rate `r`.
    #[error("no root: r = {r} > Gamma(c) = {gamma_c}")]
    NoRoot { r: f64, gamma_c: f64 },

    #[error("all {n_paths} paths absorbed before t = {t}")]
    AllAbsorbed { t: f64, n_paths: usize },

    #[error("time step {dt} violates the monotone stability bound {max_dt}")]
    Stability { dt: f64, max_dt: f64 },

    #[error("solution left [-0.05, 1.05] at t = {t} (value {value})")]
    Blowup { t: f64, value: f64 },

    #[error("front trace has {got} points in the fit window, need at least {needed}")]
    InsufficientTrace { needed: usize, got: usize },

    #[error("level s = {s} below the generating function floor {floor} at x = {x}")]
    UndefinedInversion { x: f64, s: f64, floor: f64 },

    #[error("{undecided} of {total} Galton-Watson runs undecided (limit {limit})")]
    TooManyUndecided {
        undecided: usize,
        total: usize,
        limit: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
