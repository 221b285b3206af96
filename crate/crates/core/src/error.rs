use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("occupation is singular at x = 0")]
    Singularity,
    #[error("above threshold: gamma = {gamma} must stay below gamma_c = {gamma_c}")]
    AboveThreshold { gamma: f64, gamma_c: f64 },
    #[error("outside validity range: {0}")]
    OutOfValidity(String),
    #[error("spectral moment of order {p} diverges")]
    InfiniteMoment { p: u32 },
    #[error("generating function is singular on the requested domain: {0}")]
    DomainRadius(String),
    #[error("tail mass {tail:e} beyond n_max = {n_max} exceeds the bound; increase n_max")]
    NMaxTooSmall { n_max: usize, tail: f64 },
    #[error("ill-conditioned scattering-matrix cascade")]
    Conditioning,
    #[error("scattering matrix is singular, no dual exists")]
    SingularDual,
    #[error("unsupported model: {0}")]
    Unsupported(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("quadrature did not reach tolerance: {0}")]
    Quadrature(String),
    #[error("support mismatch: {0}")]
    SupportMismatch(String),
    #[error("monte carlo failure: {0}")]
    MonteCarlo(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
