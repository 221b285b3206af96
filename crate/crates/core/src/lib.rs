//! Photodetection statistics of thermal and amplified spontaneous emission from
//! random media, computed from densities of scattering strengths, with a random
//! scattering-matrix sampler to check them.

pub mod densities;
pub mod distributions;
pub mod error;
pub mod medium;
pub mod photostat;
pub mod quadrature;
pub mod rmt;

pub use densities::{dual_density, rho_cavity_full, rho_cavity_weak, rho_waveguide_semiinf, spectral_moment, StrengthDensity};
pub use error::{Error, Result};
pub use distributions::{CountDistribution, Family};
pub use medium::{Band, Coverage, DetectionConfig, Geometry, MediumSpec, Response};
pub use photostat::{GeneratingFunction, Regime, StatSummary};
pub use rmt::{EnsembleConfig, ScatteringMatrix, WaveguideConfig};
