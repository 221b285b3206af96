//! Shared inputs for the benchmarks in `benches/`.

use ranlase_core::photostat::{generating_long_time, GeneratingFunction};
use ranlase_core::rmt::EnsembleConfig;
use ranlase_core::{rho_waveguide_semiinf, DetectionConfig, Result};

/// Cavity ensemble at unit rate with the default barrier.
pub fn cavity_config(modes: usize) -> Result<EnsembleConfig> {
    EnsembleConfig::new(modes, 1.0, 1, 0)
}

/// Generating function of a weakly absorbing waveguide with `nu` degrees of
/// freedom, the slowest case for the Fourier inversion.
pub fn weak_waveguide_generating(nu: f64) -> Result<GeneratingFunction> {
    let rho = rho_waveguide_semiinf(1.0, 0.01)?;
    generating_long_time(&rho, &DetectionConfig::with_nu(nu, 1.0, 0.5, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_build() {
        assert_eq!(cavity_config(10).unwrap().fictitious, 500);
        assert!(weak_waveguide_generating(20.0).unwrap().evaluate_real(0.1).unwrap() > 0.0);
    }
}
