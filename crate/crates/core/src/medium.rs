//! Medium and detector parameters, occupation numbers and rate conversions.

use std::f64::consts::PI;

use crate::error::{domain, Error, Result};

/// Relative distance kept from a laser threshold before formulas are refused.
pub const THRESHOLD_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    CavityHole,
    WaveguideSemiInfinite,
    WaveguideFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Response {
    Absorbing,
    Amplifying,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediumSpec {
    pub geometry: Geometry,
    pub response: Response,
    /// Dimensionless absorption or amplification rate.
    pub gamma: f64,
    pub modes: usize,
    /// L/l, only meaningful for a finite waveguide.
    pub length_ratio: Option<f64>,
}

impl MediumSpec {
    pub fn cavity(response: Response, gamma: f64, modes: usize) -> Self {
        Self { geometry: Geometry::CavityHole, response, gamma, modes, length_ratio: None }
    }

    pub fn waveguide(response: Response, gamma: f64, modes: usize) -> Self {
        Self {
            geometry: Geometry::WaveguideSemiInfinite,
            response,
            gamma,
            modes,
            length_ratio: None,
        }
    }

    pub fn finite_waveguide(response: Response, gamma: f64, modes: usize, length_ratio: f64) -> Self {
        Self {
            geometry: Geometry::WaveguideFinite,
            response,
            gamma,
            modes,
            length_ratio: Some(length_ratio),
        }
    }

    /// Laser threshold for an amplifying medium of this geometry.
    pub fn threshold(&self) -> Result<f64> {
        match self.geometry {
            Geometry::CavityHole => Ok(1.0),
            Geometry::WaveguideSemiInfinite => Ok(0.0),
            Geometry::WaveguideFinite => gamma_critical(self.length()?),
        }
    }

    pub(crate) fn length(&self) -> Result<f64> {
        match self.length_ratio {
            Some(l) if l > 0.0 && l.is_finite() => Ok(l),
            Some(l) => domain(format!("length ratio must be positive, got {l}")),
            None => domain("finite waveguide needs a length ratio L/l"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return domain(format!("gamma must be finite and non-negative, got {}", self.gamma));
        }
        if self.modes == 0 {
            return domain("mode count must be at least 1");
        }
        if self.geometry == Geometry::WaveguideFinite {
            self.length()?;
        }
        if self.response == Response::Amplifying {
            let gamma_c = self.threshold()?;
            if self.gamma > gamma_c * (1.0 - THRESHOLD_MARGIN) {
                return Err(Error::AboveThreshold { gamma: self.gamma, gamma_c });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Band {
    Narrow { delta_omega: f64 },
    /// Lorentzian rate profile of width `width` and peak rate `gamma0`.
    BroadLorentzian { width: f64, gamma0: f64 },
    Step { omega_c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    AllModes,
    SingleMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub efficiency: f64,
    pub count_time: f64,
    pub band: Band,
    pub coverage: Coverage,
    /// Signed occupation: positive for thermal absorbers, negative for amplifiers.
    pub occupation: f64,
    /// Minimum `delta_omega * t` accepted as long-time.
    pub long_time_guard: f64,
    /// Maximum `omega_c * t` accepted as short-time.
    pub short_time_guard: f64,
}

impl DetectionConfig {
    pub fn narrow(efficiency: f64, count_time: f64, delta_omega: f64, occupation: f64) -> Self {
        Self {
            efficiency,
            count_time,
            band: Band::Narrow { delta_omega },
            coverage: Coverage::AllModes,
            occupation,
            long_time_guard: 10.0,
            short_time_guard: 0.1,
        }
    }

    pub fn broad(efficiency: f64, count_time: f64, width: f64, gamma0: f64, occupation: f64) -> Self {
        Self { band: Band::BroadLorentzian { width, gamma0 }, ..Self::narrow(efficiency, count_time, 1.0, occupation) }
    }

    pub fn step(efficiency: f64, count_time: f64, omega_c: f64, occupation: f64) -> Self {
        Self { band: Band::Step { omega_c }, ..Self::narrow(efficiency, count_time, 1.0, occupation) }
    }

    /// Unit-bandwidth narrow band with counting time chosen to give `nu`
    /// degrees of freedom for `modes` modes.
    pub fn with_nu(nu: f64, modes: f64, efficiency: f64, occupation: f64) -> Self {
        Self::narrow(efficiency, 2.0 * PI * nu / modes, 1.0, occupation)
    }

    pub fn alpha_f(&self) -> f64 {
        self.efficiency * self.occupation
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return domain(format!("efficiency must lie in (0, 1], got {}", self.efficiency));
        }
        if !(self.count_time > 0.0) || !self.count_time.is_finite() {
            return domain(format!("counting time must be positive, got {}", self.count_time));
        }
        let f = self.occupation;
        if !f.is_finite() || f == 0.0 {
            return domain(format!("occupation must be finite and non-zero, got {f}"));
        }
        match self.band {
            Band::Narrow { delta_omega } if !(delta_omega > 0.0) => {
                domain(format!("bandwidth must be positive, got {delta_omega}"))
            }
            Band::BroadLorentzian { width, gamma0 } if !(width > 0.0 && gamma0 >= 0.0) => {
                domain(format!("Lorentzian needs width > 0 and gamma0 >= 0, got {width}, {gamma0}"))
            }
            Band::Step { omega_c } if !(omega_c > 0.0) => {
                domain(format!("step width must be positive, got {omega_c}"))
            }
            _ => Ok(()),
        }
    }

    /// Degrees of freedom N t delta_omega / 2 pi of a narrow band.
    pub fn nu(&self, modes: f64) -> f64 {
        match self.band {
            Band::Narrow { delta_omega } => modes * self.count_time * delta_omega / (2.0 * PI),
            Band::Step { omega_c } => modes * self.count_time * omega_c / (2.0 * PI),
            Band::BroadLorentzian { width, .. } => modes * self.count_time * width,
        }
    }

    pub(crate) fn require_long_time(&self) -> Result<f64> {
        match self.band {
            Band::Narrow { delta_omega } => {
                let product = delta_omega * self.count_time;
                if product < self.long_time_guard {
                    return Err(Error::OutOfValidity(format!(
                        "delta_omega * t = {product} is below the long-time guard {}",
                        self.long_time_guard
                    )));
                }
                Ok(delta_omega)
            }
            _ => domain("long-time narrow-band statistics need a narrow band"),
        }
    }
}

/// Bose-Einstein occupation 1/(e^x - 1) for x = hbar omega / k_B T.
pub fn bose_einstein(x: f64) -> Result<f64> {
    if x.is_nan() {
        return domain("occupation argument is NaN");
    }
    if x == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(1.0 / x.exp_m1())
}

/// Occupation seen by the detector. Amplifiers use the negative-temperature
/// value -1 - f(x); `x = inf` on an amplifier means complete inversion.
pub fn effective_occupation(response: Response, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("x must be positive, got {x}"));
    }
    match response {
        Response::Absorbing => bose_einstein(x),
        Response::Amplifying if x.is_infinite() => Ok(-1.0),
        Response::Amplifying => bose_einstein(-x),
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be positive, got {v}"))
    }
}

/// Waveguide rate from scattering time and absorption time.
pub fn gamma_waveguide(tau_s: f64, tau_a: f64) -> Result<f64> {
    positive("tau_s", tau_s)?;
    if tau_a == f64::INFINITY {
        return Ok(0.0);
    }
    positive("tau_a", tau_a)?;
    Ok(16.0 / 3.0 * tau_s / tau_a)
}

pub fn dwell_time(modes: f64, delta_omega: f64) -> Result<f64> {
    positive("N", modes)?;
    positive("delta_omega", delta_omega)?;
    Ok(2.0 * PI / (modes * delta_omega))
}

pub fn gamma_cavity(tau_dwell: f64, tau_a: f64) -> Result<f64> {
    positive("tau_dwell", tau_dwell)?;
    positive("tau_a", tau_a)?;
    Ok(tau_dwell / tau_a)
}

/// Laser threshold (4 pi l / 3 L)^2 of a finite waveguide.
pub fn gamma_critical(length_ratio: f64) -> Result<f64> {
    if length_ratio.is_nan() || length_ratio < 1.0 {
        return Err(Error::OutOfValidity(format!("L/l = {length_ratio} must be at least 1")));
    }
    let r = 4.0 * PI / (3.0 * length_ratio);
    Ok(r * r)
}

/// Thouless number with unit coefficients: N l/L for waveguides, N for the cavity.
pub fn thouless_number(spec: &MediumSpec) -> Result<f64> {
    let n = spec.modes as f64;
    match spec.geometry {
        Geometry::CavityHole => Ok(n),
        Geometry::WaveguideFinite => Ok(n / spec.length()?),
        Geometry::WaveguideSemiInfinite => Ok(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occupation_values() {
        assert!((bose_einstein(2f64.ln()).unwrap() - 1.0).abs() < 1e-15);
        assert!(bose_einstein(50.0).unwrap() < 1e-21);
        assert_eq!(bose_einstein(0.0), Err(Error::Singularity));
        assert!(matches!(bose_einstein(f64::NAN), Err(Error::Domain(_))));
        for x in [0.1, 1.0, 5.0] {
            let s = bose_einstein(x).unwrap() + bose_einstein(-x).unwrap();
            assert!((s + 1.0).abs() < 1e-14, "{x}: {s}");
        }
    }

    #[test]
    fn negative_temperature() {
        let ln2 = 2f64.ln();
        assert!((effective_occupation(Response::Absorbing, ln2).unwrap() - 1.0).abs() < 1e-15);
        assert!((effective_occupation(Response::Amplifying, ln2).unwrap() + 2.0).abs() < 1e-14);
        assert_eq!(effective_occupation(Response::Amplifying, f64::INFINITY).unwrap(), -1.0);
    }

    #[test]
    fn rates() {
        assert!((gamma_waveguide(3.0, 16.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((gamma_waveguide(2.0, 2.0).unwrap() - 16.0 / 3.0).abs() < 1e-15);
        assert_eq!(gamma_waveguide(1.0, f64::INFINITY).unwrap(), 0.0);
        assert!(gamma_waveguide(-1.0, 1.0).is_err());
        assert!((dwell_time(2.0 * PI, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(gamma_cavity(1.5, 1.5).unwrap(), 1.0);
        let g1 = gamma_cavity(dwell_time(10.0, 1.0).unwrap(), 3.0).unwrap();
        let g2 = gamma_cavity(dwell_time(20.0, 1.0).unwrap(), 3.0).unwrap();
        assert!((g1 / g2 - 2.0).abs() < 1e-14);
        assert!(gamma_cavity(0.0, 1.0).is_err());
    }

    #[test]
    fn critical_rate() {
        assert!((gamma_critical(4.0 * PI / 3.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((gamma_critical(40.0 * PI / 3.0).unwrap() - 0.01).abs() < 1e-15);
        assert!(gamma_critical(1e9).unwrap() < 1e-15);
        assert!(matches!(gamma_critical(0.5), Err(Error::OutOfValidity(_))));
    }

    #[test]
    fn thouless() {
        let c = MediumSpec::cavity(Response::Absorbing, 0.1, 50);
        assert_eq!(thouless_number(&c).unwrap(), 50.0);
        let w = MediumSpec::finite_waveguide(Response::Absorbing, 0.1, 100, 20.0);
        assert_eq!(thouless_number(&w).unwrap(), 5.0);
        let w1 = MediumSpec::finite_waveguide(Response::Absorbing, 0.1, 7, 1.0);
        assert_eq!(thouless_number(&w1).unwrap(), 7.0);
    }

    #[test]
    fn thresholds_enforced() {
        assert!(MediumSpec::cavity(Response::Amplifying, 0.999, 1).validate().is_ok());
        assert!(matches!(
            MediumSpec::cavity(Response::Amplifying, 1.0, 1).validate(),
            Err(Error::AboveThreshold { .. })
        ));
        assert!(MediumSpec::waveguide(Response::Amplifying, 1e-3, 1).validate().is_err());
        let gc = gamma_critical(20.0).unwrap();
        assert!(MediumSpec::finite_waveguide(Response::Amplifying, 0.5 * gc, 1, 20.0).validate().is_ok());
        assert!(MediumSpec::finite_waveguide(Response::Amplifying, gc, 1, 20.0).validate().is_err());
        assert!(MediumSpec::cavity(Response::Absorbing, -0.1, 1).validate().is_err());
        assert!(MediumSpec::cavity(Response::Absorbing, 0.1, 0).validate().is_err());
    }
}
