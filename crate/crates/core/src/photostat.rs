//! Generating functions, factorial cumulants and closed-form counting
//! statistics.

use std::cell::{Cell, RefCell};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use faer::{c64, Mat};

use crate::densities::{dual_density, rho_cavity_full, rho_waveguide_semiinf, StrengthDensity};
use crate::error::{domain, Error, Result};
use crate::medium::{gamma_critical, thouless_number, Band, DetectionConfig, Geometry, MediumSpec, Response};
use crate::quadrature::{self, compensated_sum, NodeRule, Tolerance};

/// Rate above which the finite-waveguide closed forms carry a warning.
pub const FINITE_WAVEGUIDE_GUARD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    LongTimeNarrow,
    LongTimeBroad,
    ShortTime,
    SingleMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatSummary {
    pub mean: f64,
    pub variance: f64,
    /// Degrees of freedom of the detection window: N t delta_omega / 2 pi, or
    /// N t Gamma for a broad band.
    pub nu: f64,
    /// n^2 / (Var n - n); `None` for Poisson statistics.
    pub nu_eff: Option<f64>,
    /// Value of nu_eff given directly by a closed form, kept for cross-checks.
    pub nu_eff_closed: Option<f64>,
    /// Factorial cumulants kappa_1, kappa_2, ...
    pub cumulants: Vec<f64>,
    pub regime: Regime,
    pub warnings: Vec<String>,
}

impl StatSummary {
    pub fn from_cumulants(nu: f64, cumulants: Vec<f64>, regime: Regime) -> Self {
        let mean = cumulants[0];
        let excess = cumulants.get(1).copied().unwrap_or(0.0);
        let nu_eff = if excess > 0.0 { Some(mean * mean / excess) } else { None };
        Self {
            mean,
            variance: mean + excess,
            nu,
            nu_eff,
            nu_eff_closed: None,
            cumulants,
            regime,
            warnings: Vec::new(),
        }
    }

    pub fn nu_eff_ratio(&self) -> Option<f64> {
        self.nu_eff.map(|v| v / self.nu)
    }
}

type Evaluator = dyn Fn(c64) -> Result<c64> + Send + Sync;

/// Generating function F(xi) of factorial cumulants.
#[derive(Clone)]
pub struct GeneratingFunction {
    eval: Arc<Evaluator>,
    /// Largest |xi| for which F is finite on the whole disk.
    pub domain_radius: f64,
    pub regime: Regime,
}

impl fmt::Debug for GeneratingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratingFunction")
            .field("domain_radius", &self.domain_radius)
            .field("regime", &self.regime)
            .finish_non_exhaustive()
    }
}

impl GeneratingFunction {
    pub fn new<F>(f: F, domain_radius: f64, regime: Regime) -> Self
    where
        F: Fn(c64) -> Result<c64> + Send + Sync + 'static,
    {
        Self { eval: Arc::new(f), domain_radius, regime }
    }

    pub fn evaluate(&self, xi: c64) -> Result<c64> {
        if xi == c64::new(0.0, 0.0) {
            return Ok(c64::new(0.0, 0.0));
        }
        (self.eval)(xi)
    }

    pub fn evaluate_real(&self, xi: f64) -> Result<f64> {
        Ok(self.evaluate(c64::new(xi, 0.0))?.re)
    }

    /// F(xi) = -scale * sum_i w_i ln(1 - c_i xi) for a discrete measure.
    pub fn from_weights(coefficients: Vec<f64>, weights: Vec<f64>, scale: f64, regime: Regime) -> Self {
        let cmax = coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let radius = if cmax > 0.0 { 1.0 / cmax } else { f64::INFINITY };
        let cmin = coefficients.iter().fold(f64::INFINITY, |m, &c| m.min(c));
        let f = move |xi: c64| {
            if xi.norm() >= radius {
                // outside the disk the principal logarithm is still the
                // continuation from 0 while Re(1 - c xi) > 0; Re(1 - c xi) is linear in c, so the extreme coefficients decide
                let worst = [cmax, cmin]
                    .iter()
                    .map(|&c| (c64::new(1.0, 0.0) - xi * c).re)
                    .fold(f64::INFINITY, f64::min);
                if !(worst > 0.0) {
                    return Err(Error::DomainRadius(format!(
                        "log argument leaves the right half plane at xi = {xi}"
                    )));
                }
            }
            let mut re = Vec::with_capacity(weights.len());
            let mut im = Vec::with_capacity(weights.len());
            for (&c, &w) in coefficients.iter().zip(&weights) {
                let l = (c64::new(1.0, 0.0) - xi * c).ln();
                re.push(w * l.re);
                im.push(w * l.im);
            }
            Ok(c64::new(-scale * compensated_sum(re), -scale * compensated_sum(im)))
        };
        Self::new(f, radius, regime)
    }

    /// Black-body form -nu ln(1 - xi alpha f): every strength equal to zero.
    pub fn black_body(nu: f64, alpha_f: f64) -> Self {
        Self::from_weights(vec![alpha_f], vec![nu], 1.0, Regime::LongTimeNarrow)
    }

    /// Derivatives F'(0) and F''(0) by central differences with step `h`.
    pub fn numeric_cumulants(&self, h: f64) -> Result<(f64, f64)> {
        let fp = self.evaluate_real(h)?;
        let fm = self.evaluate_real(-h)?;
        let f0 = self.evaluate_real(0.0)?;
        Ok(((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)))
    }
}

fn factorial(p: u32) -> f64 {
    (1..=p).map(f64::from).product()
}

fn check_sign(response: Response, f: f64) -> Result<()> {
    match response {
        Response::Absorbing if f < 0.0 => domain("an absorbing medium needs a positive occupation"),
        Response::Amplifying if f > 0.0 => domain("an amplifying medium needs a negative occupation"),
        _ => Ok(()),
    }
}

/// Long-time narrow-band generating function of a density.
pub fn generating_long_time(rho: &StrengthDensity, cfg: &DetectionConfig) -> Result<GeneratingFunction> {
    cfg.validate()?;
    cfg.require_long_time()?;
    let n = rho.total_weight();
    let nu = cfg.nu(n);
    if rho.is_divergent() {
        return Ok(GeneratingFunction::new(
            |_| Err(Error::DomainRadius("strength support is unbounded; the medium is above threshold".into())),
            0.0,
            Regime::LongTimeNarrow,
        ));
    }
    let rule = rho.rule()?;
    let af = cfg.alpha_f();
    let coefficients = rule.nodes.iter().map(|&s| (1.0 - s) * af).collect();
    Ok(GeneratingFunction::from_weights(coefficients, rule.weights, nu / n, Regime::LongTimeNarrow))
}

/// kappa_p = (p-1)! nu (alpha f)^p m_p / N for p = 1..=p_max.
pub fn factorial_cumulants(rho: &StrengthDensity, cfg: &DetectionConfig, p_max: u32) -> Result<Vec<f64>> {
    cfg.validate()?;
    cfg.require_long_time()?;
    let n = rho.total_weight();
    let nu = cfg.nu(n);
    let af = cfg.alpha_f();
    (1..=p_max)
        .map(|p| Ok(factorial(p - 1) * nu * af.powi(p as i32) * rho.moment(p)? / n))
        .collect()
}

/// Long-time narrow-band statistics from density quadrature.
pub fn long_time_stats(rho: &StrengthDensity, cfg: &DetectionConfig, p_max: u32) -> Result<StatSummary> {
    let k = factorial_cumulants(rho, cfg, p_max.max(2))?;
    let mut s = StatSummary::from_cumulants(cfg.nu(rho.total_weight()), k, Regime::LongTimeNarrow);
    s.warnings = rho.warnings.clone();
    Ok(s)
}

/// Per-mode moments m_1/N, m_2/N and the closed-form nu_eff/nu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NarrowMoments {
    pub m1: f64,
    pub m2: f64,
    pub nu_ratio: f64,
}

// Coefficients of the odd power series of
// s - s cos s + s sin^2 s + sin s - 3 sin^3 s - cos^3 s sin s.
fn d_series_coefficients() -> [f64; 24] {
    let mut c = [0.0; 24];
    let mut fact = [1.0f64; 50];
    for k in 1..50 {
        fact[k] = fact[k - 1] * k as f64;
    }
    for (j, cj) in c.iter_mut().enumerate() {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let odd = 2 * j as i32 + 1;
        let even_part = -sign / fact[2 * j] - 0.5 * sign * 4f64.powi(j as i32) / fact[2 * j];
        let sine_part = sign / fact[2 * j + 1]
            * (-1.25 + 0.75 * 3f64.powi(odd) - 0.25 * 2f64.powi(odd) - 0.125 * 4f64.powi(odd));
        *cj = even_part + sine_part + if j == 0 { 1.5 } else { 0.0 };
    }
    c
}

fn d_series(x: f64, alternate: bool) -> f64 {
    let c = d_series_coefficients();
    let x2 = x * x;
    let mut term = x.powi(7);
    let mut sum = 0.0;
    for (j, &cj) in c.iter().enumerate().skip(3) {
        let sign = if alternate && j % 2 == 1 { -1.0 } else { 1.0 };
        sum += sign * cj * term;
        term *= x2;
    }
    sum
}

/// m_1/N and m_2/N of a finite amplifying waveguide below threshold.
pub fn finite_amplifying_moments(gamma: f64, gamma_c: f64) -> (f64, f64) {
    let s = PI * (gamma / gamma_c).sqrt();
    let sg = gamma.sqrt();
    let m1 = -sg * (0.5 * s).tan();
    let d = if s < 1.0 {
        d_series(s, false)
    } else {
        let (sn, cs) = s.sin_cos();
        s - s * cs + s * sn * sn + sn - 3.0 * sn.powi(3) - cs.powi(3) * sn
    };
    let m2 = sg * d / (2.0 * s.sin().powi(4));
    (m1, m2)
}

/// m_1/N and m_2/N of a finite absorbing waveguide (the amplifying forms
/// continued to negative rate).
pub fn finite_absorbing_moments(gamma: f64, gamma_c: f64) -> (f64, f64) {
    let x = PI * (gamma / gamma_c).sqrt();
    let sg = gamma.sqrt();
    let m1 = sg * (0.5 * x).tanh();
    let ratio = if x < 1.0 {
        d_series(x, true) / x.sinh().powi(4)
    } else {
        let sh = x.sinh();
        let ch = x.cosh();
        // divide each term by sinh^4 before adding to keep large x finite
        let sh4 = sh.powi(4);
        (x - x * ch - x * sh * sh + sh) / sh4 + 3.0 / sh - (ch / sh).powi(3)
    };
    (m1, -sg * ratio / 2.0)
}

/// Per-mode spectral moments for a narrow band around a fixed rate.
pub fn narrowband_moments(spec: &MediumSpec) -> Result<(NarrowMoments, Vec<String>)> {
    spec.validate()?;
    let g = spec.gamma;
    let mut warnings = Vec::new();
    if g == 0.0 {
        // no emission; nu_ratio is the gamma -> 0 limit
        let nu_ratio = match spec.geometry {
            Geometry::CavityHole => 0.5,
            Geometry::WaveguideSemiInfinite => 0.0,
            Geometry::WaveguideFinite => 5.0 / spec.length()?,
        };
        return Ok((NarrowMoments { m1: 0.0, m2: 0.0, nu_ratio }, warnings));
    }
    let m = match (spec.geometry, spec.response) {
        (Geometry::WaveguideSemiInfinite, Response::Absorbing) => {
            let y = 1.0 + 4.0 / g;
            let m1 = 0.5 * g * (y.sqrt() - 1.0);
            let m2 = 1.0 / y.sqrt();
            let q = y.powf(0.25);
            NarrowMoments { m1, m2, nu_ratio: 4.0 / (q + 1.0 / q).powi(2) }
        }
        (Geometry::WaveguideSemiInfinite, Response::Amplifying) => {
            unreachable!("validate rejects amplifying semi-infinite waveguides")
        }
        (Geometry::CavityHole, Response::Absorbing) => {
            let m1 = g / (1.0 + g);
            let m2 = g * g * (g * g + 2.0 * g + 2.0) / (1.0 + g).powi(4);
            NarrowMoments { m1, m2, nu_ratio: (1.0 + g).powi(2) / (g * g + 2.0 * g + 2.0) }
        }
        (Geometry::CavityHole, Response::Amplifying) => {
            let m1 = -g / (1.0 - g);
            let m2 = g * g * (g * g - 2.0 * g + 2.0) / (1.0 - g).powi(4);
            NarrowMoments { m1, m2, nu_ratio: (1.0 - g).powi(2) / (g * g - 2.0 * g + 2.0) }
        }
        (Geometry::WaveguideFinite, response) => {
            let gc = gamma_critical(spec.length()?)?;
            if g > FINITE_WAVEGUIDE_GUARD || gc > FINITE_WAVEGUIDE_GUARD {
                warnings.push(format!(
                    "finite-waveguide forms assume gamma, gamma_c << 1; got gamma = {g}, gamma_c = {gc}"
                ));
            }
            let (m1, m2) = match response {
                Response::Amplifying => finite_amplifying_moments(g, gc),
                Response::Absorbing => finite_absorbing_moments(g, gc),
            };
            NarrowMoments { m1, m2, nu_ratio: m1 * m1 / m2 }
        }
    };
    Ok((m, warnings))
}

/// Closed-form narrow-band mean, variance and nu_eff.
pub fn closed_form_narrowband(spec: &MediumSpec, cfg: &DetectionConfig) -> Result<StatSummary> {
    cfg.validate()?;
    cfg.require_long_time()?;
    check_sign(spec.response, cfg.occupation)?;
    let (m, warnings) = narrowband_moments(spec)?;
    let nu = cfg.nu(spec.modes as f64);
    let af = cfg.alpha_f();
    let mut s = StatSummary::from_cumulants(nu, vec![nu * af * m.m1, nu * af * af * m.m2], Regime::LongTimeNarrow);
    s.nu_eff_closed = Some(m.nu_ratio * nu);
    s.warnings = warnings;
    Ok(s)
}

/// Where the inner spectral moments of a broad-band integral come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMoments {
    ClosedForm,
    Quadrature,
}

fn lorentz(cfg: &DetectionConfig) -> Result<(f64, f64)> {
    match cfg.band {
        Band::BroadLorentzian { width, gamma0 } => Ok((width, gamma0)),
        _ => domain("broad-band statistics need a Lorentzian band"),
    }
}

/// Broad-band statistics. The cavity uses its closed forms; the waveguide
/// uses the cutoff quadrature with closed-form inner moments.
pub fn broadband_stats(spec: &MediumSpec, cfg: &DetectionConfig) -> Result<StatSummary> {
    match spec.geometry {
        Geometry::CavityHole => broadband_cavity_closed(spec, cfg),
        Geometry::WaveguideSemiInfinite | Geometry::WaveguideFinite => {
            broadband_quadrature(spec, cfg, InnerMoments::ClosedForm)
        }
    }
}

fn broadband_setup(spec: &MediumSpec, cfg: &DetectionConfig) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    let (width, gamma0) = lorentz(cfg)?;
    check_sign(spec.response, cfg.occupation)?;
    let peak = MediumSpec { gamma: gamma0, ..spec.clone() };
    peak.validate()?;
    if gamma0 == 0.0 && spec.geometry != Geometry::CavityHole {
        return domain("gamma0 must be positive for a waveguide");
    }
    let nu = spec.modes as f64 * cfg.count_time * width;
    Ok((width, gamma0, nu))
}

fn broadband_cavity_closed(spec: &MediumSpec, cfg: &DetectionConfig) -> Result<StatSummary> {
    let (_, g0, nu) = broadband_setup(spec, cfg)?;
    let sign = match spec.response {
        Response::Absorbing => 1.0,
        Response::Amplifying => -1.0,
    };
    let af = cfg.alpha_f();
    let base = 1.0 + sign * g0;
    let poly = 9.0 * g0 * g0 + sign * 20.0 * g0 + 16.0;
    let mean = sign * nu * af * g0 / (4.0 * base.sqrt());
    let excess = nu * af * af * g0 * g0 * poly / (64.0 * base.powf(3.5));
    let mut s = StatSummary::from_cumulants(nu, vec![mean, excess], Regime::LongTimeBroad);
    s.nu_eff_closed = Some(nu * 4.0 * base.powf(2.5) / poly);
    Ok(s)
}

/// Leading-logarithm waveguide forms with explicit O(1) constants added to
/// the logarithm of the mean and of the excess variance.
pub fn broadband_waveguide_leading_log(
    spec: &MediumSpec,
    cfg: &DetectionConfig,
    length_ratio: f64,
    c_mean: f64,
    c_var: f64,
) -> Result<StatSummary> {
    if spec.geometry == Geometry::CavityHole {
        return domain("leading-log forms apply to waveguides");
    }
    let (_, g0, nu) = broadband_setup(spec, cfg)?;
    let af = cfg.alpha_f();
    let log = (length_ratio * g0.sqrt()).ln();
    let mean = nu / (2.0 * PI) * af * g0.sqrt() * (log + c_mean);
    let excess = nu / (2.0 * PI) * af * af * 0.5 * g0.sqrt() * (log + c_var);
    let mut s = StatSummary::from_cumulants(nu, vec![mean, excess], Regime::LongTimeBroad);
    if c_mean == c_var {
        s.nu_eff_closed = Some(nu / PI * g0.sqrt() * (log + c_mean));
    }
    if !(length_ratio.powi(-2) < g0 && g0 < 1.0) {
        s.warnings.push("leading-log forms assume (l/L)^2 << gamma0 << 1".into());
    }
    Ok(s)
}

fn inner_moments(spec: &MediumSpec, gamma: f64, inner: InnerMoments) -> Result<(f64, f64)> {
    if gamma <= 0.0 {
        return Ok((0.0, 0.0));
    }
    match inner {
        InnerMoments::ClosedForm => {
            let local = MediumSpec { gamma, geometry: semi_infinite_if_waveguide(spec.geometry), ..spec.clone() };
            let (m, _) = narrowband_moments(&local)?;
            Ok((m.m1, m.m2))
        }
        InnerMoments::Quadrature => {
            let rho = match (spec.geometry, spec.response) {
                (Geometry::CavityHole, Response::Absorbing) => rho_cavity_full(1.0, gamma)?,
                (Geometry::CavityHole, Response::Amplifying) => dual_density(&rho_cavity_full(1.0, gamma)?),
                (_, Response::Absorbing) => rho_waveguide_semiinf(1.0, gamma)?,
                (_, Response::Amplifying) => {
                    return Err(Error::AboveThreshold { gamma, gamma_c: 0.0 });
                }
            };
            Ok((rho.moment(1)?, rho.moment(2)?))
        }
    }
}

fn semi_infinite_if_waveguide(g: Geometry) -> Geometry {
    match g {
        Geometry::CavityHole => Geometry::CavityHole,
        _ => Geometry::WaveguideSemiInfinite,
    }
}

/// Broad-band statistics by integrating narrow-band moments over the
/// Lorentzian rate profile. Waveguides are cut off at
/// |omega - omega_0| <= Gamma (L/l) sqrt(gamma0).
pub fn broadband_quadrature(spec: &MediumSpec, cfg: &DetectionConfig, inner: InnerMoments) -> Result<StatSummary> {
    let (_, g0, nu) = broadband_setup(spec, cfg)?;
    let phi_max = match spec.geometry {
        Geometry::CavityHole => FRAC_PI_2,
        _ => {
            let l = spec.length()?;
            (2.0 * l * g0.sqrt()).atan()
        }
    };
    // x = 2(omega - omega_0)/Gamma = tan(phi); the integrand is even in x
    let fail = RefCell::new(None);
    let integrand = |phi: f64| {
        let c = phi.cos();
        let gamma = g0 * c * c;
        match inner_moments(spec, gamma, inner) {
            Ok((m1, m2)) => c64::new(m1, m2) / (c * c),
            Err(e) => {
                fail.borrow_mut().get_or_insert(e);
                c64::new(0.0, 0.0)
            }
        }
    };
    let tol = match inner {
        InnerMoments::ClosedForm => Tolerance::rel(1e-12),
        InnerMoments::Quadrature => Tolerance::rel(1e-10),
    };
    let est = quadrature::integrate(integrand, 0.0, phi_max, tol);
    if let Some(e) = fail.into_inner() {
        return Err(e);
    }
    let est = est.require()?;
    // (Gamma/4 pi) * 2 * integral over x > 0, per unit of N t
    let i1 = est.value.re / (2.0 * PI);
    let i2 = est.value.im / (2.0 * PI);
    let af = cfg.alpha_f();
    let s = StatSummary::from_cumulants(nu, vec![nu * af * i1, nu * af * af * i2], Regime::LongTimeBroad);
    Ok(s)
}

/// Model for the short-time regime: 1 - S S^dagger = phi(omega) K.
#[derive(Debug, Clone, PartialEq)]
pub enum ShortTimeModel {
    Factorized {
        /// Integral of phi over frequency.
        band_integral: f64,
        /// Frequency scale on which S S^dagger deviates from one.
        bandwidth: f64,
        /// sigma_n with 1 - sigma_n the eigenvalues of K.
        strengths: Vec<f64>,
    },
    /// Frequency dependence that does not factorize.
    General,
}

impl ShortTimeModel {
    pub fn step_black_body(modes: usize, omega_c: f64) -> Self {
        Self::Factorized { band_integral: omega_c, bandwidth: omega_c, strengths: vec![0.0; modes] }
    }
}

/// Short-time generating function -sum_n ln(1 - (t W/2 pi)(1 - sigma_n) xi alpha f).
pub fn short_time_generating(model: &ShortTimeModel, cfg: &DetectionConfig) -> Result<GeneratingFunction> {
    cfg.validate()?;
    let ShortTimeModel::Factorized { band_integral, bandwidth, strengths } = model else {
        return Err(Error::Unsupported(
            "short-time statistics of a non-factorized model depend on eigenvectors".into(),
        ));
    };
    if bandwidth * cfg.count_time > cfg.short_time_guard {
        return Err(Error::OutOfValidity(format!(
            "omega_c * t = {} exceeds the short-time guard {}",
            bandwidth * cfg.count_time,
            cfg.short_time_guard
        )));
    }
    let k = cfg.count_time * band_integral / (2.0 * PI) * cfg.alpha_f();
    let coefficients = strengths.iter().map(|&s| k * (1.0 - s)).collect();
    let weights = vec![1.0; strengths.len()];
    let mut g = GeneratingFunction::from_weights(coefficients, weights, 1.0, Regime::ShortTime);
    g.regime = Regime::ShortTime;
    Ok(g)
}

/// Frequency profile of the absorptivity 1 - (S S^dagger)_11 seen by a single detected mode.
#[derive(Clone)]
pub enum AbsorptivityProfile {
    /// depth / (1 + 4 (omega - center)^2 / width^2)
    Lorentzian { center: f64, width: f64, depth: f64 },
    /// `depth` on a window of total width `width`.
    Flat { center: f64, width: f64, depth: f64 },
    Custom { profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>, lo: f64, hi: f64 },
}

impl fmt::Debug for AbsorptivityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lorentzian { center, width, depth } => {
                write!(f, "Lorentzian {{ center: {center}, width: {width}, depth: {depth} }}")
            }
            Self::Flat { center, width, depth } => write!(f, "Flat {{ center: {center}, width: {width}, depth: {depth} }}"),
            Self::Custom { lo, hi, .. } => write!(f, "Custom {{ lo: {lo}, hi: {hi} }}"),
        }
    }
}

impl AbsorptivityProfile {
    fn peak(&self) -> f64 {
        match self {
            Self::Lorentzian { depth, .. } | Self::Flat { depth, .. } => depth.abs(),
            Self::Custom { profile, lo, hi } => {
                (0..=1000).map(|k| profile(lo + (hi - lo) * k as f64 / 1000.0).abs()).fold(0.0, f64::max)
            }
        }
    }

    /// Integral over omega of g(a(omega)), with g(0) = 0.
    fn integrate<G: Fn(f64) -> c64>(&self, g: G, tol: Tolerance) -> Result<c64> {
        match self {
            Self::Flat { width, depth, .. } => Ok(g(*depth) * *width),
            Self::Lorentzian { width, depth, .. } => {
                let f = |phi: f64| {
                    let c = phi.cos();
                    if c <= 0.0 {
                        return c64::new(0.0, 0.0);
                    }
                    g(depth * c * c) / (c * c) * (0.5 * width)
                };
                Ok(quadrature::integrate(f, -FRAC_PI_2, FRAC_PI_2, tol).require()?.value)
            }
            Self::Custom { profile, lo, hi } => {
                Ok(quadrature::integrate(|w: f64| g(profile(w)), *lo, *hi, tol).require()?.value)
            }
        }
    }
}

/// Generating function and statistics for detection of a single mode.
pub fn single_mode_stats(
    profile: &AbsorptivityProfile,
    cfg: &DetectionConfig,
    p_max: u32,
) -> Result<(GeneratingFunction, StatSummary)> {
    cfg.validate()?;
    let t = cfg.count_time;
    let af = cfg.alpha_f();
    let tol = Tolerance::rel(1e-12);
    let mut cumulants = Vec::new();
    for p in 1..=p_max.max(2) {
        let ip = profile.integrate(|a| c64::new(a.powi(p as i32), 0.0), tol)?.re;
        cumulants.push(factorial(p - 1) * t / (2.0 * PI) * af.powi(p as i32) * ip);
    }
    let area = profile.integrate(|a| c64::new(a, 0.0), tol)?.re;
    let peak = profile.peak();
    let nu = if peak > 0.0 { t * area / peak / (2.0 * PI) } else { 0.0 };
    let summary = StatSummary::from_cumulants(nu, cumulants, Regime::SingleMode);
    let radius = if peak * af.abs() > 0.0 { 1.0 / (peak * af.abs()) } else { f64::INFINITY };
    let prof = profile.clone();
    let gf = GeneratingFunction::new(
        move |xi: c64| {
            let bad = Cell::new(false);
            let v = prof.integrate(
                |a| {
                    let z = c64::new(1.0, 0.0) - xi * (af * a);
                    if z.re <= 0.0 {
                        bad.set(true);
                    }
                    z.ln()
                },
                tol,
            );
            if bad.get() {
                return Err(Error::DomainRadius(format!("log argument crosses zero at xi = {xi}")));
            }
            Ok(-v? * (t / (2.0 * PI)))
        },
        radius,
        Regime::SingleMode,
    );
    Ok((gf, summary))
}

/// Zero-rate limit of nu_eff/nu next to the Thouless ratio N_T/N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThoulessRatio {
    pub nu_eff_ratio: f64,
    pub thouless_over_n: f64,
    pub ratio: Option<f64>,
}

pub fn thouless_ratio(spec: &MediumSpec) -> Result<ThoulessRatio> {
    let n = spec.modes as f64;
    let probe = match spec.geometry {
        Geometry::CavityHole => 1e-9,
        Geometry::WaveguideSemiInfinite => 1e-12,
        Geometry::WaveguideFinite => 1e-9 * gamma_critical(spec.length()?)?,
    };
    let local = MediumSpec { gamma: probe, response: Response::Absorbing, ..spec.clone() };
    let (m, _) = narrowband_moments(&local)?;
    let nt = thouless_number(spec)? / n;
    let ratio = if nt > 0.0 { Some(m.nu_ratio / nt) } else { None };
    Ok(ThoulessRatio { nu_eff_ratio: m.nu_ratio, thouless_over_n: nt, ratio })
}

/// Both sides of det(delta_pp' 1 + A_p B_p') = det(1 + sum_q B_q A_q).
pub fn determinant_identity(a: &[Mat<c64>], b: &[Mat<c64>]) -> Result<(c64, c64)> {
    if a.len() != b.len() || a.is_empty() {
        return domain("need equally many A and B blocks");
    }
    let n = a[0].nrows();
    let m = a[0].ncols();
    for (ap, bp) in a.iter().zip(b) {
        if ap.nrows() != n || ap.ncols() != m || bp.nrows() != m || bp.ncols() != n {
            return domain("A blocks must be n x m and B blocks m x n");
        }
    }
    let blocks = a.len();
    let lhs = Mat::<c64>::from_fn(blocks * n, blocks * n, |i, j| {
        let (p, r) = (i / n, i % n);
        let (q, c) = (j / n, j % n);
        let mut v = if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
        for k in 0..m {
            v += a[p][(r, k)] * b[q][(k, c)];
        }
        v
    });
    let mut rhs = Mat::<c64>::identity(m, m);
    for (aq, bq) in a.iter().zip(b) {
        rhs += bq * aq;
    }
    Ok((lhs.determinant(), rhs.determinant()))
}

/// Broad-band nu_eff/(N t Gamma) curve of the cavity.
pub fn broadband_cavity_nu_ratio(gamma0: f64, response: Response) -> f64 {
    let sign = if response == Response::Absorbing { 1.0 } else { -1.0 };
    4.0 * (1.0 + sign * gamma0).powf(2.5) / (9.0 * gamma0 * gamma0 + sign * 20.0 * gamma0 + 16.0)
}

/// Integrates the per-mode rule `rule` against ln(1 - c xi) style integrands;
/// exposed for callers that build their own measures.
pub fn rule_moment(rule: &NodeRule, p: u32) -> f64 {
    rule.apply(|s: f64| (1.0 - s).powi(p as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::rho_cavity_weak;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn series_coefficients() {
        let c = d_series_coefficients();
        assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15 && c[2].abs() < 1e-15);
        assert!(rel(c[3], 2.0 / 15.0) < 1e-12);
        assert!(rel(c[4], -67.0 / 1260.0) < 1e-12);
    }

    #[test]
    fn series_and_direct_agree_near_switch() {
        for x in [0.7, 0.95, 1.0] {
            let (sn, cs) = f64::sin_cos(x);
            let direct = x - x * cs + x * sn * sn + sn - 3.0 * sn.powi(3) - cs.powi(3) * sn;
            assert!(rel(d_series(x, false), direct) < 1e-9, "{x}");
            let (sh, ch) = (f64::sinh(x), f64::cosh(x));
            let direct_h = x - x * ch - x * sh * sh + sh + 3.0 * sh.powi(3) - ch.powi(3) * sh;
            assert!(rel(d_series(x, true), direct_h) < 1e-9, "{x}");
        }
    }

    #[test]
    fn finite_waveguide_limits() {
        let l = 100.0;
        let gc = gamma_critical(l).unwrap();
        let spec = MediumSpec::finite_waveguide(Response::Amplifying, 1e-6 * gc, 10, l);
        let (m, _) = narrowband_moments(&spec).unwrap();
        assert!((m.nu_ratio - 5.0 / l).abs() < 1e-6);
        let near = MediumSpec { gamma: 0.9999 * gc, ..spec.clone() };
        assert!(narrowband_moments(&near).unwrap().0.nu_ratio < 1e-3);
        let abs = MediumSpec { response: Response::Absorbing, ..spec };
        assert!((narrowband_moments(&abs).unwrap().0.nu_ratio - 5.0 / l).abs() < 1e-6);
        let dark = MediumSpec { gamma: 0.0, ..abs };
        let (m, _) = narrowband_moments(&dark).unwrap();
        assert_eq!((m.m1, m.m2, m.nu_ratio), (0.0, 0.0, 5.0 / l));
        let hole = MediumSpec::cavity(Response::Absorbing, 0.0, 3);
        assert_eq!(narrowband_moments(&hole).unwrap().0.nu_ratio, 0.5);
    }

    #[test]
    fn absorbing_large_x_stays_finite() {
        let (m1, m2) = finite_absorbing_moments(1.0, 1e-4);
        assert!(m1.is_finite() && m2.is_finite() && m2 > 0.0);
        // deep absorption reproduces the semi-infinite waveguide at small gamma
        let g = 1e-3;
        let (m1, m2) = finite_absorbing_moments(g, gamma_critical(1e4).unwrap());
        let y: f64 = 1.0 + 4.0 / g;
        assert!(rel(m1, 0.5 * g * (y.sqrt() - 1.0)) < 2e-2);
        assert!(rel(m2, 1.0 / y.sqrt()) < 2e-2);
    }

    #[test]
    fn cavity_closed_forms() {
        let cfg = DetectionConfig::with_nu(10.0, 1.0, 1.0, 1.0);
        let s = closed_form_narrowband(&MediumSpec::cavity(Response::Absorbing, 1e3, 1), &cfg).unwrap();
        assert!((s.nu_eff_ratio().unwrap() - 1.0).abs() < 1e-2);
        let s = closed_form_narrowband(&MediumSpec::cavity(Response::Absorbing, 1e-6, 1), &cfg).unwrap();
        assert!((s.nu_eff_ratio().unwrap() - 0.5).abs() < 1e-5);
        let amp = DetectionConfig::with_nu(10.0, 1.0, 1.0, -1.0);
        let s = closed_form_narrowband(&MediumSpec::cavity(Response::Amplifying, 0.9, 1), &amp).unwrap();
        assert!(rel(s.nu_eff_ratio().unwrap(), 0.01 / 1.01) < 1e-12);
        assert!(s.mean > 0.0 && s.cumulants[1] > 0.0);
        assert!(closed_form_narrowband(&MediumSpec::cavity(Response::Amplifying, 1.0, 1), &amp).is_err());
        assert!(closed_form_narrowband(&MediumSpec::cavity(Response::Amplifying, 0.5, 1), &cfg).is_err());
    }

    #[test]
    fn closed_nu_eff_matches_moment_ratio() {
        let cfg = DetectionConfig::with_nu(3.0, 1.0, 0.5, 2.0);
        for g in [0.01, 0.3, 2.0, 40.0] {
            for spec in [MediumSpec::cavity(Response::Absorbing, g, 1), MediumSpec::waveguide(Response::Absorbing, g, 1)] {
                let s = closed_form_narrowband(&spec, &cfg).unwrap();
                assert!(rel(s.nu_eff.unwrap(), s.nu_eff_closed.unwrap()) < 1e-10, "{spec:?}");
            }
        }
        let s = closed_form_narrowband(&MediumSpec::waveguide(Response::Absorbing, 1e-6, 1), &cfg).unwrap();
        assert!(rel(s.nu_eff.unwrap(), 2.0 * s.nu * 1e-3) < 1e-3);
    }

    #[test]
    fn generating_function_basics() {
        let cfg = DetectionConfig::with_nu(4.0, 1.0, 1.0, 0.7);
        let rho = rho_cavity_full(1.0, 1.0).unwrap();
        let g = generating_long_time(&rho, &cfg).unwrap();
        assert_eq!(g.evaluate_real(0.0).unwrap(), 0.0);
        let k = factorial_cumulants(&rho, &cfg, 2).unwrap();
        let (d1, d2) = g.numeric_cumulants(1e-4).unwrap();
        assert!(rel(d1, k[0]) < 1e-6);
        assert!(rel(d2, k[1]) < 1e-6);
        assert!(rel(k[1], 4.0 * 0.49 * 5.0 / 16.0) < 1e-9);
        let bb = GeneratingFunction::black_body(5.0, 0.3);
        let xi = 0.8;
        assert!(rel(bb.evaluate_real(xi).unwrap(), -5.0 * (1.0 - 0.24f64).ln()) < 1e-14);
        assert!(bb.evaluate_real(4.0).is_err());
    }

    #[test]
    fn divergent_density_has_zero_radius() {
        let cfg = DetectionConfig::with_nu(4.0, 1.0, 1.0, -1.0);
        let g = generating_long_time(&dual_density(&rho_cavity_full(1.0, 1.2).unwrap()), &cfg).unwrap();
        assert_eq!(g.domain_radius, 0.0);
        assert!(g.evaluate_real(0.1).is_err());
    }

    #[test]
    fn weak_waveguide_is_glauber_like() {
        let gamma: f64 = 1e-4;
        let cfg = DetectionConfig::with_nu(50.0, 1.0, 1.0, 0.05);
        let g = generating_long_time(&rho_waveguide_semiinf(1.0, gamma).unwrap(), &cfg).unwrap();
        let nu = 50.0;
        for xa in [-0.5f64, -0.2, 0.2, 0.5] {
            let xi = xa / 0.05;
            let glauber = 2.0 * nu * gamma.sqrt() * (1.0 - (1.0 - xa).sqrt());
            let f = g.evaluate_real(xi).unwrap();
            assert!(rel(f, glauber) < 0.02, "{xa}: {f} vs {glauber}");
        }
    }

    #[test]
    fn short_time_models() {
        let cfg = DetectionConfig::step(1.0, 0.05, 1.0, 2.0);
        let g = short_time_generating(&ShortTimeModel::step_black_body(1, 1.0), &cfg).unwrap();
        let c = 0.05 / (2.0 * PI) * 2.0;
        assert!(rel(g.evaluate_real(3.0).unwrap(), -(1.0 - 3.0 * c).ln()) < 1e-14);
        assert!(short_time_generating(&ShortTimeModel::General, &cfg).is_err());
        let slow = DetectionConfig::step(1.0, 1.0, 1.0, 2.0);
        assert!(short_time_generating(&ShortTimeModel::step_black_body(1, 1.0), &slow).is_err());
        // single mode: -ln(1 - xi n) with n = (t W / 2 pi)(1 - sigma) alpha f
        let w = 2.0 * PI * 0.5 / (0.05 * 2.0 * 0.5);
        let model = ShortTimeModel::Factorized { band_integral: w, bandwidth: 1.0, strengths: vec![0.5] };
        let g = short_time_generating(&model, &cfg).unwrap();
        assert!(rel(g.evaluate_real(0.7).unwrap(), -(1.0 - 0.7 * 0.5f64).ln()) < 1e-13);
    }

    #[test]
    fn lorentzian_single_mode() {
        let cfg = DetectionConfig::step(0.8, 20.0, 1.0, 0.5);
        let profile = AbsorptivityProfile::Lorentzian { center: 0.0, width: 3.0, depth: 1.0 };
        let (g, s) = single_mode_stats(&profile, &cfg, 3).unwrap();
        let af = 0.4;
        assert!(rel(s.mean, 0.25 * 20.0 * 3.0 * af) < 1e-11);
        for xi in [-1.0, 0.5, 2.0] {
            let closed = 0.5 * 20.0 * 3.0 * (1.0 - (1.0 - xi * af).sqrt());
            assert!(rel(g.evaluate_real(xi).unwrap(), closed) < 1e-10);
        }
        let flat = AbsorptivityProfile::Flat { center: 0.0, width: 2.0, depth: 1.0 };
        let (g, s) = single_mode_stats(&flat, &cfg, 2).unwrap();
        assert!(rel(s.nu, 20.0 * 2.0 / (2.0 * PI)) < 1e-14);
        assert!(rel(g.evaluate_real(0.9).unwrap(), -s.nu * (1.0 - 0.9 * af).ln()) < 1e-13);
    }

    #[test]
    fn thouless_pairs() {
        let c = thouless_ratio(&MediumSpec::cavity(Response::Absorbing, 0.1, 50)).unwrap();
        assert!((c.nu_eff_ratio - 0.5).abs() < 1e-6 && c.thouless_over_n == 1.0);
        let w = thouless_ratio(&MediumSpec::finite_waveguide(Response::Absorbing, 0.001, 100, 20.0)).unwrap();
        assert!((w.nu_eff_ratio - 0.25).abs() < 1e-6);
        assert!((w.thouless_over_n - 0.05).abs() < 1e-15);
        assert!((w.ratio.unwrap() - 5.0).abs() < 1e-4);
        let s = thouless_ratio(&MediumSpec::waveguide(Response::Absorbing, 0.1, 10)).unwrap();
        assert!(s.nu_eff_ratio < 1e-5 && s.ratio.is_none());
    }

    #[test]
    fn determinant_identity_small() {
        let a = vec![Mat::<c64>::from_fn(2, 3, |i, j| c64::new(i as f64 + 0.5, j as f64 - 1.0))];
        let b = vec![Mat::<c64>::from_fn(3, 2, |i, j| c64::new(0.3 * j as f64, i as f64 * 0.2))];
        let (l, r) = determinant_identity(&a, &b).unwrap();
        assert!((l - r).norm() < 1e-12);
    }

    #[test]
    fn weak_and_full_cavity_kirchhoff() {
        let cfg = DetectionConfig::with_nu(10.0, 1.0, 1.0, 1.0);
        let w = long_time_stats(&rho_cavity_weak(1.0, 0.001).unwrap(), &cfg, 2).unwrap();
        assert!(rel(w.mean, 0.01) < 0.01);
    }

    #[test]
    fn broadband_cavity_limits() {
        let cfg = DetectionConfig::broad(1.0, 1.0, 1.0, 1e-6, 1.0);
        let s = broadband_stats(&MediumSpec::cavity(Response::Absorbing, 0.0, 1), &cfg).unwrap();
        assert!((s.nu_eff_ratio().unwrap() - 0.25).abs() < 1e-3);
        assert!(rel(s.nu_eff.unwrap(), s.nu_eff_closed.unwrap()) < 1e-8);
        let dark = DetectionConfig::broad(1.0, 1.0, 1.0, 0.0, 1.0);
        let s = broadband_stats(&MediumSpec::cavity(Response::Absorbing, 0.0, 1), &dark).unwrap();
        assert_eq!((s.mean, s.nu_eff_closed), (0.0, Some(0.25)));
        let wg = MediumSpec::finite_waveguide(Response::Absorbing, 0.0, 1, 100.0);
        assert!(broadband_stats(&wg, &dark).is_err());
        let amp = DetectionConfig::broad(1.0, 1.0, 1.0, 0.95, -1.0);
        assert!(broadband_stats(&MediumSpec::cavity(Response::Amplifying, 0.0, 1), &amp).is_ok());
        let over = DetectionConfig::broad(1.0, 1.0, 1.0, 1.0, -1.0);
        assert!(matches!(
            broadband_stats(&MediumSpec::cavity(Response::Amplifying, 0.0, 1), &over),
            Err(Error::AboveThreshold { .. })
        ));
    }
}
