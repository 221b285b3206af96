//! Photocount distributions and inversion of generating functions.

use std::f64::consts::PI;

use faer::c64;
use rustfft::FftPlanner;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::photostat::GeneratingFunction;
use crate::quadrature::compensated_sum;

/// Largest probability mass allowed beyond `n_max`.
pub const TAIL_BOUND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    NegativeBinomial,
    Poisson,
    BesselK,
    Numeric,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Self::NegativeBinomial => "negative-binomial",
            Self::Poisson => "poisson",
            Self::BesselK => "bessel-k",
            Self::Numeric => "numeric-inversion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    /// P(0), .., P(n_max).
    pub pmf: Vec<f64>,
    /// Mass beyond n_max.
    pub tail_mass: f64,
    /// Total negative mass removed by clipping round-off.
    pub clip_mass: f64,
    pub family: Family,
    pub mean: f64,
    pub variance: f64,
}

impl CountDistribution {
    fn build(pmf: Vec<f64>, tail_mass: f64, clip_mass: f64, family: Family) -> Self {
        let mean = compensated_sum(pmf.iter().enumerate().map(|(n, p)| n as f64 * p));
        let second = compensated_sum(pmf.iter().enumerate().map(|(n, p)| (n * n) as f64 * p));
        let total = compensated_sum(pmf.iter().copied());
        let mean = mean / total;
        let variance = second / total - mean * mean;
        Self { pmf, tail_mass, clip_mass, family, mean, variance }
    }

    pub fn n_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.pmf.iter().copied())
    }
}

fn check_tail(pmf: &[f64], n_max: usize) -> Result<f64> {
    let tail = (1.0 - compensated_sum(pmf.iter().copied())).max(0.0);
    if tail > TAIL_BOUND {
        return Err(Error::NMaxTooSmall { n_max, tail });
    }
    Ok(tail)
}

/// Negative binomial with mean `mean` and `nu` degrees of freedom.
pub fn pmf_negative_binomial(mean: f64, nu: f64, n_max: usize) -> Result<CountDistribution> {
    if !(mean > 0.0 && nu > 0.0) || !mean.is_finite() || !nu.is_finite() {
        return domain(format!("negative binomial needs mean > 0 and nu > 0, got {mean}, {nu}"));
    }
    let ln_q = (mean / (mean + nu)).ln();
    let mut lp = -nu * (mean / nu).ln_1p();
    let mut pmf = Vec::with_capacity(n_max + 1);
    pmf.push(lp.exp());
    for n in 1..=n_max {
        let k = n as f64;
        lp += ((k - 1.0 + nu) / k).ln() + ln_q;
        pmf.push(lp.exp());
    }
    let tail = check_tail(&pmf, n_max)?;
    Ok(CountDistribution::build(pmf, tail, 0.0, Family::NegativeBinomial))
}

pub fn pmf_poisson(mean: f64, n_max: usize) -> Result<CountDistribution> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return domain(format!("Poisson mean must be non-negative, got {mean}"));
    }
    let mut pmf = vec![0.0; n_max + 1];
    if mean == 0.0 {
        pmf[0] = 1.0;
    } else {
        let ln_m = mean.ln();
        let mut lp = -mean;
        pmf[0] = lp.exp();
        for (n, p) in pmf.iter_mut().enumerate().skip(1) {
            lp += ln_m - (n as f64).ln();
            *p = lp.exp();
        }
    }
    let tail = check_tail(&pmf, n_max)?;
    Ok(CountDistribution::build(pmf, tail, 0.0, Family::Poisson))
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + compensated_sum(terms.iter().map(|t| (t - m).exp())).ln()
}

/// ln K_{m+1/2}(z) from the terminating series
/// sqrt(pi/2z) e^-z sum_k (m+k)! / (k! (m-k)! (2z)^k).
pub fn ln_bessel_k_half(m: usize, z: f64) -> f64 {
    let mut terms = Vec::with_capacity(m + 1);
    let mut lt = 0.0;
    terms.push(lt);
    let ln2z = (2.0 * z).ln();
    for k in 1..=m {
        let kf = k as f64;
        lt += ((m as f64 + kf) * (m as f64 - kf + 1.0)).ln() - kf.ln() - ln2z;
        terms.push(lt);
    }
    0.5 * (PI / (2.0 * z)).ln() - z + log_sum_exp(&terms)
}

/// ln K_{m+1/2}(z) by the upward recurrence K_{v+1} = K_{v-1} + (2v/z) K_v,
/// carried as ratios.
pub fn ln_bessel_k_half_recurrence(m: usize, z: f64) -> f64 {
    let mut lk = 0.5 * (PI / (2.0 * z)).ln() - z;
    let mut ratio = 1.0; // K_{1/2} / K_{-1/2}
    for j in 0..m {
        let v = j as f64 + 0.5;
        ratio = 1.0 / ratio + 2.0 * v / z;
        lk += ratio.ln();
    }
    lk
}

/// ln K_{n-1/2}(z) for integer n >= 0, using K_{-v} = K_v.
fn ln_k_order_n_minus_half(n: usize, z: f64) -> f64 {
    ln_bessel_k_half(n.saturating_sub(1), z)
}

/// Glauber's Bessel-K distribution with generating function
/// kappa (1 - sqrt(1 - xi alpha f)) and mean kappa alpha f / 2.
pub fn pmf_bessel_k(mean: f64, kappa: f64, alpha_f: f64, n_max: usize) -> Result<CountDistribution> {
    if !(alpha_f > -1.0) {
        return domain(format!("Bessel-K family needs alpha f > -1, got {alpha_f}"));
    }
    if !(mean > 0.0 && kappa > 0.0) {
        return domain(format!("Bessel-K family needs mean > 0 and kappa > 0, got {mean}, {kappa}"));
    }
    let expected = 0.5 * kappa * alpha_f;
    if ((mean - expected) / expected).abs() > 1e-10 {
        return domain(format!("mean {mean} does not match kappa alpha f / 2 = {expected}"));
    }
    let root = (1.0 + alpha_f).sqrt();
    let z = kappa * root;
    let ln_b = (mean / root).ln();
    let mut logs = Vec::with_capacity(n_max + 64);
    let mut n = 0usize;
    let mut peak = f64::NEG_INFINITY;
    loop {
        let lw = -ln_gamma(n as f64 + 1.0) + n as f64 * ln_b + ln_k_order_n_minus_half(n, z);
        peak = peak.max(lw);
        logs.push(lw);
        // run past n_max until the remaining terms are negligible; they decay
        // geometrically with ratio alpha f / (1 + alpha f)
        if n >= n_max && lw < peak - 50.0 {
            break;
        }
        if n > n_max + 1_000_000 {
            return Err(Error::Convergence("Bessel-K tail does not decay".into()));
        }
        n += 1;
    }
    let norm = log_sum_exp(&logs);
    let all: Vec<f64> = logs.iter().map(|l| (l - norm).exp()).collect();
    let tail = compensated_sum(all[n_max + 1..].iter().copied());
    if tail > TAIL_BOUND {
        return Err(Error::NMaxTooSmall { n_max, tail });
    }
    let pmf = all[..=n_max].to_vec();
    Ok(CountDistribution::build(pmf, tail, 0.0, Family::BesselK))
}

fn contour_size(n_max: usize) -> usize {
    (4 * n_max.max(2)).next_power_of_two()
}

/// exp(F(z_k - 1)) at z_k = e^{2 pi i k/M}; F is real on the real axis, so
/// the upper half of the circle is the conjugate of the lower half.
fn contour_values(g: &GeneratingFunction, m: usize) -> Result<Vec<c64>> {
    let mut vals = vec![c64::new(0.0, 0.0); m];
    for k in 0..=m / 2 {
        let theta = 2.0 * PI * k as f64 / m as f64;
        let xi = c64::new(theta.cos() - 1.0, theta.sin());
        let f = g.evaluate(xi)?;
        if !f.re.is_finite() || !f.im.is_finite() {
            return Err(Error::DomainRadius(format!("F is not finite at xi = {xi}")));
        }
        vals[k] = f.exp();
    }
    for k in m / 2 + 1..m {
        vals[k] = vals[m - k].conj();
    }
    Ok(vals)
}

fn finish_inversion(raw: Vec<f64>, n_max: usize) -> Result<CountDistribution> {
    let tail = compensated_sum(raw[n_max + 1..].iter().copied()).max(0.0);
    if tail > TAIL_BOUND {
        return Err(Error::NMaxTooSmall { n_max, tail });
    }
    let mut clip = 0.0;
    let pmf: Vec<f64> = raw[..=n_max]
        .iter()
        .map(|&p| {
            if p < 0.0 {
                clip -= p;
                0.0
            } else {
                p
            }
        })
        .collect();
    Ok(CountDistribution::build(pmf, tail, clip, Family::Numeric))
}

/// P(n) from F by a discrete Fourier transform on the unit circle, using an FFT.
pub fn invert_generating(g: &GeneratingFunction, n_max: usize) -> Result<CountDistribution> {
    let m = contour_size(n_max);
    let mut buf = contour_values(g, m)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    fft.process(&mut buf);
    let raw = buf.iter().map(|v| v.re / m as f64).collect();
    finish_inversion(raw, n_max)
}

/// Same transform evaluated term by term.
pub fn invert_generating_direct(g: &GeneratingFunction, n_max: usize) -> Result<CountDistribution> {
    let m = contour_size(n_max);
    let vals = contour_values(g, m)?;
    let raw = (0..m)
        .map(|n| {
            let terms = vals.iter().enumerate().map(|(k, v)| {
                let phase = -2.0 * PI * ((k * n) % m) as f64 / m as f64;
                v.re * phase.cos() - v.im * phase.sin()
            });
            compensated_sum(terms) / m as f64
        })
        .collect();
    finish_inversion(raw, n_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmfMoments {
    pub mean: f64,
    pub variance: f64,
    pub factorial_moments: Vec<f64>,
    pub factorial_cumulants: Vec<f64>,
}

/// Exact moments of the stored pmf; factorial cumulants follow from factorial
/// moments by kappa_p = Phi_p - sum_k C(p-1, k-1) kappa_k Phi_{p-k}.
pub fn moments_from_pmf(d: &CountDistribution, p_max: usize) -> PmfMoments {
    let mut phi = vec![1.0; p_max + 1];
    for (p, slot) in phi.iter_mut().enumerate().skip(1) {
        *slot = compensated_sum(d.pmf.iter().enumerate().map(|(n, &pn)| {
            let falling: f64 = (0..p).map(|j| n as f64 - j as f64).product();
            falling * pn
        }));
    }
    let mut kappa = vec![0.0; p_max + 1];
    for p in 1..=p_max {
        let mut v = phi[p];
        let mut binom = 1.0; // C(p-1, k-1)
        for k in 1..p {
            v -= binom * kappa[k] * phi[p - k];
            binom *= (p - k) as f64 / k as f64;
        }
        kappa[p] = v;
    }
    let mean = phi.get(1).copied().unwrap_or(0.0);
    let variance = if p_max >= 2 { kappa[2] + mean } else { f64::NAN };
    PmfMoments { mean, variance, factorial_moments: phi[1..].to_vec(), factorial_cumulants: kappa[1..].to_vec() }
}

/// Largest absolute difference between two pmfs over the common range.
pub fn sup_distance(a: &CountDistribution, b: &CountDistribution) -> f64 {
    let n = a.pmf.len().max(b.pmf.len());
    (0..n)
        .map(|i| (a.pmf.get(i).copied().unwrap_or(0.0) - b.pmf.get(i).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// Total variation distance over the common range.
pub fn total_variation(a: &CountDistribution, b: &CountDistribution) -> f64 {
    let n = a.pmf.len().max(b.pmf.len());
    0.5 * compensated_sum(
        (0..n).map(|i| (a.pmf.get(i).copied().unwrap_or(0.0) - b.pmf.get(i).copied().unwrap_or(0.0)).abs()),
    ) + 0.5 * (a.tail_mass + b.tail_mass)
}
