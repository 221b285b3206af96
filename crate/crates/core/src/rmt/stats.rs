//! Histograms of sampled strengths and comparison with analytic densities.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::densities::StrengthDensity;
use crate::error::{domain, Error, Result};
use crate::quadrature::{compensated_sum, integrate, Tolerance};

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Mean and standard error of per-sample values.
pub fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Cumulative distribution of a density tabulated on a grid in the
/// quadrature angle, for quantiles and random draws.
#[derive(Debug, Clone)]
pub struct CdfTable {
    theta: Vec<f64>,
    cdf: Vec<f64>,
    lo: f64,
    width: f64,
    dual: bool,
}

impl CdfTable {
    pub fn new(rho: &StrengthDensity, cells: usize) -> Result<Self> {
        let (lo, hi) = rho.base_support();
        let width = hi - lo;
        let dual = rho.is_dual();
        // rho restricted to the absorbing form, in theta
        let base = if dual { crate::densities::dual_density(rho) } else { rho.clone() };
        let f = |t: f64| {
            let (sn, cs) = t.sin_cos();
            let s = lo + width * sn * sn;
            base.evaluate(s) * width * 2.0 * sn * cs
        };
        let cells = cells.max(16);
        let tol = Tolerance { abs: 1e-15 * rho.total_weight(), ..Tolerance::rel(1e-11) };
        let theta: Vec<f64> = (0..=cells).map(|i| FRAC_PI_2 * i as f64 / cells as f64).collect();
        let mut cdf = vec![0.0; cells + 1];
        for i in 0..cells {
            let e = integrate(f, theta[i], theta[i + 1], tol).require()?;
            cdf[i + 1] = cdf[i] + e.value;
        }
        let total = cdf[cells];
        if !(total > 0.0) {
            return Err(Error::Quadrature("density has no weight".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { theta, cdf, lo, width, dual })
    }

    fn theta_at(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let j = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.theta[j - 1] + frac * (self.theta[j] - self.theta[j - 1])
    }

    /// sigma with P(strength <= sigma) = u.
    pub fn quantile(&self, u: f64) -> f64 {
        let (v, flip) = if self.dual { (1.0 - u, true) } else { (u, false) };
        let s = self.lo + self.width * self.theta_at(v).sin().powi(2);
        if flip {
            1.0 / s
        } else {
            s
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Fixed-bin histogram of strengths; values outside the outer edges are
/// counted in the first or last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDensity {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    /// Number of strengths per sample, so that the density integrates to it.
    pub per_sample: usize,
    pub samples: usize,
    /// Strengths beyond the outer edges (already folded into the end bins).
    pub outside: u64,
    pub values_sum: [f64; 2],
}

impl EmpiricalDensity {
    pub fn new(samples: &[Vec<f64>], edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("histogram edges must increase");
        }
        let per_sample = samples.first().map_or(0, Vec::len);
        let mut counts = vec![0u64; edges.len() - 1];
        let mut total = 0u64;
        let mut outside = 0u64;
        let (first, last) = (edges[0], edges[edges.len() - 1]);
        let inner = &edges[1..edges.len() - 1];
        let (mut s1, mut s2) = (Vec::new(), Vec::new());
        for v in samples.iter().flatten() {
            let j = inner.partition_point(|&e| e <= *v);
            counts[j] += 1;
            total += 1;
            if *v < first || *v > last {
                outside += 1;
            }
            s1.push(1.0 - v);
            s2.push((1.0 - v).powi(2));
        }
        Ok(Self {
            edges,
            counts,
            total,
            per_sample,
            samples: samples.len(),
            outside,
            values_sum: [compensated_sum(s1), compensated_sum(s2)],
        })
    }

    /// Histogram on bins of equal analytic probability.
    pub fn equiprobable(samples: &[Vec<f64>], rho: &StrengthDensity, bins: usize) -> Result<Self> {
        let table = CdfTable::new(rho, 2048)?;
        let mut edges: Vec<f64> = (0..=bins).map(|i| table.quantile(i as f64 / bins as f64)).collect();
        let (lo, hi) = rho.support();
        edges[0] = lo;
        edges[bins] = if hi.is_finite() { hi } else { f64::MAX };
        edges.dedup();
        Self::new(samples, edges)
    }

    /// Density estimate and its Poisson error per bin.
    pub fn density(&self) -> Vec<(f64, f64, f64)> {
        let norm = self.samples.max(1) as f64;
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, &c)| {
                let width = w[1] - w[0];
                let centre = 0.5 * (w[0] + w[1]);
                (centre, c as f64 / norm / width, (c as f64).sqrt() / norm / width)
            })
            .collect()
    }

    /// Sample estimate of the spectral moment of order 1 or 2 per sample.
    pub fn moment(&self, p: usize) -> f64 {
        self.values_sum[p - 1] / self.samples.max(1) as f64
    }

    pub fn compare(&self, rho: &StrengthDensity) -> Result<Comparison> {
        if self.total < 1000 {
            return domain(format!("{} strengths are too few for a comparison", self.total));
        }
        let (lo, hi) = rho.support();
        let overlap = self.edges[0] < hi && self.edges[self.edges.len() - 1] > lo;
        if !overlap || self.outside == self.total {
            return Err(Error::SupportMismatch(format!("no sampled strength lies in ({lo}, {hi})")));
        }
        let weight = rho.total_weight();
        let mut cum = Vec::with_capacity(self.edges.len());
        for &e in &self.edges {
            cum.push(rho.cumulative(e)? / weight);
        }
        cum[0] = 0.0;
        *cum.last_mut().unwrap() = 1.0;
        let total = self.total as f64;
        let mut stat = 0.0;
        let mut used = 0usize;
        for (w, &c) in cum.windows(2).zip(&self.counts) {
            let expected = total * (w[1] - w[0]);
            if expected <= 0.0 {
                if c > 0 {
                    return Err(Error::SupportMismatch("strengths in a bin of zero probability".into()));
                }
                continue;
            }
            stat += (c as f64 - expected).powi(2) / expected;
            used += 1;
        }
        let dof = used.saturating_sub(1).max(1) as f64;
        let p_value = ChiSquared::new(dof).map_err(|e| Error::MonteCarlo(e.to_string()))?.sf(stat);
        let scale = self.per_sample as f64 / weight;
        let delta = |p: u32, emp: f64| -> Option<f64> {
            rho.moment(p).ok().map(|m| (emp - m * scale) / (m * scale))
        };
        Ok(Comparison {
            statistic: stat,
            dof,
            p_value,
            m1_delta: delta(1, self.moment(1)),
            m2_delta: delta(2, self.moment(2)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
    /// Relative deviation of the sampled moments from the analytic ones;
    /// `None` when the analytic moment diverges.
    pub m1_delta: Option<f64>,
    pub m2_delta: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{dual_density, rho_cavity_full, rho_waveguide_semiinf};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_of_shifted_samples() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
        assert!((ks_distance(&a, &b) - 0.1).abs() < 2e-3);
        assert_eq!(ks_distance(&a, &a), 0.0);
    }

    #[test]
    fn quantiles_invert_cumulative() {
        for rho in [rho_cavity_full(1.0, 0.5).unwrap(), rho_waveguide_semiinf(1.0, 2.0).unwrap()] {
            let t = CdfTable::new(&rho, 1024).unwrap();
            for u in [0.01, 0.3, 0.5, 0.9] {
                let s = t.quantile(u);
                assert!((rho.cumulative(s).unwrap() - u).abs() < 1e-5, "{u}");
            }
        }
        let d = dual_density(&rho_cavity_full(1.0, 0.5).unwrap());
        let t = CdfTable::new(&d, 1024).unwrap();
        let s = t.quantile(0.4);
        assert!(s > 1.0);
        assert!((d.cumulative(s).unwrap() - 0.4).abs() < 1e-5);
    }

    fn self_test(rho: &StrengthDensity, seed: u64) -> Comparison {
        let table = CdfTable::new(rho, 2048).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<Vec<f64>> = (0..5000).map(|_| vec![table.sample(&mut rng)]).collect();
        let hist = EmpiricalDensity::equiprobable(&draws, rho, 40).unwrap();
        hist.compare(rho).unwrap()
    }

    #[test]
    fn inverse_cdf_samples_pass() {
        let c = self_test(&rho_cavity_full(1.0, 1.0).unwrap(), 11);
        assert!(c.p_value > 0.05, "{c:?}");
        assert!(c.m1_delta.unwrap().abs() < 0.05);
        let c = self_test(&dual_density(&rho_cavity_full(1.0, 0.5).unwrap()), 12);
        assert!(c.p_value > 0.05, "{c:?}");
    }

    #[test]
    fn wrong_density_fails() {
        let table = CdfTable::new(&rho_cavity_full(1.0, 1.0).unwrap(), 2048).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let draws: Vec<Vec<f64>> = (0..5000).map(|_| vec![table.sample(&mut rng)]).collect();
        let other = rho_cavity_full(1.0, 1.5).unwrap();
        let hist = EmpiricalDensity::equiprobable(&draws, &other, 40).unwrap();
        assert!(hist.compare(&other).unwrap().p_value < 1e-6);
    }

    #[test]
    fn disjoint_support_is_reported() {
        let rho = rho_waveguide_semiinf(1.0, 4.0).unwrap();
        let draws: Vec<Vec<f64>> = (0..2000).map(|_| vec![0.9]).collect();
        let hist = EmpiricalDensity::new(&draws, vec![0.0, 0.25, 0.5]).unwrap();
        assert!(matches!(hist.compare(&rho), Err(Error::SupportMismatch(_))));
        let few = EmpiricalDensity::new(&draws[..10], vec![0.0, 0.25, 0.5]).unwrap();
        assert!(few.compare(&rho).is_err());
    }
}
