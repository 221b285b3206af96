//! Monte Carlo ensembles of scattering strengths from random scattering matrices.

pub mod cavity;
pub mod haar;
pub mod star;
pub mod stats;
pub mod waveguide;

use std::io::Write;
use std::time::{Duration, Instant};

use faer::{c64, Mat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};

pub use cavity::{cavity_direct, cavity_recursive, jacobi_cosines, CavityMethod};
pub use haar::{haar_unitary, sample_unitary, Symmetry};
pub use star::{compose_star, ScatteringMatrix};
pub use stats::{ks_distance, mean_and_error, CdfTable, Comparison, EmpiricalDensity};
pub use waveguide::{calibrate_waveguide, sample_waveguide_strengths, Calibration, WaveguideConfig, WaveguideRun};

pub const DEFAULT_BARRIER: f64 = 0.02;
pub const MAX_BARRIER: f64 = 0.05;
/// Largest tolerated fraction of samples dropped for ill-conditioning.
pub const MAX_SKIPPED_FRACTION: f64 = 1e-3;

/// Independent random stream for sample `index`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn check_skipped(skipped: usize, samples: usize) -> Result<()> {
    if skipped as f64 > MAX_SKIPPED_FRACTION * samples as f64 {
        return Err(Error::MonteCarlo(format!("{skipped} of {samples} samples were ill-conditioned")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub modes: usize,
    pub gamma: f64,
    /// Number N' of fictitious lossy channels.
    pub fictitious: usize,
    /// Transmission probability of each fictitious channel's barrier.
    pub barrier: f64,
    pub symmetry: Symmetry,
    pub method: CavityMethod,
    pub samples: usize,
    pub seed: u64,
    pub bins: usize,
}

impl EnsembleConfig {
    pub fn new(modes: usize, gamma: f64, samples: usize, seed: u64) -> Result<Self> {
        Self::with_barrier(modes, gamma, DEFAULT_BARRIER, samples, seed)
    }

    /// N' = ceil(N gamma / target) and the barrier adjusted so N' barrier = N gamma.
    pub fn with_barrier(modes: usize, gamma: f64, target: f64, samples: usize, seed: u64) -> Result<Self> {
        if !(target > 0.0 && target <= MAX_BARRIER) {
            return domain(format!("barrier transmission {target} must lie in (0, {MAX_BARRIER}]"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return domain(format!("absorption rate must be non-negative, got {gamma}"));
        }
        let product = modes as f64 * gamma;
        let fictitious = (product / target - 1e-9).ceil().max(0.0) as usize;
        let barrier = if fictitious == 0 { target } else { product / fictitious as f64 };
        let cfg = Self {
            modes,
            gamma,
            fictitious,
            barrier,
            symmetry: Symmetry::default(),
            method: CavityMethod::default(),
            samples,
            seed,
            bins: 40,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 || self.samples == 0 {
            return domain("need at least one mode and one sample");
        }
        if !(self.barrier > 0.0 && self.barrier <= MAX_BARRIER) {
            return domain(format!("barrier transmission {} must lie in (0, {MAX_BARRIER}]", self.barrier));
        }
        let product = self.modes as f64 * self.gamma;
        if (self.fictitious as f64 * self.barrier - product).abs() > 1e-12 * product.max(1.0) && self.fictitious > 0 {
            return domain("N' times the barrier transmission must equal N gamma");
        }
        if self.bins < 2 {
            return domain("need at least two histogram bins");
        }
        Ok(())
    }
}

/// Physical reflection block of one sample and its strengths (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct SubunitaryS {
    pub s: Mat<c64>,
    pub strengths: Vec<f64>,
    pub seed: u64,
    pub index: u64,
}

pub fn sample_cavity_matrix(cfg: &EnsembleConfig, index: u64) -> Result<SubunitaryS> {
    let mut rng = stream_rng(cfg.seed, index);
    let (s, strengths) =
        cavity::cavity_sample(cfg.modes, cfg.fictitious, cfg.barrier, cfg.symmetry, cfg.method, &mut rng)?;
    Ok(SubunitaryS { s, strengths, seed: cfg.seed, index })
}

/// Samples in index order; ill-conditioned ones come out as errors.
pub fn cavity_samples(cfg: &EnsembleConfig) -> impl Iterator<Item = Result<SubunitaryS>> + '_ {
    (0..cfg.samples as u64).map(move |i| sample_cavity_matrix(cfg, i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityRun {
    pub indices: Vec<u64>,
    pub strengths: Vec<Vec<f64>>,
    pub skipped: usize,
    /// Samples asked for; more than were drawn when a time budget ran out.
    pub requested: usize,
}

impl CavityRun {
    /// Mean of (1/N) sum (1 - sigma) over samples, with its standard error.
    pub fn absorptivity(&self) -> (f64, f64) {
        let per: Vec<f64> = self
            .strengths
            .iter()
            .map(|s| s.iter().map(|x| 1.0 - x).sum::<f64>() / s.len() as f64)
            .collect();
        mean_and_error(&per)
    }

    /// Strengths of the dual amplifying samples.
    pub fn reciprocal(&self) -> Result<CavityRun> {
        let strengths = self.strengths.iter().map(|s| reciprocal_strengths(s)).collect::<Result<_>>()?;
        Ok(CavityRun { indices: self.indices.clone(), strengths, skipped: self.skipped, requested: self.requested })
    }
}

/// Runs the cavity ensemble in parallel; the result does not depend on the
/// number of worker threads.
pub fn sample_cavity_strengths(cfg: &EnsembleConfig) -> Result<CavityRun> {
    sample_cavity_within(cfg, None)
}

/// Like [`sample_cavity_strengths`], but stops after the chunk during which
/// `budget` ran out. The samples drawn are always a prefix in index order.
pub fn sample_cavity_within(cfg: &EnsembleConfig, budget: Option<Duration>) -> Result<CavityRun> {
    cfg.validate()?;
    let start = Instant::now();
    let chunk = 8 * rayon::current_num_threads() as u64;
    let total = cfg.samples as u64;
    let mut run = CavityRun { indices: Vec::new(), strengths: Vec::new(), skipped: 0, requested: cfg.samples };
    let mut next = 0u64;
    while next < total {
        if budget.is_some_and(|b| start.elapsed() >= b) {
            break;
        }
        let end = (next + chunk).min(total);
        let results: Vec<Result<Vec<f64>>> =
            (next..end).into_par_iter().map(|i| sample_cavity_matrix(cfg, i).map(|s| s.strengths)).collect();
        for (i, r) in (next..end).zip(results) {
            match r {
                Ok(s) => {
                    run.indices.push(i);
                    run.strengths.push(s);
                }
                Err(Error::Conditioning) => run.skipped += 1,
                Err(e) => return Err(e),
            }
        }
        next = end;
    }
    check_skipped(run.skipped, (next as usize).max(1))?;
    Ok(run)
}

impl CavityRun {
    pub fn drawn(&self) -> usize {
        self.strengths.len() + self.skipped
    }

    pub fn complete(&self) -> bool {
        self.drawn() == self.requested
    }
}

fn reciprocal_strengths(s: &[f64]) -> Result<Vec<f64>> {
    if s.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::SingularDual);
    }
    Ok(s.iter().rev().map(|x| 1.0 / x).collect())
}

/// Amplifying counterpart S- = (S+^dagger)^-1 with reciprocal strengths.
pub fn dual_amplifying(sample: &SubunitaryS) -> Result<SubunitaryS> {
    let strengths = reciprocal_strengths(&sample.strengths)?;
    let n = sample.s.nrows();
    let inv = haar::solve_checked(&sample.s.adjoint().to_owned(), &Mat::identity(n, n))
        .map_err(|_| Error::SingularDual)?;
    Ok(SubunitaryS { s: inv, strengths, seed: sample.seed, index: sample.index })
}

/// One row per sample: index, then the strengths.
pub fn write_strengths_csv<W: Write>(out: &mut W, indices: &[u64], strengths: &[Vec<f64>]) -> std::io::Result<()> {
    let width = strengths.first().map_or(0, Vec::len);
    write!(out, "sample")?;
    for k in 1..=width {
        write!(out, ",sigma_{k}")?;
    }
    writeln!(out)?;
    for (i, s) in indices.iter().zip(strengths) {
        write!(out, "{i}")?;
        for v in s {
            write!(out, ",{v:e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barrier_adjustment() {
        let c = EnsembleConfig::new(50, 1.0, 10, 0).unwrap();
        assert_eq!(c.fictitious, 2500);
        assert!((c.barrier - 0.02).abs() < 1e-15);
        let c = EnsembleConfig::with_barrier(7, 0.3, 0.05, 10, 0).unwrap();
        assert_eq!(c.fictitious, 42);
        assert!((c.fictitious as f64 * c.barrier - 2.1).abs() < 1e-12);
        assert!(EnsembleConfig::with_barrier(5, 1.0, 0.1, 10, 0).is_err());
        assert_eq!(EnsembleConfig::new(5, 0.0, 10, 0).unwrap().fictitious, 0);
    }

    #[test]
    fn lossless_cavity_reflects_everything() {
        let cfg = EnsembleConfig::new(6, 0.0, 20, 1).unwrap();
        let run = sample_cavity_strengths(&cfg).unwrap();
        for s in &run.strengths {
            assert!(s.iter().map(|x| 1.0 - x).sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn duality_of_samples() {
        let s = SubunitaryS {
            s: Mat::from_fn(2, 2, |i, j| if i == j { c64::new([0.5, 0.25f64.sqrt() * 2f64.sqrt()][i], 0.0) } else { c64::new(0.0, 0.0) }),
            strengths: vec![0.25, 0.5],
            seed: 0,
            index: 0,
        };
        assert_eq!(dual_amplifying(&s).unwrap().strengths, vec![2.0, 4.0]);
        let cfg = EnsembleConfig::new(4, 0.5, 3, 2).unwrap();
        for sample in cavity_samples(&cfg) {
            let sample = sample.unwrap();
            let back = dual_amplifying(&dual_amplifying(&sample).unwrap()).unwrap();
            assert!((&back.s - &sample.s).norm_max() < 1e-10);
            let d = dual_amplifying(&sample).unwrap();
            let direct = haar::strengths_of(&d.s).unwrap();
            for (a, b) in direct.iter().zip(&d.strengths) {
                assert!(((a - b) / b).abs() < 1e-8);
            }
        }
        let zero = SubunitaryS { s: Mat::zeros(1, 1), strengths: vec![0.0], seed: 0, index: 0 };
        assert!(matches!(dual_amplifying(&zero), Err(Error::SingularDual)));
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_strengths_csv(&mut buf, &[0, 3], &[vec![0.5, 1.0], vec![0.25, 0.75]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "sample,sigma_1,sigma_2\n0,5e-1,1e0\n3,2.5e-1,7.5e-1\n");
    }
}
