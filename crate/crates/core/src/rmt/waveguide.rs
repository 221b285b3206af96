//! Disordered waveguide built from thin slices.
//!
//! A slice is a partial reflector (reflection probability p per mode) between
//! two independent Haar mixers. A cascade of M incoherent reflectors transmits
//! 1 / (1 + M p / (1 - p)), so p / (1 - p) = dL/l gives Ohm's law with mean free
//! path l; that is p = c_r dL/l with c_r = 1 / (1 + dL/l). The first mixer of
//! each slice carries the amplitude damping exp(-(gamma/4) dL/l) per pass,
//! which reproduces the mean absorptivity of the semi-infinite medium at
//! large N.

use faer::{c64, Mat, Scale};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::haar::{haar_unitary, strengths_of};
use super::star::{compose_star, terminate, ScatteringMatrix};
use super::stats::{ks_distance, mean_and_error};
use super::{check_skipped, stream_rng};
use crate::error::{domain, Error, Result};

/// Largest slice thickness in mean free paths.
pub const MAX_SLICE: f64 = 0.05;
/// Successive doublings must differ by less than this Kolmogorov distance.
pub const STATIONARY_KS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideConfig {
    pub modes: usize,
    pub gamma: f64,
    /// L/l; `None` for the semi-infinite medium.
    pub length_ratio: Option<f64>,
    /// dL/l.
    pub slice: f64,
    pub reflect_coeff: f64,
    pub samples: usize,
    pub seed: u64,
}

impl WaveguideConfig {
    pub fn semi_infinite(modes: usize, gamma: f64, samples: usize, seed: u64) -> Self {
        Self {
            modes,
            gamma,
            length_ratio: None,
            slice: MAX_SLICE,
            reflect_coeff: 1.0 / (1.0 + MAX_SLICE),
            samples,
            seed,
        }
    }

    pub fn finite(modes: usize, gamma: f64, length_ratio: f64, samples: usize, seed: u64) -> Self {
        Self { length_ratio: Some(length_ratio), ..Self::semi_infinite(modes, gamma, samples, seed) }
    }

    pub fn with_slice(mut self, slice: f64) -> Self {
        self.slice = slice;
        self.reflect_coeff = 1.0 / (1.0 + slice);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 || self.samples == 0 {
            return domain("need at least one mode and one sample");
        }
        if !(self.slice > 0.0 && self.slice <= MAX_SLICE) {
            return domain(format!("slice thickness {} must lie in (0, {MAX_SLICE}]", self.slice));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return domain(format!("absorption rate must be non-negative, got {}", self.gamma));
        }
        if !(self.reflect_coeff > 0.0 && self.reflect_coeff * self.slice < 1.0) {
            return domain("reflection probability per slice must lie in (0, 1)");
        }
        match self.length_ratio {
            Some(l) if !(l >= 1.0 && l.is_finite()) => domain(format!("L/l = {l} must be at least 1")),
            None if self.gamma == 0.0 => domain("a lossless semi-infinite waveguide reflects everything"),
            _ => Ok(()),
        }
    }

    fn slices_for(&self, length: f64) -> usize {
        (length / self.slice).round().max(1.0) as usize
    }
}

/// One slice: mixer (with damping), reflector, mixer.
pub fn slice_matrix<R: Rng + ?Sized>(cfg: &WaveguideConfig, rng: &mut R) -> ScatteringMatrix {
    let n = cfg.modes;
    let p = cfg.reflect_coeff * cfg.slice;
    let damp = (-0.25 * cfg.gamma * cfg.slice).exp();
    let u1 = haar_unitary(n, rng);
    let v1 = haar_unitary(n, rng);
    let u2 = haar_unitary(n, rng);
    let v2 = haar_unitary(n, rng);
    let (rs, ts) = (p.sqrt(), (1.0 - p).sqrt());
    ScatteringMatrix {
        r: Scale(c64::new(rs * damp * damp, 0.0)) * (&v1 * &u1),
        t: Scale(c64::new(ts * damp, 0.0)) * (&u2 * &u1),
        tp: Scale(c64::new(ts * damp, 0.0)) * (&v1 * &v2),
        rp: Scale(c64::new(-rs, 0.0)) * (&u2 * &v2),
    }
}

fn finite_sample(cfg: &WaveguideConfig, length: f64, rng: &mut ChaCha8Rng) -> Result<ScatteringMatrix> {
    let mut total = slice_matrix(cfg, rng);
    for _ in 1..cfg.slices_for(length) {
        total = compose_star(&total, &slice_matrix(cfg, rng))?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideRun {
    /// Sample index and strengths, in index order.
    pub indices: Vec<u64>,
    pub strengths: Vec<Vec<f64>>,
    /// Tr t t^dagger / N per sample (finite media only).
    pub transmission: Vec<f64>,
    pub length_ratio: f64,
    /// (L/l, Kolmogorov distance to the previous length) for semi-infinite runs.
    pub ks_history: Vec<(f64, f64)>,
    pub skipped: usize,
}

impl WaveguideRun {
    pub fn absorptivity(&self) -> (f64, f64) {
        let per: Vec<f64> = self
            .strengths
            .iter()
            .map(|s| s.iter().map(|x| 1.0 - x).sum::<f64>() / s.len() as f64)
            .collect();
        mean_and_error(&per)
    }
}

/// Strengths of reflection (semi-infinite) or of r r^dagger + t' t'^dagger
/// (finite length, both outgoing blocks towards the detector side).
pub fn sample_waveguide_strengths(cfg: &WaveguideConfig) -> Result<WaveguideRun> {
    cfg.validate()?;
    match cfg.length_ratio {
        Some(l) => sample_finite(cfg, l),
        None => sample_semi_infinite(cfg),
    }
}

fn sample_finite(cfg: &WaveguideConfig, length: f64) -> Result<WaveguideRun> {
    let results: Vec<Result<(Vec<f64>, f64)>> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i);
            let s = finite_sample(cfg, length, &mut rng)?;
            let out = &s.r * s.r.adjoint() + &s.tp * s.tp.adjoint();
            let sigma = strengths_of_hermitian(&out)?;
            let trans = (0..s.t.nrows())
                .flat_map(|i| (0..s.t.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| s.t[(i, j)].norm_sqr())
                .sum::<f64>()
                / cfg.modes as f64;
            Ok((sigma, trans))
        })
        .collect();
    let mut run = WaveguideRun {
        indices: Vec::new(),
        strengths: Vec::new(),
        transmission: Vec::new(),
        length_ratio: length,
        ks_history: Vec::new(),
        skipped: 0,
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((s, t)) => {
                run.indices.push(i as u64);
                run.strengths.push(s);
                run.transmission.push(t);
            }
            Err(Error::Conditioning) => run.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    check_skipped(run.skipped, cfg.samples)?;
    Ok(run)
}

fn strengths_of_hermitian(h: &Mat<c64>) -> Result<Vec<f64>> {
    let mut e = h
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::Convergence("Hermitian eigenvalues".into()))?;
    e.sort_by(f64::total_cmp);
    Ok(e)
}

struct Growth {
    rng: ChaCha8Rng,
    r: Mat<c64>,
    ok: bool,
}

/// Adds slices in front of a growing medium and doubles its length until the
/// strength distribution stops changing.
fn sample_semi_infinite(cfg: &WaveguideConfig) -> Result<WaveguideRun> {
    let n = cfg.modes;
    let max_length = 64.0 / cfg.gamma.sqrt();
    let mut states: Vec<Growth> = (0..cfg.samples as u64)
        .map(|i| Growth { rng: stream_rng(cfg.seed, i), r: Mat::zeros(n, n), ok: true })
        .collect();
    let grow = |states: &mut Vec<Growth>, slices: usize| {
        states.par_iter_mut().for_each(|st| {
            for _ in 0..slices {
                if !st.ok {
                    return;
                }
                let s = slice_matrix(cfg, &mut st.rng);
                match terminate(&s, &st.r) {
                    Ok(r) => st.r = r,
                    Err(_) => st.ok = false,
                }
            }
        });
    };
    let collect = |states: &Vec<Growth>| -> Result<Vec<Option<Vec<f64>>>> {
        states.par_iter().map(|st| if st.ok { strengths_of(&st.r).map(Some) } else { Ok(None) }).collect()
    };
    let mut length = 1.0;
    grow(&mut states, cfg.slices_for(length));
    let mut prev = collect(&states)?;
    let mut history = Vec::new();
    loop {
        if 2.0 * length > max_length {
            return Err(Error::Convergence(format!(
                "strength distribution still changing at L/l = {length} (limit {max_length:.1})"
            )));
        }
        grow(&mut states, cfg.slices_for(2.0 * length) - cfg.slices_for(length));
        length *= 2.0;
        let next = collect(&states)?;
        let flat = |v: &Vec<Option<Vec<f64>>>| -> Vec<f64> {
            v.iter().zip(&next).filter_map(|(a, b)| b.as_ref().and(a.as_ref())).flatten().copied().collect()
        };
        let d = ks_distance(&flat(&prev), &flat(&next));
        history.push((length, d));
        prev = next;
        if d < STATIONARY_KS {
            break;
        }
    }
    let mut run = WaveguideRun {
        indices: Vec::new(),
        strengths: Vec::new(),
        transmission: Vec::new(),
        length_ratio: length,
        ks_history: history,
        skipped: 0,
    };
    for (i, s) in prev.into_iter().enumerate() {
        match s {
            Some(s) => {
                run.indices.push(i as u64);
                run.strengths.push(s);
            }
            None => run.skipped += 1,
        }
    }
    check_skipped(run.skipped, cfg.samples)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub reflect_coeff: f64,
    /// (L/l, measured Tr t t^dagger / N, 1 / (1 + L/l)).
    pub checks: Vec<(f64, f64, f64)>,
}

impl Calibration {
    pub fn worst_relative_error(&self) -> f64 {
        self.checks.iter().map(|(_, m, e)| ((m - e) / e).abs()).fold(0.0, f64::max)
    }
}

/// Lossless transmission against Ohm's law at L/l = 2 and 8. The reflection
/// coefficient starts from the incoherent value and is rescaled from the
/// L/l = 8 measurement when that misses by more than 1%.
pub fn calibrate_waveguide(modes: usize, slice: f64, samples: usize, seed: u64) -> Result<Calibration> {
    let base = WaveguideConfig::finite(modes, 0.0, 8.0, samples, seed).with_slice(slice);
    let mut c_r = base.reflect_coeff;
    for _ in 0..3 {
        let cfg = WaveguideConfig { reflect_coeff: c_r, ..base.clone() };
        let (g, _) = mean_and_error(&sample_waveguide_strengths(&cfg)?.transmission);
        let expect = 1.0 / 9.0;
        if ((g - expect) / expect).abs() < 0.01 {
            break;
        }
        // g = 1 / (1 + L/l_eff), and l_eff scales inversely with c_r
        let ratio_eff = 1.0 / g - 1.0;
        c_r *= 8.0 / ratio_eff;
    }
    let mut checks = Vec::new();
    for l in [2.0, 8.0] {
        let cfg = WaveguideConfig { reflect_coeff: c_r, length_ratio: Some(l), ..base.clone() };
        let (g, _) = mean_and_error(&sample_waveguide_strengths(&cfg)?.transmission);
        checks.push((l, g, 1.0 / (1.0 + l)));
    }
    Ok(Calibration { reflect_coeff: c_r, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmt::haar::unitarity_defect;

    #[test]
    fn lossless_slice_is_unitary() {
        let cfg = WaveguideConfig::finite(4, 0.0, 1.0, 1, 0);
        let mut rng = stream_rng(1, 0);
        let s = slice_matrix(&cfg, &mut rng);
        assert!(unitarity_defect(&s.full()) < 1e-12);
    }

    #[test]
    fn lossless_finite_medium_conserves_flux() {
        let cfg = WaveguideConfig::finite(5, 0.0, 2.0, 20, 3);
        let run = sample_waveguide_strengths(&cfg).unwrap();
        for s in &run.strengths {
            assert!(s.iter().map(|x| 1.0 - x).sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn absorbing_strengths_in_unit_interval() {
        let cfg = WaveguideConfig::finite(4, 2.0, 1.0, 20, 4);
        let run = sample_waveguide_strengths(&cfg).unwrap();
        assert!(run.strengths.iter().flatten().all(|&x| (0.0..=1.0 + 1e-10).contains(&x)));
    }

    #[test]
    fn config_checks() {
        assert!(WaveguideConfig::semi_infinite(3, 0.0, 10, 0).validate().is_err());
        assert!(WaveguideConfig::finite(3, 1.0, 0.5, 10, 0).validate().is_err());
        assert!(WaveguideConfig::finite(3, 1.0, 2.0, 10, 0).with_slice(0.1).validate().is_err());
    }
}
