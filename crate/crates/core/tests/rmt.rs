use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ranlase_core::medium::gamma_critical;
use ranlase_core::photostat::finite_absorbing_moments;
use ranlase_core::rmt::{
    haar_unitary, sample_cavity_strengths, sample_waveguide_strengths, EnsembleConfig, WaveguideConfig,
};

#[test]
fn haar_eigenphases_repel() {
    let dim = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut spacings = Vec::new();
    for _ in 0..1000 {
        let u = haar_unitary(dim, &mut rng);
        let mut phases: Vec<f64> = u.eigenvalues().unwrap().iter().map(|z| z.im.atan2(z.re)).collect();
        phases.sort_by(f64::total_cmp);
        for w in phases.windows(2) {
            spacings.push((w[1] - w[0]) * dim as f64 / (2.0 * PI));
        }
        spacings.push((phases[0] + 2.0 * PI - phases[dim - 1]) * dim as f64 / (2.0 * PI));
    }
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    assert!((mean - 1.0).abs() < 1e-9);
    // quadratic repulsion: P(s < 0.2) is about 0.008, against 0.18 without correlations
    let small = spacings.iter().filter(|&&s| s < 0.2).count() as f64 / spacings.len() as f64;
    assert!(small < 0.02, "{small}");
    // and the variance of the Wigner surmise, 3 pi / 8 - 1 = 0.178
    let var = spacings.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>() / spacings.len() as f64;
    assert!((var - 0.178).abs() < 0.02, "{var}");
}

#[test]
fn strong_absorption_waveguide_respects_support() {
    let cfg = WaveguideConfig::semi_infinite(20, 4.0, 100, 5);
    let run = sample_waveguide_strengths(&cfg).unwrap();
    let max = run.strengths.iter().flatten().copied().fold(0.0, f64::max);
    // the large-N support ends at 1/(1 + gamma/4) = 0.5
    assert!(max <= 0.55, "{max}");
    assert!(run.strengths.iter().flatten().all(|&s| s >= 0.0));
}

#[test]
fn finite_waveguide_absorptivity() {
    let length = 4.0;
    let gamma = 0.1;
    let cfg = WaveguideConfig::finite(20, gamma, length, 200, 9);
    let run = sample_waveguide_strengths(&cfg).unwrap();
    let (mean, se) = run.absorptivity();
    // the slice model measures length in units 3/4 of the mean free path used by the finite forms
    let gc = gamma_critical(4.0 / 3.0 * length).unwrap();
    let (m1, _) = finite_absorbing_moments(gamma, gc);
    assert!(((mean - m1) / m1).abs() < 0.1, "{mean} +- {se} vs {m1}");
}

#[test]
fn cavity_absorptivity_is_kirchhoff() {
    let cfg = EnsembleConfig::new(20, 1.0, 2000, 2).unwrap();
    let run = sample_cavity_strengths(&cfg).unwrap();
    let (mean, se) = run.absorptivity();
    assert!((mean - 0.5).abs() < 3.0 * se, "{mean} +- {se}");
    assert!(run.strengths.iter().flatten().all(|&s| (-1e-12..=1.0 + 1e-12).contains(&s)));
}
