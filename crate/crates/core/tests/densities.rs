use std::f64::consts::PI;

use faer::c64;
use ranlase_core::densities::{cavity_edges, dual_pointwise};
use ranlase_core::{dual_density, rho_cavity_full, rho_cavity_weak, rho_waveguide_semiinf};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Roots of z^3 + p z + q by Durand-Kerner iteration.
fn cubic_roots(p: f64, q: f64) -> [c64; 3] {
    let f = |z: c64| z * z * z + z * p + q;
    let mut r = [c64::new(0.4, 0.9), c64::new(0.4, 0.9).powi(2), c64::new(0.4, 0.9).powi(3)];
    for _ in 0..500 {
        let prev = r;
        for i in 0..3 {
            let mut d = c64::new(1.0, 0.0);
            for j in 0..3 {
                if i != j {
                    d *= r[i] - r[j];
                }
            }
            r[i] -= f(r[i]) / d;
        }
        if (0..3).all(|i| (r[i] - prev[i]).norm() < 1e-15 * (1.0 + r[i].norm())) {
            break;
        }
    }
    r
}

/// Cavity density from the complex root w of w^3 - 3 (a^2 - b^2)^(1/3) w - 2 a,
/// as -(6N/pi) Im 1/(c - 2w) with c = 2 gamma - 2 + 6 sigma.
fn cavity_oracle(n: f64, gamma: f64, sigma: f64) -> f64 {
    let (minus, plus) = cavity_edges(gamma);
    let a = (gamma - 1.0).powi(3) + 9.0 * (1.0 + 0.5 * gamma * gamma) * sigma;
    let b2 = (3.0 + 3.0 * gamma).powi(3) * sigma * (sigma - minus) * (plus - sigma);
    let roots = cubic_roots(-3.0 * (a * a - b2).cbrt(), -2.0 * a);
    let w = roots.iter().copied().max_by(|x, y| x.im.abs().total_cmp(&y.im.abs())).unwrap();
    let c = 2.0 * gamma - 2.0 + 6.0 * sigma;
    6.0 * n / PI * (c64::new(1.0, 0.0) / (c64::new(c, 0.0) + w * 2.0)).im.abs()
}

#[test]
fn full_cavity_matches_cubic_root_oracle() {
    for gamma in [0.05, 0.3, 0.9, 1.0, 1.7, 4.0, 20.0] {
        let rho = rho_cavity_full(3.0, gamma).unwrap();
        let (lo, hi) = rho.support();
        for k in 1..50 {
            let s = lo + (hi - lo) * k as f64 / 50.0;
            let want = cavity_oracle(3.0, gamma, s);
            assert!(rel(rho.evaluate(s), want) < 1e-8, "gamma {gamma}, sigma {s}: {} vs {want}", rho.evaluate(s));
        }
    }
}

#[test]
fn cavity_edges_from_discriminant() {
    // b vanishes at the edges, so the density vanishes or turns around there
    for gamma in [0.2, 0.8, 2.5] {
        let (minus, plus) = cavity_edges(gamma);
        let g2 = gamma * gamma;
        let direct = |sign: f64| (8.0 + 20.0 * g2 - g2 * g2 + sign * gamma * (8.0 + g2).powf(1.5)) / (8.0 * (1.0 + gamma).powi(3));
        assert!(rel(plus, direct(1.0)) < 1e-14);
        assert!((minus - direct(-1.0)).abs() < 1e-14);
    }
}

#[test]
fn waveguide_matches_closed_form() {
    for gamma in [0.01, 0.5, 4.0, 30.0] {
        let n = 7.0;
        let rho = rho_waveguide_semiinf(n, gamma).unwrap();
        let hi = 1.0 / (1.0 + gamma / 4.0);
        assert!(rel(rho.support().1, hi) < 1e-15);
        for k in 1..100 {
            let s = hi * k as f64 / 100.0;
            let want = n * gamma.sqrt() / PI * (1.0 / s - 1.0 - gamma / 4.0).sqrt() / (1.0 - s).powi(2);
            assert!(rel(rho.evaluate(s), want) < 1e-10);
        }
        assert_eq!(rho.evaluate(hi * 1.0001), 0.0);
        assert_eq!(rho.evaluate(-0.1), 0.0);
    }
}

#[test]
fn weak_cavity_matches_closed_form() {
    let gamma = 0.02;
    let rho = rho_cavity_weak(2.0, gamma).unwrap();
    let r2 = 2f64.sqrt();
    let (lo, hi) = (1.0 - 3.0 * gamma - 2.0 * r2 * gamma, 1.0 - 3.0 * gamma + 2.0 * r2 * gamma);
    for k in 1..40 {
        let s = lo + (hi - lo) * k as f64 / 40.0;
        let want = 2.0 / (2.0 * PI) * ((s - lo) * (hi - s)).sqrt() / (1.0 - s).powi(2);
        assert!(rel(rho.evaluate(s), want) < 1e-10);
    }
}

/// Midpoint rule in theta with sigma = lo + (hi - lo) sin^2 theta.
fn midpoint_integral(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = PI / 2.0 / n as f64;
    (0..n)
        .map(|k| {
            let th = (k as f64 + 0.5) * h;
            let s = lo + (hi - lo) * th.sin().powi(2);
            f(s) * (hi - lo) * (2.0 * th).sin() * h
        })
        .sum()
}

#[test]
fn normalization_by_independent_rule() {
    for gamma in [0.1, 1.0, 3.0] {
        let rho = rho_cavity_full(5.0, gamma).unwrap();
        let (lo, hi) = rho.support();
        let total = midpoint_integral(|s| rho.evaluate(s), lo, hi, 200_000);
        assert!(rel(total, 5.0) < 1e-4, "gamma {gamma}: {total}");
        let m1 = midpoint_integral(|s| rho.evaluate(s) * (1.0 - s), lo, hi, 200_000);
        assert!(rel(m1, 5.0 * gamma / (1.0 + gamma)) < 1e-4);
    }
}

#[test]
fn dual_matches_pointwise_map() {
    for gamma in [0.3, 0.8] {
        let rho = rho_cavity_full(1.0, gamma).unwrap();
        let dual = dual_density(&rho);
        let map = dual_pointwise(|s| rho.evaluate(s));
        let (lo, hi) = dual.support();
        assert!(lo > 1.0 && hi.is_finite());
        for k in 1..30 {
            let s = lo + (hi - lo) * k as f64 / 30.0;
            assert!(rel(dual.evaluate(s), map(s)) < 1e-14);
            assert!(rel(s * s * dual.evaluate(s), rho.evaluate(1.0 / s)) < 1e-14);
        }
        assert!(rel(dual.normalization().unwrap(), 1.0) < 1e-8);
    }
    // above threshold the dual reaches to infinity
    let wide = dual_density(&rho_cavity_full(1.0, 2.0).unwrap());
    assert!(wide.is_divergent() && wide.support().1.is_infinite());
    assert!(wide.moment(1).is_err());
}
