//! Chaotic cavity with a lossy fictitious lead.

use faer::{c64, Mat, Scale};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::haar::{
    complex_normal, ginibre, haar_left_multiply, haar_sandwich, identity, sample_unitary, solve_checked, strengths_of,
    Symmetry,
};
use super::star::{compose_star, diag, ScatteringMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CavityMethod {
    /// Recursive block construction for CUE, direct otherwise.
    #[default]
    Auto,
    /// Full (N + N') unitary with the barrier attached by a star product.
    Direct,
    Recursive,
}

/// Physical reflection block for an `n + k` port cavity whose last `k` ports
/// end on barriers with transmission `barrier`.
pub fn cavity_direct<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    barrier: f64,
    symmetry: Symmetry,
    rng: &mut R,
) -> Result<Mat<c64>> {
    let u = sample_unitary(n + k, symmetry, rng);
    if k == 0 {
        return Ok(u);
    }
    let mut lead = ScatteringMatrix::identity(n + k);
    let b = ScatteringMatrix::barrier(k, barrier);
    for i in 0..k {
        let j = n + i;
        lead.r[(j, j)] = b.r[(i, i)];
        lead.t[(j, j)] = b.t[(i, i)];
        lead.tp[(j, j)] = b.tp[(i, i)];
        lead.rp[(j, j)] = b.rp[(i, i)];
    }
    let joined = compose_star(&lead, &ScatteringMatrix::reflector(u))?;
    Ok(Mat::from_fn(n, n, |i, j| joined.r[(i, j)]))
}

/// Cosines of the principal angles between the first `n` rows of a Haar
/// unitary in U(n + k) and the first `n` coordinates (k >= n). Their squares
/// are the eigenvalues of L^-1 X L^-dagger, with X = Z Z^dagger from an n x n
/// Ginibre matrix Z and L L^dagger = X + Y, Y complex Wishart with k degrees
/// of freedom drawn in Bartlett form.
pub fn jacobi_cosines<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    debug_assert!(k >= n);
    let z = ginibre(n, n, rng);
    let mut t = Mat::<c64>::zeros(n, n);
    for i in 0..n {
        let g = Gamma::new((k - i) as f64, 1.0).map_err(|e| Error::MonteCarlo(e.to_string()))?;
        let d: f64 = g.sample(rng);
        t[(i, i)] = c64::new(d.sqrt(), 0.0);
        for j in 0..i {
            t[(i, j)] = complex_normal(rng);
        }
    }
    let sum = &z * z.adjoint() + &t * t.adjoint();
    let llt = sum.llt(faer::Side::Lower).map_err(|_| Error::Conditioning)?;
    let mut w = z;
    llt.L().solve_lower_triangular_in_place(w.as_mut());
    let e = (&w * w.adjoint())
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::Convergence("Hermitian eigenvalues".into()))?;
    Ok(e.into_iter().map(|c2| c2.clamp(0.0, 1.0).sqrt()).collect())
}

/// Reflection block of a CUE cavity with `n` physical and `k` lossy ports, each
/// lossy port closed by a reflection amplitude `zeta`.
///
/// The cosine-sine decomposition pairs the physical ports with `n` lossy
/// ports; the remaining `k - n` lossy ports form a smaller cavity of the same
/// kind seen through those `n` ports, which gives the recursion
/// f = A [C - zeta S h (1 - zeta C h)^-1 S] B with h the reflection of the
/// smaller cavity and A, B independent Haar unitaries.
pub fn cavity_recursive<R: Rng + ?Sized>(n: usize, k: usize, barrier: f64, rng: &mut R) -> Result<Mat<c64>> {
    let zeta = (1.0 - barrier).sqrt();
    let mut levels = Vec::new();
    let mut rest = k;
    while rest >= n && rest > 0 {
        levels.push(rest);
        rest -= n;
    }
    let mut h = if rest == 0 {
        let mut u = identity(n);
        haar_left_multiply(&mut u, rng);
        u
    } else {
        cavity_direct(n, rest, barrier, Symmetry::UnitaryCUE, rng)?
    };
    let one = identity(n);
    for (depth, &kk) in levels.iter().enumerate().rev() {
        let c = jacobi_cosines(n, kk, rng)?;
        let s: Vec<f64> = c.iter().map(|x| (1.0 - x * x).max(0.0).sqrt()).collect();
        let (cm, sm) = (diag(&c), diag(&s));
        let denom = &one - Scale(c64::new(zeta, 0.0)) * (&cm * &h);
        let inner = &h * solve_checked(&denom, &sm)?;
        let m = &cm - Scale(c64::new(zeta, 0.0)) * (&sm * inner);
        // the outermost A, B leave the strengths unchanged
        h = if depth == 0 { m } else { haar_sandwich(m, rng) };
    }
    Ok(h)
}

pub(crate) fn cavity_sample<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    barrier: f64,
    symmetry: Symmetry,
    method: CavityMethod,
    rng: &mut R,
) -> Result<(Mat<c64>, Vec<f64>)> {
    let s = match (method, symmetry) {
        (CavityMethod::Direct, _) | (CavityMethod::Auto, Symmetry::OrthogonalCOE) => {
            cavity_direct(n, k, barrier, symmetry, rng)?
        }
        (CavityMethod::Recursive, Symmetry::OrthogonalCOE) => {
            return Err(Error::Unsupported("the recursive sampler needs the unitary ensemble".into()))
        }
        _ => cavity_recursive(n, k, barrier, rng)?,
    };
    let sigma = strengths_of(&s)?;
    Ok((s, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmt::haar::haar_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lossless_cavity_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = cavity_direct(5, 0, 0.02, Symmetry::UnitaryCUE, &mut rng).unwrap();
        let sigma = strengths_of(&s).unwrap();
        assert!(sigma.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cosines_match_truncated_unitary() {
        // compare E sum c^2 and E sum c^4 against blocks of explicit Haar draws
        let (n, k, draws) = (3usize, 5usize, 4000);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut a2, mut a4, mut b2, mut b4) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..draws {
            for c in jacobi_cosines(n, k, &mut rng).unwrap() {
                a2 += c * c;
                a4 += c.powi(4);
            }
            let u = haar_unitary(n + k, &mut rng);
            let block = Mat::from_fn(n, n, |i, j| u[(i, j)]);
            for s in strengths_of(&block).unwrap() {
                b2 += s;
                b4 += s * s;
            }
        }
        let d = draws as f64;
        // E tr(u11 u11^dagger) = n^2 / (n + k)
        assert!((a2 / d - 9.0 / 8.0).abs() < 0.03, "{}", a2 / d);
        assert!((b2 / d - 9.0 / 8.0).abs() < 0.03, "{}", b2 / d);
        assert!((a4 / d - b4 / d).abs() < 0.04, "{} {}", a4 / d, b4 / d);
    }

    #[test]
    fn recursive_and_direct_agree_in_distribution() {
        let (n, k, g, draws) = (3usize, 10usize, 0.3, 3000);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut d = Vec::new();
        let mut r = Vec::new();
        for _ in 0..draws {
            d.extend(cavity_sample(n, k, g, Symmetry::UnitaryCUE, CavityMethod::Direct, &mut rng).unwrap().1);
            r.extend(cavity_sample(n, k, g, Symmetry::UnitaryCUE, CavityMethod::Recursive, &mut rng).unwrap().1);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let se = (var(&d) / d.len() as f64).sqrt();
        assert!((mean(&d) - mean(&r)).abs() < 5.0 * se, "{} {}", mean(&d), mean(&r));
        assert!(crate::rmt::stats::ks_distance(&d, &r) < 0.04);
    }

    #[test]
    fn strengths_are_subunitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let (_, s) = cavity_sample(4, 9, 0.05, Symmetry::UnitaryCUE, CavityMethod::Auto, &mut rng).unwrap();
            assert!(s.iter().all(|&x| (0.0..=1.0 + 1e-10).contains(&x)));
        }
        assert!(cavity_sample(2, 3, 0.05, Symmetry::OrthogonalCOE, CavityMethod::Recursive, &mut rng).is_err());
    }
}
