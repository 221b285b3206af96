//! Random unitary matrices.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetry {
    /// Circular unitary ensemble (no time-reversal symmetry).
    #[default]
    UnitaryCUE,
    /// Circular orthogonal ensemble.
    OrthogonalCOE,
}

impl Symmetry {
    pub fn label(self) -> &'static str {
        match self {
            Self::UnitaryCUE => "CUE",
            Self::OrthogonalCOE => "COE",
        }
    }
}

/// Standard complex normal deviate, E|z|^2 = 1.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> c64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<c64> {
    Mat::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Haar unitary from the QR factorization of a Ginibre matrix, with the
/// phases of diag(R) moved into Q.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Mat<c64> {
    let z = ginibre(dim, dim, rng);
    let qr = z.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..dim {
        let d = r[(j, j)];
        let n = d.norm();
        let phase = if n > 0.0 { d / n } else { c64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Replaces `m` by U m with U Haar-distributed, using the subgroup algorithm:
/// U = H_1 (1 + H_2) .. D, where H_k is the Householder reflection taking the
/// k-th coordinate vector to a uniformly random unit vector (up to phase) of
/// the trailing subspace and D holds uniform phases. Costs about one matrix product.
pub fn haar_left_multiply<R: Rng + ?Sized>(m: &mut Mat<c64>, rng: &mut R) {
    let n = m.nrows();
    let cols = m.ncols();
    for i in 0..n {
        let phase = complex_normal(rng);
        let phase = phase / phase.norm();
        for j in 0..cols {
            m[(i, j)] *= phase;
        }
    }
    let mut w = vec![c64::new(0.0, 0.0); n];
    for k in (0..n.saturating_sub(1)).rev() {
        let len = n - k;
        for wi in w.iter_mut().take(len) {
            *wi = complex_normal(rng);
        }
        let norm = w[..len].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        w[..len].iter_mut().for_each(|z| *z /= norm);
        // w = u + e^{i arg u_1} e_1 maps e^{i arg u_1} e_1 to -u without cancellation
        let u1 = w[0];
        let a = u1.norm();
        let ph = if a > 0.0 { u1 / a } else { c64::new(1.0, 0.0) };
        w[0] += ph;
        let wn = 2.0 * (1.0 + a);
        let w = &w[..len];
        for j in 0..cols {
            let col = &mut m.col_as_slice_mut(j)[k..];
            let dot: c64 = w.iter().zip(col.iter()).map(|(wi, x)| wi.conj() * x).sum();
            let f = dot * (2.0 / wn);
            col.iter_mut().zip(w).for_each(|(x, wi)| *x -= wi * f);
        }
    }
}

/// A m B with A, B independent Haar unitaries.
pub(crate) fn haar_sandwich<R: Rng + ?Sized>(m: Mat<c64>, rng: &mut R) -> Mat<c64> {
    let mut x = m;
    haar_left_multiply(&mut x, rng);
    // m B = (B^T m^T)^T and B^T is Haar as well
    let mut y = x.transpose().to_owned();
    haar_left_multiply(&mut y, rng);
    y.transpose().to_owned()
}

pub fn sample_unitary<R: Rng + ?Sized>(dim: usize, symmetry: Symmetry, rng: &mut R) -> Mat<c64> {
    let u = haar_unitary(dim, rng);
    match symmetry {
        Symmetry::UnitaryCUE => u,
        Symmetry::OrthogonalCOE => u.transpose() * &u,
    }
}

/// Largest entry of |A^dagger A - 1|.
pub fn unitarity_defect(a: &Mat<c64>) -> f64 {
    let p = a.adjoint() * a;
    let mut worst = 0.0f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - c64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Solves a x = b, refusing nearly singular systems.
pub(crate) fn solve_checked(a: &Mat<c64>, b: &Mat<c64>) -> Result<Mat<c64>> {
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let pivots = (0..u.nrows()).map(|i| u[(i, i)].norm());
    let (small, large) = pivots.fold((f64::INFINITY, 0.0f64), |(s, l), p| (s.min(p), l.max(p)));
    if !(small > 1e-13 * large) {
        return Err(Error::Conditioning);
    }
    let x = lu.solve(b);
    let finite = (0..x.nrows()).all(|i| (0..x.ncols()).all(|j| x[(i, j)].re.is_finite() && x[(i, j)].im.is_finite()));
    if !finite {
        return Err(Error::Conditioning);
    }
    Ok(x)
}

pub(crate) fn identity(n: usize) -> Mat<c64> {
    Mat::identity(n, n)
}

/// Squared singular values in ascending order: the eigenvalues of a a^dagger.
pub(crate) fn strengths_of(a: &Mat<c64>) -> Result<Vec<f64>> {
    let sv = a.singular_values().map_err(|_| Error::Convergence("singular value decomposition".into()))?;
    let mut s: Vec<f64> = sv.into_iter().map(|x| x * x).collect();
    s.sort_by(f64::total_cmp);
    Ok(s)
}
