//! Scattering matrices of two-sided elements and their cascade.

use faer::{c64, Mat};

use super::haar::{identity, solve_checked};
use crate::error::{domain, Result};

/// Element with `left` ports on one side and `right` ports on the other.
/// `r`: left to left, `t`: left to right, `tp`: right to left, `rp`: right to right.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix {
    pub r: Mat<c64>,
    pub t: Mat<c64>,
    pub tp: Mat<c64>,
    pub rp: Mat<c64>,
}

impl ScatteringMatrix {
    pub fn new(r: Mat<c64>, t: Mat<c64>, tp: Mat<c64>, rp: Mat<c64>) -> Result<Self> {
        let (l, rr) = (r.nrows(), rp.nrows());
        let shapes_ok = r.ncols() == l
            && rp.ncols() == rr
            && t.nrows() == rr
            && t.ncols() == l
            && tp.nrows() == l
            && tp.ncols() == rr;
        if !shapes_ok {
            return domain("scattering blocks are not conformable");
        }
        Ok(Self { r, t, tp, rp })
    }

    /// Transparent element on `n` ports.
    pub fn identity(n: usize) -> Self {
        Self { r: Mat::zeros(n, n), t: identity(n), tp: identity(n), rp: Mat::zeros(n, n) }
    }

    /// Closed element: all `n` ports on the left, nothing transmitted.
    pub fn reflector(s: Mat<c64>) -> Self {
        let n = s.nrows();
        Self { r: s, t: Mat::zeros(0, n), tp: Mat::zeros(n, 0), rp: Mat::zeros(0, 0) }
    }

    /// Partially transmitting barrier, transmission probability `gamma` on every port.
    pub fn barrier(n: usize, gamma: f64) -> Self {
        let ref_amp = (1.0 - gamma).sqrt();
        let tr = gamma.sqrt();
        Self {
            r: diag(&vec![-ref_amp; n]),
            t: diag(&vec![tr; n]),
            tp: diag(&vec![tr; n]),
            rp: diag(&vec![ref_amp; n]),
        }
    }

    pub fn left_ports(&self) -> usize {
        self.r.nrows()
    }

    pub fn right_ports(&self) -> usize {
        self.rp.nrows()
    }

    /// The full matrix [[r, tp], [t, rp]].
    pub fn full(&self) -> Mat<c64> {
        let (l, rr) = (self.left_ports(), self.right_ports());
        Mat::from_fn(l + rr, l + rr, |i, j| match (i < l, j < l) {
            (true, true) => self.r[(i, j)],
            (true, false) => self.tp[(i, j - l)],
            (false, true) => self.t[(i - l, j)],
            (false, false) => self.rp[(i - l, j - l)],
        })
    }
}

pub(crate) fn diag(d: &[f64]) -> Mat<c64> {
    Mat::from_fn(d.len(), d.len(), |i, j| if i == j { c64::new(d[i], 0.0) } else { c64::new(0.0, 0.0) })
}

/// `a` on the left cascaded with `b` on the right.
pub fn compose_star(a: &ScatteringMatrix, b: &ScatteringMatrix) -> Result<ScatteringMatrix> {
    let m = a.right_ports();
    if b.left_ports() != m {
        return domain(format!("cannot join {} ports to {}", m, b.left_ports()));
    }
    let one = identity(m);
    // waves bouncing between the two elements
    let inner_fwd = solve_checked(&(&one - &a.rp * &b.r), &a.t)?;
    let inner_bwd = solve_checked(&(&one - &b.r * &a.rp), &b.tp)?;
    let t = &b.t * &inner_fwd;
    let r = &a.r + &a.tp * &b.r * &inner_fwd;
    let tp = &a.tp * &inner_bwd;
    let rp = &b.rp + &b.t * &a.rp * &inner_bwd;
    Ok(ScatteringMatrix { r, t, tp, rp })
}

/// Reflection seen from the left of `a` when `r_back` terminates its right side.
pub fn terminate(a: &ScatteringMatrix, r_back: &Mat<c64>) -> Result<Mat<c64>> {
    let one = identity(a.right_ports());
    let inner = solve_checked(&(&one - &a.rp * r_back), &a.t)?;
    Ok(&a.r + &a.tp * r_back * &inner)
}
