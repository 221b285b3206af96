//! Large-N densities of scattering strengths, the absorbing/amplifying duality
//! and spectral moments.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{domain, Error, Result};
use crate::quadrature::{self, Estimate, NodeRule, QuadValue, Tolerance};

/// Upper end of the rate range where the weak-absorption cavity form is trusted.
pub const WEAK_CAVITY_GUARD: f64 = 0.1;

/// Default quadrature tolerance for density integrals.
pub const DENSITY_TOL: Tolerance = Tolerance { abs: 0.0, rel: 1e-12, max_segments: 4000 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DensityFormula {
    WaveguideSemiInfinite,
    CavityWeak,
    CavityFull,
}

impl DensityFormula {
    pub fn label(self) -> &'static str {
        match self {
            Self::WaveguideSemiInfinite => "waveguide-semi-infinite",
            Self::CavityWeak => "cavity-weak-absorption",
            Self::CavityFull => "cavity-full",
        }
    }
}

/// Density of scattering strengths with weight `N` on its support.
///
/// Every density is stored through its absorbing form on `[lo, hi]`; the
/// amplifying dual is reached by the reciprocal map.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthDensity {
    formula: DensityFormula,
    gamma: f64,
    weight: f64,
    lo: f64,
    hi: f64,
    /// hi - lo and 1 - lo, kept separately because both are of order gamma
    /// for a weakly absorbing cavity.
    width: f64,
    one_minus_lo: f64,
    /// Lower edge of the formula itself; for the full cavity this is
    /// sigma_minus, which can be negative while `lo` is 0.
    root_lo: f64,
    edges: (f64, f64),
    breakpoints: Vec<f64>,
    dual: bool,
    pub warnings: Vec<String>,
}

fn check_args(n: f64, gamma: f64) -> Result<()> {
    if !(n > 0.0) || !n.is_finite() {
        return domain(format!("total weight N must be positive, got {n}"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return domain(format!("gamma must be positive, got {gamma}"));
    }
    Ok(())
}

/// Semi-infinite disordered waveguide, support (0, 1/(1 + gamma/4)).
pub fn rho_waveguide_semiinf(n: f64, gamma: f64) -> Result<StrengthDensity> {
    check_args(n, gamma)?;
    let hi = 1.0 / (1.0 + 0.25 * gamma);
    let mut breakpoints = Vec::new();
    // the peak sits a distance of order gamma below the upper edge
    for c in [1.0 / 12.0, 0.5, 4.0] {
        let s = hi - c * gamma * hi;
        if s > 0.0 && s < hi {
            breakpoints.push(s);
        }
    }
    breakpoints.sort_by(f64::total_cmp);
    let mut warnings = Vec::new();
    if n * gamma.sqrt() < 10.0 {
        warnings.push(format!("large-N condition N >> 1/sqrt(gamma) is weak: N sqrt(gamma) = {:.3}", n * gamma.sqrt()));
    }
    Ok(StrengthDensity {
        formula: DensityFormula::WaveguideSemiInfinite,
        gamma,
        weight: n,
        lo: 0.0,
        hi,
        width: hi,
        one_minus_lo: 1.0,
        root_lo: 0.0,
        edges: (-0.5, 0.5),
        breakpoints,
        dual: false,
        warnings,
    })
}

/// Weak-absorption cavity with edges 1 - 3 gamma -+ 2 sqrt(2) gamma.
pub fn rho_cavity_weak(n: f64, gamma: f64) -> Result<StrengthDensity> {
    rho_cavity_weak_guarded(n, gamma, WEAK_CAVITY_GUARD)
}

pub fn rho_cavity_weak_guarded(n: f64, gamma: f64, guard: f64) -> Result<StrengthDensity> {
    check_args(n, gamma)?;
    let r2 = 2f64.sqrt();
    let one_minus_lo = (3.0 + 2.0 * r2) * gamma;
    let lo = 1.0 - one_minus_lo;
    let hi = 1.0 - (3.0 - 2.0 * r2) * gamma;
    if lo < 0.0 {
        return Err(Error::OutOfValidity(format!("weak cavity form has negative lower edge at gamma = {gamma}")));
    }
    let mut warnings = Vec::new();
    if gamma > guard {
        warnings.push(format!("weak-absorption cavity form used at gamma = {gamma} above {guard}"));
    }
    if n * gamma < 10.0 {
        warnings.push(format!("large-N condition N >> 1/gamma is weak: N gamma = {:.3}", n * gamma));
    }
    Ok(StrengthDensity {
        formula: DensityFormula::CavityWeak,
        gamma,
        weight: n,
        lo,
        hi,
        width: 4.0 * r2 * gamma,
        one_minus_lo,
        root_lo: lo,
        edges: (0.5, 0.5),
        breakpoints: Vec::new(),
        dual: false,
        warnings,
    })
}

/// Exact edges (sigma_minus, sigma_plus) of the full cavity density.
pub fn cavity_edges(gamma: f64) -> (f64, f64) {
    let g2 = gamma * gamma;
    let root = gamma * (8.0 + g2).powf(1.5);
    let base = 8.0 + 20.0 * g2 - g2 * g2;
    let plus = (base + root) / (8.0 * (1.0 + gamma).powi(3));
    // rationalized form of (base - root) / 8(1+gamma)^3, free of cancellation near gamma = 1
    let minus = 8.0 * (1.0 - gamma).powi(3) / (base + root);
    (minus, plus)
}

/// 1 - sigma_minus and 1 - sigma_plus without cancellation at small gamma.
fn cavity_edge_gaps(gamma: f64) -> (f64, f64) {
    let g2 = gamma * gamma;
    let poly = 24.0 + 4.0 * gamma + 8.0 * g2 + g2 * gamma;
    let root = (8.0 + g2).powf(1.5);
    let scale = gamma / (8.0 * (1.0 + gamma).powi(3));
    // poly^2 - root^2 = 16 (1 + gamma)^3 (gamma^2 + 4)
    (scale * (poly + root), 2.0 * gamma * (g2 + 4.0) / (poly + root))
}

/// Full large-N cavity density valid for every gamma > 0.
pub fn rho_cavity_full(n: f64, gamma: f64) -> Result<StrengthDensity> {
    check_args(n, gamma)?;
    let (minus, plus) = cavity_edges(gamma);
    let lo = if gamma < 1.0 { minus } else { 0.0 };
    let (gap_minus, gap_plus) = cavity_edge_gaps(gamma);
    let (width, one_minus_lo) = if gamma < 1.0 { (gap_minus - gap_plus, gap_minus) } else { (plus, 1.0) };
    let edges = if gamma < 1.0 {
        (0.5, 0.5)
    } else if gamma == 1.0 {
        (-1.0 / 3.0, 0.5)
    } else {
        (-0.5, 0.5)
    };
    let mut breakpoints = Vec::new();
    if gamma > 0.5 && gamma < 2.0 {
        // near threshold the density changes from a square-root edge to a cusp
        for k in [1e-6, 1e-4, 1e-2] {
            let s = lo + k * (plus - lo);
            breakpoints.push(s);
        }
    }
    let mut warnings = Vec::new();
    if n * gamma < 10.0 {
        warnings.push(format!("large-N condition N >> 1/gamma is weak: N gamma = {:.3}", n * gamma));
    }
    Ok(StrengthDensity {
        formula: DensityFormula::CavityFull,
        gamma,
        weight: n,
        lo,
        hi: plus,
        width,
        one_minus_lo,
        root_lo: minus,
        edges,
        breakpoints,
        dual: false,
        warnings,
    })
}

/// Amplifying dual: rho_minus(sigma) = sigma^-2 rho_plus(1/sigma). Applying it
/// twice returns the original density.
pub fn dual_density(rho: &StrengthDensity) -> StrengthDensity {
    let mut d = rho.clone();
    d.dual = !rho.dual;
    d
}

/// Dual of an arbitrary pointwise density, used to check the reciprocal map.
pub fn dual_pointwise<F: Fn(f64) -> f64>(rho: F) -> impl Fn(f64) -> f64 {
    move |s: f64| rho(1.0 / s) / (s * s)
}

/// `p`-th spectral moment: integral of rho(sigma) (1 - sigma)^p.
pub fn spectral_moment(rho: &StrengthDensity, p: u32) -> Result<f64> {
    rho.moment(p)
}

impl StrengthDensity {
    pub fn formula(&self) -> DensityFormula {
        self.formula
    }

    pub fn label(&self) -> String {
        if self.dual {
            format!("dual({})", self.formula.label())
        } else {
            self.formula.label().to_string()
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn total_weight(&self) -> f64 {
        self.weight
    }

    pub fn is_dual(&self) -> bool {
        self.dual
    }

    /// True when the support reaches infinity and moments diverge.
    pub fn is_divergent(&self) -> bool {
        self.dual && self.lo <= 0.0
    }

    pub fn support(&self) -> (f64, f64) {
        if self.dual {
            let upper = if self.lo > 0.0 { 1.0 / self.lo } else { f64::INFINITY };
            (1.0 / self.hi, upper)
        } else {
            (self.lo, self.hi)
        }
    }

    /// Power-law exponents of rho at the lower and upper edge of the support.
    pub fn edge_exponents(&self) -> (f64, f64) {
        if self.dual {
            // sigma -> 1/sigma swaps the edges; a finite edge keeps its exponent
            (self.edges.1, if self.lo > 0.0 { self.edges.0 } else { f64::NAN })
        } else {
            self.edges
        }
    }

    /// Support of the absorbing form that is actually integrated.
    pub fn base_support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Density at `sigma`, zero outside the open support.
    pub fn evaluate(&self, sigma: f64) -> f64 {
        if self.dual {
            if !(sigma > 0.0) {
                return 0.0;
            }
            let u = 1.0 / sigma;
            self.evaluate_base(u) / (sigma * sigma)
        } else {
            self.evaluate_base(sigma)
        }
    }

    fn evaluate_base(&self, s: f64) -> f64 {
        if !(s > self.lo && s < self.hi) {
            return 0.0;
        }
        self.eval_split(s, 1.0 - s, s - self.lo, self.hi - s)
    }

    /// Absorbing density with 1 - s and the distances to both edges supplied
    /// separately, so that edge factors keep full relative precision.
    fn eval_split(&self, s: f64, x: f64, d_lo: f64, d_hi: f64) -> f64 {
        let n = self.weight;
        let g = self.gamma;
        match self.formula {
            DensityFormula::WaveguideSemiInfinite => {
                let inner = (1.0 + 0.25 * g) * d_hi / s;
                n * g.sqrt() / PI * inner.sqrt() / (x * x)
            }
            DensityFormula::CavityWeak => n / (2.0 * PI) * (d_lo * d_hi).sqrt() / (x * x),
            DensityFormula::CavityFull => {
                let from_minus = if self.lo > 0.0 { d_lo } else { d_lo - self.root_lo };
                let prod = s * from_minus * d_hi;
                if !(prod > 0.0) {
                    return 0.0;
                }
                let b = (3.0 + 3.0 * g).powf(1.5) * prod.sqrt();
                let (u, v, shift) = if s < 0.5 {
                    let a = (g - 1.0).powi(3) + 9.0 * (1.0 + 0.5 * g * g) * s;
                    let (u, v) = ((a + b).cbrt(), (a - b).cbrt());
                    (u, v, u + v - 2.0 * g + 2.0 - 6.0 * s)
                } else {
                    // near sigma = 1, a = 8 + delta with delta small; u - 2 and v - 2
                    // follow from u^3 - 8 = (u - 2)(u^2 + 2u + 4)
                    let delta = 3.0 * g + 1.5 * g * g + g * g * g - 9.0 * (1.0 + 0.5 * g * g) * x;
                    let (u, v) = ((8.0 + delta + b).cbrt(), (8.0 + delta - b).cbrt());
                    let shift = (delta + b) / (u * u + 2.0 * u + 4.0) + (delta - b) / (v * v + 2.0 * v + 4.0)
                        - 2.0 * g
                        + 6.0 * x;
                    (u, v, shift)
                };
                // u^3 - v^3 = 2b keeps u - v accurate when b << a
                let diff = 2.0 * b / (u * u + u * v + v * v);
                let value = 6.0 * n * 3f64.sqrt() / PI * diff / (shift * shift + 3.0 * diff * diff);
                if value.is_finite() {
                    value
                } else {
                    0.0
                }
            }
        }
    }

    /// Integrates rho(sigma) g(sigma) over the support. The absorbing form is
    /// integrated in theta with sigma = lo + (hi - lo) sin^2 theta; for the
    /// dual, g is evaluated at 1/sigma.
    pub fn integrate_with<V: QuadValue, G: Fn(f64) -> V>(&self, g: G, tol: Tolerance) -> Estimate<V> {
        self.integrate_split(|sigma, _| g(sigma), tol)
    }

    /// Like [`Self::integrate_with`] with g given sigma and 1 - sigma.
    fn integrate_split<V: QuadValue, G: Fn(f64, f64) -> V>(&self, g: G, tol: Tolerance) -> Estimate<V> {
        let width = self.width;
        let dual = self.dual;
        let f = |theta: f64| {
            let (sn, cs) = theta.sin_cos();
            let d_lo = width * sn * sn;
            let d_hi = width * cs * cs;
            let s = self.lo + d_lo;
            let x = self.one_minus_lo - d_lo;
            let jac = width * 2.0 * sn * cs;
            let r = self.eval_split(s, x, d_lo, d_hi) * jac;
            if r == 0.0 {
                return V::default();
            }
            if dual {
                g(1.0 / s, -x / s) * r
            } else {
                g(s, x) * r
            }
        };
        quadrature::integrate_breaks(f, &self.theta_points(), tol)
    }

    fn theta_points(&self) -> Vec<f64> {
        let width = self.width;
        let mut pts = vec![0.0];
        for &b in &self.breakpoints {
            let r = ((b - self.lo) / width).clamp(0.0, 1.0);
            let t = r.sqrt().asin();
            if t > 0.0 && t < FRAC_PI_2 {
                pts.push(t);
            }
        }
        pts.push(FRAC_PI_2);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    pub fn normalization(&self) -> Result<f64> {
        Ok(self.integrate_with(|_| 1.0, DENSITY_TOL).require()?.value)
    }

    /// Integral of rho (1 - sigma)^p; refuses divergent duals.
    pub fn moment(&self, p: u32) -> Result<f64> {
        if p == 0 {
            return self.normalization();
        }
        if self.is_divergent() {
            return Err(Error::InfiniteMoment { p });
        }
        let est = self.integrate_split(|_, x: f64| x.powi(p as i32), DENSITY_TOL).require()?;
        Ok(est.value)
    }

    /// Fixed discrete rule (sigma_i, w_i) with sum w_i g(sigma_i) close to the
    /// integral of rho g for smooth g.
    pub fn rule(&self) -> Result<NodeRule> {
        let width = self.width;
        let jac_rho = |theta: f64| {
            let (sn, cs) = theta.sin_cos();
            let d_lo = width * sn * sn;
            let d_hi = width * cs * cs;
            self.eval_split(self.lo + d_lo, self.one_minus_lo - d_lo, d_lo, d_hi) * width * 2.0 * sn * cs
        };
        let (est, parts) = quadrature::partition(jac_rho, &self.theta_points(), Tolerance::rel(1e-13));
        est.require()?;
        let theta_rule = NodeRule::from_segments(&parts);
        let mut nodes = Vec::with_capacity(theta_rule.len());
        let mut weights = Vec::with_capacity(theta_rule.len());
        for (&t, &w) in theta_rule.nodes.iter().zip(&theta_rule.weights) {
            let weight = w * jac_rho(t);
            if weight == 0.0 {
                continue;
            }
            let s = self.lo + width * t.sin().powi(2);
            nodes.push(if self.dual { 1.0 / s } else { s });
            weights.push(weight);
        }
        Ok(NodeRule { nodes, weights })
    }

    /// Cumulative weight up to `sigma`, by direct quadrature.
    pub fn cumulative(&self, sigma: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if sigma <= lo {
            return Ok(0.0);
        }
        if sigma >= hi {
            return Ok(self.weight);
        }
        let g = |x: f64| if x <= sigma { 1.0 } else { 0.0 };
        // split at the cut so the step is resolved exactly
        let cut = if self.dual { 1.0 / sigma } else { sigma };
        let mut d = self.clone();
        d.breakpoints.push(cut);
        let tol = Tolerance { abs: 1e-15 * self.weight, ..Tolerance::rel(1e-12) };
        Ok(d.integrate_with(g, tol).require()?.value)
    }
}
