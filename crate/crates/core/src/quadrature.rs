//! Globally adaptive 21-point Gauss-Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use faer::c64;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077712071012474,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
// Gauss weights for XGK[1], XGK[3], .., XGK[9]
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Values that can be integrated: reals and complex numbers.
pub trait QuadValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for c64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 0.0, rel: 1e-12, max_segments: 4000 }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Self { rel, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<V> {
    pub value: V,
    pub error: f64,
    pub segments: usize,
    pub converged: bool,
}

impl<V> Estimate<V> {
    pub fn require(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Quadrature(format!(
                "error estimate {:e} after {} segments",
                self.error, self.segments
            )))
        }
    }
}

/// One application of the 21-point rule: (Kronrod value, |Kronrod - Gauss|).
pub fn gk21<V: QuadValue, F: Fn(f64) -> V>(f: &F, a: f64, b: f64) -> (V, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[10];
    let mut g = V::default();
    for i in 0..10 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k = k + s * WGK[i];
        if i % 2 == 1 {
            g = g + s * WG[i / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).magnitude())
}

struct Seg<V> {
    a: f64,
    b: f64,
    value: V,
    error: f64,
}

impl<V> PartialEq for Seg<V> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<V> Eq for Seg<V> {}
impl<V> PartialOrd for Seg<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Seg<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn splittable(a: f64, b: f64) -> bool {
    let m = 0.5 * (a + b);
    m > a && m < b && (b - a) > 64.0 * f64::EPSILON * a.abs().max(b.abs())
}

fn adapt<V: QuadValue, F: Fn(f64) -> V>(f: &F, points: &[f64], tol: Tolerance) -> (Estimate<V>, Vec<(f64, f64)>) {
    let mut heap = BinaryHeap::new();
    let mut frozen = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a {
            let (value, error) = gk21(f, a, b);
            heap.push(Seg { a, b, value, error });
        }
    }
    let total = |heap: &BinaryHeap<Seg<V>>, frozen: &Vec<Seg<V>>| {
        let mut v = V::default();
        let mut e = 0.0;
        for s in heap.iter().chain(frozen.iter()) {
            v = v + s.value;
            e += s.error;
        }
        (v, e)
    };
    let (mut value, mut error) = total(&heap, &frozen);
    let mut converged = false;
    let mut rounds = 0usize;
    loop {
        if error <= tol.abs.max(tol.rel * value.magnitude()) {
            converged = true;
            break;
        }
        if heap.len() + frozen.len() >= tol.max_segments {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        if !splittable(worst.a, worst.b) {
            frozen.push(worst);
            continue;
        }
        let m = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk21(f, worst.a, m);
        let (v2, e2) = gk21(f, m, worst.b);
        value = value - worst.value + v1 + v2;
        error += e1 + e2 - worst.error;
        heap.push(Seg { a: worst.a, b: m, value: v1, error: e1 });
        heap.push(Seg { a: m, b: worst.b, value: v2, error: e2 });
        rounds += 1;
        if rounds % 64 == 0 {
            // refresh the running sums to keep cancellation out of the stopping test
            (value, error) = total(&heap, &frozen);
        }
    }
    let mut segs: Vec<Seg<V>> = heap.into_vec();
    segs.extend(frozen);
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut v = V::default();
    let mut e = 0.0;
    for s in &segs {
        v = v + s.value;
        e += s.error;
    }
    let converged = converged || e <= tol.abs.max(tol.rel * v.magnitude());
    let parts = segs.iter().map(|s| (s.a, s.b)).collect();
    (Estimate { value: v, error: e, segments: segs.len(), converged }, parts)
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<V: QuadValue, F: Fn(f64) -> V>(f: F, a: f64, b: f64, tol: Tolerance) -> Estimate<V> {
    adapt(&f, &[a, b], tol).0
}

/// Integrates over consecutive intervals given by sorted `points`.
pub fn integrate_breaks<V: QuadValue, F: Fn(f64) -> V>(f: F, points: &[f64], tol: Tolerance) -> Estimate<V> {
    adapt(&f, points, tol).0
}

/// Adapts on `f` and also returns the final subintervals.
pub fn partition<V: QuadValue, F: Fn(f64) -> V>(f: F, points: &[f64], tol: Tolerance) -> (Estimate<V>, Vec<(f64, f64)>) {
    adapt(&f, points, tol)
}

/// Kronrod nodes and weights over a list of subintervals; a fixed rule that
/// can be reused for many integrands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NodeRule {
    pub fn from_segments(segments: &[(f64, f64)]) -> Self {
        let mut nodes = Vec::with_capacity(21 * segments.len());
        let mut weights = Vec::with_capacity(21 * segments.len());
        for &(a, b) in segments {
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for i in 0..10 {
                nodes.push(c - h * XGK[i]);
                weights.push(h * WGK[i]);
            }
            nodes.push(c);
            weights.push(h * WGK[10]);
            for i in (0..10).rev() {
                nodes.push(c + h * XGK[i]);
                weights.push(h * WGK[i]);
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply<V: QuadValue, F: Fn(f64) -> V>(&self, f: F) -> V {
        self.nodes.iter().zip(&self.weights).fold(V::default(), |acc, (&x, &w)| acc + f(x) * w)
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}
