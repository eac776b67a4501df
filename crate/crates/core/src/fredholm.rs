//! Gap probabilities `det(1 - K|_A)` by Nyström discretisation.
//!
//! On Gauss–Legendre nodes `x_i` with weights `w_i` the operator becomes the
//! matrix `delta_ij - sqrt(w_i w_j) K(x_i, x_j)`; the node count doubles until
//! successive determinants agree.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelEvaluator;
use crate::quad::gauss_legendre;

/// Largest node count tried before giving up.
pub const MAX_NODES: usize = 512;

/// Absolute agreement required between two successive node counts.
pub const DOUBLING_TOL: f64 = 1e-8;

/// A kernel that can be sampled on a set of nodes.
pub trait KernelFn: Sync {
    /// `K(x_i, x_j)`.
    fn matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>>;
}

impl KernelFn for KernelEvaluator {
    fn matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        self.kernel_matrix(xs, xs)
    }
}

/// `sin(pi rho (x - y)) / (pi (x - y))`: the sine kernel at density `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineKernel {
    pub density: f64,
}

impl Default for SineKernel {
    fn default() -> Self {
        SineKernel { density: 1.0 }
    }
}

impl KernelFn for SineKernel {
    fn matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        let rho = self.density;
        Ok(DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
            let d = xs[i] - xs[j];
            if d == 0.0 {
                rho
            } else {
                (PI * rho * d).sin() / (PI * d)
            }
        }))
    }
}

/// Any `Fn(x, y) -> f64` as a kernel.
pub struct FnKernel<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> KernelFn for FnKernel<F> {
    fn matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_fn(xs.len(), xs.len(), |i, j| (self.0)(xs[i], xs[j])))
    }
}

/// `det(1 - K)` on `[a, b]`, starting from `m` nodes.
pub struct GapProblem<'a> {
    pub kernel: &'a dyn KernelFn,
    pub a: f64,
    pub b: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub interval: [f64; 2],
    pub m_final: usize,
    /// The determinant as computed; may stray slightly outside `[0, 1]`.
    pub raw_det: f64,
    /// `raw_det` clamped to `[0, 1]`.
    pub probability: f64,
    /// `(m, det)` for every node count tried.
    #[serde(skip)]
    pub sequence: Vec<(usize, f64)>,
}

impl<'a> GapProblem<'a> {
    pub fn new(kernel: &'a dyn KernelFn, a: f64, b: f64) -> Self {
        GapProblem { kernel, a, b, m: 16 }
    }

    fn determinant(&self, m: usize) -> Result<f64> {
        let rule = gauss_legendre(m).on_interval(self.a, self.b);
        let k = self.kernel.matrix(&rule.nodes)?;
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::no_convergence("Nystrom matrix", format!("non-finite kernel value on [{}, {}]", self.a, self.b)));
        }
        let sw: Vec<f64> = rule.weights.iter().map(|w| w.sqrt()).collect();
        let a = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { 0.0 } - sw[i] * sw[j] * k[(i, j)]);
        Ok(a.lu().determinant())
    }
}

/// Probability that no point falls in `[a, b]`, converged under node doubling.
pub fn gap_probability(p: &GapProblem<'_>) -> Result<GapResult> {
    if !(p.a.is_finite() && p.b.is_finite() && p.a < p.b) {
        return Err(Error::invalid(format!("gap interval needs a < b, got [{}, {}]", p.a, p.b)));
    }
    if p.m < 8 {
        return Err(Error::invalid(format!("need at least 8 Nystrom nodes, got {}", p.m)));
    }
    let mut m = p.m;
    let mut sequence = vec![(m, p.determinant(m)?)];
    while 2 * m <= MAX_NODES {
        m *= 2;
        let d = p.determinant(m)?;
        let prev = sequence[sequence.len() - 1].1;
        sequence.push((m, d));
        if (d - prev).abs() <= DOUBLING_TOL {
            return Ok(GapResult {
                interval: [p.a, p.b],
                m_final: m,
                raw_det: d,
                probability: d.clamp(0.0, 1.0),
                sequence,
            });
        }
    }
    Err(Error::no_convergence("Nystrom doubling", format!("{sequence:?}")))
}

/// Sine-kernel gap probability of an interval of length `s` at unit density.
pub fn sine_gap(s: f64) -> Result<f64> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("interval length must be finite and >= 0, got {s}")));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    Ok(gap_probability(&GapProblem::new(&SineKernel::default(), 0.0, s))?.raw_det)
}
