//! Kernel as a double contour integral.
//!
//! With `phi_x(z) = (n/2t)(z - x)^2 + sum_j ln(z - a_j)` and
//! `h(w) = exp(-phi_y(w))`,
//!
//! ```text
//! K~(x, y) = (n / 2 pi^2 t) int_0^inf Im[ e^{phi_x(z)} R(z) ] dtau,   z = x0 + i tau,
//! R(z)     = oint_gamma (h(w) - h(z)) / (z - w) dw.
//! ```
//!
//! `R` is the rational function `2 pi i sum_k q_k(y) / (P'(a_k) (z - a_k))`, so any
//! closed `gamma` around the points gives the same value and the vertical line
//! may cross it. We take `gamma` to be the graph of the subordination height for
//! the empirical measure and its mirror image, where `|h|` peaks at the saddle
//! point; the line goes through `x0 = Re F(x)`, the maximum of `|e^{phi_x}|` on it.
//! Everything is scaled by those two maxima and the scale is returned as a log.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::freeconv::FreeConvolutionState;
use crate::measures::EmpiricalMeasure;
use crate::quad::{gauss_legendre, integrate, Tolerance};

/// Discretisation settings for the closed contour and the line integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourOptions {
    /// Longest polygon segment, in units of `sqrt(t/n)`.
    pub max_segment: f64,
    /// Gauss–Legendre nodes per segment.
    pub panel_nodes: usize,
    pub tol: Tolerance,
    /// Re-evaluate on a contour with twice the nodes and fail on disagreement.
    pub verify: bool,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions { max_segment: 0.5, panel_nodes: 16, tol: Tolerance::new(1e-14, 1e-11), verify: false }
    }
}

/// `mantissa * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub log_scale: f64,
    pub mantissa: f64,
}

impl KernelValue {
    pub fn value(&self) -> f64 {
        self.with_log_factor(0.0)
    }

    /// `value * exp(log_factor)` with the exponents fused.
    pub fn with_log_factor(&self, log_factor: f64) -> f64 {
        if self.mantissa == 0.0 {
            return 0.0;
        }
        self.mantissa * (self.log_scale + log_factor).exp()
    }
}

/// One loop of the contour: the polygon over a graph component and its mirror.
struct Loop {
    x_lo: f64,
    x_hi: f64,
    max_seg: f64,
    /// Index range into the node arrays.
    start: usize,
    end: usize,
}

/// The `y`-dependent data: `h` on the contour nodes.
pub(crate) struct Column {
    y: f64,
    c_y: f64,
    h: Vec<Complex64>,
    /// Largest `|h|` on each loop.
    loop_peak: Vec<f64>,
}

impl Column {
    pub(crate) fn y(&self) -> f64 {
        self.y
    }
}

/// The `x`-dependent data: the vertical line and the scale of `e^{phi_x}`.
pub(crate) struct Row {
    pub(crate) x: f64,
    pub(crate) x0: f64,
    pub(crate) s: f64,
    c_x: f64,
}

pub struct ContourKernel {
    points: Vec<f64>,
    n: f64,
    t: f64,
    state: FreeConvolutionState<EmpiricalMeasure>,
    options: ContourOptions,
    w: Vec<Complex64>,
    dw: Vec<Complex64>,
    /// `sum_j ln(w - a_j)` at the nodes.
    log_p: Vec<Complex64>,
    loops: Vec<Loop>,
}

impl ContourKernel {
    pub fn new(points: &[f64], t: f64, options: ContourOptions) -> Result<Self> {
        if options.panel_nodes < 2 || !(options.max_segment > 0.0) {
            return Err(Error::invalid("contour needs at least 2 nodes per panel and a positive segment length"));
        }
        let mu = EmpiricalMeasure::new(points.to_vec())?;
        if mu.points().windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DuplicatePoints { at: mu.points()[0] });
        }
        let state = FreeConvolutionState::new(mu, t)?;
        let n = points.len() as f64;
        let unit = (t / n).sqrt();
        let rule = gauss_legendre(options.panel_nodes);
        let mut w = Vec::new();
        let mut dw = Vec::new();
        let mut loops = Vec::new();
        for (lo, hi) in state.graph_components()? {
            let width = hi - lo;
            let k = ((PI * width / (2.0 * options.max_segment * unit)).ceil() as usize).max(4);
            let mut verts = Vec::with_capacity(k + 1);
            for j in 0..=k {
                let x = if j == 0 {
                    lo
                } else if j == k {
                    hi
                } else {
                    lo + width * (1.0 - (PI * j as f64 / k as f64).cos()) / 2.0
                };
                let y = if j == 0 || j == k { 0.0 } else { state.y_t(x)? };
                if (j > 0 && j < k && !(y > 0.0)) || verts.last().is_some_and(|v: &Complex64| x <= v.re) {
                    return Err(Error::no_convergence(
                        "contour construction",
                        format!("self-intersecting polygon near x = {x} (height {y})"),
                    ));
                }
                verts.push(Complex64::new(x, y));
            }
            let start = w.len();
            let mut max_seg: f64 = 0.0;
            // Upper half right to left, lower half left to right: counterclockwise.
            for seg in verts.windows(2).rev() {
                let (a, b) = (seg[1], seg[0]);
                let d = b - a;
                max_seg = max_seg.max(d.norm());
                for (&u, &wt) in rule.nodes.iter().zip(&rule.weights) {
                    w.push(a + d * (0.5 * (u + 1.0)));
                    dw.push(d * (0.5 * wt));
                }
            }
            let upper = w.len();
            for i in start..upper {
                w.push(w[i].conj());
                dw.push(-dw[i].conj());
            }
            loops.push(Loop { x_lo: lo, x_hi: hi, max_seg, start, end: w.len() });
        }
        let points = state.measure().points().to_vec();
        let log_p = w.iter().map(|&z| points.iter().map(|&a| (z - a).ln()).sum()).collect();
        Ok(ContourKernel { points, n, t, state, options, w, dw, log_p, loops })
    }

    /// Same contour with twice the nodes per segment.
    pub fn refined(&self) -> Result<Self> {
        let options = ContourOptions { panel_nodes: 2 * self.options.panel_nodes, verify: false, ..self.options };
        ContourKernel::new(&self.points, self.t, options)
    }

    pub fn state(&self) -> &FreeConvolutionState<EmpiricalMeasure> {
        &self.state
    }

    pub fn node_count(&self) -> usize {
        self.w.len()
    }

    pub fn loop_count(&self) -> usize {
        self.loops.len()
    }

    fn log_poly(&self, z: Complex64) -> Complex64 {
        self.points.iter().map(|&a| (z - a).ln()).sum()
    }

    fn phi(&self, z: Complex64, x: f64) -> Complex64 {
        (z - x) * (z - x) * (self.n / (2.0 * self.t)) + self.log_poly(z)
    }

    /// Row data with the vertical line through `Re F(x)`.
    pub(crate) fn row(&self, x: f64) -> Result<Row> {
        let f = self.state.inverse_map(x)?;
        self.row_at(x, f.re)
    }

    /// Row data with the vertical line through `x0`.
    pub(crate) fn row_at(&self, x: f64, x0: f64) -> Result<Row> {
        if !(x.is_finite() && x0.is_finite()) {
            return Err(Error::invalid("kernel arguments must be finite"));
        }
        let s = self.state.y_t(x0)?;
        let c_x = self.phi(Complex64::new(x0, s), x).re;
        if !c_x.is_finite() {
            return Err(Error::Singular { x: x0 });
        }
        Ok(Row { x, x0, s, c_x })
    }

    pub(crate) fn column(&self, y: f64) -> Result<Column> {
        if !y.is_finite() {
            return Err(Error::invalid("kernel arguments must be finite"));
        }
        let nt = self.n / (2.0 * self.t);
        let neg_phi: Vec<Complex64> = self.w.iter().zip(&self.log_p).map(|(&w, &lp)| -((w - y) * (w - y) * nt + lp)).collect();
        let c_y = neg_phi.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max);
        if !c_y.is_finite() {
            return Err(Error::no_convergence("contour construction", "contour passes through an initial point"));
        }
        let h: Vec<Complex64> = neg_phi.iter().map(|p| (p - c_y).exp()).collect();
        let loop_peak = self.loops.iter().map(|l| h[l.start..l.end].iter().map(|v| v.norm()).fold(0.0, f64::max)).collect();
        Ok(Column { y, c_y, h, loop_peak })
    }

    /// `K~(x, y)` along the line of `row`.
    pub(crate) fn evaluate(&self, row: &Row, col: &Column) -> Result<KernelValue> {
        let (x, y, x0) = (row.x, col.y, row.x0);
        let nt = self.n / (2.0 * self.t);
        // |h| may exceed 1 at the saddle of phi_y when it lies off the polygon.
        let c_y = col.c_y.max(-self.phi(Complex64::new(x0, row.s), y).re);
        let shift_h = (col.c_y - c_y).exp();
        let active: Vec<&Loop> = self
            .loops
            .iter()
            .zip(&col.loop_peak)
            .filter(|(l, &peak)| {
                let gap = (l.x_lo - x0).max(x0 - l.x_hi).max(0.0);
                peak * shift_h >= 1e-25 || gap <= 4.0 * l.max_seg
            })
            .map(|(l, _)| l)
            .collect();

        let integrand = |tau: f64| -> f64 {
            let z = Complex64::new(x0, tau);
            let e = (self.phi(z, x) - row.c_x).exp();
            let eh = (((z - x) * (z - x) - (z - y) * (z - y)) * nt - row.c_x - c_y).exp();
            let mut acc = Complex64::new(0.0, 0.0);
            for l in &active {
                for i in l.start..l.end {
                    acc += self.dw[i] * (e * col.h[i] * shift_h - eh) / (z - self.w[i]);
                }
            }
            acc.im
        };

        let unit = (self.t / self.n).sqrt();
        let mut tau_hi = row.s + unit;
        while self.phi(Complex64::new(x0, tau_hi), x).re - row.c_x > -60.0 {
            tau_hi += unit;
            if tau_hi > row.s + 1e4 * unit {
                return Err(Error::no_convergence("contour line", "integrand does not decay"));
            }
        }
        let breaks: Vec<f64> = if row.s > 0.0 { vec![0.0, row.s, tau_hi] } else { vec![0.0, tau_hi] };
        let integral = integrate(integrand, &breaks, self.options.tol)?;
        Ok(KernelValue { log_scale: row.c_x + c_y, mantissa: integral.value * self.n / (2.0 * PI * PI * self.t) })
    }

    /// `K~(x, y)` with the line through `x0`.
    pub fn kernel_tilde(&self, x: f64, y: f64, x0: f64) -> Result<KernelValue> {
        self.evaluate(&self.row_at(x, x0)?, &self.column(y)?)
    }
}
