//! Correlation kernel of `M + sqrt(t) H` for a deterministic diagonal `M`.
//!
//! Two representations are evaluated: a finite sum over Lagrange basis
//! polynomials (exact for any `n`, but it cancels catastrophically beyond
//! `n ~ 50`) and a double contour integral that stays stable for large `n`.
//! Both compute `K~`, whose determinants coincide with those of the gauge-fixed
//! kernel `K(x, y) = K~(x, y) f(y) / f(x)` with `f(x) = exp((n/2t)(x^2 - 2 x x0))`.

mod contour;
mod lagrange;

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use contour::{ContourKernel, ContourOptions, KernelValue};

use contour::{Column, Row};

use crate::error::{Error, Result};
use crate::freeconv::{FreeConvolutionState, Window};
use crate::measures::{EmpiricalMeasure, InitialConfiguration};
use lagrange::LagrangeSum;

/// Above this size the Lagrange sum loses too many digits to cancellation.
pub const LAGRANGE_MAX_N: usize = 40;

/// `sin(pi (u - v)) / (pi (u - v))`, equal to 1 on the diagonal.
pub fn sine_kernel(u: f64, v: f64) -> f64 {
    let d = PI * (u - v);
    if d == 0.0 {
        1.0
    } else {
        d.sin() / d
    }
}

/// Which representation evaluates the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Lagrange sum up to [`LAGRANGE_MAX_N`] points, contour integral beyond.
    #[default]
    Auto,
    Lagrange,
    Contour,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Starting Gauss–Hermite order for the Lagrange sum.
    pub hermite_nodes: usize,
    /// Relative change allowed between successive doublings of that order.
    pub rel_tol: f64,
    pub route: Route,
    pub contour: ContourOptions,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { hermite_nodes: 64, rel_tol: 1e-8, route: Route::Auto, contour: ContourOptions::default() }
    }
}

/// Evaluation context for the kernel of one configuration at one time.
pub struct KernelEvaluator {
    config: InitialConfiguration,
    /// Points after splitting exact duplicates.
    points: Vec<f64>,
    eps_split: Option<f64>,
    t: f64,
    x0: f64,
    options: KernelOptions,
    lagrange: LagrangeSum,
    contour: OnceLock<std::result::Result<ContourKernel, String>>,
    refined: OnceLock<std::result::Result<ContourKernel, String>>,
}

/// Spread runs of equal points symmetrically by `eps`.
fn split_duplicates(points: &[f64]) -> (Vec<f64>, Option<f64>) {
    let spread = points[points.len() - 1] - points[0];
    let eps = 1e-9 * if spread > 0.0 { spread } else { points[0].abs().max(1.0) };
    let mut out = Vec::with_capacity(points.len());
    let mut applied = false;
    let mut i = 0;
    while i < points.len() {
        let mut j = i + 1;
        while j < points.len() && points[j] == points[i] {
            j += 1;
        }
        let m = j - i;
        if m > 1 {
            applied = true;
        }
        for k in 0..m {
            out.push(points[i] + (k as f64 - (m as f64 - 1.0) / 2.0) * eps);
        }
        i = j;
    }
    (out, applied.then_some(eps))
}

impl KernelEvaluator {
    /// Evaluator with gauge base `x0 = 0`.
    pub fn new(config: InitialConfiguration, t: f64, options: KernelOptions) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("time must be positive, got {t}")));
        }
        if options.hermite_nodes < 2 || !(options.rel_tol > 0.0) {
            return Err(Error::invalid("need at least 2 Hermite nodes and a positive tolerance"));
        }
        let (points, eps_split) = split_duplicates(config.points());
        let lagrange = LagrangeSum::new(&points, t)?;
        Ok(KernelEvaluator {
            config,
            points,
            eps_split,
            t,
            x0: 0.0,
            options,
            lagrange,
            contour: OnceLock::new(),
            refined: OnceLock::new(),
        })
    }

    pub fn with_gauge_base(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn config(&self) -> &InitialConfiguration {
        &self.config
    }

    /// Points actually used, after duplicate splitting.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn gauge_base(&self) -> f64 {
        self.x0
    }

    pub fn options(&self) -> &KernelOptions {
        &self.options
    }

    /// The splitting distance if duplicates were split.
    pub fn eps_split_applied(&self) -> Option<f64> {
        self.eps_split
    }

    fn uses_contour(&self) -> bool {
        match self.options.route {
            Route::Auto => self.n() > LAGRANGE_MAX_N,
            Route::Lagrange => false,
            Route::Contour => true,
        }
    }

    /// Contour evaluator, built on first use.
    pub fn contour(&self) -> Result<&ContourKernel> {
        self.contour
            .get_or_init(|| ContourKernel::new(&self.points, self.t, self.options.contour).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::no_convergence("contour construction", e.clone()))
    }

    fn refined_contour(&self) -> Result<&ContourKernel> {
        self.refined
            .get_or_init(|| self.contour().and_then(|c| c.refined()).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::no_convergence("contour construction", e.clone()))
    }

    /// `K~(x, y)` from the Lagrange sum with the vertical line through `x`.
    pub fn kernel_lagrange(&self, x: f64, y: f64) -> Result<f64> {
        self.kernel_lagrange_shifted(x, y, 0.0)
    }

    /// Same with the vertical line through `x + shift`; the value does not depend on it.
    pub fn kernel_lagrange_shifted(&self, x: f64, y: f64, shift: f64) -> Result<f64> {
        Ok(self.lagrange.kernel(x, y, shift, self.options.hermite_nodes, self.options.rel_tol)?.0)
    }

    /// Log of `f(y) / f(x)` for gauge base `x0`.
    pub fn log_gauge(&self, x: f64, y: f64, x0: f64) -> f64 {
        let nt = self.n() as f64 / (2.0 * self.t);
        nt * ((y * y - 2.0 * y * x0) - (x * x - 2.0 * x * x0))
    }

    /// `K(x, y)` from `K~(x, y)` with the evaluator's gauge base.
    pub fn ungauged(&self, x: f64, y: f64, ktilde: f64) -> f64 {
        if x == y {
            return ktilde;
        }
        ktilde * self.log_gauge(x, y, self.x0).exp()
    }

    /// `p_j(x)` of the biorthogonal family.
    pub fn lagrange_p_hat(&self, j: usize, x: f64) -> Result<f64> {
        if j >= self.n() {
            return Err(Error::invalid(format!("index {j} out of range for n = {}", self.n())));
        }
        self.lagrange.p_hat(j, x, self.options.hermite_nodes, self.options.rel_tol)
    }

    /// Matrix of `int p_j(x) q_k(x) dx`; the identity in exact arithmetic.
    pub fn biorthogonality_matrix(&self) -> Result<DMatrix<f64>> {
        let m = self.lagrange.biorthogonality(self.options.hermite_nodes, self.options.rel_tol)?;
        Ok(DMatrix::from_fn(self.n(), self.n(), |j, k| m[j][k]))
    }

    /// `max_{j,k} |int p_j q_k - delta_jk|`.
    pub fn biorthogonality_check(&self) -> Result<f64> {
        let m = self.biorthogonality_matrix()?;
        let n = self.n();
        Ok((m - DMatrix::<f64>::identity(n, n)).amax())
    }

    /// `K~(x, y)` in log-scaled form, by the configured route.
    pub fn kernel_tilde(&self, x: f64, y: f64) -> Result<KernelValue> {
        if self.uses_contour() {
            let c = self.contour()?;
            self.contour_checked(&c.row(x)?, &c.column(y)?)
        } else {
            Ok(KernelValue { log_scale: 0.0, mantissa: self.kernel_lagrange(x, y)? })
        }
    }

    fn contour_checked(&self, row: &Row, col: &Column) -> Result<KernelValue> {
        let c = self.contour()?;
        let v = c.evaluate(row, col)?;
        if self.options.contour.verify {
            let r = self.refined_contour()?;
            let w = r.evaluate(&r.row_at(row.x, row.x0)?, &r.column(col.y())?)?;
            // Compare in the units of the integrand normalisation.
            let diff = (v.mantissa - w.mantissa * (w.log_scale - v.log_scale).exp()).abs();
            if !(diff <= 1e-9 * self.n() as f64 / self.t + 1e-8 * v.mantissa.abs()) {
                return Err(Error::no_convergence(
                    "contour discretisation",
                    format!(
                        "K~({}, {}) = {:e} with {} nodes, {:e} with {}",
                        row.x,
                        col.y(),
                        v.value(),
                        c.node_count(),
                        w.value(),
                        r.node_count()
                    ),
                ));
            }
        }
        Ok(v)
    }

    /// `K~(x_i, y_j)` with the vertical line through `Re F(x_i)` (contour route) or
    /// through `x_i` (Lagrange route), row by row.
    fn tilde_grid(&self, xs: &[f64], ys: &[f64]) -> Result<Vec<Vec<(KernelValue, Option<(f64, f64)>)>>> {
        if self.uses_contour() {
            let c = self.contour()?;
            let rows: Vec<Row> = xs.par_iter().map(|&x| c.row(x)).collect::<Result<_>>()?;
            let cols: Vec<Column> = ys.par_iter().map(|&y| c.column(y)).collect::<Result<_>>()?;
            rows.par_iter()
                .map(|row| {
                    cols.par_iter()
                        .map(|col| Ok((self.contour_checked(row, col)?, Some((row.x0, row.s)))))
                        .collect::<Result<Vec<_>>>()
                })
                .collect()
        } else {
            xs.par_iter()
                .map(|&x| {
                    ys.par_iter()
                        .map(|&y| Ok((KernelValue { log_scale: 0.0, mantissa: self.kernel_lagrange(x, y)? }, None)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect()
        }
    }

    /// Gauge-fixed kernel `K(x, y)`.
    pub fn kernel(&self, x: f64, y: f64) -> Result<f64> {
        let v = self.kernel_tilde(x, y)?;
        Ok(if x == y { v.value() } else { v.with_log_factor(self.log_gauge(x, y, self.x0)) })
    }

    /// Matrix `K(x_i, y_j)` in the evaluator's gauge; entries are computed in parallel.
    pub fn kernel_matrix(&self, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        let grid = self.tilde_grid(xs, ys)?;
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            let (x, y) = (xs[i], ys[j]);
            let v = grid[i][j].0;
            if x == y {
                v.value()
            } else {
                v.with_log_factor(self.log_gauge(x, y, self.x0))
            }
        }))
    }

    /// `det[K(x_i, x_j)]`.
    pub fn correlation_function(&self, xs: &[f64]) -> Result<f64> {
        let k = xs.len();
        if k == 0 || k > self.n() {
            return Err(Error::invalid(format!("need 1 <= k <= n = {}, got k = {k}", self.n())));
        }
        Ok(self.kernel_matrix(xs, xs)?.determinant())
    }

    /// Double-contour value in a rescaled frame, split into the segment part and the rest.
    pub fn kernel_double_contour(&self, frame: &RescaledKernelFrame, u: f64, v: f64) -> Result<RescaledValue> {
        let c = self.contour()?;
        let (x, y) = (frame.position(u), frame.position(v));
        let row = c.row(x)?;
        let val = self.contour_checked(&row, &c.column(y)?)?;
        Ok(frame.assemble(u, v, val, row.x0, row.s))
    }

    /// The frame value by the Lagrange sum, gauged at `x0 = Re F(x)`.
    fn rescaled_lagrange(&self, frame: &RescaledKernelFrame, u: f64, v: f64) -> Result<RescaledValue> {
        let f = frame.state()?.inverse_map(frame.position(u))?;
        let kt = self.kernel_lagrange(frame.position(u), frame.position(v))?;
        Ok(frame.assemble(u, v, KernelValue { log_scale: 0.0, mantissa: kt }, f.re, f.im))
    }
}

/// How positions are scaled around the frame centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scaling {
    /// `x = x*_t + u / (n c_t)`.
    Bulk,
    /// `x = x*_t + u / scale`.
    Fixed { scale: f64 },
}

/// A rescaled kernel value with its decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledValue {
    pub value: f64,
    /// Contribution of the segment of the vertical line inside the contour.
    pub a_n: f64,
    pub i_n: f64,
    /// Vertical line used for the contour and the gauge.
    pub x0: f64,
    /// Height of the graph at `x0`.
    pub s: f64,
}

/// The phase `phi(z, u) = (n/2t)[(z - x(u))^2 + 2t g(z)]`, `g(z) = (1/n) sum ln(z - a_j)`.
#[derive(Clone, Copy)]
pub struct DoubleContourPhase<'a> {
    frame: &'a RescaledKernelFrame,
}

impl DoubleContourPhase<'_> {
    pub fn eval(&self, z: Complex64, u: f64) -> Complex64 {
        let ev = &self.frame.evaluator;
        let n = ev.n() as f64;
        let x = self.frame.position(u);
        let g: Complex64 = ev.points.iter().map(|&a| (z - a).ln()).sum::<Complex64>() / n;
        ((z - x) * (z - x) + g * (2.0 * ev.t)) * (n / (2.0 * ev.t))
    }

    /// `d phi / dz = (n/t)(H(z) - x(u))`; zero at the saddle point.
    pub fn derivative(&self, z: Complex64, u: f64) -> Complex64 {
        let ev = &self.frame.evaluator;
        let n = ev.n() as f64;
        let x = self.frame.position(u);
        let g: Complex64 = ev.points.iter().map(|&a| 1.0 / (z - a)).sum::<Complex64>() / n;
        (z - x + g * ev.t) * (n / ev.t)
    }
}

/// Observation frame: an evaluator, a window, and the position scaling.
pub struct RescaledKernelFrame {
    evaluator: KernelEvaluator,
    window: Window,
    center: f64,
    scale: f64,
    scaling: Scaling,
    state: OnceLock<std::result::Result<FreeConvolutionState<EmpiricalMeasure>, String>>,
}

/// Metadata written next to kernel grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetadata {
    pub n: usize,
    pub t: f64,
    pub x_star: f64,
    pub x_star_t: f64,
    pub c_t: f64,
    pub x0: f64,
    pub quadrature_m: usize,
    pub eps_split_applied: Option<f64>,
    pub route: Route,
    pub scale: f64,
}

impl RescaledKernelFrame {
    pub fn new(evaluator: KernelEvaluator, window: Window, scaling: Scaling) -> Result<Self> {
        if (window.t - evaluator.t).abs() > 1e-15 * evaluator.t {
            return Err(Error::invalid(format!("window time {} differs from evaluator time {}", window.t, evaluator.t)));
        }
        let scale = match scaling {
            Scaling::Bulk => evaluator.n() as f64 * window.c_t,
            Scaling::Fixed { scale } => scale,
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("frame scale must be positive, got {scale}")));
        }
        Ok(RescaledKernelFrame { center: window.x_star_t, evaluator, window, scale, scaling, state: OnceLock::new() })
    }

    /// Bulk frame with scale `n c_t`.
    pub fn bulk(evaluator: KernelEvaluator, window: Window) -> Result<Self> {
        Self::new(evaluator, window, Scaling::Bulk)
    }

    pub fn evaluator(&self) -> &KernelEvaluator {
        &self.evaluator
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn phase(&self) -> DoubleContourPhase<'_> {
        DoubleContourPhase { frame: self }
    }

    pub fn position(&self, u: f64) -> f64 {
        self.center + u / self.scale
    }

    /// Subordination state of the (split) empirical measure.
    pub fn state(&self) -> Result<&FreeConvolutionState<EmpiricalMeasure>> {
        if self.evaluator.uses_contour() {
            return Ok(self.evaluator.contour()?.state());
        }
        self.state
            .get_or_init(|| {
                EmpiricalMeasure::new(self.evaluator.points.clone())
                    .and_then(|mu| FreeConvolutionState::new(mu, self.evaluator.t))
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::invalid(e.clone()))
    }

    /// `sin((u - v) s n / (t scale)) / (pi (u - v))`, with its limit on the diagonal.
    pub fn segment_part(&self, u: f64, v: f64, s: f64) -> f64 {
        let theta = s * self.evaluator.n() as f64 / (self.evaluator.t * self.scale);
        let d = u - v;
        if d == 0.0 {
            theta / PI
        } else {
            (theta * d).sin() / (PI * d)
        }
    }

    fn assemble(&self, u: f64, v: f64, val: KernelValue, x0: f64, s: f64) -> RescaledValue {
        let (x, y) = (self.position(u), self.position(v));
        let gauge = if x == y { 0.0 } else { self.evaluator.log_gauge(x, y, x0) };
        let value = val.with_log_factor(gauge) / self.scale;
        let a_n = self.segment_part(u, v, s);
        RescaledValue { value, a_n, i_n: value - a_n, x0, s }
    }

    /// Values at all `(u_i, v_j)`, row by row; rows and columns of the contour data are shared.
    pub fn grid(&self, us: &[f64], vs: &[f64]) -> Result<Vec<Vec<RescaledValue>>> {
        let ev = &self.evaluator;
        let xs: Vec<f64> = us.iter().map(|&u| self.position(u)).collect();
        let ys: Vec<f64> = vs.iter().map(|&v| self.position(v)).collect();
        let lines: Vec<Option<Complex64>> = if ev.uses_contour() {
            vec![None; xs.len()]
        } else {
            let state = self.state()?;
            xs.par_iter().map(|&x| state.inverse_map(x).map(Some)).collect::<Result<_>>()?
        };
        let raw = ev.tilde_grid(&xs, &ys)?;
        Ok(raw
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(j, (val, line))| {
                        let (x0, s) = line.unwrap_or_else(|| {
                            let f = lines[i].expect("Lagrange rows carry their line");
                            (f.re, f.im)
                        });
                        self.assemble(us[i], vs[j], val, x0, s)
                    })
                    .collect()
            })
            .collect())
    }

    /// `K(x(u), x(v)) / scale` with the gauge based at `Re F(x(u))`.
    pub fn rescaled_kernel(&self, u: f64, v: f64) -> Result<RescaledValue> {
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::invalid("rescaled coordinates must be finite"));
        }
        if self.evaluator.uses_contour() {
            self.evaluator.kernel_double_contour(self, u, v)
        } else {
            self.evaluator.rescaled_lagrange(self, u, v)
        }
    }

    /// `max |K_rescaled(u, v) - sine_kernel(u, v)|` over the grid `us x vs`.
    pub fn sine_distance(&self, us: &[f64], vs: &[f64]) -> Result<f64> {
        let grid = self.grid(us, vs)?;
        let mut d: f64 = 0.0;
        for (u, row) in us.iter().zip(&grid) {
            for (v, r) in vs.iter().zip(row) {
                d = d.max((r.value - sine_kernel(*u, *v)).abs());
            }
        }
        Ok(d)
    }

    pub fn metadata(&self) -> Result<FrameMetadata> {
        let x0 = self.state()?.inverse_map(self.center)?.re;
        let ev = &self.evaluator;
        Ok(FrameMetadata {
            n: ev.n(),
            t: ev.t,
            x_star: self.window.x_star,
            x_star_t: self.window.x_star_t,
            c_t: self.window.c_t,
            x0,
            quadrature_m: ev.options.hermite_nodes,
            eps_split_applied: ev.eps_split,
            route: if ev.uses_contour() { Route::Contour } else { Route::Lagrange },
            scale: self.scale,
        })
    }
}

/// Rescaled kernel at `(u, v)` for a frame.
pub fn rescaled_kernel(frame: &RescaledKernelFrame, u: f64, v: f64) -> Result<f64> {
    Ok(frame.rescaled_kernel(u, v)?.value)
}
