//! Free convolution with the semicircle law through the subordination map.
//!
//! For a measure `mu` and time `t > 0` the graph height `y_t(x)` is the smallest
//! `y >= 0` with `int dmu(s) / ((x - s)^2 + y^2) <= 1/t`. The map `H(z) = z + t G(z)`
//! sends the graph onto the real line, and the evolved density at `H(x + i y_t(x))`
//! equals `y_t(x) / (pi t)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, InitialConfiguration, MeasureKind, MeasureSpec, QuadPiece};
use crate::quad::{integrate, Tolerance};
use crate::roots::{brent, brent_with_values};

const QUAD_TOL: Tolerance = Tolerance::new(1e-15, 1e-13);

/// A probability measure whose Stieltjes transform can be evaluated.
pub trait SpectralMeasure: Send + Sync {
    /// Smallest interval containing the support.
    fn hull(&self) -> (f64, f64);

    fn dist_to_support(&self, x: f64) -> f64;

    /// `G(z) = int dmu(s) / (z - s)` for `Im z > 0`, or for real `z` off the support.
    fn stieltjes(&self, z: Complex64) -> Result<Complex64>;

    /// `int dmu(s) / ((x - s)^2 + y^2)`; with `y = 0` the value may be infinite.
    fn inverse_square_moment(&self, x: f64, y: f64) -> Result<f64>;

    /// Real part of the boundary value `G(x + i0)`: the ordinary integral off the
    /// support and the principal value on it.
    fn boundary_real(&self, x: f64) -> Result<f64>;
}

/// Neumaier-compensated accumulator.
#[derive(Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

impl SpectralMeasure for EmpiricalMeasure {
    fn hull(&self) -> (f64, f64) {
        EmpiricalMeasure::hull(self)
    }

    fn dist_to_support(&self, x: f64) -> f64 {
        let p = self.points();
        let i = p.partition_point(|&a| a < x);
        let right = p.get(i).map_or(f64::INFINITY, |a| a - x);
        let left = if i > 0 { x - p[i - 1] } else { f64::INFINITY };
        left.min(right)
    }

    fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        if z.im < 0.0 {
            return Err(Error::invalid("Stieltjes transform is evaluated in the closed upper half plane"));
        }
        if z.im == 0.0 && self.dist_to_support(z.re) == 0.0 {
            return Err(Error::PrincipalValueRequired { x: z.re });
        }
        let (mut re, mut im) = (Compensated::default(), Compensated::default());
        for &a in self.points() {
            let d = z.re - a;
            let q = d * d + z.im * z.im;
            re.add(d / q);
            im.add(-z.im / q);
        }
        let n = self.len() as f64;
        Ok(Complex64::new(re.value() / n, im.value() / n))
    }

    fn inverse_square_moment(&self, x: f64, y: f64) -> Result<f64> {
        let mut acc = Compensated::default();
        for &a in self.points() {
            let q = (x - a) * (x - a) + y * y;
            if q == 0.0 {
                return Ok(f64::INFINITY);
            }
            acc.add(1.0 / q);
        }
        Ok(acc.value() / self.len() as f64)
    }

    fn boundary_real(&self, x: f64) -> Result<f64> {
        if self.dist_to_support(x) == 0.0 {
            return Err(Error::Singular { x });
        }
        Ok(self.stieltjes(Complex64::new(x, 0.0))?.re)
    }
}

impl SpectralMeasure for MeasureSpec {
    fn hull(&self) -> (f64, f64) {
        MeasureSpec::hull(self)
    }

    fn dist_to_support(&self, x: f64) -> f64 {
        MeasureSpec::dist_to_support(self, x)
    }

    fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        if z.im < 0.0 {
            return Err(Error::invalid("Stieltjes transform is evaluated in the closed upper half plane"));
        }
        if z.im == 0.0 && self.dist_to_support(z.re) == 0.0 {
            return Err(Error::PrincipalValueRequired { x: z.re });
        }
        self.integrate(|s| (z - s).inv(), &[z.re], QUAD_TOL)
    }

    fn inverse_square_moment(&self, x: f64, y: f64) -> Result<f64> {
        if y > 0.0 {
            let y2 = y * y;
            return self.integrate(|s| 1.0 / ((x - s) * (x - s) + y2), &[x], QUAD_TOL);
        }
        if self.dist_to_support(x) > 0.0 {
            return self.integrate(|s| 1.0 / ((x - s) * (x - s)), &[], QUAD_TOL);
        }
        Ok(inverse_square_on_support(self, x))
    }

    fn boundary_real(&self, x: f64) -> Result<f64> {
        if self.dist_to_support(x) > 0.0 {
            return Ok(self.stieltjes(Complex64::new(x, 0.0))?.re);
        }
        hilbert_transform(self, x)
    }
}

/// `int dmu(s) / (x - s)^2` for `x` in the support: finite only where the density
/// vanishes at least quadratically from both sides.
fn inverse_square_on_support(mu: &MeasureSpec, x: f64) -> f64 {
    match mu.kind() {
        MeasureKind::Semicircle { .. } | MeasureKind::Uniform { .. } => f64::INFINITY,
        MeasureKind::Power { exponent, center, lo, hi } => {
            if x != *center || *exponent <= 1.0 {
                return f64::INFINITY;
            }
            let c = mu.power_constant();
            let km1 = exponent - 1.0;
            c * ((center - lo).powf(km1) + (hi - center).powf(km1)) / km1
        }
        MeasureKind::Piecewise { pieces } => {
            let mut total = 0.0;
            for p in pieces {
                if x >= p.lo && x <= p.hi {
                    // Taylor expansion around x; the two lowest orders must vanish.
                    let b = p.shifted_coeffs(x);
                    let scale = b.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-300);
                    let b0 = b.first().copied().unwrap_or(0.0);
                    let b1 = b.get(1).copied().unwrap_or(0.0);
                    let touches_left = x > p.lo;
                    let touches_right = x < p.hi;
                    if (touches_left || touches_right) && (b0.abs() > 1e-13 * scale || b1.abs() > 1e-13 * scale) {
                        return f64::INFINITY;
                    }
                    // int_{lo}^{hi} sum_{k>=2} b_k (s-x)^{k-2} ds
                    let anti = |d: f64| -> f64 {
                        b.iter()
                            .enumerate()
                            .skip(2)
                            .map(|(k, c)| c * d.powi(k as i32 - 1) / (k as f64 - 1.0))
                            .sum()
                    };
                    total += anti(p.hi - x) - anti(p.lo - x);
                } else {
                    let piece = QuadPiece::Affine { lo: p.lo, hi: p.hi, poly: p.coeffs.clone() };
                    match integrate(
                        |u| {
                            let (s, w) = piece.at(u);
                            w / ((x - s) * (x - s))
                        },
                        &[p.lo, p.hi],
                        QUAD_TOL,
                    ) {
                        Ok(r) => total += r.value,
                        Err(_) => return f64::INFINITY,
                    }
                }
            }
            total
        }
    }
}

/// Points where the density is not smooth: support ends, piece joins and the power center.
fn rough_points(mu: &MeasureSpec) -> Vec<f64> {
    let mut v = Vec::new();
    match mu.kind() {
        MeasureKind::Semicircle { variance } => {
            let r = 2.0 * variance.sqrt();
            v.extend([-r, r]);
        }
        MeasureKind::Uniform { lo, hi } => v.extend([*lo, *hi]),
        MeasureKind::Power { center, lo, hi, .. } => v.extend([*lo, *center, *hi]),
        MeasureKind::Piecewise { pieces } => {
            for p in pieces {
                v.extend([p.lo, p.hi]);
            }
        }
    }
    v
}

/// One-sided density limits at `x`.
fn side_limits(mu: &MeasureSpec, x: f64) -> (f64, f64) {
    let h = 1e-13 * (1.0 + x.abs());
    let mut left = mu.density_unchecked(x - h);
    let mut right = mu.density_unchecked(x + h);
    if let MeasureKind::Piecewise { pieces } = mu.kind() {
        left = 0.0;
        right = 0.0;
        for p in pieces {
            let eval = |y: f64| p.coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c);
            if x > p.lo && x <= p.hi {
                left = eval(x);
            }
            if x >= p.lo && x < p.hi {
                right = eval(x);
            }
        }
    }
    (left, right)
}

/// Principal value `PV int dmu(s) / (x - s)` by symmetric excision of
/// `(x - eps, x + eps)` and Richardson extrapolation in `eps`.
pub fn hilbert_transform(mu: &MeasureSpec, x: f64) -> Result<f64> {
    if mu.dist_to_support(x) > 0.0 {
        return Ok(mu.stieltjes(Complex64::new(x, 0.0))?.re);
    }
    let (left, right) = side_limits(mu, x);
    if (left - right).abs() > 1e-9 * left.abs().max(right.abs()).max(1.0) {
        return Err(Error::Singular { x });
    }
    let (a, b) = mu.hull();
    let mut eps0 = 0.25 * (b - a);
    for r in rough_points(mu) {
        let d = (r - x).abs();
        if d > 0.0 {
            eps0 = eps0.min(0.5 * d);
        }
    }
    let pieces = mu.quad_pieces();
    let excised = |eps: f64| -> Result<f64> {
        let mut total = 0.0;
        for piece in &pieces {
            let (u0, u1) = piece.u_range();
            let mut pts = vec![u0, u1];
            pts.extend([x - eps, x + eps].iter().filter_map(|&s| piece.u_of(s)));
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            for w in pts.windows(2) {
                let (s_mid, _) = piece.at(0.5 * (w[0] + w[1]));
                if (s_mid - x).abs() < eps {
                    continue;
                }
                total += integrate(
                    |u| {
                        let (s, wt) = piece.at(u);
                        wt / (x - s)
                    },
                    w,
                    Tolerance::new(1e-16, 1e-14),
                )?
                .value;
            }
        }
        Ok(total)
    };

    const LEVELS: usize = 16;
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(LEVELS);
    let mut prev_best = f64::NAN;
    for k in 0..LEVELS {
        let eps = eps0 / f64::powi(2.0, k as i32);
        let mut row = vec![excised(eps)?];
        for j in 1..=k {
            let f = f64::powi(2.0, j as i32);
            let v = row[j - 1] + (row[j - 1] - table[k - 1][j - 1]) / (f - 1.0);
            row.push(v);
        }
        let best = row[k];
        let scale = row[0].abs().max(1.0);
        if k >= 3 && (best - prev_best).abs() <= 1e-12 * scale {
            return Ok(best);
        }
        prev_best = best;
        table.push(row);
    }
    Err(Error::no_convergence(
        "principal value extrapolation",
        format!("x = {x}, last estimate {prev_best}"),
    ))
}

/// Subordination data for `mu` at time `t`.
pub struct FreeConvolutionState<M> {
    mu: M,
    t: f64,
    sqrt_t: f64,
    /// Samples `(x, H(x + i y_t(x)))` on a grid, used to bracket the inverse map.
    samples: OnceLock<Vec<(f64, f64)>>,
}

impl<M: SpectralMeasure> FreeConvolutionState<M> {
    pub fn new(mu: M, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("time must be positive, got {t}")));
        }
        Ok(FreeConvolutionState { mu, t, sqrt_t: t.sqrt(), samples: OnceLock::new() })
    }

    pub fn measure(&self) -> &M {
        &self.mu
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Height of the subordination graph over `x`, in `[0, sqrt(t)]`.
    pub fn y_t(&self, x: f64) -> Result<f64> {
        if self.mu.dist_to_support(x) >= self.sqrt_t {
            return Ok(0.0);
        }
        let t = self.t;
        let i0 = self.mu.inverse_square_moment(x, 0.0)?;
        if i0 <= 1.0 / t {
            return Ok(0.0);
        }
        let f = |y: f64| -> Result<f64> { Ok((t * self.mu.inverse_square_moment(x, y)?).ln()) };
        let hi = self.sqrt_t;
        let f_hi = f(hi)?;
        if f_hi >= 0.0 {
            return Ok(hi);
        }
        let (lo, f_lo) = if i0.is_finite() {
            (0.0, (t * i0).ln())
        } else {
            let mut lo = 0.5 * hi;
            let mut f_lo = f(lo)?;
            let mut halvings = 0;
            while f_lo <= 0.0 {
                lo *= 0.5;
                f_lo = f(lo)?;
                halvings += 1;
                if halvings > 1000 || lo == 0.0 {
                    return Err(Error::no_convergence("graph height", format!("no lower bracket at x = {x}")));
                }
            }
            (lo, f_lo)
        };
        brent_with_values(f, lo, hi, f_lo, f_hi, 1e-13 * self.sqrt_t, 4e-16)
    }

    /// `H(z) = z + t G(z)` for `z` on or above the graph.
    pub fn h_map(&self, z: Complex64) -> Result<Complex64> {
        let y = self.y_t(z.re)?;
        if z.im < y * (1.0 - 1e-9) - 1e-15 {
            return Err(Error::OutsideDomain { re: z.re, im: z.im, height: y });
        }
        if z.im <= 0.0 {
            return Ok(Complex64::new(z.re + self.t * self.mu.boundary_real(z.re)?, 0.0));
        }
        Ok(z + self.mu.stieltjes(z)? * self.t)
    }

    /// Image `x_t` of the graph point over `x`.
    pub fn forward_map(&self, x: f64) -> Result<f64> {
        let y = self.y_t(x)?;
        self.forward_at(x, y)
    }

    fn forward_at(&self, x: f64, y: f64) -> Result<f64> {
        if y > 0.0 {
            Ok(x + self.t * self.mu.stieltjes(Complex64::new(x, y))?.re)
        } else {
            Ok(x + self.t * self.mu.boundary_real(x)?)
        }
    }

    /// `(x_t, y_t(x) / (pi t))`: the evolved density in parametric form.
    pub fn psi_parametric(&self, x: f64) -> Result<(f64, f64)> {
        let y = self.y_t(x)?;
        Ok((self.forward_at(x, y)?, y / (PI * self.t)))
    }

    /// Density of the evolved measure at `xi`, as `-Im G(F(xi)) / pi`.
    pub fn psi_t(&self, xi: f64) -> Result<f64> {
        let z = self.inverse_map(xi)?;
        if z.im <= 0.0 {
            return Ok(0.0);
        }
        Ok(-self.mu.stieltjes(z)?.im / PI)
    }

    fn sample_grid(&self) -> &[(f64, f64)] {
        self.samples.get_or_init(|| {
            let (a, b) = self.mu.hull();
            let (lo, hi) = (a - self.sqrt_t, b + self.sqrt_t);
            let m = 256;
            (0..=m)
                .filter_map(|k| {
                    let x = lo + (hi - lo) * k as f64 / m as f64;
                    self.forward_map(x).ok().map(|v| (x, v))
                })
                .collect()
        })
    }

    /// The graph point `F(xi) = x + i y_t(x)` with `H(F(xi)) = xi`.
    pub fn inverse_map(&self, xi: f64) -> Result<Complex64> {
        if !xi.is_finite() {
            return Err(Error::invalid("inverse map needs a finite argument"));
        }
        let pad = 1e-12 * (1.0 + xi.abs()) + 1e-9 * self.sqrt_t;
        let (mut lo, mut hi) = (xi - self.sqrt_t - pad, xi + self.sqrt_t + pad);
        let grid = self.sample_grid();
        let i = grid.partition_point(|&(_, v)| v < xi);
        if i > 0 && i < grid.len() {
            lo = lo.max(grid[i - 1].0);
            hi = hi.min(grid[i].0);
        }
        let f = |x: f64| -> Result<f64> { Ok(self.forward_map(x)? - xi) };
        let (f_lo, f_hi) = (f(lo)?, f(hi)?);
        if f_lo > 0.0 || f_hi < 0.0 {
            return Err(Error::NoBracket { lo, hi });
        }
        let x = brent_with_values(f, lo, hi, f_lo, f_hi, 1e-15, 2e-16)?;
        Ok(Complex64::new(x, self.y_t(x)?))
    }
}

/// `t_cr(x*) = (int dmu(s) / (s - x*)^2)^{-1}`, zero when the integral diverges.
pub fn t_critical<M: SpectralMeasure>(mu: &M, x_star: f64) -> Result<f64> {
    let i = mu.inverse_square_moment(x_star, 0.0)?;
    Ok(if i.is_finite() { 1.0 / i } else { 0.0 })
}

impl FreeConvolutionState<EmpiricalMeasure> {
    /// Maximal intervals where the graph height is positive.
    ///
    /// Between two consecutive atoms `sum 1/(x - a)^2` is convex, so the graph
    /// touches the axis on at most one interval there.
    pub fn graph_components(&self) -> Result<Vec<(f64, f64)>> {
        let pts = self.mu.points();
        let n = pts.len() as f64;
        let t = self.t;
        let s = |x: f64| -> f64 { pts.iter().map(|a| 1.0 / ((x - a) * (x - a))).sum::<f64>() / n };
        let ds = |x: f64| -> f64 { -2.0 * pts.iter().map(|a| 1.0 / (x - a).powi(3)).sum::<f64>() / n };
        let level = |x: f64| -> Result<f64> { Ok((t * s(x)).ln()) };

        let (first, last) = (pts[0], pts[pts.len() - 1]);
        let left_edge = brent(level, first - self.sqrt_t, first - 1e-300_f64.max(1e-15 * self.sqrt_t), 1e-15, 1e-16)?;
        let right_edge = brent(level, last + 1e-15 * self.sqrt_t, last + self.sqrt_t, 1e-15, 1e-16)?;

        let mut comps = Vec::new();
        let mut start = left_edge;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= 0.0 {
                continue;
            }
            // sum 1/(x-a)^2 >= 8/(b-a)^2 on (a, b): close atoms are always joined.
            if 8.0 * t >= n * (b - a) * (b - a) {
                continue;
            }
            let inner = (1e-12 * (b - a)).max(8.0 * f64::EPSILON * a.abs().max(b.abs()));
            let m = brent(|x| Ok(ds(x)), a + inner, b - inner, 1e-15 * (b - a), 1e-16)?;
            if t * s(m) >= 1.0 {
                continue;
            }
            let alpha = brent(level, a + inner, m, 1e-15, 1e-16)?;
            let beta = brent(level, m, b - inner, 1e-15, 1e-16)?;
            comps.push((start, alpha));
            start = beta;
        }
        comps.push((start, right_edge));
        Ok(comps)
    }

    /// Saddle points for the bulk frame `window` at rescaled positions `u`, `v`.
    pub fn saddle_pair(&self, window: &Window, u: f64, v: f64) -> Result<SaddlePair> {
        let n = self.mu.len() as f64;
        let scale = n * window.c_t;
        let z = self.inverse_map(window.x_star_t + u / scale)?;
        let w = if u == v { z } else { self.inverse_map(window.x_star_t + v / scale)? };
        Ok(SaddlePair { z_n: z, w_n: w, x_n: z.re })
    }
}

/// Bulk observation frame around `x*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_star: f64,
    pub t: f64,
    pub x_star_t: f64,
    /// Evolved density at `x_star_t`.
    pub c_t: f64,
    #[serde(skip)]
    pub u_grid: Vec<f64>,
}

impl Window {
    /// Frame from a reference measure; fails if `x*` is not in the bulk at time `t`.
    pub fn new<M: SpectralMeasure>(state: &FreeConvolutionState<M>, x_star: f64, u_grid: Vec<f64>) -> Result<Self> {
        let (x_star_t, c_t) = state.psi_parametric(x_star)?;
        if !(c_t > 0.0) {
            return Err(Error::invalid(format!(
                "x* = {x_star} is not in the bulk at t = {} (evolved density vanishes)",
                state.t
            )));
        }
        Ok(Window { x_star, t: state.t, x_star_t, c_t, u_grid })
    }

    /// Symmetric grid `-extent, -extent + step, ..., extent`.
    pub fn grid(extent: f64, step: f64) -> Result<Vec<f64>> {
        if !(extent >= 0.0 && step > 0.0) {
            return Err(Error::invalid("grid needs extent >= 0 and step > 0"));
        }
        let k = (extent / step + 1e-9).floor() as i64;
        Ok((-k..=k).map(|i| i as f64 * step).collect())
    }
}

/// Saddle points `z_n = F(x*_t + u/(c_t n))`, `w_n = F(x*_t + v/(c_t n))` of the finite-n map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddlePair {
    pub z_n: Complex64,
    pub w_n: Complex64,
    pub x_n: f64,
}

/// Convenience wrapper building the finite-n state from a configuration.
pub fn saddle_points(config: &InitialConfiguration, t: f64, window: &Window, u: f64, v: f64) -> Result<SaddlePair> {
    let state = FreeConvolutionState::new(config.measure().clone(), t)?;
    state.saddle_pair(window, u, v)
}
