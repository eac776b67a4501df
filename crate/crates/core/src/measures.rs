//! Reference measures, empirical configurations and the statistics comparing them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadValue, Tolerance};
use crate::roots::brent;

/// Mass must equal one to this accuracy.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// A polynomial density `sum c_k x^k` on a closed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPiece {
    pub lo: f64,
    pub hi: f64,
    /// Coefficients in increasing powers of `x`.
    pub coeffs: Vec<f64>,
}

impl PolyPiece {
    fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn antiderivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + c / (k as f64 + 1.0))
            * x
    }

    fn mass_up_to(&self, x: f64) -> f64 {
        self.antiderivative(x.clamp(self.lo, self.hi)) - self.antiderivative(self.lo)
    }

    /// Taylor coefficients of the density around `x0`.
    pub(crate) fn shifted_coeffs(&self, x0: f64) -> Vec<f64> {
        // Repeated synthetic division.
        let mut c = self.coeffs.clone();
        let d = c.len();
        for i in 0..d {
            for j in (i..d - 1).rev() {
                c[j] += x0 * c[j + 1];
            }
        }
        c
    }
}

/// The shape of a reference measure.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    /// Semicircle law with the given variance `s`, supported on `[-2 sqrt(s), 2 sqrt(s)]`.
    Semicircle { variance: f64 },
    /// Density `C |x - center|^exponent` on `[lo, hi]`, `C` fixed by normalisation.
    Power { exponent: f64, center: f64, lo: f64, hi: f64 },
    /// Uniform density on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Polynomial density on each of a sorted list of non-overlapping intervals.
    Piecewise { pieces: Vec<PolyPiece> },
}

/// An absolutely continuous probability measure with compact support.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    kind: MeasureKind,
    /// Normalising constant of the power kind (1 otherwise).
    norm: f64,
    /// Cumulative mass before each piecewise piece.
    offsets: Vec<f64>,
}

/// A smooth parametrisation of part of the support, used for quadrature.
///
/// `at(u)` returns the point `s(u)` and the mass density `psi(s(u)) s'(u)`.
#[derive(Debug, Clone)]
pub(crate) enum QuadPiece {
    Affine { lo: f64, hi: f64, poly: Vec<f64> },
    Semicircle { radius: f64 },
    /// `s = center + dir * u^2` for `u` in `[0, sqrt(len)]`.
    PowerSide { center: f64, dir: f64, len: f64, exponent: f64, c: f64 },
}

impl QuadPiece {
    pub(crate) fn u_range(&self) -> (f64, f64) {
        match self {
            QuadPiece::Affine { lo, hi, .. } => (*lo, *hi),
            QuadPiece::Semicircle { .. } => (0.0, PI),
            QuadPiece::PowerSide { len, .. } => (0.0, len.sqrt()),
        }
    }

    #[inline]
    pub(crate) fn at(&self, u: f64) -> (f64, f64) {
        match self {
            QuadPiece::Affine { poly, .. } => (u, poly.iter().rev().fold(0.0, |acc, c| acc * u + c)),
            QuadPiece::Semicircle { radius } => {
                let (sn, cs) = u.sin_cos();
                (radius * cs, 2.0 / PI * sn * sn)
            }
            QuadPiece::PowerSide { center, dir, exponent, c, .. } => {
                (center + dir * u * u, 2.0 * c * u.powf(2.0 * exponent + 1.0))
            }
        }
    }

    /// Parameter of the point `s`, if it lies in this piece.
    pub(crate) fn u_of(&self, s: f64) -> Option<f64> {
        match self {
            QuadPiece::Affine { lo, hi, .. } => (s > *lo && s < *hi).then_some(s),
            QuadPiece::Semicircle { radius } => (s.abs() < *radius).then(|| (s / radius).acos()),
            QuadPiece::PowerSide { center, dir, len, .. } => {
                let d = dir * (s - center);
                (d > 0.0 && d < *len).then(|| d.sqrt())
            }
        }
    }
}

impl MeasureSpec {
    /// Semicircle law of variance `variance > 0`.
    pub fn semicircle(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!("semicircle variance must be positive, got {variance}")));
        }
        Self::finish(MeasureKind::Semicircle { variance }, 1.0, Vec::new())
    }

    /// Uniform law on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        Self::finish(MeasureKind::Uniform { lo, hi }, 1.0, Vec::new())
    }

    /// Density proportional to `|x - center|^exponent` on `[lo, hi]`.
    pub fn power(exponent: f64, center: f64, lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::invalid(format!("power exponent must be positive, got {exponent}")));
        }
        if !(center >= lo && center <= hi) {
            return Err(Error::invalid(format!("power center {center} outside [{lo}, {hi}]")));
        }
        let k1 = exponent + 1.0;
        let norm = k1 / ((center - lo).powf(k1) + (hi - center).powf(k1));
        Self::finish(MeasureKind::Power { exponent, center, lo, hi }, norm, Vec::new())
    }

    /// Piecewise polynomial density. The pieces must be sorted, non-overlapping,
    /// nonnegative, and carry total mass one.
    pub fn piecewise(pieces: Vec<PolyPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::invalid("piecewise measure needs at least one piece"));
        }
        for (i, p) in pieces.iter().enumerate() {
            check_interval(p.lo, p.hi)?;
            if p.coeffs.is_empty() || p.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!("piece {i} has no usable coefficients")));
            }
            if i > 0 && p.lo < pieces[i - 1].hi {
                return Err(Error::invalid(format!("piece {i} overlaps or is out of order")));
            }
            // Sampled check; exact positivity of a polynomial is not attempted.
            for k in 0..=256 {
                let x = p.lo + (p.hi - p.lo) * k as f64 / 256.0;
                let v = p.eval(x);
                if v < -1e-12 {
                    return Err(Error::invalid(format!("density negative ({v}) at {x} in piece {i}")));
                }
            }
        }
        let mut offsets = Vec::with_capacity(pieces.len() + 1);
        let mut acc = 0.0;
        for p in &pieces {
            offsets.push(acc);
            acc += p.mass_up_to(p.hi);
        }
        offsets.push(acc);
        Self::finish(MeasureKind::Piecewise { pieces }, 1.0, offsets)
    }

    fn finish(kind: MeasureKind, norm: f64, offsets: Vec<f64>) -> Result<Self> {
        let m = MeasureSpec { kind, norm, offsets };
        let mass: f64 = m.integrate(|_| 1.0, &[], Tolerance::new(1e-15, 1e-13))?;
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!("total mass is {mass}, expected 1")));
        }
        Ok(m)
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    /// Normalising constant `C` of the power kind; 1 for the other kinds.
    pub fn power_constant(&self) -> f64 {
        self.norm
    }

    /// Power densities with exponent at least one sit in the slow, critical regime
    /// where the vanishing point survives for a positive time.
    pub fn is_critical_regime(&self) -> bool {
        matches!(self.kind, MeasureKind::Power { exponent, .. } if exponent >= 1.0)
    }

    /// Maximal intervals of the support.
    pub fn support(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            MeasureKind::Semicircle { variance } => {
                let r = 2.0 * variance.sqrt();
                vec![(-r, r)]
            }
            MeasureKind::Power { lo, hi, .. } | MeasureKind::Uniform { lo, hi } => vec![(*lo, *hi)],
            MeasureKind::Piecewise { pieces } => {
                let mut out: Vec<(f64, f64)> = Vec::new();
                for p in pieces {
                    match out.last_mut() {
                        Some(last) if last.1 >= p.lo => last.1 = p.hi,
                        _ => out.push((p.lo, p.hi)),
                    }
                }
                out
            }
        }
    }

    /// Smallest interval containing the support.
    pub fn hull(&self) -> (f64, f64) {
        let s = self.support();
        (s[0].0, s[s.len() - 1].1)
    }

    /// Distance from `x` to the support.
    pub fn dist_to_support(&self, x: f64) -> f64 {
        self.support()
            .iter()
            .map(|&(a, b)| if x < a { a - x } else if x > b { x - b } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    /// Density at `x`. For piecewise specs, points outside every piece are an error.
    pub fn density(&self, x: f64) -> Result<f64> {
        match &self.kind {
            MeasureKind::Piecewise { pieces } => pieces
                .iter()
                .find(|p| x >= p.lo && x <= p.hi)
                .map(|p| p.eval(x).max(0.0))
                .ok_or_else(|| Error::invalid(format!("x = {x} is outside every piece"))),
            _ => Ok(self.density_unchecked(x)),
        }
    }

    pub(crate) fn density_unchecked(&self, x: f64) -> f64 {
        match &self.kind {
            MeasureKind::Semicircle { variance } => {
                let d = 4.0 * variance - x * x;
                if d <= 0.0 {
                    0.0
                } else {
                    d.sqrt() / (2.0 * PI * variance)
                }
            }
            MeasureKind::Power { exponent, center, lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    self.norm * (x - center).abs().powf(*exponent)
                }
            }
            MeasureKind::Uniform { lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            MeasureKind::Piecewise { pieces } => pieces
                .iter()
                .find(|p| x >= p.lo && x <= p.hi)
                .map_or(0.0, |p| p.eval(x).max(0.0)),
        }
    }

    /// Cumulative distribution function. For piecewise specs, points outside every piece are an error.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if let MeasureKind::Piecewise { pieces } = &self.kind {
            if !pieces.iter().any(|p| x >= p.lo && x <= p.hi) {
                return Err(Error::invalid(format!("x = {x} is outside every piece")));
            }
        }
        Ok(self.cdf_unchecked(x))
    }

    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        match &self.kind {
            MeasureKind::Semicircle { variance } => {
                let r = 2.0 * variance.sqrt();
                if x <= -r {
                    0.0
                } else if x >= r {
                    1.0
                } else {
                    0.5 + x * (r * r - x * x).sqrt() / (4.0 * PI * variance) + (x / r).asin() / PI
                }
            }
            MeasureKind::Power { exponent, center, lo, hi } => {
                let k1 = exponent + 1.0;
                let left = (center - lo).powf(k1);
                let v = if x <= *lo {
                    0.0
                } else if x >= *hi {
                    left + (hi - center).powf(k1)
                } else if x <= *center {
                    left - (center - x).powf(k1)
                } else {
                    left + (x - center).powf(k1)
                };
                (self.norm * v / k1).clamp(0.0, 1.0)
            }
            MeasureKind::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            MeasureKind::Piecewise { pieces } => {
                let mut acc = 0.0;
                for (p, off) in pieces.iter().zip(&self.offsets) {
                    if x < p.lo {
                        return *off;
                    }
                    if x <= p.hi {
                        return (off + p.mass_up_to(x)).min(1.0);
                    }
                    acc = off + p.mass_up_to(x);
                }
                acc.min(1.0)
            }
        }
    }

    /// Minimum of the density over `[lo, hi]`, sampled on 1001 points.
    pub fn min_density_on(&self, lo: f64, hi: f64) -> f64 {
        (0..=1000)
            .map(|k| self.density_unchecked(lo + (hi - lo) * k as f64 / 1000.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Quantiles `q_k` with `CDF(q_k) = (k - 1/2) / n`.
    pub fn quantiles(&self, n: usize) -> Result<Quantiles> {
        if n == 0 {
            return Err(Error::invalid("quantiles need n >= 1"));
        }
        let mut points = Vec::with_capacity(n);
        let mut ambiguous = Vec::new();
        for k in 1..=n {
            let p = (k as f64 - 0.5) / n as f64;
            let (q, flag) = self.quantile(p)?;
            if flag {
                ambiguous.push(k - 1);
            }
            points.push(q);
        }
        // Guard against one-ulp inversions from the root finder.
        for i in 1..n {
            if points[i] < points[i - 1] {
                points[i] = points[i - 1];
            }
        }
        Ok(Quantiles { points, ambiguous })
    }

    /// Inverse CDF at level `p` in (0, 1); the flag is set when the level falls
    /// on a gap of the support and the midpoint of the gap was returned.
    fn quantile(&self, p: f64) -> Result<(f64, bool)> {
        match &self.kind {
            MeasureKind::Uniform { lo, hi } => Ok((lo + p * (hi - lo), false)),
            MeasureKind::Power { exponent, center, lo, .. } => {
                let k1 = exponent + 1.0;
                let v = p * k1 / self.norm;
                let left = (center - lo).powf(k1);
                let q = if v <= left {
                    center - (left - v).powf(1.0 / k1)
                } else {
                    center + (v - left).powf(1.0 / k1)
                };
                Ok((q, false))
            }
            MeasureKind::Semicircle { variance } => {
                let r = 2.0 * variance.sqrt();
                let q = brent(|x| Ok(self.cdf_unchecked(x) - p), -r, r, 1e-15 * r, 1e-16)?;
                Ok((q, false))
            }
            MeasureKind::Piecewise { pieces } => {
                const EDGE: f64 = 1e-13;
                for i in 0..pieces.len() {
                    let (start, end) = (self.offsets[i], self.offsets[i + 1]);
                    if (p - end).abs() <= EDGE && i + 1 < pieces.len() && pieces[i + 1].lo > pieces[i].hi {
                        return Ok((0.5 * (pieces[i].hi + pieces[i + 1].lo), true));
                    }
                    if p <= end || i + 1 == pieces.len() {
                        let piece = &pieces[i];
                        let target = p - start;
                        let f = |x: f64| Ok(piece.mass_up_to(x) - target);
                        let q = match brent(f, piece.lo, piece.hi, 1e-15, 1e-16) {
                            Ok(q) => q,
                            Err(Error::NoBracket { .. }) => {
                                if target <= 0.0 {
                                    piece.lo
                                } else {
                                    piece.hi
                                }
                            }
                            Err(e) => return Err(e),
                        };
                        return Ok((q, false));
                    }
                }
                unreachable!("levels below one always fall in some piece")
            }
        }
    }

    pub(crate) fn quad_pieces(&self) -> Vec<QuadPiece> {
        match &self.kind {
            MeasureKind::Semicircle { variance } => vec![QuadPiece::Semicircle { radius: 2.0 * variance.sqrt() }],
            MeasureKind::Uniform { lo, hi } => vec![QuadPiece::Affine { lo: *lo, hi: *hi, poly: vec![1.0 / (hi - lo)] }],
            MeasureKind::Power { exponent, center, lo, hi } => {
                let mut v = Vec::new();
                if center > lo {
                    v.push(QuadPiece::PowerSide {
                        center: *center,
                        dir: -1.0,
                        len: center - lo,
                        exponent: *exponent,
                        c: self.norm,
                    });
                }
                if hi > center {
                    v.push(QuadPiece::PowerSide {
                        center: *center,
                        dir: 1.0,
                        len: hi - center,
                        exponent: *exponent,
                        c: self.norm,
                    });
                }
                v
            }
            MeasureKind::Piecewise { pieces } => pieces
                .iter()
                .map(|p| QuadPiece::Affine { lo: p.lo, hi: p.hi, poly: p.coeffs.clone() })
                .collect(),
        }
    }

    /// `int f(s) dmu(s)` by adaptive quadrature, with extra breakpoints at `focus`.
    pub fn integrate<T, F>(&self, mut f: F, focus: &[f64], tol: Tolerance) -> Result<T>
    where
        T: QuadValue,
        F: FnMut(f64) -> T,
    {
        let mut total = T::default();
        for piece in self.quad_pieces() {
            let (u0, u1) = piece.u_range();
            let mut pts = vec![u0, u1];
            pts.extend(focus.iter().filter_map(|&s| piece.u_of(s)));
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let r = integrate(
                |u| {
                    let (s, w) = piece.at(u);
                    f(s) * w
                },
                &pts,
                tol,
            )?;
            total = total + r.value;
        }
        Ok(total)
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(Error::invalid(format!("[{lo}, {hi}] is not a proper finite interval")))
    }
}

/// Quantile points plus the indices where the quantile was not unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantiles {
    pub points: Vec<f64>,
    /// Zero-based indices whose level fell on a gap of the support.
    pub ambiguous: Vec<usize>,
}

/// The uniform atomic measure on `n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Sorts the points; rejects empty or non-finite input.
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("empirical measure needs at least one point"));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite point {p}")));
        }
        points.sort_by(f64::total_cmp);
        Ok(EmpiricalMeasure { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn hull(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }

    /// Fraction of points `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.points.partition_point(|&p| p <= x) as f64 / self.points.len() as f64
    }
}

/// `sup_x |F_n(x) - F(x)|`, evaluated from both one-sided limits at every atom.
pub fn kolmogorov_distance(mu_n: &EmpiricalMeasure, mu: &MeasureSpec) -> f64 {
    let pts = mu_n.points();
    let n = pts.len() as f64;
    let mut best: f64 = 0.0;
    let mut i = 0;
    while i < pts.len() {
        let mut j = i;
        while j < pts.len() && pts[j] == pts[i] {
            j += 1;
        }
        let f = mu.cdf_unchecked(pts[i]);
        best = best.max((f - i as f64 / n).abs()).max((f - j as f64 / n).abs());
        i = j;
    }
    best
}

/// `n * max_k |a_k - q_k|` for sorted points against the quantiles of `mu`.
pub fn rigidity_of_points(points: &[f64], mu: &MeasureSpec) -> Result<f64> {
    let q = mu.quantiles(points.len())?;
    let dev = points
        .iter()
        .zip(&q.points)
        .map(|(a, q)| (a - q).abs())
        .fold(0.0, f64::max);
    Ok(points.len() as f64 * dev)
}

/// Rigidity of a configuration with respect to `mu`.
pub fn rigidity(config: &InitialConfiguration, mu: &MeasureSpec) -> Result<f64> {
    rigidity_of_points(config.points(), mu)
}

/// The constant `c` for which the Kolmogorov distance equals `c (m_n + 1) / n`.
pub fn kolmogorov_constant(mu_n: &EmpiricalMeasure, mu: &MeasureSpec) -> Result<f64> {
    let m = rigidity_of_points(mu_n.points(), mu)?;
    Ok(kolmogorov_distance(mu_n, mu) * mu_n.len() as f64 / (m + 1.0))
}

/// Push every point of the open interval `(x_star - delta, x_star + delta)` to the
/// nearer endpoint. A point exactly at `x_star` goes left.
pub fn insert_gap(points: &[f64], x_star: f64, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta.is_finite()) || !x_star.is_finite() {
        return Err(Error::invalid(format!("gap needs finite center and delta > 0, got {x_star}, {delta}")));
    }
    let mut out: Vec<f64> = points
        .iter()
        .map(|&p| {
            if (p - x_star).abs() < delta {
                // The rounded endpoint can land a few ulps inside the interval.
                if p <= x_star {
                    let mut e = x_star - delta;
                    while x_star - e < delta {
                        e = e.next_down();
                    }
                    e
                } else {
                    let mut e = x_star + delta;
                    while e - x_star < delta {
                        e = e.next_up();
                    }
                    e
                }
            } else {
                p
            }
        })
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// How the initial points were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Quantiles { measure: MeasureSpec },
    Equispaced { a: f64, b: f64 },
    GapInserted { base: Box<Generator>, x_star: f64, delta: f64 },
    Explicit { points: Vec<f64> },
}

impl Generator {
    /// Points for size `n`, plus the indices of ambiguous quantiles.
    fn build(&self, n: usize) -> Result<(Vec<f64>, Vec<usize>)> {
        if n == 0 {
            return Err(Error::invalid("configuration needs n >= 1"));
        }
        match self {
            Generator::Quantiles { measure } => {
                let q = measure.quantiles(n)?;
                Ok((q.points, q.ambiguous))
            }
            Generator::Equispaced { a, b } => {
                check_interval(*a, *b)?;
                if n == 1 {
                    return Ok((vec![0.5 * (a + b)], Vec::new()));
                }
                let h = (b - a) / (n - 1) as f64;
                let mut v: Vec<f64> = (0..n).map(|k| a + h * k as f64).collect();
                v[n - 1] = *b;
                Ok((v, Vec::new()))
            }
            Generator::GapInserted { base, x_star, delta } => {
                let (pts, amb) = base.build(n)?;
                Ok((insert_gap(&pts, *x_star, *delta)?, amb))
            }
            Generator::Explicit { points } => {
                if points.len() != n {
                    return Err(Error::invalid(format!("explicit list has {} points, n = {n}", points.len())));
                }
                let mut v = points.clone();
                v.sort_by(f64::total_cmp);
                Ok((v, Vec::new()))
            }
        }
    }
}

/// Deterministic initial eigenvalues together with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfiguration {
    measure: EmpiricalMeasure,
    generator: Generator,
    ambiguous: Vec<usize>,
}

impl InitialConfiguration {
    pub fn generate(generator: Generator, n: usize) -> Result<Self> {
        let (points, ambiguous) = generator.build(n)?;
        Ok(InitialConfiguration { measure: EmpiricalMeasure::new(points)?, generator, ambiguous })
    }

    pub fn explicit(points: Vec<f64>) -> Result<Self> {
        let n = points.len();
        Self::generate(Generator::Explicit { points }, n)
    }

    pub fn measure(&self) -> &EmpiricalMeasure {
        &self.measure
    }

    pub fn points(&self) -> &[f64] {
        self.measure.points()
    }

    pub fn n(&self) -> usize {
        self.measure.len()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Quantile indices that were resolved by the midpoint rule.
    pub fn ambiguous_quantiles(&self) -> &[usize] {
        &self.ambiguous
    }

    /// Regenerate from the recorded generator and compare bit for bit.
    pub fn is_reproducible(&self) -> bool {
        match self.generator.build(self.n()) {
            Ok((pts, _)) => pts.iter().zip(self.points()).all(|(a, b)| a.to_bits() == b.to_bits()),
            Err(_) => false,
        }
    }
}

/// Serialised form of a [`MeasureSpec`]: `{kind, params, support}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureBlock {
    pub kind: MeasureTag,
    #[serde(default)]
    pub params: MeasureParams,
    #[serde(default)]
    pub support: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureTag {
    Semicircle,
    Power,
    Uniform,
    Piecewise,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Polynomial coefficients, one list per support interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub densities: Option<Vec<Vec<f64>>>,
}

impl TryFrom<MeasureBlock> for MeasureSpec {
    type Error = Error;

    fn try_from(b: MeasureBlock) -> Result<Self> {
        let single = |b: &MeasureBlock| -> Result<(f64, f64)> {
            match b.support.as_slice() {
                [[lo, hi]] => Ok((*lo, *hi)),
                _ => Err(Error::invalid("this measure kind needs exactly one support interval")),
            }
        };
        let p = &b.params;
        let unused = |names: &[(&str, bool)]| -> Result<()> {
            match names.iter().find(|(_, set)| *set) {
                Some((name, _)) => Err(Error::invalid(format!("parameter `{name}` does not apply to {:?}", b.kind))),
                None => Ok(()),
            }
        };
        match b.kind {
            MeasureTag::Semicircle => {
                unused(&[("exponent", p.exponent.is_some()), ("center", p.center.is_some()), ("densities", p.densities.is_some())])?;
                let s = p.variance.ok_or_else(|| Error::invalid("semicircle needs params.variance"))?;
                let m = MeasureSpec::semicircle(s)?;
                if !b.support.is_empty() {
                    let (lo, hi) = single(&b)?;
                    let r = 2.0 * s.sqrt();
                    if (lo + r).abs() > 1e-12 * r || (hi - r).abs() > 1e-12 * r {
                        return Err(Error::invalid(format!("semicircle support must be [-{r}, {r}]")));
                    }
                }
                Ok(m)
            }
            MeasureTag::Uniform => {
                unused(&[("variance", p.variance.is_some()), ("exponent", p.exponent.is_some()), ("center", p.center.is_some()), ("densities", p.densities.is_some())])?;
                let (lo, hi) = single(&b)?;
                MeasureSpec::uniform(lo, hi)
            }
            MeasureTag::Power => {
                unused(&[("variance", p.variance.is_some()), ("densities", p.densities.is_some())])?;
                let (lo, hi) = single(&b)?;
                let k = p.exponent.ok_or_else(|| Error::invalid("power needs params.exponent"))?;
                MeasureSpec::power(k, p.center.unwrap_or(0.5 * (lo + hi)), lo, hi)
            }
            MeasureTag::Piecewise => {
                unused(&[("variance", p.variance.is_some()), ("exponent", p.exponent.is_some()), ("center", p.center.is_some())])?;
                let dens = p.densities.as_ref().ok_or_else(|| Error::invalid("piecewise needs params.densities"))?;
                if dens.len() != b.support.len() {
                    return Err(Error::invalid("piecewise needs one density per support interval"));
                }
                let pieces = b
                    .support
                    .iter()
                    .zip(dens)
                    .map(|(iv, c)| PolyPiece { lo: iv[0], hi: iv[1], coeffs: c.clone() })
                    .collect();
                MeasureSpec::piecewise(pieces)
            }
        }
    }
}

impl From<&MeasureSpec> for MeasureBlock {
    fn from(m: &MeasureSpec) -> Self {
        let support: Vec<[f64; 2]> = match &m.kind {
            MeasureKind::Piecewise { pieces } => pieces.iter().map(|p| [p.lo, p.hi]).collect(),
            _ => m.support().iter().map(|&(a, b)| [a, b]).collect(),
        };
        let (kind, params) = match &m.kind {
            MeasureKind::Semicircle { variance } => {
                (MeasureTag::Semicircle, MeasureParams { variance: Some(*variance), ..Default::default() })
            }
            MeasureKind::Uniform { .. } => (MeasureTag::Uniform, MeasureParams::default()),
            MeasureKind::Power { exponent, center, .. } => (
                MeasureTag::Power,
                MeasureParams { exponent: Some(*exponent), center: Some(*center), ..Default::default() },
            ),
            MeasureKind::Piecewise { pieces } => (
                MeasureTag::Piecewise,
                MeasureParams { densities: Some(pieces.iter().map(|p| p.coeffs.clone()).collect()), ..Default::default() },
            ),
        };
        MeasureBlock { kind, params, support }
    }
}

impl Serialize for MeasureSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureBlock::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasureSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let block = MeasureBlock::deserialize(d)?;
        MeasureSpec::try_from(block).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif() -> MeasureSpec {
        MeasureSpec::uniform(-1.0, 1.0).unwrap()
    }

    #[test]
    fn uniform_quantiles() {
        let q = unif().quantiles(4).unwrap();
        assert_eq!(q.points, vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(unif().quantiles(1).unwrap().points, vec![0.0]);
    }

    #[test]
    fn power_half_quantiles() {
        let m = MeasureSpec::power(0.5, 0.0, -1.0, 1.0).unwrap();
        let q = m.quantiles(2).unwrap().points;
        let expect = 2f64.powf(-2.0 / 3.0);
        assert!((q[0] + expect).abs() < 1e-14 && (q[1] - expect).abs() < 1e-14);
    }

    #[test]
    fn quantile_levels_hold() {
        let specs = [
            MeasureSpec::semicircle(1.0).unwrap(),
            MeasureSpec::power(2.0, 0.0, -1.0, 1.0).unwrap(),
            MeasureSpec::power(0.5, 0.2, -1.0, 1.5).unwrap(),
            MeasureSpec::piecewise(vec![PolyPiece { lo: 0.0, hi: 1.0, coeffs: vec![0.0, 2.0] }]).unwrap(),
        ];
        for m in &specs {
            let n = 37;
            let q = m.quantiles(n).unwrap();
            for (k, x) in q.points.iter().enumerate() {
                let target = (k as f64 + 0.5) / n as f64;
                assert!((m.cdf(*x).unwrap() - target).abs() < 1e-10, "{m:?} at {k}");
            }
        }
    }

    #[test]
    fn density_and_cdf_examples() {
        assert_eq!(unif().cdf(0.0).unwrap(), 0.5);
        let sc = MeasureSpec::semicircle(1.0).unwrap();
        assert!((sc.density(0.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        let p2 = MeasureSpec::power(2.0, 0.0, -1.0, 1.0).unwrap();
        assert!((p2.density(0.5).unwrap() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn piecewise_outside_pieces_is_an_error() {
        let m = MeasureSpec::piecewise(vec![
            PolyPiece { lo: -2.0, hi: -1.0, coeffs: vec![0.5] },
            PolyPiece { lo: 1.0, hi: 2.0, coeffs: vec![0.5] },
        ])
        .unwrap();
        assert!(m.density(0.0).is_err());
        assert!(m.cdf(0.0).is_err());
        assert!(m.cdf(3.0).is_err());
        assert_eq!(m.support().len(), 2);
        assert_eq!(m.cdf(-1.5).unwrap(), 0.25);
        assert_eq!(m.cdf(1.5).unwrap(), 0.75);
    }

    #[test]
    fn gap_quantile_uses_midpoint() {
        let m = MeasureSpec::piecewise(vec![
            PolyPiece { lo: -2.0, hi: -1.0, coeffs: vec![0.5] },
            PolyPiece { lo: 1.0, hi: 2.0, coeffs: vec![0.5] },
        ])
        .unwrap();
        let q = m.quantiles(3).unwrap();
        assert_eq!(q.ambiguous, vec![1]);
        assert_eq!(q.points[1], 0.0);
        assert!((q.points[0] - (-2.0 + 1.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn bad_mass_is_rejected() {
        let r = MeasureSpec::piecewise(vec![PolyPiece { lo: 0.0, hi: 1.0, coeffs: vec![0.9] }]);
        assert!(r.is_err());
        let r = MeasureSpec::piecewise(vec![PolyPiece { lo: 0.0, hi: 1.0, coeffs: vec![2.0, -2.0, 0.0, 0.0] }]);
        assert!(r.is_ok());
        let r = MeasureSpec::piecewise(vec![PolyPiece { lo: 0.0, hi: 1.0, coeffs: vec![-1.0, 4.0] }]);
        assert!(r.is_err(), "negative density near 0");
    }

    #[test]
    fn rigidity_examples() {
        let q = InitialConfiguration::generate(Generator::Quantiles { measure: unif() }, 50).unwrap();
        assert_eq!(rigidity(&q, &unif()).unwrap(), 0.0);
        let e = InitialConfiguration::generate(Generator::Equispaced { a: -1.0, b: 1.0 }, 2).unwrap();
        assert_eq!(e.points(), &[-1.0, 1.0]);
        assert!((rigidity(&e, &unif()).unwrap() - 1.0).abs() < 1e-15);
        let n = 200;
        let g = InitialConfiguration::generate(
            Generator::GapInserted { base: Box::new(Generator::Quantiles { measure: unif() }), x_star: 0.0, delta: 0.3 },
            n,
        )
        .unwrap();
        assert!(rigidity(&g, &unif()).unwrap() >= n as f64 * 0.15);
    }

    #[test]
    fn kolmogorov_examples() {
        let n = 40;
        let q = EmpiricalMeasure::new(unif().quantiles(n).unwrap().points).unwrap();
        assert!((kolmogorov_distance(&q, &unif()) - 0.5 / n as f64).abs() < 1e-15);
        let one = EmpiricalMeasure::new(vec![0.0]).unwrap();
        assert_eq!(kolmogorov_distance(&one, &unif()), 0.5);
    }

    #[test]
    fn gap_insertion_examples() {
        assert_eq!(insert_gap(&[-1.0, 0.0, 1.0], 0.0, 0.5).unwrap(), vec![-1.0, -0.5, 1.0]);
        assert_eq!(insert_gap(&[-1.0, 1.0], 0.0, 0.5).unwrap(), vec![-1.0, 1.0]);
        let q = unif().quantiles(100).unwrap().points;
        let g = insert_gap(&q, 0.5, 0.17).unwrap();
        assert_eq!(g.len(), 100);
        assert!(g.iter().all(|&x| x <= 0.33 + 1e-15 || x >= 0.67 - 1e-15));
        assert!(insert_gap(&q, 0.5, 0.0).is_err());
    }

    #[test]
    fn shifted_coeffs_match_taylor() {
        let p = PolyPiece { lo: 0.0, hi: 1.0, coeffs: vec![1.0, -2.0, 3.0] };
        let c = p.shifted_coeffs(0.5);
        for x in [0.1, 0.7] {
            let d = x - 0.5;
            assert!((p.eval(x) - (c[0] + c[1] * d + c[2] * d * d)).abs() < 1e-15);
        }
    }

    #[test]
    fn generators_reproduce() {
        let g = Generator::GapInserted { base: Box::new(Generator::Equispaced { a: -1.0, b: 1.0 }), x_star: 0.1, delta: 0.2 };
        let c = InitialConfiguration::generate(g, 33).unwrap();
        assert!(c.is_reproducible());
    }

    #[test]
    fn block_round_trip() {
        let specs = [
            MeasureSpec::semicircle(2.0).unwrap(),
            MeasureSpec::power(0.5, 0.0, -1.0, 1.0).unwrap(),
            unif(),
            MeasureSpec::piecewise(vec![PolyPiece { lo: 0.0, hi: 1.0, coeffs: vec![0.0, 2.0] }]).unwrap(),
        ];
        for m in specs {
            let json = serde_json::to_string(&m).unwrap();
            let back: MeasureSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
        }
        let bad = r#"{"kind":"uniform","support":[[-1,1]],"extra":1}"#;
        assert!(serde_json::from_str::<MeasureSpec>(bad).is_err());
        let bad = r#"{"kind":"uniform","params":{"variance":1},"support":[[-1,1]]}"#;
        assert!(serde_json::from_str::<MeasureSpec>(bad).is_err());
    }
}
