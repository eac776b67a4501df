//! Kernel as a sum over Lagrange basis polynomials.
//!
//! `p_k(x) = (n / 2 pi i t) int l_k(z) exp((n/2t)(z - x)^2) dz` along a vertical
//! line; substituting `z = x + i sqrt(t/n) tau` turns it into a Gauss–Hermite
//! integral of a polynomial. Terms are accumulated in log space because the
//! basis polynomials grow exponentially in `n` while the sum stays `O(n)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{gauss_hermite, MAX_HERMITE_NODES};

/// Precomputed data for one configuration.
pub(crate) struct LagrangeSum {
    points: Vec<f64>,
    n: f64,
    t: f64,
    /// `sum_{j != k} ln |a_k - a_j|`
    log_denom: Vec<f64>,
    /// sign of `prod_{j != k} (a_k - a_j)`
    sign: Vec<f64>,
}

/// A sum evaluated at one quadrature order: the value and the sum of absolute terms.
struct Partial {
    value: f64,
    abs_sum: f64,
}

impl LagrangeSum {
    pub(crate) fn new(points: &[f64], t: f64) -> Result<Self> {
        let n = points.len();
        let mut log_denom = vec![0.0; n];
        let mut sign = vec![1.0; n];
        for k in 0..n {
            for j in 0..n {
                if j != k {
                    let d = points[k] - points[j];
                    if d == 0.0 {
                        return Err(Error::DuplicatePoints { at: points[k] });
                    }
                    log_denom[k] += d.abs().ln();
                    if d < 0.0 {
                        sign[k] = -sign[k];
                    }
                }
            }
        }
        Ok(LagrangeSum { points: points.to_vec(), n: n as f64, t, log_denom, sign })
    }

    fn scale(&self) -> f64 {
        (self.t / self.n).sqrt()
    }

    /// `sum_k c_k p_k(x)` where `c_k = exp(log_coef[k])`, with the vertical contour
    /// through `x + shift`, at quadrature order `m`.
    fn combination(&self, x: f64, log_coef: &[f64], shift: f64, m: usize) -> Result<Partial> {
        let rule = gauss_hermite(m)?;
        let s = self.scale();
        let nt = self.n / (2.0 * self.t);
        // Collect log-terms, then exponentiate once after max normalisation.
        let mut logs: Vec<(Complex64, f64)> = Vec::with_capacity(m * self.points.len());
        for (&tau, &w) in rule.nodes.iter().zip(&rule.weights) {
            if w == 0.0 {
                continue;
            }
            let z = Complex64::new(x + shift, s * tau);
            // Gaussian part exp(-tau^2/2) is in the weight; the rest of (z-x)^2 is extra.
            let extra = Complex64::new(nt * shift * shift, 2.0 * nt * shift * s * tau);
            let logs_z: Vec<Complex64> = self.points.iter().map(|&a| (z - a).ln()).collect();
            let total: Complex64 = logs_z.iter().sum();
            for k in 0..self.points.len() {
                if log_coef[k] == f64::NEG_INFINITY {
                    continue;
                }
                let lt = total - logs_z[k] - self.log_denom[k] + log_coef[k] + extra + w.ln();
                logs.push((lt, self.sign[k]));
            }
        }
        let peak = logs.iter().map(|(l, _)| l.re).fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return Ok(Partial { value: 0.0, abs_sum: 0.0 });
        }
        let mut sum = Complex64::new(0.0, 0.0);
        let mut abs_sum = 0.0;
        for (l, sg) in &logs {
            let v = (l - peak).exp() * *sg;
            sum += v;
            abs_sum += v.norm();
        }
        debug_assert!(sum.im.abs() <= 1e-12 * abs_sum, "imaginary residue {} of {}", sum.im, abs_sum);
        let pref = (peak - (2.0 * PI * s).ln()).exp();
        // Nodes come in conjugate pairs, so the imaginary part is rounding only.
        Ok(Partial { value: pref * sum.re, abs_sum: pref * abs_sum })
    }

    /// Value converged under doubling of the Gauss–Hermite order.
    fn converged(&self, x: f64, log_coef: &[f64], shift: f64, m0: usize, rel_tol: f64) -> Result<(f64, usize)> {
        let mut m = m0.max(2);
        let mut prev = self.combination(x, log_coef, shift, m)?;
        loop {
            let next_m = 2 * m;
            if next_m > MAX_HERMITE_NODES {
                return Err(Error::no_convergence(
                    "Lagrange kernel quadrature",
                    format!("order {m} gave {}, no further doubling possible", prev.value),
                ));
            }
            let next = self.combination(x, log_coef, shift, next_m)?;
            let floor = 64.0 * f64::EPSILON * next.abs_sum.max(prev.abs_sum);
            let diff = (next.value - prev.value).abs();
            if diff <= (rel_tol * next.value.abs()).max(floor) {
                return Ok((next.value, next_m));
            }
            if next_m >= MAX_HERMITE_NODES {
                return Err(Error::no_convergence(
                    "Lagrange kernel quadrature",
                    format!("order {m}: {}, order {next_m}: {}", prev.value, next.value),
                ));
            }
            prev = next;
            m = next_m;
        }
    }

    /// `K~(x, y) = sum_k p_k(x) q_k(y)` with `q_k(y) = exp(-(n/2t)(y - a_k)^2)`.
    pub(crate) fn kernel(&self, x: f64, y: f64, shift: f64, m0: usize, rel_tol: f64) -> Result<(f64, usize)> {
        let nt = self.n / (2.0 * self.t);
        let coef: Vec<f64> = self.points.iter().map(|a| -nt * (y - a) * (y - a)).collect();
        self.converged(x, &coef, shift, m0, rel_tol)
    }

    /// The single basis function `p_j(x)`.
    pub(crate) fn p_hat(&self, j: usize, x: f64, m0: usize, rel_tol: f64) -> Result<f64> {
        let mut coef = vec![f64::NEG_INFINITY; self.points.len()];
        coef[j] = 0.0;
        Ok(self.converged(x, &coef, 0.0, m0, rel_tol)?.0)
    }

    /// All basis functions `p_k(x)` at one quadrature order.
    fn p_hat_all_at(&self, x: f64, m: usize) -> Result<Vec<f64>> {
        let rule = gauss_hermite(m)?;
        let s = self.scale();
        let nk = self.points.len();
        let mut per_k: Vec<Vec<Complex64>> = vec![Vec::with_capacity(m); nk];
        for (&tau, &w) in rule.nodes.iter().zip(&rule.weights) {
            if w == 0.0 {
                continue;
            }
            let z = Complex64::new(x, s * tau);
            let logs_z: Vec<Complex64> = self.points.iter().map(|&a| (z - a).ln()).collect();
            let total: Complex64 = logs_z.iter().sum();
            for k in 0..nk {
                per_k[k].push(total - logs_z[k] - self.log_denom[k] + w.ln());
            }
        }
        Ok(per_k
            .iter()
            .enumerate()
            .map(|(k, logs)| {
                let peak = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
                let sum: Complex64 = logs.iter().map(|l| (l - peak).exp()).sum();
                self.sign[k] * (peak - (2.0 * PI * s).ln()).exp() * sum.re
            })
            .collect())
    }

    /// All basis functions, converged under doubling of the order.
    pub(crate) fn p_hat_all(&self, x: f64, m0: usize, rel_tol: f64) -> Result<Vec<f64>> {
        let mut m = m0.max(2);
        let mut prev = self.p_hat_all_at(x, m)?;
        while 2 * m <= MAX_HERMITE_NODES {
            let next = self.p_hat_all_at(x, 2 * m)?;
            let ok = prev.iter().zip(&next).all(|(a, b)| (a - b).abs() <= rel_tol * b.abs().max(1e-300) + 1e-300);
            if ok {
                return Ok(next);
            }
            prev = next;
            m *= 2;
        }
        Err(Error::no_convergence("Lagrange basis quadrature", format!("x = {x}, order {m}")))
    }

    /// Matrix of `int p_j q_k`, each integral by 128-node Gauss–Hermite centred at `a_k`.
    pub(crate) fn biorthogonality(&self, m0: usize, rel_tol: f64) -> Result<Vec<Vec<f64>>> {
        let rule = gauss_hermite(128)?;
        let s = self.scale();
        let nk = self.points.len();
        let mut acc = vec![vec![0.0; nk]; nk];
        for k in 0..nk {
            for (&tau, &w) in rule.nodes.iter().zip(&rule.weights) {
                if w == 0.0 {
                    continue;
                }
                let p = self.p_hat_all(self.points[k] + s * tau, m0, rel_tol)?;
                for j in 0..nk {
                    acc[j][k] += s * w * p[j];
                }
            }
        }
        Ok(acc)
    }
}
