//! Sampling `Y = M + sqrt(t) H` with `H` from the GUE.
//!
//! Every sample has its own ChaCha stream, selected by the sample index, so the
//! result for a given `(seed, index)` does not depend on how work is scheduled.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::InitialConfiguration;

/// GUE matrices with diagonal variance `1/n` and off-diagonal real and imaginary
/// parts of variance `1/(2n)` each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GueSampler {
    pub n: usize,
    pub seed: u64,
}

impl GueSampler {
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix size must be at least 1"));
        }
        Ok(GueSampler { n, seed })
    }

    /// The random stream of sample `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Draw one matrix from `rng`.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let n = self.n;
        let sd_diag = (1.0 / n as f64).sqrt();
        let sd_off = (0.5 / n as f64).sqrt();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let d: f64 = StandardNormal.sample(rng);
            h[(i, i)] = Complex64::new(sd_diag * d, 0.0);
            for j in i + 1..n {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                let z = Complex64::new(sd_off * re, sd_off * im);
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        h
    }

    /// The matrix of sample `index`.
    pub fn matrix(&self, index: u64) -> DMatrix<Complex64> {
        self.draw(&mut self.rng(index))
    }
}

/// Full spectral decomposition with its accuracy diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolveReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `max_k |Y v_k - lambda_k v_k|`.
    pub residual: f64,
    /// `max |V* V - I|`.
    pub orthogonality: f64,
    /// Largest absolute entry of `Y`, for scaling the residual.
    pub norm: f64,
}

const MAX_EIGEN_ITERATIONS: usize = 100_000;

fn hermitian_defect(y: &DMatrix<Complex64>) -> Result<f64> {
    if !y.is_square() {
        return Err(Error::invalid(format!("matrix is {}x{}, not square", y.nrows(), y.ncols())));
    }
    let norm = y.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if y.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = y.nrows();
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            defect = defect.max((y[(i, j)] - y[(j, i)].conj()).norm());
        }
    }
    if defect > 1e-12 * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(format!("matrix is not Hermitian (defect {defect:e})")));
    }
    Ok(norm)
}

/// Eigenvalues and eigenvectors of a Hermitian matrix.
pub fn eigenvalues(y: &DMatrix<Complex64>) -> Result<EigenSolveReport> {
    let norm = hermitian_defect(y)?;
    let n = y.nrows();
    let eig = SymmetricEigen::try_new(y.clone(), f64::EPSILON, MAX_EIGEN_ITERATIONS).ok_or_else(|| {
        Error::no_convergence("Hermitian eigensolver", format!("no convergence in {MAX_EIGEN_ITERATIONS} iterations"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let v = &eig.eigenvectors;
    let mut residual: f64 = 0.0;
    for k in 0..n {
        let col = v.column(k);
        let r = y * col - col * Complex64::new(eig.eigenvalues[k], 0.0);
        residual = residual.max(r.norm());
    }
    let gram = v.adjoint() * v;
    let orthogonality = (gram - DMatrix::<Complex64>::identity(n, n)).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    Ok(EigenSolveReport { eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(), residual, orthogonality, norm })
}

/// Eigenvalues only, ascending.
fn spectrum(y: DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = y.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn perturbed(config: &InitialConfiguration, t: f64, h: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut y = h * Complex64::new(t.sqrt(), 0.0);
    for (i, &a) in config.points().iter().enumerate() {
        y[(i, i)] += a;
    }
    y
}

/// Sorted eigenvalues of `diag(a) + sqrt(t) H` for sample `index`.
pub fn sample_perturbed(sampler: &GueSampler, config: &InitialConfiguration, t: f64, index: u64) -> Result<Vec<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("time must be >= 0, got {t}")));
    }
    if sampler.n != config.n() {
        return Err(Error::invalid(format!("sampler size {} differs from n = {}", sampler.n, config.n())));
    }
    if t == 0.0 {
        return Ok(config.points().to_vec());
    }
    Ok(spectrum(perturbed(config, t, sampler.matrix(index))))
}

/// Samples `first .. first + count`, in index order, computed in parallel.
pub fn sample_many(
    sampler: &GueSampler,
    config: &InitialConfiguration,
    t: f64,
    first: u64,
    count: u64,
) -> Result<Vec<Vec<f64>>> {
    (first..first + count).into_par_iter().map(|i| sample_perturbed(sampler, config, t, i)).collect()
}

/// Histogram of eigenvalue positions, normalised to a probability density per eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges, one more than the number of bins.
    pub bins: Vec<f64>,
    pub counts: Vec<u64>,
    /// `counts / (samples * n * width)`.
    pub density: Vec<f64>,
    /// Binomial standard error of `density`.
    pub stderr: Vec<f64>,
}

pub fn empirical_density(samples: &[Vec<f64>], edges: &[f64]) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::invalid("need at least one sample"));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("bin edges must be strictly increasing, at least two"));
    }
    let nb = edges.len() - 1;
    let mut counts = vec![0u64; nb];
    let mut total = 0u64;
    for s in samples {
        total += s.len() as u64;
        for &x in s {
            // Bins are [e_k, e_{k+1}), the last one closed.
            let k = edges.partition_point(|&e| e <= x);
            if k >= 1 && k <= nb {
                counts[k - 1] += 1;
            } else if x == edges[nb] {
                counts[nb - 1] += 1;
            }
        }
    }
    let tot = total as f64;
    let (density, stderr) = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| {
            let width = w[1] - w[0];
            let p = c as f64 / tot;
            (p / width, (p * (1.0 - p) / tot).sqrt() / width)
        })
        .unzip();
    Ok(Histogram { bins: edges.to_vec(), counts, density, stderr })
}

/// Fraction of samples with no eigenvalue in `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapFrequency {
    pub frequency: f64,
    pub stderr: f64,
    pub samples: usize,
}

pub fn empirical_gap_frequency(samples: &[Vec<f64>], a: f64, b: f64) -> Result<GapFrequency> {
    if samples.is_empty() {
        return Err(Error::invalid("need at least one sample"));
    }
    if !(a <= b) {
        return Err(Error::invalid(format!("interval needs a <= b, got [{a}, {b}]")));
    }
    let empty = samples.iter().filter(|s| !s.iter().any(|&x| a <= x && x <= b)).count();
    let n = samples.len() as f64;
    let p = empty as f64 / n;
    Ok(GapFrequency { frequency: p, stderr: (p * (1.0 - p) / n).sqrt(), samples: samples.len() })
}

/// Eigenvalue trajectories on `times`, from one coupled matrix path.
///
/// `Y(t_{k+1}) = Y(t_k) + sqrt(t_{k+1} - t_k) H_k` with independent `H_k`, so
/// `Y(t)` has the law of `M + sqrt(t) H` at every grid time.
pub fn dbm_paths(sampler: &GueSampler, config: &InitialConfiguration, times: &[f64], index: u64) -> Result<Vec<Vec<f64>>> {
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| !(w[0] < w[1])) || !times.iter().all(|t| t.is_finite()) {
        return Err(Error::invalid("time grid must be non-empty, start at t >= 0 and increase strictly"));
    }
    if sampler.n != config.n() {
        return Err(Error::invalid(format!("sampler size {} differs from n = {}", sampler.n, config.n())));
    }
    let n = config.n();
    let mut rng = sampler.rng(index);
    let mut y = DMatrix::<Complex64>::from_fn(n, n, |i, j| if i == j { Complex64::new(config.points()[i], 0.0) } else { Complex64::new(0.0, 0.0) });
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t > prev {
            y += sampler.draw(&mut rng) * Complex64::new((t - prev).sqrt(), 0.0);
            prev = t;
        }
        out.push(if t == 0.0 { config.points().to_vec() } else { spectrum(y.clone()) });
    }
    Ok(out)
}
