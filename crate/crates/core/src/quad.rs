//! Quadrature rules: fixed Gauss rules and an adaptive Gauss–Kronrod integrator
//! that works for real and complex integrands.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be integrated.
pub trait QuadValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Nodes and weights of a fixed rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Map the rule from `[-1, 1]` to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> Rule {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        Rule {
            nodes: self.nodes.iter().map(|x| c + h * x).collect(),
            weights: self.weights.iter().map(|w| h * w).collect(),
        }
    }
}

fn legendre_cache() -> &'static Mutex<HashMap<usize, Arc<Rule>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `m`-point Gauss–Legendre rule on `[-1, 1]`, nodes ascending. Cached per `m`.
pub fn gauss_legendre(m: usize) -> Arc<Rule> {
    assert!(m >= 1, "Gauss-Legendre rule needs at least one node");
    if let Some(r) = legendre_cache().lock().unwrap().get(&m) {
        return r.clone();
    }
    let rule = Arc::new(compute_legendre(m));
    legendre_cache().lock().unwrap().insert(m, rule.clone());
    rule
}

fn compute_legendre(m: usize) -> Rule {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = mf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[m - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Largest supported Gauss–Hermite order; beyond it the recurrence overflows.
pub const MAX_HERMITE_NODES: usize = 512;

/// `m`-point Gauss–Hermite rule for the weight `exp(-tau^2 / 2)` on the real line.
///
/// The weights sum to `sqrt(2 pi)`. Nodes ascending. Cached per `m`.
pub fn gauss_hermite(m: usize) -> Result<Arc<Rule>> {
    if m == 0 || m > MAX_HERMITE_NODES {
        return Err(Error::invalid(format!(
            "Gauss-Hermite order must lie in 1..={MAX_HERMITE_NODES}, got {m}"
        )));
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&m) {
        return Ok(r.clone());
    }
    let rule = Arc::new(compute_hermite(m)?);
    cache.lock().unwrap().insert(m, rule.clone());
    Ok(rule)
}

fn compute_hermite(m: usize) -> Result<Rule> {
    // Golub-Welsch eigenvalues of the physicists' Jacobi matrix give starting
    // points; Newton on the orthonormal recurrence polishes nodes and weights.
    let jac = nalgebra::DMatrix::<f64>::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            ((i.max(j)) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = jac.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(f64::total_cmp);

    let mf = m as f64;
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for (i, &g) in guesses.iter().enumerate() {
        let mut z = g;
        let mut pp = 0.0;
        for _ in 0..20 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * mf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        if !z.is_finite() || (z - g).abs() > 1e-6 * g.abs().max(1.0) {
            return Err(Error::no_convergence("Gauss-Hermite nodes", format!("order {m}, node {i}")));
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    // Symmetrise.
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let a = 0.5 * (x[j] - x[i]);
        x[i] = -a;
        x[j] = a;
        let b = 0.5 * (w[i] + w[j]);
        w[i] = b;
        w[j] = b;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    let s2 = std::f64::consts::SQRT_2;
    Ok(Rule {
        nodes: x.iter().map(|v| v * s2).collect(),
        weights: w.iter().map(|v| v * s2).collect(),
    })
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_208_643_583,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// One 21-point Kronrod panel: (estimate, error estimate).
pub fn gk21<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[10];
    let mut gauss = T::default();
    for i in 0..10 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kron = kron + pair * WGK[i];
        if i % 2 == 1 {
            gauss = gauss + pair * WG[i / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).magnitude())
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, max_panels: 4000 }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-14, 1e-12)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral<T> {
    pub value: T,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive Gauss–Kronrod integration over consecutive breakpoints
/// `points[0] < points[1] < ... < points[k]`.
pub fn integrate<T, F>(mut f: F, points: &[f64], tol: Tolerance) -> Result<Integral<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    if points.len() < 2 {
        return Err(Error::invalid("integration needs at least two breakpoints"));
    }
    struct Panel<T> {
        a: f64,
        b: f64,
        value: T,
        error: f64,
    }
    let mut panels: Vec<Panel<T>> = Vec::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk21(&mut f, w[0], w[1]);
            panels.push(Panel { a: w[0], b: w[1], value, error });
        }
    }
    if panels.is_empty() {
        return Ok(Integral { value: T::default(), error: 0.0, panels: 0 });
    }
    loop {
        let mut total = T::default();
        let mut err = 0.0;
        let mut worst = 0;
        for (i, p) in panels.iter().enumerate() {
            total = total + p.value;
            err += p.error;
            if p.error > panels[worst].error {
                worst = i;
            }
        }
        let mag = total.magnitude();
        if !mag.is_finite() || !err.is_finite() {
            return Err(Error::no_convergence("adaptive quadrature", "non-finite integrand"));
        }
        if err <= tol.abs.max(tol.rel * mag) {
            return Ok(Integral { value: total, error: err, panels: panels.len() });
        }
        let p = &panels[worst];
        let (a, b) = (p.a, p.b);
        let m = 0.5 * (a + b);
        if panels.len() >= tol.max_panels || m <= a || m >= b {
            return Err(Error::no_convergence(
                "adaptive quadrature",
                format!("estimate {mag:e} with error {err:e} after {} panels", panels.len()),
            ));
        }
        let (v1, e1) = gk21(&mut f, a, m);
        let (v2, e2) = gk21(&mut f, m, b);
        panels[worst] = Panel { a, b: m, value: v1, error: e1 };
        panels.push(Panel { a: m, b, value: v2, error: e2 });
    }
}
