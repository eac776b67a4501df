use dbm_lab::kernel::{KernelEvaluator, KernelOptions};
use dbm_lab::measures::{kolmogorov_distance, EmpiricalMeasure, Generator, InitialConfiguration, MeasureSpec};
use dbm_lab::montecarlo::*;
use dbm_lab::quad::gauss_legendre;

fn explicit(points: &[f64]) -> InitialConfiguration {
    InitialConfiguration::explicit(points.to_vec()).unwrap()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn zero_time_returns_initial_points() {
    let cfg = explicit(&[-0.5, 0.1, 2.0]);
    let s = GueSampler::new(3, 1).unwrap();
    assert_eq!(sample_perturbed(&s, &cfg, 0.0, 9).unwrap(), vec![-0.5, 0.1, 2.0]);
    assert!(sample_perturbed(&s, &cfg, -1.0, 0).is_err());
    assert!(sample_perturbed(&GueSampler::new(2, 1).unwrap(), &cfg, 1.0, 0).is_err());
}

#[test]
fn single_entry_has_unit_variance() {
    let cfg = explicit(&[0.0]);
    let s = GueSampler::new(1, 11).unwrap();
    let xs: Vec<f64> = sample_many(&s, &cfg, 1.0, 0, 100_000).unwrap().into_iter().map(|v| v[0]).collect();
    let (m, var) = mean_var(&xs);
    assert!(m.abs() < 0.01, "mean {m}");
    assert!((var - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn spectrum_of_pure_noise_is_semicircle() {
    let cfg = explicit(&[0.0; 100]);
    let s = GueSampler::new(100, 5).unwrap();
    let sc = MeasureSpec::semicircle(1.0).unwrap();
    for index in 0..3 {
        let ev = sample_perturbed(&s, &cfg, 1.0, index).unwrap();
        let d = kolmogorov_distance(&EmpiricalMeasure::new(ev).unwrap(), &sc);
        assert!(d <= 0.05, "sample {index}: distance {d}");
    }
}

#[test]
fn entry_moments() {
    // 2000 matrices of size 10: 2e4 diagonal and 9e4 off-diagonal draws of each part.
    let n = 10;
    let s = GueSampler::new(n, 3).unwrap();
    let (mut diag, mut re, mut im, mut cross) = (vec![], vec![], vec![], vec![]);
    for index in 0..2000 {
        let h = s.matrix(index);
        for i in 0..n {
            diag.push(h[(i, i)].re);
            assert_eq!(h[(i, i)].im, 0.0);
            for j in i + 1..n {
                assert_eq!(h[(j, i)], h[(i, j)].conj());
                re.push(h[(i, j)].re);
                im.push(h[(i, j)].im);
                cross.push(h[(i, j)].re * h[(i, j)].im);
            }
        }
    }
    for (xs, var) in [(&diag, 1.0 / n as f64), (&re, 0.5 / n as f64), (&im, 0.5 / n as f64)] {
        let k = xs.len() as f64;
        let (m, v) = mean_var(xs);
        assert!(m.abs() <= 3.0 * (var / k).sqrt(), "mean {m}");
        assert!((v - var).abs() <= 3.0 * var * (2.0 / k).sqrt(), "variance {v} vs {var}");
    }
    let (c, _) = mean_var(&cross);
    assert!(c.abs() <= 3.0 * (0.5 / n as f64) / (cross.len() as f64).sqrt(), "covariance {c}");
    let (dr, _) = mean_var(&diag.iter().zip(&re).map(|(a, b)| a * b).collect::<Vec<_>>());
    assert!(dr.abs() <= 3.0 * (0.5f64).sqrt() / n as f64 / (diag.len() as f64).sqrt(), "covariance {dr}");
}

#[test]
fn reproducible_under_any_thread_count() {
    let cfg = InitialConfiguration::generate(Generator::Equispaced { a: -1.0, b: 1.0 }, 20).unwrap();
    let s = GueSampler::new(20, 42).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| sample_many(&s, &cfg, 0.3, 0, 40)).unwrap();
    let b = three.install(|| sample_many(&s, &cfg, 0.3, 0, 40)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert_eq!(a[7], sample_perturbed(&s, &cfg, 0.3, 7).unwrap());
    assert_ne!(a[7], a[8]);
    let other = GueSampler::new(20, 43).unwrap();
    assert_ne!(a[7], sample_perturbed(&other, &cfg, 0.3, 7).unwrap());
}

#[test]
fn paths_start_at_initial_points_and_have_trace_variance_t() {
    let cfg = explicit(&[-1.0, -0.2, 0.4, 1.0, 1.5]);
    let s = GueSampler::new(5, 8).unwrap();
    let p = dbm_paths(&s, &cfg, &[0.0], 0).unwrap();
    assert_eq!(p, vec![cfg.points().to_vec()]);
    assert!(dbm_paths(&s, &cfg, &[0.5, 0.5], 0).is_err());
    assert!(dbm_paths(&s, &cfg, &[], 0).is_err());

    let times = [0.0, 0.25, 0.5, 1.0];
    let mut traces = vec![Vec::new(); times.len()];
    for index in 0..10_000 {
        let p = dbm_paths(&s, &cfg, &times, index).unwrap();
        for (k, ev) in p.iter().enumerate() {
            traces[k].push(ev.iter().sum::<f64>());
        }
    }
    for (k, &t) in times.iter().enumerate().skip(1) {
        let (_, v) = mean_var(&traces[k]);
        assert!((v - t).abs() <= 0.05 * t, "t = {t}: variance {v}");
    }
    // Increments are independent: Var(tr Y(1) - tr Y(0.5)) = 0.5.
    let inc: Vec<f64> = traces[3].iter().zip(&traces[2]).map(|(a, b)| a - b).collect();
    assert!((mean_var(&inc).1 - 0.5).abs() <= 0.025);
}

#[test]
fn histogram_json() {
    let h = empirical_density(&[vec![0.1, 0.2]], &[0.0, 0.5, 1.0]).unwrap();
    let v = serde_json::to_value(&h).unwrap();
    for key in ["bins", "counts", "stderr"] {
        assert!(v.get(key).is_some());
    }
}

#[test]
fn unperturbed_samples_never_enter_a_gap() {
    let base = Generator::Equispaced { a: -1.0, b: 1.0 };
    let g = Generator::GapInserted { base: Box::new(base), x_star: 0.0, delta: 0.3 };
    let cfg = InitialConfiguration::generate(g, 200).unwrap();
    let s = GueSampler::new(200, 1).unwrap();
    let samples = sample_many(&s, &cfg, 0.0, 0, 3).unwrap();
    assert_eq!(empirical_gap_frequency(&samples, -0.03, 0.03).unwrap().frequency, 1.0);
}

/// Integral of `f` over `[a, b]` by 16-point Gauss–Legendre.
fn gl(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let r = gauss_legendre(16).on_interval(a, b);
    r.nodes.iter().zip(&r.weights).map(|(&x, &w)| w * f(x)).sum()
}

#[test]
fn one_and_two_point_functions_match_sampling() {
    let cfg = explicit(&[-1.0, 1.0]);
    let t = 0.3;
    let ev = KernelEvaluator::new(cfg.clone(), t, KernelOptions::default()).unwrap();
    let s = GueSampler::new(2, 17).unwrap();
    let samples = sample_many(&s, &cfg, t, 0, 100_000).unwrap();
    let total = samples.len() as f64;

    // Expected number of points in a bin.
    for (a, b) in [(-1.2, -1.0), (-0.1, 0.1), (0.6, 0.9)] {
        let exact = gl(a, b, |x| ev.kernel(x, x).unwrap());
        let count = samples.iter().flatten().filter(|&&x| a <= x && x < b).count() as f64;
        let p = count / total;
        // At most one of the two points lands in a short bin, so this is a Bernoulli mean.
        let se = (p * (1.0 - p) / total).sqrt();
        assert!((p - exact).abs() <= 3.0 * se, "[{a}, {b}]: {p} vs {exact} (se {se})");
    }

    // Probability of one point in A and the other in B.
    for ((a0, a1), (b0, b1)) in [((-1.2, -0.9), (0.9, 1.2)), ((-0.5, -0.2), (0.2, 0.6))] {
        let exact = gl(a0, a1, |x| gl(b0, b1, |y| ev.correlation_function(&[x, y]).unwrap()));
        let hits = samples.iter().filter(|v| a0 <= v[0] && v[0] < a1 && b0 <= v[1] && v[1] < b1).count() as f64;
        let p = hits / total;
        let se = (p * (1.0 - p) / total).sqrt();
        assert!((p - exact).abs() <= 3.0 * se, "pair: {p} vs {exact} (se {se})");
    }
}
