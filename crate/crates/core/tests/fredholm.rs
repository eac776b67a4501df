use dbm_lab::fredholm::*;
use dbm_lab::kernel::{KernelEvaluator, KernelOptions};
use dbm_lab::measures::{Generator, InitialConfiguration, MeasureSpec};
use dbm_lab::montecarlo::{empirical_gap_frequency, sample_many, GueSampler};

fn uniform_quantiles(n: usize) -> InitialConfiguration {
    let g = Generator::Quantiles { measure: MeasureSpec::uniform(-1.0, 1.0).unwrap() };
    InitialConfiguration::generate(g, n).unwrap()
}

#[test]
fn nested_intervals_are_ordered() {
    let ev = KernelEvaluator::new(uniform_quantiles(12), 0.3, KernelOptions::default()).unwrap();
    let mut prev = 1.0;
    for half in [0.02, 0.05, 0.1, 0.2, 0.4] {
        let r = gap_probability(&GapProblem::new(&ev, -half, half)).unwrap();
        assert!(r.raw_det <= prev + 1e-8, "half-width {half}: {} after {prev}", r.raw_det);
        assert!((0.0..=1.0).contains(&r.probability));
        prev = r.raw_det;
    }
    let s: Vec<f64> = [0.2, 0.5, 1.0, 1.5].iter().map(|&s| sine_gap(s).unwrap()).collect();
    assert!(s.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn converged_under_doubling() {
    let ev = KernelEvaluator::new(uniform_quantiles(8), 0.5, KernelOptions::default()).unwrap();
    let r = gap_probability(&GapProblem::new(&ev, -0.3, 0.1)).unwrap();
    let n = r.sequence.len();
    assert!((r.sequence[n - 1].1 - r.sequence[n - 2].1).abs() <= 1e-8);
    assert_eq!(r.sequence[n - 1].0, r.m_final);
}

#[test]
fn agrees_with_sampled_gap_frequencies() {
    for (n, t, a, b) in [(10, 0.3, -0.15, 0.15), (30, 0.5, 0.2, 0.3)] {
        let cfg = uniform_quantiles(n);
        let ev = KernelEvaluator::new(cfg.clone(), t, KernelOptions::default()).unwrap();
        let exact = gap_probability(&GapProblem::new(&ev, a, b)).unwrap().raw_det;
        let s = GueSampler::new(n, 2024).unwrap();
        let samples = sample_many(&s, &cfg, t, 0, 10_000).unwrap();
        let g = empirical_gap_frequency(&samples, a, b).unwrap();
        assert!(
            (g.frequency - exact).abs() <= 3.0 * g.stderr,
            "n = {n}: sampled {} +- {} vs {exact}",
            g.frequency,
            g.stderr
        );
    }
}
