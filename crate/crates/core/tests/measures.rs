use dbm_lab::measures::*;
use dbm_lab::quad::Tolerance;
use proptest::prelude::*;

fn reference() -> impl Strategy<Value = MeasureSpec> {
    prop_oneof![
        (0.2f64..2.0).prop_map(|s| MeasureSpec::semicircle(s).unwrap()),
        (-1.0f64..0.5, 0.2f64..2.0).prop_map(|(a, w)| MeasureSpec::uniform(a, a + w).unwrap()),
        (0.0f64..3.0, -0.5f64..0.5).prop_map(|(k, c)| MeasureSpec::power(k, c, -1.0, 1.0).unwrap()),
        (0.0f64..1.0).prop_map(|s| {
            // Two linear pieces with a gap, normalised by hand.
            let (a, b) = (1.0 + s, 1.0 - s);
            let mass = 0.5 * a + 0.5 * b + 0.125;
            MeasureSpec::piecewise(vec![
                PolyPiece { lo: -1.0, hi: -0.5, coeffs: vec![a / mass] },
                PolyPiece { lo: 0.0, hi: 0.5, coeffs: vec![b / mass, 1.0 / mass] },
            ])
            .unwrap_or_else(|_| MeasureSpec::uniform(-1.0, 1.0).unwrap())
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_mass(mu in reference()) {
        let m: f64 = mu.integrate(|_| 1.0, &[], Tolerance::new(1e-13, 1e-12)).unwrap();
        prop_assert!((m - 1.0).abs() <= 1e-10, "mass {m}");
    }

    #[test]
    fn quantiles_sit_at_half_levels(mu in reference(), n in 1usize..200) {
        let q = mu.quantiles(n).unwrap();
        prop_assert!(q.points.windows(2).all(|w| w[0] <= w[1]));
        for (k, &x) in q.points.iter().enumerate() {
            if q.ambiguous.contains(&k) {
                continue;
            }
            let level = (k as f64 + 0.5) / n as f64;
            prop_assert!((mu.cdf(x).unwrap() - level).abs() <= 1e-10, "k = {k}");
        }
        let cfg = InitialConfiguration::generate(Generator::Quantiles { measure: mu.clone() }, n).unwrap();
        prop_assert!(cfg.is_reproducible());
        if q.ambiguous.is_empty() {
            prop_assert_eq!(rigidity(&cfg, &mu).unwrap(), 0.0);
            let d = kolmogorov_distance(cfg.measure(), &mu);
            prop_assert!((d - 0.5 / n as f64).abs() <= 1e-10, "{d}");
        }
    }

    #[test]
    fn kolmogorov_bounded_by_rigidity(
        n in 5usize..150,
        jitter in proptest::collection::vec(-1.0f64..1.0, 150),
        scale in 0.0f64..3.0,
    ) {
        let mu = MeasureSpec::uniform(-1.0, 1.0).unwrap();
        let q = mu.quantiles(n).unwrap().points;
        let pts: Vec<f64> = q.iter().zip(&jitter).map(|(x, j)| (x + scale * j / n as f64).clamp(-1.0, 1.0)).collect();
        let emp = EmpiricalMeasure::new(pts.clone()).unwrap();
        let (lo, hi) = emp.hull();
        let c = 1.0 / mu.min_density_on(lo, hi) + 1.0;
        let m = rigidity_of_points(emp.points(), &mu).unwrap();
        prop_assert!(kolmogorov_distance(&emp, &mu) <= c * (m + 1.0) / n as f64);
    }

    #[test]
    fn gap_insertion_clears_the_interval(
        pts in proptest::collection::vec(-2.0f64..2.0, 1..80),
        x_star in -1.0f64..1.0,
        delta in 0.01f64..0.8,
    ) {
        let out = insert_gap(&pts, x_star, delta).unwrap();
        prop_assert_eq!(out.len(), pts.len());
        prop_assert!(out.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(out.iter().all(|p| (p - x_star).abs() >= delta));
    }
}
