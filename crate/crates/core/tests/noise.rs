use kvchaos::{
    fourier_wiener_pairing, iterated_integral, replicate, sample_bundle, stochastic_exponent, ExactSum, RngStreams,
    SimplexKernel, Summary, WienerBundle,
};
use proptest::prelude::*;

#[test]
fn increments_are_centred_and_uncorrelated() {
    let dt = 1e-3;
    let b = sample_bundle::<f64>(2, 100.0, dt, 19, None).unwrap();
    let n = b.steps();
    assert_eq!(n, 100_000);
    let inc = |i| (0..n).map(|j| b.increment(i, j)).collect::<Vec<f64>>();
    let (x, y) = (inc(1), inc(2));
    let mean = x.iter().sum::<f64>() / n as f64;
    assert!(mean.abs() <= 4.0 * (dt / n as f64).sqrt());
    let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    assert!((var - dt).abs() <= 4.0 * dt * (2.0 / n as f64).sqrt());
    let cov = kvchaos::covariance(&x, &y);
    assert!(cov.mean.abs() <= 4.0 * cov.std_error);
}

#[test]
fn second_order_constant_kernel_is_hermite() {
    // discrete sum over i < j of Δ_i Δ_j is (w² - Σ Δ²) / 2 exactly
    let k = SimplexKernel::constant(vec![1, 1], 1.0).unwrap();
    let errs: Vec<f64> = (0..200)
        .map(|r| {
            let b = WienerBundle::<f64>::sample(1, 1.0, 1e-3, &RngStreams::new(3), r, None).unwrap();
            let w = b.value(1, 1.0).unwrap();
            let qv: f64 = (0..b.steps()).map(|j| b.increment(1, j).powi(2)).sum();
            let i2 = iterated_integral(&k, &b, 1.0).unwrap();
            assert!((i2 - (w * w - qv) / 2.0).abs() < 1e-10);
            (i2 - (w * w - 1.0) / 2.0).powi(2)
        })
        .collect();
    let l2 = (errs.iter().sum::<f64>() / errs.len() as f64).sqrt();
    // (Σ Δ² - t) / 2 has standard deviation √(t dt / 2)
    assert!(l2 < 3.0 * (1e-3_f64 / 2.0).sqrt(), "{l2}");
}

#[test]
fn exponent_with_unit_integrand() {
    let b = sample_bundle::<f64>(1, 1.0, 1e-3, 5, None).unwrap();
    let e = stochastic_exponent(|_| 1.0, &b, 1.0).unwrap();
    assert!((e - (b.value(1, 1.0).unwrap() - 0.5).exp()).abs() < 1e-12);
    assert_eq!(stochastic_exponent(|_| 0.0, &b, 1.0).unwrap(), 1.0);
}

#[test]
fn pairing_of_unit_kernels_is_simplex_volume() {
    let t = 1.7;
    // brute-force grid sum of the volume of Δ_2(0; t)
    let m = 2000;
    let h = t / m as f64;
    let mut vol = 0.0;
    for i in 0..m {
        for j in 0..m {
            if (i as f64 + 0.5) < (j as f64 + 0.5) {
                vol += h * h;
            }
        }
    }
    vol += m as f64 * h * h / 2.0;
    let k1 = SimplexKernel::constant(vec![1], 1.0).unwrap();
    let k2 = SimplexKernel::constant(vec![1, 1], 1.0).unwrap();
    let p1 = fourier_wiener_pairing(0.0, &[k1], |_| 1.0, t).unwrap();
    let p2 = fourier_wiener_pairing(0.0, &[SimplexKernel::constant(vec![1], 0.0).unwrap(), k2], |_| 1.0, t).unwrap();
    assert!((p1 - t).abs() < 1e-12);
    assert!((p2 - vol).abs() < 1e-9, "{p2} vs {vol}");
}

#[test]
fn pairing_matches_monte_carlo_for_a_cell_kernel() {
    let t = 1.0;
    let k = SimplexKernel::cells(vec![1], t, 4, vec![1.0, -0.5, 2.0, 0.3]).unwrap();
    let phi = |s: f64| (3.0 * s).cos();
    let xs: Vec<f64> = replicate(40_000, |r| {
        let b = WienerBundle::sample(1, t, 1e-3, &RngStreams::new(23), r, None).unwrap();
        iterated_integral(&k, &b, t).unwrap() * stochastic_exponent(phi, &b, t).unwrap()
    });
    let s = Summary::of(&xs);
    let exact = fourier_wiener_pairing(0.0, std::slice::from_ref(&k), phi, t).unwrap();
    assert!((s.mean - exact).abs() <= 4.0 * s.std_error, "{} ± {} vs {exact}", s.mean, s.std_error);
}

proptest! {
    #[test]
    fn exact_sum_ignores_order(mut xs in proptest::collection::vec(-1e12f64..1e12, 1..60), seed in any::<u64>()) {
        let a: ExactSum<f64> = xs.iter().copied().collect();
        // deterministic shuffle
        let mut state = seed | 1;
        for i in (1..xs.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            xs.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let b: ExactSum<f64> = xs.iter().copied().collect();
        prop_assert_eq!(a.value(), b.value());
    }

    #[test]
    fn replicate_keeps_replica_order(n in 0usize..300) {
        let out = replicate(n, |r| r * r);
        prop_assert_eq!(out, (0..n as u64).map(|r| r * r).collect::<Vec<_>>());
    }

    #[test]
    fn first_order_cells_telescope(c in -3.0f64..3.0, seed in any::<u64>()) {
        let b = sample_bundle::<f64>(1, 1.0, 0.01, seed, None).unwrap();
        let k = SimplexKernel::cells(vec![1], 1.0, 5, vec![c; 5]).unwrap();
        let w = b.value(1, 1.0).unwrap();
        prop_assert!((iterated_integral(&k, &b, 1.0).unwrap() - c * w).abs() < 1e-12);
    }
}
