use kvchaos::kv::{
    euler_path, extract_driver, lie_series, scenario_decomposition, scenario_semigroup, stopped_endpoint,
    stopped_expansion, structural_terms, theorem11_expansion, theorem31_series, CacheOptions, ExpansionSpec, Matrix,
    NPointOptions,
};
use kvchaos::{
    covariance, enumerate_chains, evaluate_semigroup, replicate, Axis, ChainClass, Grid, GridFunction, LambdaRule,
    PartitionChain, RngStreams, SemigroupSpec, Summary, WienerBundle,
};

fn bundle(m: usize, t: f64, dt: f64, seed: u64, r: u64) -> WienerBundle<f64> {
    WienerBundle::sample(m, t, dt, &RngStreams::new(seed), r, None).unwrap()
}

/// E g(u + √t Z) by midpoint quadrature.
fn gauss_mean(g: impl Fn(f64) -> f64, u: f64, t: f64) -> f64 {
    let n = 100_000;
    let h = 20.0 / n as f64;
    (0..n)
        .map(|k| {
            let z = -10.0 + (k as f64 + 0.5) * h;
            g(u + t.sqrt() * z) * (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * h
        / (2.0 * std::f64::consts::PI).sqrt()
}

fn phi_cdf(x: f64) -> f64 {
    gauss_mean(|z| if z <= x { 1.0 } else { 0.0 }, 0.0, 1.0)
}

#[test]
fn flat_cubic_has_complete_chaos() {
    let grid = Grid::new(vec![Axis::with_spacing(-8.0, 8.0, 0.02).unwrap()]).unwrap();
    let f = |v: f64| v * v * v - 2.0 * v;
    let g = GridFunction::from_fn(grid, |x| f(x[0])).unwrap();
    let (u, t) = (0.4, 0.8);
    let e = theorem11_expansion(&ExpansionSpec::heat(u, t, 3), &g, CacheOptions { cells: 8 }).unwrap();
    let mean = gauss_mean(f, u, t);
    let var = gauss_mean(|v| (f(v) - mean).powi(2), u, t);
    assert!((e.a0() - mean).abs() < 1e-3);
    let total: f64 = e.kernel_norms().iter().sum();
    assert!((total - var).abs() < 2e-3 * var, "{total} vs {var}");
}

#[test]
fn flat_square_example() {
    let grid = Grid::new(vec![Axis::with_spacing(-8.0, 8.0, 0.02).unwrap()]).unwrap();
    let g = GridFunction::from_fn(grid, |x| x[0] * x[0]).unwrap();
    let (u, t, dt) = (0.6, 1.0, 1e-3);
    let e = theorem11_expansion(&ExpansionSpec::heat(u, t, 2), &g, CacheOptions { cells: 8 }).unwrap();
    let errs: Vec<f64> = (0..200)
        .map(|r| {
            let b = bundle(1, t, dt, 8, r);
            let w = b.value(1, t).unwrap();
            let symbolic = u * u + t + 2.0 * u * w + (w * w - t);
            (e.value(&b).unwrap() - symbolic).powi(2)
        })
        .collect();
    let l2 = (errs.iter().sum::<f64>() / errs.len() as f64).sqrt();
    assert!(l2 < 3.0 * dt.sqrt(), "{l2}");
}

#[test]
fn stopped_series_bessel_and_orthogonality() {
    let grid = Grid::new(vec![Axis::with_spacing(0.0, 8.0, 0.025).unwrap()]).unwrap();
    let f = GridFunction::from_fn(grid, |x: &[f64]| x[0].min(2.0)).unwrap();
    let (u, t, dt) = (1.0, 1.0, 1e-3);
    let e = stopped_expansion(&f, u, t, 3, CacheOptions::default()).unwrap();
    let rows = replicate(20_000, |r| {
        let b = bundle(1, t, dt, 12, r);
        (stopped_endpoint(u, t, &b, true).unwrap().min(2.0), e.terms(&b).unwrap())
    });
    let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let s = Summary::of(&y);
    let var = s.std * s.std;
    // var estimate has relative error about √(2/N) for near-Gaussian samples
    let var_tol = 4.0 * var * (2.0 / y.len() as f64).sqrt();
    let mut explained = 0.0;
    for (k, norm) in e.kernel_norms().into_iter().enumerate() {
        assert!(norm >= 0.0);
        explained += norm;
        assert!(explained <= var + var_tol, "K={}: {explained} > {var}", k + 1);
    }
    for j in 1..=3 {
        for k in (j + 1)..=3 {
            let tj: Vec<f64> = rows.iter().map(|r| r.1[j]).collect();
            let tk: Vec<f64> = rows.iter().map(|r| r.1[k]).collect();
            let c = covariance(&tj, &tk);
            assert!(c.mean.abs() <= 4.0 * c.std_error, "orders {j},{k}: {} ± {}", c.mean, c.std_error);
        }
    }
    // the series is centred around a0
    let first: Vec<f64> = rows.iter().map(|r| r.1[1]).collect();
    let m = Summary::of(&first);
    assert!(m.mean.abs() <= 4.0 * m.std_error);
}

#[test]
fn stopped_pairing_matches_monte_carlo_for_a_sinusoid() {
    let grid = Grid::new(vec![Axis::with_spacing(0.0, 8.0, 0.025).unwrap()]).unwrap();
    let f = GridFunction::from_fn(grid, |x: &[f64]| (x[0] * 1.5).sin()).unwrap();
    let (u, t) = (0.6, 1.0);
    let e = stopped_expansion(&f, u, t, 3, CacheOptions::default()).unwrap();
    let phi = |s: f64| 0.8 * (2.0 * s).sin();
    let xs = replicate(40_000, |r| {
        let b = bundle(1, t, 1e-3, 13, r);
        (stopped_endpoint(u, t, &b, true).unwrap() * 1.5).sin() * kvchaos::stochastic_exponent(phi, &b, t).unwrap()
    });
    let s = Summary::of(&xs);
    let p = e.pairing(phi).unwrap();
    assert!((p - s.mean).abs() <= 4.0 * s.std_error + 1e-3, "{p} vs {} ± {}", s.mean, s.std_error);
}

#[test]
fn lie_examples() {
    let b = bundle(1, 1.0, 1e-5, 4, 0);
    let zero = Matrix::<f64>::zeros(2, 2);
    assert_eq!(lie_series(&zero, 1.0, 4, &b).unwrap(), Matrix::identity(2));
    let rot = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
    let end = euler_path(&rot, &b).unwrap().pop().unwrap();
    let d3 = (&lie_series(&rot, 1.0, 3, &b).unwrap() - &end).frobenius();
    let d6 = (&lie_series(&rot, 1.0, 6, &b).unwrap() - &end).frobenius();
    assert!(d6 < d3, "{d6} vs {d3}");
}

#[test]
fn driver_increments_are_uncorrelated() {
    let rot = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
    let pairs = replicate(20_000, |r| {
        let b = bundle(1, 0.4, 0.01, 14, r);
        let m = extract_driver(&euler_path(&rot, &b).unwrap(), 0.01, 0.2).unwrap();
        (m[1].get(0, 1), m[2].get(0, 1) - m[1].get(0, 1))
    });
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let c = covariance(&x, &y);
    assert!(c.mean.abs() <= 4.0 * c.std_error);
}

fn options(n: usize, reps: usize) -> NPointOptions<f64> {
    let mut o = NPointOptions::new(LambdaRule::leader(n), 0.01, 21);
    o.reps = reps;
    o
}

#[test]
fn single_particle_scenario_is_the_heat_semigroup() {
    let f = |x: &[f64]| (x[0] * 0.9).cos();
    let est = scenario_semigroup(&PartitionChain::singleton("{1}".parse().unwrap()), &f, &[0.3], 1.0, 20_000, &options(1, 1))
        .unwrap();
    let exact = gauss_mean(|v| (v * 0.9).cos(), 0.3, 1.0);
    assert!((est.value - exact).abs() <= 4.0 * est.std_error);
}

#[test]
fn full_merge_probability_for_two_points() {
    let one = |_: &[f64]| 1.0;
    let chain: PartitionChain = "{1}{2} < {1,2}".parse().unwrap();
    let est = scenario_semigroup(&chain, &one, &[0.0, 1.0], 1.0, 40_000, &options(2, 1)).unwrap();
    let p = 2.0 * phi_cdf(-1.0 / 2f64.sqrt());
    assert!((est.value - p).abs() <= 4.0 * est.std_error, "{} vs {p}", est.value);
    let d = scenario_decomposition(&one, &[0.0, 0.4, 1.0], 1.0, 5_000, &options(3, 1)).unwrap();
    assert_eq!(d.total(), 1.0);
}

#[test]
fn coinciding_pair_reduces_to_one_particle() {
    let f = |x: &[f64]| x[0] * x[1] + x[1].sin();
    let b = bundle(2, 1.0, 0.01, 3, 0);
    let o = options(2, 20_000);
    let v = theorem31_series(&f, &[0.5, 0.5], 1.0, 0, &b, &o).unwrap();
    let d = scenario_decomposition(&f, &[0.5, 0.5], 1.0, o.reps, &o).unwrap();
    assert_eq!(v, d.total());
    let exact = gauss_mean(|y| y * y + y.sin(), 0.5, 1.0);
    assert!((v - exact).abs() <= 4.0 * d.std_error(), "{v} vs {exact}");
}

#[test]
fn structural_term_counts() {
    // leader rule: λ_{π, i} ≠ 0 exactly at block leaders
    for n in 1..=3 {
        for k in 0..=2 {
            let terms = structural_terms(&LambdaRule::<f64>::leader(n), n, k).unwrap();
            let expect: usize = enumerate_chains(n, ChainClass::Stationary(k), None)
                .unwrap()
                .iter()
                .map(|c| c.stationary_partitions().iter().map(|p| p.num_blocks()).product::<usize>())
                .sum();
            assert_eq!(terms.len(), expect, "n={n} k={k}");
        }
    }
}

#[test]
fn grid_semigroup_agrees_with_stopped_paths() {
    let grid = Grid::new(vec![Axis::with_spacing(0.0, 10.0, 0.01).unwrap()]).unwrap();
    let f = GridFunction::from_fn(grid, |x: &[f64]| (-x[0]).exp()).unwrap();
    let (u, t) = (0.7, 0.6);
    let v = evaluate_semigroup(&SemigroupSpec::Absorbed, &f, t, u).unwrap();
    let xs = replicate(40_000, |r| (-stopped_endpoint(u, t, &bundle(1, t, t / 30.0, 17, r), true).unwrap()).exp());
    let s = Summary::of(&xs);
    assert!((v - s.mean).abs() <= 4.0 * s.std_error + 1e-3);
}
