//! Acceptance suite. Each test prints one PASS/FAIL line for its criterion,
//! followed by the individual rows.

use std::collections::HashSet;

use kvchaos::harness::{criterion, ExperimentConfig, ResultRow, Tolerances};
use kvchaos::kv::{first_order_coefficients, NPointOptions};
use kvchaos::{enumerate_chains, ChainClass, IntervalPartition, LambdaRule, PartitionChain};

// tolerances pinned from the acceptance criteria
const SIGMA: f64 = 4.0;
const GRID_TOL: f64 = 1e-3;
const IDENTITY_TOL: f64 = 1e-6;
const FLAT_L2_MULT: f64 = 10.0;
const SLOPE_TOL: f64 = 0.15;
const RUNTIME_C1: f64 = 5.0;
const RUNTIME_C2: f64 = 60.0;
const RUNTIME_C4: f64 = 300.0;

fn config() -> ExperimentConfig {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.scale, 1.0);
    assert_eq!(
        cfg.tol,
        Tolerances {
            sigma: SIGMA,
            grid: GRID_TOL,
            identity: IDENTITY_TOL,
            flat_l2: FLAT_L2_MULT,
            slope: SLOPE_TOL,
            machine: 1e-12
        }
    );
    cfg
}

fn report(k: usize, title: &str, rows: &[ResultRow]) -> bool {
    let ok = rows.iter().all(|r| r.pass);
    println!("criterion {k} ({title}): {}", if ok { "PASS" } else { "FAIL" });
    for r in rows {
        println!("    {r}");
    }
    ok
}

fn row<'a>(rows: &'a [ResultRow], needle: &str) -> &'a ResultRow {
    rows.iter().find(|r| r.quantity.contains(needle)).unwrap_or_else(|| panic!("no row `{needle}`"))
}

/// Φ by composite Simpson on [-10, x].
fn phi(x: f64) -> f64 {
    let n = 20_000;
    let a = -10.0;
    let h = (x - a) / n as f64;
    let dens = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = dens(a) + dens(x);
    for i in 1..n {
        s += dens(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Interval partitions as integer compositions; chains by one-merge steps.
fn compositions(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    (1..=n)
        .flat_map(|first| {
            compositions(n - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn merges(c: &[usize]) -> Vec<Vec<usize>> {
    (0..c.len().saturating_sub(1))
        .map(|j| {
            let mut m = c[..j].to_vec();
            m.push(c[j] + c[j + 1]);
            m.extend_from_slice(&c[j + 2..]);
            m
        })
        .collect()
}

fn oracle_chains(n: usize, stationary: usize) -> HashSet<String> {
    let start = vec![1; n];
    assert!(compositions(n).contains(&start));
    let show = |c: &Vec<usize>| format!("{}", IntervalPartition::from_sizes(c.clone()).unwrap());
    let mut out = HashSet::new();
    let mut todo = vec![(vec![start], 0)];
    while let Some((seq, stat)) = todo.pop() {
        if stat == stationary {
            let parts: Vec<String> = seq.iter().map(show).collect();
            let mut s = parts[0].clone();
            for w in 1..parts.len() {
                s.push_str(if parts[w] == parts[w - 1] { " = " } else { " < " });
                s.push_str(&parts[w]);
            }
            out.insert(s);
        }
        let last = seq.last().unwrap().clone();
        if stat < stationary {
            let mut s = seq.clone();
            s.push(last.clone());
            todo.push((s, stat + 1));
        }
        for m in merges(&last) {
            let mut s = seq.clone();
            s.push(m);
            todo.push((s, stat));
        }
    }
    out
}

#[test]
fn criterion_1_partition_combinatorics() {
    let rows = criterion(1, &config(), None).unwrap();
    let ok = report(1, "partition combinatorics", &rows);
    for n in 1..=6 {
        for k in 0..=2 {
            let class = if k == 0 { ChainClass::Strict } else { ChainClass::Stationary(k) };
            let ours: HashSet<String> =
                enumerate_chains(n, class, None).unwrap().iter().map(PartitionChain::to_string).collect();
            assert_eq!(ours, oracle_chains(n, k), "n={n}, k={k}");
        }
        let fact: usize = (1..n).product();
        assert_eq!(row(&rows, &format!("n={n} maximal")).oracle, fact as f64);
    }
    assert!(row(&rows, "runtime").tolerance <= RUNTIME_C1);
    assert!(ok);
}

#[test]
fn criterion_2_absorbed_semigroup() {
    let rows = criterion(2, &config(), None).unwrap();
    let ok = report(2, "absorbed semigroup oracle", &rows);
    // the grid values of T~ 1 and T~ id are exact
    for t in [0.5, 1.0] {
        for u in [0.5, 1.0, 2.0] {
            assert!((row(&rows, &format!("T~_{t} 1 at u={u}")).estimate - 1.0).abs() < IDENTITY_TOL);
            assert!((row(&rows, &format!("T~_{t} v at u={u}")).estimate - u).abs() < IDENTITY_TOL);
        }
    }
    assert!(row(&rows, "runtime").tolerance <= RUNTIME_C2);
    assert!(ok);
}

#[test]
fn criterion_3_flat_exactness() {
    let rows = criterion(3, &config(), None).unwrap();
    let ok = report(3, "flat-case exactness", &rows);
    for r in rows.iter().filter(|r| r.quantity.contains("L2 error")) {
        assert_eq!(r.tolerance, FLAT_L2_MULT * 1e-4_f64.sqrt());
    }
    for r in rows.iter().filter(|r| r.quantity.contains("slope")) {
        assert_eq!((r.oracle, r.tolerance), (0.5, SLOPE_TOL));
    }
    assert!(ok);
}

#[test]
fn criterion_4_stopped_series() {
    let rows = criterion(4, &config(), None).unwrap();
    let ok = report(4, "stopped Wiener series", &rows);
    let l2: Vec<f64> = (0..=3).map(|k| row(&rows, &format!("L2 error K={k}")).estimate).collect();
    assert!(l2.windows(2).all(|w| w[1] < w[0]), "{l2:?}");
    assert!(row(&rows, "runtime").tolerance <= RUNTIME_C4);
    assert!(ok);
}

#[test]
fn criterion_5_lie_group() {
    let rows = criterion(5, &config(), None).unwrap();
    let ok = report(5, "Lie-group case", &rows);
    assert!(row(&rows, "nilpotent series").estimate < 1e-12);
    assert!(row(&rows, "nilpotent driver").estimate < 1e-12);
    assert!(ok);
}

#[test]
fn criterion_6_arratia_two_point() {
    let rows = criterion(6, &config(), None).unwrap();
    let ok = report(6, "Arratia 2-point coalescence", &rows);
    let p = 2.0 * phi(-1.0 / 2f64.sqrt());
    let band = SIGMA * (p * (1.0 - p) / 1e5).sqrt();
    for r in rows.iter().filter(|r| r.quantity.contains("bridge=true")) {
        assert!((r.oracle - p).abs() < 1e-9);
        assert!((r.estimate - p).abs() <= band, "{r}");
    }
    assert!(ok);
}

#[test]
fn criterion_7_npoint_orders_0_and_1() {
    let rows = criterion(7, &config(), None).unwrap();
    let ok = report(7, "n-point expansion orders 0 and 1", &rows);
    for r in rows.iter().filter(|r| r.quantity.contains("scenario sum")) {
        assert_eq!(r.estimate, r.oracle);
    }
    // leader rule, f = x1 + x2: a^1 = 1 + P(tau <= s), a^2 = P(tau > s)
    let s: f64 = 0.525;
    let hit = 2.0 * phi(-1.0 / (2.0 * s).sqrt());
    for (i, expect) in [(1, 1.0 + hit), (2, 1.0 - hit)] {
        let r = row(&rows, &format!("w_{i} at"));
        assert!((r.estimate - expect).abs() <= r.tolerance, "{r} vs {expect}");
    }
    assert!(ok);
}

#[test]
fn criterion_7_coefficient_against_closed_form_at_other_times() {
    let f = |x: &[f64]| x[0] + x[1];
    let mut o = NPointOptions::new(LambdaRule::leader(2), 0.01, 77);
    o.reps = 8_000;
    o.inner_reps = 200;
    for s in [0.2_f64, 0.8] {
        let c = first_order_coefficients(&f, &[0.0, 1.0], 1.0, s, &o).unwrap();
        let hit = 2.0 * phi(-1.0 / (2.0 * s).sqrt());
        assert!((c[0].value - 1.0 - hit).abs() <= SIGMA * c[0].std_error, "{:?}", c[0]);
        assert!((c[1].value - 1.0 + hit).abs() <= SIGMA * c[1].std_error, "{:?}", c[1]);
    }
}

#[test]
fn criterion_8_noise_identities() {
    let rows = criterion(8, &config(), None).unwrap();
    let ok = report(8, "noise identities", &rows);
    assert_eq!(row(&rows, "(1+s)").oracle, 7.0 / 3.0);
    assert_eq!(row(&rows, "E[I2^2]").oracle, 0.5);
    assert!(ok);
}
