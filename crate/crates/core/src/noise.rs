//! Discretized Wiener noise: seeded path bundles, iterated Itô integrals over
//! time simplices, stochastic exponents and the Fourier–Wiener pairing.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{ExactSum, Real};

/// Largest chaos order handled by [`fourier_wiener_pairing`].
pub const MAX_PAIRING_ORDER: usize = 4;

/// Independent random streams addressed by `(replica, component)`.
///
/// The key is derived from `(seed, component)` and the ChaCha stream id is the
/// replica, so every replica draws the same numbers regardless of which thread
/// produces it or in what order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, replica: u64, component: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&component.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replica);
        rng
    }
}

/// `m` Wiener paths on the grid `0, dt, …, steps·dt = horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerBundle<T> {
    dt: T,
    steps: usize,
    seed: u64,
    replica: u64,
    paths: Vec<Vec<T>>,
}

pub(crate) fn step_count<T: Real>(horizon: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::InvalidTimeStep(format!("horizon {horizon} shorter than dt {dt}")));
    }
    let ratio = horizon / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > T::lit(1e-6) * steps {
        return Err(Error::InvalidTimeStep(format!("horizon {horizon} is not a multiple of dt {dt}")));
    }
    Ok(steps.to_usize().unwrap_or(0))
}

/// Bundle for replica 0 of `seed`.
pub fn sample_bundle<T: Real>(m: usize, horizon: T, dt: T, seed: u64, starts: Option<&[T]>) -> Result<WienerBundle<T>> {
    WienerBundle::sample(m, horizon, dt, &RngStreams::new(seed), 0, starts)
}

impl<T: Real> WienerBundle<T> {
    pub fn sample(
        m: usize,
        horizon: T,
        dt: T,
        streams: &RngStreams,
        replica: u64,
        starts: Option<&[T]>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::NotEnoughDrivers { need: 1, have: 0 });
        }
        let steps = step_count(horizon, dt)?;
        if let Some(s) = starts {
            if s.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: s.len() });
            }
        }
        let sd = dt.sqrt();
        let paths = (0..m)
            .map(|i| {
                let mut rng = streams.stream(replica, i as u64);
                let mut x = starts.map_or(T::zero(), |s| s[i]);
                let mut p = Vec::with_capacity(steps + 1);
                p.push(x);
                for _ in 0..steps {
                    x = x + sd * T::standard_normal(&mut rng);
                    p.push(x);
                }
                p
            })
            .collect();
        Ok(Self { dt, steps, seed: streams.seed(), replica, paths })
    }

    /// Bundle from explicit paths, all of length `steps + 1`.
    pub fn from_paths(dt: T, paths: Vec<Vec<T>>) -> Result<Self> {
        let len = paths.first().map(Vec::len).unwrap_or(0);
        if len < 2 {
            return Err(Error::TooFewPoints(len));
        }
        if let Some(p) = paths.iter().find(|p| p.len() != len) {
            return Err(Error::DimensionMismatch { expected: len, got: p.len() });
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidTimeStep(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { dt, steps: len - 1, seed: 0, replica: 0, paths })
    }

    pub fn m(&self) -> usize {
        self.paths.len()
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> T {
        self.dt * T::from_usize_lossy(self.steps)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    fn check_component(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.m() {
            return Err(Error::ComponentOutOfRange { component: i, m: self.m() });
        }
        Ok(())
    }

    /// Path of component `i` (1-based).
    pub fn path(&self, i: usize) -> Result<&[T]> {
        self.check_component(i)?;
        Ok(&self.paths[i - 1])
    }

    pub fn paths(&self) -> &[Vec<T>] {
        &self.paths
    }

    /// `w_i(t_{j+1}) - w_i(t_j)`, 1-based component.
    #[inline]
    pub fn increment(&self, i: usize, j: usize) -> T {
        let p = &self.paths[i - 1];
        p[j + 1] - p[j]
    }

    pub fn time(&self, j: usize) -> T {
        self.dt * T::from_usize_lossy(j)
    }

    /// Number of whole steps in `[0, t]`.
    pub fn steps_to(&self, t: T) -> Result<usize> {
        if t < T::zero() {
            return Err(Error::NegativeTime(t.as_f64()));
        }
        let s = t / self.dt;
        let n = (s + T::lit(1e-6)).floor().to_usize().unwrap_or(0);
        if n > self.steps {
            return Err(Error::BeyondHorizon { t: t.as_f64(), horizon: self.horizon().as_f64() });
        }
        Ok(n)
    }

    /// `w_i(t)` on the grid (1-based component).
    pub fn value(&self, i: usize, t: T) -> Result<T> {
        self.check_component(i)?;
        Ok(self.paths[i - 1][self.steps_to(t)?])
    }

    /// CSV `step,t,w1,…,wm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<String> = (1..=self.m()).map(|i| format!("w{i}")).collect();
        writeln!(w, "step,t,{}", names.join(","))?;
        for j in 0..=self.steps {
            let vals: Vec<String> = self.paths.iter().map(|p| p[j].to_string()).collect();
            writeln!(w, "{j},{},{}", self.time(j), vals.join(","))?;
        }
        Ok(())
    }
}

pub type TimeFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
pub type SimplexFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// How a kernel on `Δ_k(0; t)` is represented.
#[derive(Clone)]
pub enum KernelShape<T> {
    /// `a ≡ c`.
    Constant(T),
    /// `a(τ⃗) = Π_q g_q(τ_q)`.
    Product(Vec<TimeFn<T>>),
    /// Piecewise constant on the `cells^k` tensor grid of `[0, horizon]`;
    /// `values` is row-major in `(c_1, …, c_k)` and only non-decreasing cell
    /// tuples are read.
    Cells { horizon: T, cells: usize, values: Vec<T> },
    /// Arbitrary evaluator (brute force, for checks).
    General(SimplexFn<T>),
}

impl<T: std::fmt::Debug> std::fmt::Debug for KernelShape<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c:?})"),
            Self::Product(g) => write!(f, "Product({} factors)", g.len()),
            Self::Cells { horizon, cells, .. } => write!(f, "Cells {{ horizon: {horizon:?}, cells: {cells} }}"),
            Self::General(_) => write!(f, "General"),
        }
    }
}

/// Order-`k` kernel together with the noise components it integrates against.
#[derive(Debug, Clone)]
pub struct SimplexKernel<T> {
    components: Vec<usize>,
    shape: KernelShape<T>,
}

impl<T: Real> SimplexKernel<T> {
    pub fn new(components: Vec<usize>, shape: KernelShape<T>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::OrderTooHigh { order: 0, max: 0 });
        }
        match &shape {
            KernelShape::Product(g) if g.len() != components.len() => {
                return Err(Error::DimensionMismatch { expected: components.len(), got: g.len() })
            }
            KernelShape::Cells { horizon, cells, values } => {
                let want = cells.checked_pow(components.len() as u32).unwrap_or(usize::MAX);
                if *cells == 0 || values.len() != want {
                    return Err(Error::DimensionMismatch { expected: want, got: values.len() });
                }
                if !(*horizon > T::zero()) {
                    return Err(Error::InvalidTimeStep(format!("cell horizon {horizon}")));
                }
            }
            _ => {}
        }
        Ok(Self { components, shape })
    }

    pub fn constant(components: Vec<usize>, c: T) -> Result<Self> {
        Self::new(components, KernelShape::Constant(c))
    }

    pub fn product(components: Vec<usize>, factors: Vec<TimeFn<T>>) -> Result<Self> {
        Self::new(components, KernelShape::Product(factors))
    }

    pub fn cells(components: Vec<usize>, horizon: T, cells: usize, values: Vec<T>) -> Result<Self> {
        Self::new(components, KernelShape::Cells { horizon, cells, values })
    }

    pub fn general(components: Vec<usize>, f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Result<Self> {
        Self::new(components, KernelShape::General(Arc::new(f)))
    }

    pub fn order(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn shape(&self) -> &KernelShape<T> {
        &self.shape
    }

    /// Kernel value at ordered times.
    pub fn eval(&self, taus: &[T]) -> T {
        match &self.shape {
            KernelShape::Constant(c) => *c,
            KernelShape::Product(g) => g.iter().zip(taus).fold(T::one(), |acc, (g, &s)| acc * g(s)),
            KernelShape::Cells { horizon, cells, values } => {
                let idx = taus.iter().fold(0, |acc, &s| acc * cells + cell_of(s, *horizon, *cells));
                values[idx]
            }
            KernelShape::General(f) => f(taus),
        }
    }
}

#[inline]
pub(crate) fn cell_of<T: Real>(s: T, horizon: T, cells: usize) -> usize {
    let c = (s / horizon * T::from_usize_lossy(cells)).floor().to_usize().unwrap_or(0);
    c.min(cells - 1)
}

/// Left-point discretization of `∫_{Δ_k(0;t)} a dw_{i_1} … dw_{i_k}` with
/// strictly increasing grid steps.
pub fn iterated_integral<T: Real>(kernel: &SimplexKernel<T>, bundle: &WienerBundle<T>, t: T) -> Result<T> {
    for &i in kernel.components() {
        bundle.check_component(i)?;
    }
    let n = bundle.steps_to(t)?;
    let comps = kernel.components();
    let k = comps.len();
    match kernel.shape() {
        KernelShape::Constant(c) => Ok(*c * prefix_sum(bundle, comps, 0..n, |_, _| T::one())[k]),
        KernelShape::Product(g) => {
            let p = prefix_sum(bundle, comps, 0..n, |q, j| g[q](bundle.time(j)));
            Ok(p[k])
        }
        KernelShape::Cells { horizon, cells, values } => Ok(cell_integral(bundle, comps, n, *horizon, *cells, values)),
        KernelShape::General(f) => brute_force(bundle, comps, n, f.as_ref()),
    }
}

/// `P[q] = Σ_{j_1<…<j_q} Π_{l≤q} g_l(j_l) Δw_{i_l}(j_l)` over the given steps.
fn prefix_sum<T: Real>(
    bundle: &WienerBundle<T>,
    comps: &[usize],
    steps: std::ops::Range<usize>,
    g: impl Fn(usize, usize) -> T,
) -> Vec<T> {
    let k = comps.len();
    let mut p = vec![T::zero(); k + 1];
    p[0] = T::one();
    for j in steps {
        for q in (1..=k).rev() {
            p[q] = p[q] + p[q - 1] * g(q - 1, j) * bundle.increment(comps[q - 1], j);
        }
    }
    p
}

/// Iterated sum of a cell-wise constant kernel: group indices by cell, so the
/// sum factorizes into within-cell iterated sums of increments.
fn cell_integral<T: Real>(
    bundle: &WienerBundle<T>,
    comps: &[usize],
    n: usize,
    horizon: T,
    cells: usize,
    values: &[T],
) -> T {
    let k = comps.len();
    // bounds[c] = first step whose left point lies in cell c or later
    let mut bounds = vec![n; cells + 1];
    let mut next = 0;
    for j in 0..n {
        let cj = cell_of(bundle.time(j), horizon, cells);
        while next <= cj {
            bounds[next] = j;
            next += 1;
        }
    }
    // within[c][l][g]: strict iterated sum inside cell c of components l..l+g
    let within: Vec<Vec<Vec<T>>> = (0..cells)
        .map(|c| {
            (0..k)
                .map(|l| prefix_sum(bundle, &comps[l..], bounds[c]..bounds[c + 1], |_, _| T::one()))
                .collect()
        })
        .collect();
    let mut acc = ExactSum::new();
    let mut tuple = vec![0usize; k];
    enumerate_runs(k, cells, 0, 0, T::one(), &mut tuple, &mut |tuple, weight| {
        let idx = tuple.iter().fold(0, |a, &c| a * cells + c);
        acc.add(values[idx] * weight);
    }, &|c, l, g| within[c][l][g]);
    acc.value()
}

/// Visits every non-decreasing cell tuple, split into maximal runs of equal
/// cells, with the product of `run_weight(cell, start, length)` over the runs.
fn enumerate_runs<T: Real>(
    k: usize,
    cells: usize,
    pos: usize,
    min_cell: usize,
    weight: T,
    tuple: &mut [usize],
    visit: &mut impl FnMut(&[usize], T),
    run_weight: &impl Fn(usize, usize, usize) -> T,
) {
    if pos == k {
        visit(tuple, weight);
        return;
    }
    for c in min_cell..cells {
        for g in 1..=k - pos {
            let w = run_weight(c, pos, g);
            if w == T::zero() {
                continue;
            }
            for slot in &mut tuple[pos..pos + g] {
                *slot = c;
            }
            enumerate_runs(k, cells, pos + g, c + 1, weight * w, tuple, visit, run_weight);
        }
    }
}

const BRUTE_FORCE_LIMIT: f64 = 2e8;

fn brute_force<T: Real>(bundle: &WienerBundle<T>, comps: &[usize], n: usize, f: &dyn Fn(&[T]) -> T) -> Result<T> {
    let k = comps.len();
    if (n as f64).powi(k as i32) / (1..=k).product::<usize>() as f64 > BRUTE_FORCE_LIMIT {
        return Err(Error::BudgetExceeded(format!("brute-force iterated integral with {n} steps, order {k}")));
    }
    fn rec<T: Real>(
        bundle: &WienerBundle<T>,
        comps: &[usize],
        n: usize,
        f: &dyn Fn(&[T]) -> T,
        from: usize,
        taus: &mut Vec<T>,
        weight: T,
        acc: &mut ExactSum<T>,
    ) {
        let q = taus.len();
        if q == comps.len() {
            acc.add(weight * f(taus));
            return;
        }
        for j in from..n {
            taus.push(bundle.time(j));
            rec(bundle, comps, n, f, j + 1, taus, weight * bundle.increment(comps[q], j), acc);
            taus.pop();
        }
    }
    let mut acc = ExactSum::new();
    rec(bundle, comps, n, f, 0, &mut Vec::with_capacity(k), T::one(), &mut acc);
    Ok(acc.value())
}

/// `exp(Σ φ(s_j) Δw_1(s_j) - ½ Σ φ(s_j)² dt)` over the steps in `[0, t]`.
pub fn stochastic_exponent<T: Real>(phi: impl Fn(T) -> T, bundle: &WienerBundle<T>, t: T) -> Result<T> {
    stochastic_exponent_of(phi, bundle, 1, t)
}

/// [`stochastic_exponent`] against component `i`.
pub fn stochastic_exponent_of<T: Real>(phi: impl Fn(T) -> T, bundle: &WienerBundle<T>, i: usize, t: T) -> Result<T> {
    bundle.check_component(i)?;
    let n = bundle.steps_to(t)?;
    let half = T::lit(0.5);
    let mut s = T::zero();
    for j in 0..n {
        let p = phi(bundle.time(j));
        s = s + p * bundle.increment(i, j) - half * p * p * bundle.dt();
    }
    Ok(s.exp())
}

/// Composite Simpson rule on `[a, b]` with `2m` panels.
pub(crate) fn simpson<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T, m: usize) -> T {
    let n = 2 * m;
    let h = (b - a) / T::from_usize_lossy(n);
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        s = s + w * f(a + h * T::from_usize_lossy(i));
    }
    s * h / T::lit(3.0)
}

/// `a₀ + Σ_k ∫_{Δ_k(0;t)} a_k(r⃗) φ(r_1)…φ(r_k) dr⃗`, the expectation of the
/// expansion against the stochastic exponent `E(φ)`.
pub fn fourier_wiener_pairing<T: Real>(a0: T, kernels: &[SimplexKernel<T>], phi: impl Fn(T) -> T, t: T) -> Result<T> {
    if t < T::zero() {
        return Err(Error::NegativeTime(t.as_f64()));
    }
    let phi: &dyn Fn(T) -> T = &phi;
    let mut total = a0;
    for kern in kernels {
        let k = kern.order();
        if k > MAX_PAIRING_ORDER {
            return Err(Error::OrderTooHigh { order: k, max: MAX_PAIRING_ORDER });
        }
        let term = match kern.shape() {
            KernelShape::Constant(c) => {
                let big = simpson(phi, T::zero(), t, 1024);
                *c * big.powi(k as i32) / factorial::<T>(k)
            }
            KernelShape::Product(g) => {
                let q = 4096;
                let h = t / T::from_usize_lossy(q);
                product_pairing(k, q, |l, c| {
                    let lo = h * T::from_usize_lossy(c);
                    simpson(&|s| g[l](s) * phi(s), lo, lo + h, 2)
                })
            }
            KernelShape::Cells { horizon, cells, values } => {
                if (*horizon - t).abs() > T::lit(1e-9) * t.max(T::one()) {
                    return Err(Error::BeyondHorizon { t: t.as_f64(), horizon: horizon.as_f64() });
                }
                let h = t / T::from_usize_lossy(*cells);
                let big: Vec<T> = (0..*cells)
                    .map(|c| {
                        let lo = h * T::from_usize_lossy(c);
                        simpson(phi, lo, lo + h, 16)
                    })
                    .collect();
                cell_pairing(k, *cells, values, &big)
            }
            KernelShape::General(f) => {
                let cells = if k <= 2 { 256 } else { 48 };
                let h = t / T::from_usize_lossy(cells);
                let mid: Vec<T> = (0..cells).map(|c| h * (T::from_usize_lossy(c) + T::lit(0.5))).collect();
                let big: Vec<T> = mid.iter().map(|&m| simpson(phi, m - h * T::lit(0.5), m + h * T::lit(0.5), 4)).collect();
                let mut acc = ExactSum::new();
                let mut tuple = vec![0usize; k];
                let mut taus = vec![T::zero(); k];
                enumerate_runs(k, cells, 0, 0, T::one(), &mut tuple, &mut |tu, w| {
                    for (s, &c) in taus.iter_mut().zip(tu) {
                        *s = mid[c];
                    }
                    acc.add(f(&taus) * w);
                }, &|c, _, g| big[c].powi(g as i32) / factorial::<T>(g));
                acc.value()
            }
        };
        total = total + term;
    }
    Ok(total)
}

pub(crate) fn factorial<T: Real>(k: usize) -> T {
    (1..=k).fold(T::one(), |acc, i| acc * T::from_usize_lossy(i))
}

/// `Σ_{c⃗ non-decreasing} a(c⃗) Π_runs Φ_c^g / g!`.
pub(crate) fn cell_pairing<T: Real>(k: usize, cells: usize, values: &[T], big: &[T]) -> T {
    let mut acc = ExactSum::new();
    let mut tuple = vec![0usize; k];
    enumerate_runs(k, cells, 0, 0, T::one(), &mut tuple, &mut |tu, w| {
        let idx = tu.iter().fold(0, |a, &c| a * cells + c);
        acc.add(values[idx] * w);
    }, &|c, _, g| big[c].powi(g as i32) / factorial::<T>(g));
    acc.value()
}

/// Dynamic programme over cells for a product kernel: `term(l, c)` is the
/// integral of factor `l` times φ over cell `c`.
fn product_pairing<T: Real>(k: usize, cells: usize, term: impl Fn(usize, usize) -> T) -> T {
    let mut p = vec![T::zero(); k + 1];
    p[0] = T::one();
    for c in 0..cells {
        let t: Vec<T> = (0..k).map(|l| term(l, c)).collect();
        for q in (1..=k).rev() {
            let mut add = T::zero();
            let mut run = T::one();
            for g in 1..=q {
                run = run * t[q - g];
                add = add + p[q - g] * run / factorial::<T>(g);
            }
            p[q] = p[q] + add;
        }
    }
    p[k]
}

/// Mean, standard deviation and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary<T> {
    pub n: usize,
    pub mean: T,
    pub std: T,
    pub std_error: T,
}

impl<T: Real> Summary<T> {
    pub fn of(xs: &[T]) -> Self {
        let n = xs.len();
        let nf = T::from_usize_lossy(n.max(1));
        let mean = xs.iter().copied().collect::<ExactSum<T>>().value() / nf;
        let ss = xs.iter().map(|&x| (x - mean) * (x - mean)).collect::<ExactSum<T>>().value();
        let var = if n > 1 { ss / T::from_usize_lossy(n - 1) } else { T::zero() };
        let std = var.sqrt();
        Self { n, mean, std, std_error: std / nf.sqrt() }
    }
}

/// Sample covariance with its CLT standard error (the standard error of the
/// mean of the centred products).
pub fn covariance<T: Real>(x: &[T], y: &[T]) -> Summary<T> {
    let mx = Summary::of(x).mean;
    let my = Summary::of(y).mean;
    let prod: Vec<T> = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).collect();
    Summary::of(&prod)
}

/// Runs `f` for replicas `0..reps` in parallel; output is in replica order.
pub fn replicate<R: Send>(reps: usize, f: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
    (0..reps as u64).into_par_iter().map(f).collect()
}
