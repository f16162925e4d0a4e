//! Expansion of `f(x_1(t), …, x_n(t))` for the n-point motion of the
//! coalescing flow, split by realized merge scenario.
//!
//! Order 0 is `Σ_{π̃ ∈ R̆} T_t^π̃ f(u⃗)`, the scenario semigroups summing to
//! `E f(x⃗(t))`. The order-1 kernel against `w_i` at time `s` is
//! `Σ_{π̃ ∈ R₁} λ_{ρ i} T_s^{π̃₁} ∂_i T_{t-s}^{π̃₂} f (u⃗)` where `ρ` is the
//! stationary partition of the chain. Summing over prefixes and suffixes
//! with the same `ρ` this is `Σ_ρ λ_{ρ i} E[1{ν(s) = ρ} ∂_{B_ρ(i)} G_ρ(x⃗(s))]`
//! with `G_ρ(y) = E f` of the motion started from block coordinates `y`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::flow::{simulate_batch, simulate_blocks, FlowOutcome, FlowRule};
use crate::noise::{iterated_integral, step_count, RngStreams, SimplexKernel, Summary, WienerBundle};
use crate::partitions::{
    enumerate_chains_from, validate_lambda, ChainClass, EnumerationBudget, IntervalPartition, LambdaRule,
    PartitionChain,
};
use crate::scalar::{ExactSum, Real};
use crate::semigroup::{block_derivative, derivative_values, Axis, Grid, GridFunction};

/// Function of the particle positions.
pub type PointFn<'a, T> = &'a (dyn Fn(&[T]) -> T + Sync);

/// Seed offset separating inner (start-grid) streams from outer ones.
const INNER_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Simulation settings shared by the n-point estimators.
#[derive(Debug, Clone)]
pub struct NPointOptions<T> {
    pub rule: LambdaRule<T>,
    pub dt: T,
    pub bridge: bool,
    pub seed: u64,
    /// Replicas for order 0 and for the outer part of order 1.
    pub reps: usize,
    /// Replicas per start-grid point for order 1.
    pub inner_reps: usize,
    /// Start-grid points per block coordinate.
    pub grid_points: usize,
    /// Time cells carrying the order-1 kernel.
    pub time_cells: usize,
    pub max_n: usize,
}

impl<T: Real> NPointOptions<T> {
    pub fn new(rule: LambdaRule<T>, dt: T, seed: u64) -> Self {
        Self {
            rule,
            dt,
            bridge: true,
            seed,
            reps: 10_000,
            inner_reps: 2_000,
            grid_points: 9,
            time_cells: 8,
            max_n: 3,
        }
    }

    fn check(&self, starts: &[T]) -> Result<()> {
        let n = starts.len();
        if n > self.max_n {
            return Err(Error::BudgetExceeded(format!("n = {n} above the configured maximum {}", self.max_n)));
        }
        if self.rule.n() != n || !validate_lambda(&self.rule, n)? {
            return Err(Error::InvalidLambda(format!("rule is not a valid λ-rule for n = {n}")));
        }
        if self.grid_points < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 start-grid points, got {}", self.grid_points)));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of one scenario semigroup `T_t^π̃ f(u⃗)`.
#[derive(Debug, Clone)]
pub struct ScenarioSemigroupEstimate<T> {
    pub chain: PartitionChain,
    pub value: T,
    pub std_error: T,
    pub n: usize,
    sum: ExactSum<T>,
}

/// All scenario semigroups of `R̆` estimated on one sample.
#[derive(Debug, Clone)]
pub struct ScenarioDecomposition<T> {
    estimates: Vec<ScenarioSemigroupEstimate<T>>,
    plain: ExactSum<T>,
    plain_sq: ExactSum<T>,
    reps: usize,
}

impl<T: Real> ScenarioDecomposition<T> {
    pub fn estimates(&self) -> &[ScenarioSemigroupEstimate<T>] {
        &self.estimates
    }

    pub fn get(&self, chain: &PartitionChain) -> Option<&ScenarioSemigroupEstimate<T>> {
        self.estimates.iter().find(|e| &e.chain == chain)
    }

    /// `Σ_π̃ T_t^π̃ f`, summed without rounding before the final division.
    pub fn total(&self) -> T {
        let mut acc = ExactSum::new();
        for e in &self.estimates {
            acc.merge(&e.sum);
        }
        acc.value() / T::from_usize_lossy(self.reps)
    }

    /// Plain Monte Carlo mean of `f(x⃗(t))` on the same sample.
    pub fn plain_mean(&self) -> T {
        self.plain.value() / T::from_usize_lossy(self.reps)
    }

    /// Standard error of [`Self::plain_mean`].
    pub fn std_error(&self) -> T {
        if self.reps < 2 {
            return T::zero();
        }
        let n = T::from_usize_lossy(self.reps);
        let m = self.plain_mean();
        let var = ((self.plain_sq.value() - n * m * m) / (n - T::one())).max(T::zero());
        (var / n).sqrt()
    }

    pub fn reps(&self) -> usize {
        self.reps
    }
}

fn sample<T: Real>(starts: &[T], t: T, reps: usize, seed: u64, opts: &NPointOptions<T>) -> Result<Vec<FlowOutcome<T>>> {
    simulate_batch(starts, &FlowRule::Lambda(opts.rule.clone()), t, opts.dt, reps, seed, opts.bridge)
}

/// Every strict chain from the singleton partition of `{1..n}`.
pub fn strict_chains(n: usize) -> Result<Vec<PartitionChain>> {
    enumerate_chains_from(&IntervalPartition::trivial(n), ChainClass::Strict, None, EnumerationBudget::default())
}

pub fn scenario_decomposition<T: Real>(
    f: PointFn<'_, T>,
    starts: &[T],
    t: T,
    reps: usize,
    opts: &NPointOptions<T>,
) -> Result<ScenarioDecomposition<T>> {
    opts.check(starts)?;
    if reps == 0 {
        return Err(Error::TooFewPoints(0));
    }
    let outcomes = sample(starts, t, reps, opts.seed, opts)?;
    let chains = strict_chains(starts.len())?;
    let index: HashMap<&PartitionChain, usize> = chains.iter().enumerate().map(|(k, c)| (c, k)).collect();
    let mut sums = vec![ExactSum::new(); chains.len()];
    let mut squares = vec![ExactSum::new(); chains.len()];
    let mut plain = ExactSum::new();
    let mut plain_sq = ExactSum::new();
    for o in &outcomes {
        let v = f(&o.positions);
        plain.add(v);
        plain_sq.add(v * v);
        let chain = o.record.chain_until(t);
        let k = index[&chain];
        sums[k].add(v);
        squares[k].add(v * v);
    }
    let nf = T::from_usize_lossy(reps);
    let estimates = chains
        .into_iter()
        .zip(sums.into_iter().zip(squares))
        .map(|(chain, (sum, sq))| {
            let mean = sum.value() / nf;
            let var = if reps > 1 {
                ((sq.value() - nf * mean * mean) / T::from_usize_lossy(reps - 1)).max(T::zero())
            } else {
                T::zero()
            };
            ScenarioSemigroupEstimate { chain, value: mean, std_error: (var / nf).sqrt(), n: reps, sum }
        })
        .collect();
    Ok(ScenarioDecomposition { estimates, plain, plain_sq, reps })
}

/// `T_t^π̃ f(u⃗)` with its standard error.
pub fn scenario_semigroup<T: Real>(
    chain: &PartitionChain,
    f: PointFn<'_, T>,
    starts: &[T],
    t: T,
    reps: usize,
    opts: &NPointOptions<T>,
) -> Result<ScenarioSemigroupEstimate<T>> {
    let n = starts.len();
    if chain.n() != n || !chain.is_strict() || chain.start() != &IntervalPartition::trivial(n) {
        return Err(Error::IncompatibleChain(format!("{chain} is not a strict chain from the singletons of {{1..{n}}}")));
    }
    let d = scenario_decomposition(f, starts, t, reps, opts)?;
    Ok(d.get(chain).expect("every strict chain is enumerated").clone())
}

/// First-order kernel against `w_i` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientEstimate<T> {
    pub s: T,
    pub component: usize,
    pub value: T,
    pub std_error: T,
}

/// Derivative grids of `G_ρ` for one partition `ρ`.
struct BlockGradient<T> {
    /// Lifted block derivative along the block of each index `i`.
    value: Vec<GridFunction<T>>,
    /// Standard error of the per-block-axis derivative, on the block grid.
    error: Vec<GridFunction<T>>,
}

fn block_gradient<T: Real>(
    f: PointFn<'_, T>,
    rho: &IntervalPartition,
    lo: T,
    hi: T,
    horizon: T,
    opts: &NPointOptions<T>,
) -> Result<BlockGradient<T>> {
    let n = rho.n();
    let d = rho.num_blocks();
    let axis = Axis::new(lo, hi, opts.grid_points)?;
    let grid = Grid::new(vec![axis; d])?;
    let points: Vec<Vec<T>> = (0..grid.len()).map(|k| grid.point(k)).collect();
    let inner = RngStreams::new(opts.seed ^ INNER_SEED_MIX);
    let g = grid.len();
    let p = opts.grid_points;
    let strides: Vec<usize> = (0..d).map(|b| p.pow((d - 1 - b) as u32)).collect();
    let h = axis.spacing();
    // per replica: values at all grid points (common noise) and their block-axis derivatives
    let per_rep = crate::noise::replicate(opts.inner_reps, |r| -> Result<(Vec<T>, Vec<Vec<T>>)> {
        let bundle = WienerBundle::sample(n, horizon, opts.dt, &inner, r, None)?;
        let mut vals = Vec::with_capacity(g);
        for y in &points {
            let out = simulate_blocks(rho, y, &opts.rule, &bundle, opts.bridge)?;
            vals.push(f(&out.positions));
        }
        let derivs = (0..d)
            .map(|b| {
                let mut dv = vec![T::zero(); g];
                for start in 0..g {
                    if (start / strides[b]) % p != 0 {
                        continue;
                    }
                    let line: Vec<T> = (0..p).map(|q| vals[start + q * strides[b]]).collect();
                    for (q, x) in derivative_values(&line, h).into_iter().enumerate() {
                        dv[start + q * strides[b]] = x;
                    }
                }
                dv
            })
            .collect();
        Ok((vals, derivs))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let reps = per_rep.len();
    let mean_vals: Vec<T> = (0..g)
        .map(|k| per_rep.iter().map(|(v, _)| v[k]).collect::<ExactSum<T>>().value() / T::from_usize_lossy(reps))
        .collect();
    let error: Vec<GridFunction<T>> = (0..d)
        .map(|b| {
            let se = (0..g)
                .map(|k| {
                    let xs: Vec<T> = per_rep.iter().map(|(_, dv)| dv[b][k]).collect();
                    Summary::of(&xs).std_error
                })
                .collect();
            GridFunction::new(grid.clone(), se)
        })
        .collect::<Result<_>>()?;
    let block_fn = GridFunction::new(grid, mean_vals)?;
    // lift to n coordinates through block means, then take block derivatives
    let lifted_grid = Grid::new(vec![axis; n])?;
    let lifted = GridFunction::from_fn(lifted_grid, |x| {
        let y: Vec<T> = rho
            .blocks()
            .map(|b| b.indices().map(|q| x[q - 1]).sum::<T>() / T::from_usize_lossy(b.len()))
            .collect();
        block_fn.eval_clamped(&y)
    })?;
    let value = (1..=n).map(|i| block_derivative(&lifted, rho, i)).collect::<Result<_>>()?;
    Ok(BlockGradient { value, error })
}

/// Order-1 kernels `a_1^i(s)`, `i = 1..n`, with outer and inner Monte Carlo
/// errors combined.
pub fn first_order_coefficients<T: Real>(
    f: PointFn<'_, T>,
    starts: &[T],
    t: T,
    s: T,
    opts: &NPointOptions<T>,
) -> Result<Vec<CoefficientEstimate<T>>> {
    opts.check(starts)?;
    let n = starts.len();
    let s_steps = step_count(s, opts.dt)?;
    let t_steps = step_count(t, opts.dt)?;
    if s_steps >= t_steps {
        return Err(Error::BeyondHorizon { t: s.as_f64(), horizon: t.as_f64() });
    }
    let outer = sample(starts, s, opts.reps, opts.seed, opts)?;
    let spread = T::lit(4.0) * s.sqrt() + T::lit(4.0) * (t - s).sqrt() * T::lit(0.25);
    let lo = starts[0] - spread;
    let hi = starts[n - 1] + spread;

    let mut partitions: Vec<IntervalPartition> = outer.iter().map(|o| o.record.last().clone()).collect();
    partitions.sort();
    partitions.dedup();
    let mut gradients = HashMap::new();
    for rho in &partitions {
        gradients.insert(rho.clone(), block_gradient(f, rho, lo, hi, t - s, opts)?);
    }

    (1..=n)
        .map(|i| {
            let mut ys = Vec::with_capacity(outer.len());
            let mut inner_err = ExactSum::new();
            for o in &outer {
                let rho = o.record.last();
                let lam = opts.rule.get(rho)?[i - 1];
                if lam == T::zero() {
                    ys.push(T::zero());
                    continue;
                }
                let gr = &gradients[rho];
                ys.push(lam * gr.value[i - 1].eval_clamped(&o.positions));
                let b = rho.block_index_of(i)?;
                let y: Vec<T> = rho.blocks().map(|bl| o.positions[bl.lo - 1]).collect();
                inner_err.add(lam.abs() * gr.error[b].eval_clamped(&y));
            }
            let outer_stats = Summary::of(&ys);
            let se_inner = inner_err.value() / T::from_usize_lossy(outer.len());
            Ok(CoefficientEstimate {
                s,
                component: i,
                value: outer_stats.mean,
                std_error: (outer_stats.std_error * outer_stats.std_error + se_inner * se_inner).sqrt(),
            })
        })
        .collect()
}

/// Orders 0 and 1 of the n-point expansion with cached kernels.
#[derive(Debug, Clone)]
pub struct NPointExpansion<T> {
    pub order0: ScenarioDecomposition<T>,
    /// `coefficients[m][i - 1]` at the midpoint of time cell `m`.
    pub coefficients: Vec<Vec<CoefficientEstimate<T>>>,
    horizon: T,
}

impl<T: Real> NPointExpansion<T> {
    /// `[order-0 term, order-1 term]` on the driving noise `bundle`.
    pub fn terms(&self, bundle: &WienerBundle<T>) -> Result<Vec<T>> {
        let mut out = vec![self.order0.total()];
        if !self.coefficients.is_empty() {
            let cells = self.coefficients.len();
            let n = self.coefficients[0].len();
            let mut first = T::zero();
            for i in 1..=n {
                let values = self.coefficients.iter().map(|c| c[i - 1].value).collect();
                let k = SimplexKernel::cells(vec![i], self.horizon, cells, values)?;
                first = first + iterated_integral(&k, bundle, self.horizon)?;
            }
            out.push(first);
        }
        Ok(out)
    }

    pub fn value(&self, bundle: &WienerBundle<T>) -> Result<T> {
        Ok(self.terms(bundle)?.into_iter().sum())
    }
}

pub fn theorem31_expansion<T: Real>(
    f: PointFn<'_, T>,
    starts: &[T],
    t: T,
    order: usize,
    opts: &NPointOptions<T>,
) -> Result<NPointExpansion<T>> {
    if order >= 2 {
        return Err(Error::OrderNotVerified(order));
    }
    let order0 = scenario_decomposition(f, starts, t, opts.reps, opts)?;
    let mut coefficients = Vec::new();
    if order == 1 {
        let m = opts.time_cells.max(1);
        let steps = step_count(t, opts.dt)?;
        for c in 0..m {
            // cell midpoint snapped to the time grid, kept inside (0, t)
            let k = ((2 * c + 1) * steps / (2 * m)).clamp(1, steps - 1);
            let s = opts.dt * T::from_usize_lossy(k);
            coefficients.push(first_order_coefficients(f, starts, t, s, opts)?);
        }
    }
    Ok(NPointExpansion { order0, coefficients, horizon: t })
}

/// Truncated n-point series of order 0 or 1 on the driving noise `bundle`.
pub fn theorem31_series<T: Real>(
    f: PointFn<'_, T>,
    starts: &[T],
    t: T,
    order: usize,
    bundle: &WienerBundle<T>,
    opts: &NPointOptions<T>,
) -> Result<T> {
    theorem31_expansion(f, starts, t, order, opts)?.value(bundle)
}

/// One term of the order-`k` expansion: a chain of `R_k`, the components it
/// integrates against and the product of λ-weights at its stationary steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralTerm<T> {
    pub chain: PartitionChain,
    pub components: Vec<usize>,
    pub weight: T,
}

/// Terms of the order-`k` kernel with non-zero λ-weight. Integration of these
/// kernels is not provided for `k ≥ 2`.
pub fn structural_terms<T: Real>(rule: &LambdaRule<T>, n: usize, k: usize) -> Result<Vec<StructuralTerm<T>>> {
    let chains = enumerate_chains_from(
        &IntervalPartition::trivial(n),
        ChainClass::Stationary(k),
        None,
        EnumerationBudget::default(),
    )?;
    let mut out = Vec::new();
    for chain in chains {
        let stat: Vec<&IntervalPartition> = chain.stationary_partitions();
        let lambdas: Vec<&[T]> = stat.iter().map(|p| rule.get(p)).collect::<Result<_>>()?;
        let total = n.pow(k as u32);
        for code in 0..total {
            let comps: Vec<usize> = (0..k).map(|j| code / n.pow((k - 1 - j) as u32) % n + 1).collect();
            let weight = comps.iter().zip(&lambdas).fold(T::one(), |acc, (&i, lam)| acc * lam[i - 1]);
            if weight != T::zero() {
                out.push(StructuralTerm { chain: chain.clone(), components: comps, weight });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(n: usize) -> NPointOptions<f64> {
        let mut o = NPointOptions::new(LambdaRule::leader(n), 0.02, 3);
        o.reps = 2000;
        o
    }

    #[test]
    fn indicator_mass_is_one() {
        let one = |_: &[f64]| 1.0;
        let d = scenario_decomposition(&one, &[0.0, 0.5, 1.0], 1.0, 500, &opts(3)).unwrap();
        assert_eq!(d.total(), 1.0);
        assert_eq!(d.estimates().len(), 5);
    }

    #[test]
    fn order_zero_equals_plain_mean() {
        let f = |x: &[f64]| (x[0] * 1.3).sin() + x[1] * x[1];
        let d = scenario_decomposition(&f, &[0.0, 0.7], 1.0, 3000, &opts(2)).unwrap();
        assert_eq!(d.total(), d.plain_mean());
    }

    #[test]
    fn incompatible_chains_are_rejected() {
        let one = |_: &[f64]| 1.0;
        let c: PartitionChain = "{1,2}".parse().unwrap();
        assert!(matches!(
            scenario_semigroup(&c, &one, &[0.0, 1.0], 1.0, 10, &opts(2)),
            Err(Error::IncompatibleChain(_))
        ));
    }

    #[test]
    fn higher_orders_are_structural_only() {
        let f = |x: &[f64]| x[0];
        let b = crate::noise::sample_bundle::<f64>(2, 1.0, 0.02, 1, None).unwrap();
        assert!(matches!(
            theorem31_series(&f, &[0.0, 1.0], 1.0, 2, &b, &opts(2)),
            Err(Error::OrderNotVerified(2))
        ));
        // leader rule, n = 2, one stationary step: chains {1}{2}={1}{2}, {1}{2}={1}{2}<{1,2}, {1}{2}<{1,2}={1,2}
        let terms = structural_terms(&LambdaRule::<f64>::leader(2), 2, 1).unwrap();
        assert_eq!(terms.len(), 5);
        assert!(terms.iter().all(|t| t.weight == 1.0));
    }
}
