//! n-point motion of the Arratia flow.
//!
//! Two constructions are provided: sequential gluing, where particle `i`
//! follows its own driver until it meets an already built trajectory, and the
//! λ-rule, where each block of the current partition is driven by a unit-norm
//! combination of its members' drivers. Coalescence inside a time step is
//! decided by the Brownian-bridge crossing probability of each gap.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::noise::{RngStreams, WienerBundle};
use crate::partitions::{validate_lambda, IntervalPartition, LambdaRule, PartitionChain};
use crate::scalar::Real;

/// Stream component reserved for the bridge-test uniforms.
const BRIDGE_STREAM: u64 = 1 << 40;

/// Variance rate of the gap between two independently driven particles.
pub const GAP_VARIANCE_RATE: f64 = 2.0;

/// How trajectories are driven.
#[derive(Debug, Clone)]
pub enum FlowRule<T> {
    Sequential,
    Lambda(LambdaRule<T>),
}

/// Trajectories of the n-point motion on the bundle's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem<T> {
    starts: Vec<T>,
    dt: T,
    trajectories: Vec<Vec<T>>,
}

impl<T: Real> ParticleSystem<T> {
    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn starts(&self) -> &[T] {
        &self.starts
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.trajectories[0].len() - 1
    }

    /// Trajectory of particle `i` (1-based).
    pub fn trajectory(&self, i: usize) -> &[T] {
        &self.trajectories[i - 1]
    }

    pub fn trajectories(&self) -> &[Vec<T>] {
        &self.trajectories
    }

    /// Positions of all particles after `step` steps.
    pub fn positions(&self, step: usize) -> Vec<T> {
        self.trajectories.iter().map(|x| x[step]).collect()
    }

    pub fn final_positions(&self) -> Vec<T> {
        self.positions(self.steps())
    }

    /// CSV `step,t,x1,…,xn`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<String> = (1..=self.n()).map(|i| format!("x{i}")).collect();
        writeln!(w, "step,t,{}", names.join(","))?;
        for j in 0..=self.steps() {
            let row: Vec<String> = self.trajectories.iter().map(|x| x[j].to_string()).collect();
            writeln!(w, "{j},{},{}", self.dt * T::from_usize_lossy(j), row.join(","))?;
        }
        Ok(())
    }
}

/// Realized merge history: `partitions[0]` is the initial partition and
/// `partitions[k]` the partition right after the merge at `times[k - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRecord<T> {
    partitions: Vec<IntervalPartition>,
    times: Vec<T>,
    horizon: T,
}

impl<T: Real> ScenarioRecord<T> {
    fn new(start: IntervalPartition, horizon: T) -> Self {
        Self { partitions: vec![start], times: Vec::new(), horizon }
    }

    /// Merge the block containing index `g` with the one containing `g + 1`.
    fn merge_at(&mut self, g: usize, time: T) {
        let p = self.last();
        let j = p.block_index_of(g).expect("gap index in range");
        let next = p.merge_adjacent(j).expect("gap between two blocks");
        self.partitions.push(next);
        self.times.push(time);
    }

    pub fn partitions(&self) -> &[IntervalPartition] {
        &self.partitions
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn start(&self) -> &IntervalPartition {
        &self.partitions[0]
    }

    pub fn last(&self) -> &IntervalPartition {
        self.partitions.last().expect("record is never empty")
    }

    pub fn merges(&self) -> usize {
        self.times.len()
    }

    /// Number of merges at or before `t`.
    pub fn merges_by(&self, t: T) -> usize {
        self.times.iter().take_while(|&&s| s <= t).count()
    }

    /// Partition in force at time `t`.
    pub fn partition_at(&self, t: T) -> &IntervalPartition {
        &self.partitions[self.merges_by(t)]
    }

    /// The strict chain realized on `[0, t]`.
    pub fn chain_until(&self, t: T) -> PartitionChain {
        PartitionChain::new(self.partitions[..=self.merges_by(t)].to_vec()).expect("realized chains are strict")
    }

    /// Chain as `π₀ < ν₁ < …`.
    pub fn chain_string(&self) -> String {
        let ps: Vec<String> = self.partitions.iter().map(ToString::to_string).collect();
        ps.join(" < ")
    }
}

/// Brownian-bridge probability that a gap with grid values `d0, d1 ≥ 0`
/// touched zero inside the step.
pub fn detect_crossing<T: Real>(d0: T, d1: T, dt: T, variance_rate: T) -> Result<T> {
    if d0 < T::zero() || d1 < T::zero() {
        return Err(Error::NegativeInput(format!("gap values must be nonnegative, got {d0}, {d1}")));
    }
    if !(dt > T::zero()) || !(variance_rate > T::zero()) {
        return Err(Error::InvalidTimeStep(format!("dt {dt}, variance rate {variance_rate}")));
    }
    Ok((-T::lit(2.0) * d0 * d1 / (variance_rate * dt)).exp())
}

/// Fraction of the step at which a gap going from `d0` to `d1` closes, if it
/// does. A sign change closes at the linear zero; a bridge-only hit at
/// `|d0| / (|d0| + |d1|)`. Gaps may start on either side of zero.
fn gap_hit<T: Real>(d0: T, d1: T, dt: T, uniform: Option<T>) -> Option<T> {
    if d0 == T::zero() {
        return Some(T::zero());
    }
    if d0 * d1 <= T::zero() {
        return Some(d0 / (d0 - d1));
    }
    let u = uniform?;
    let (a, b) = (d0.abs(), d1.abs());
    let p = detect_crossing(a, b, dt, T::lit(GAP_VARIANCE_RATE)).unwrap_or(T::zero());
    (u < p).then(|| a / (a + b))
}

fn check_sorted<T: Real>(starts: &[T]) -> Result<()> {
    if starts.is_empty() {
        return Err(Error::InvalidPartition("no starting points".into()));
    }
    if starts.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if starts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::UnsortedStarts);
    }
    Ok(())
}

fn bridge_rng<T: Real>(bundle: &WienerBundle<T>, slot: u64) -> impl Rng {
    RngStreams::new(bundle.seed()).stream(bundle.replica(), BRIDGE_STREAM + slot)
}

/// Sequential gluing construction. With `bridge` set, sub-step meetings are
/// detected with the bridge crossing probability.
pub fn simulate_sequential<T: Real>(
    starts: &[T],
    bundle: &WienerBundle<T>,
    bridge: bool,
) -> Result<(ParticleSystem<T>, ScenarioRecord<T>)> {
    check_sorted(starts)?;
    let n = starts.len();
    if bundle.m() < n {
        return Err(Error::NotEnoughDrivers { need: n, have: bundle.m() });
    }
    let steps = bundle.steps();
    let dt = bundle.dt();
    let mut xs: Vec<Vec<T>> = Vec::with_capacity(n);
    // (time, gap index) of each gluing
    let mut events: Vec<(T, usize)> = Vec::new();
    for i in 0..n {
        let mut x = Vec::with_capacity(steps + 1);
        let mut y = starts[i];
        x.push(y);
        let mut rng = bridge.then(|| bridge_rng(bundle, i as u64));
        let mut glued: Option<usize> = None;
        for j in 0..steps {
            if let Some(l) = glued {
                x.push(xs[l][j + 1]);
                continue;
            }
            let y1 = y + bundle.increment(i + 1, j);
            let u = rng.as_mut().map(|r| T::uniform(r));
            let hit = if i == 0 {
                None
            } else {
                let below = &xs[i - 1];
                gap_hit(y - below[j], y1 - below[j + 1], dt, u)
            };
            match hit {
                Some(frac) => {
                    let target = xs[i - 1][j + 1];
                    let l = (0..i).find(|&l| xs[l][j + 1] == target).unwrap_or(i - 1);
                    glued = Some(l);
                    events.push((bundle.time(j) + frac * dt, i));
                    x.push(target);
                }
                None => {
                    y = y1;
                    x.push(y);
                }
            }
        }
        xs.push(x);
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut record = ScenarioRecord::new(IntervalPartition::trivial(n), bundle.horizon());
    for (time, g) in events {
        record.merge_at(g, time);
    }
    Ok((ParticleSystem { starts: starts.to_vec(), dt, trajectories: xs }, record))
}

/// λ-rule construction from sorted starts. Coinciding starts are merged at
/// time 0, so the record always begins at the singleton partition.
pub fn simulate_lambda<T: Real>(
    starts: &[T],
    rule: &LambdaRule<T>,
    bundle: &WienerBundle<T>,
    bridge: bool,
) -> Result<(ParticleSystem<T>, ScenarioRecord<T>)> {
    check_sorted(starts)?;
    let n = starts.len();
    check_rule(rule, n)?;
    let (traj, record, _) = run_blocks(&IntervalPartition::trivial(n), starts, rule, bundle, bridge, true)?;
    Ok((ParticleSystem { starts: starts.to_vec(), dt: bundle.dt(), trajectories: traj.unwrap() }, record))
}

fn check_rule<T: Real>(rule: &LambdaRule<T>, n: usize) -> Result<()> {
    if rule.n() != n || !validate_lambda(rule, n)? {
        return Err(Error::InvalidLambda(format!("rule does not satisfy the unit-norm constraint for n = {n}")));
    }
    Ok(())
}

/// Final state of a run without stored trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome<T> {
    pub positions: Vec<T>,
    pub record: ScenarioRecord<T>,
}

/// λ-rule motion started from partition `kappa` with one coordinate per
/// block. Block coordinates need not be ordered: blocks are labelled and two
/// neighbours coalesce when their gap reaches zero from either side. The rule
/// is not re-validated here.
pub fn simulate_blocks<T: Real>(
    kappa: &IntervalPartition,
    block_starts: &[T],
    rule: &LambdaRule<T>,
    bundle: &WienerBundle<T>,
    bridge: bool,
) -> Result<FlowOutcome<T>> {
    if block_starts.len() != kappa.num_blocks() {
        return Err(Error::DimensionMismatch { expected: kappa.num_blocks(), got: block_starts.len() });
    }
    if block_starts.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut starts = Vec::with_capacity(kappa.n());
    for (b, &y) in kappa.blocks().zip(block_starts) {
        starts.extend(std::iter::repeat_n(y, b.len()));
    }
    let (_, record, positions) = run_blocks(kappa, &starts, rule, bundle, bridge, false)?;
    Ok(FlowOutcome { positions, record })
}

/// Shared stepping loop. `starts` holds one coordinate per particle and is
/// constant on the blocks of `kappa`; equal neighbouring blocks merge at time 0.
#[allow(clippy::type_complexity)]
fn run_blocks<T: Real>(
    kappa: &IntervalPartition,
    starts: &[T],
    rule: &LambdaRule<T>,
    bundle: &WienerBundle<T>,
    bridge: bool,
    store: bool,
) -> Result<(Option<Vec<Vec<T>>>, ScenarioRecord<T>, Vec<T>)> {
    let n = kappa.n();
    if bundle.m() < n {
        return Err(Error::NotEnoughDrivers { need: n, have: bundle.m() });
    }
    let steps = bundle.steps();
    let dt = bundle.dt();
    let mut record = ScenarioRecord::new(kappa.clone(), bundle.horizon());
    let mut x = starts.to_vec();
    for b in kappa.blocks().collect::<Vec<_>>() {
        if b.hi < n && x[b.hi - 1] == x[b.hi] {
            record.merge_at(b.hi, T::zero());
        }
    }
    let mut blocks: Vec<_> = record.last().blocks().collect();
    let mut lambda = rule.get(record.last())?.to_vec();
    let mut rng = bridge.then(|| bridge_rng(bundle, 0));
    let mut traj = store.then(|| {
        x.iter()
            .map(|&x0| {
                let mut v = Vec::with_capacity(steps + 1);
                v.push(x0);
                v
            })
            .collect::<Vec<_>>()
    });
    let mut y: Vec<T> = blocks.iter().map(|b| x[b.lo - 1]).collect();
    let mut hits: Vec<(T, usize)> = Vec::new();
    for j in 0..steps {
        let y1: Vec<T> = blocks
            .iter()
            .zip(&y)
            .map(|(b, &yb)| yb + b.indices().fold(T::zero(), |acc, q| acc + lambda[q - 1] * bundle.increment(q, j)))
            .collect();
        hits.clear();
        for k in 0..blocks.len().saturating_sub(1) {
            let u = rng.as_mut().map(|r| T::uniform(r));
            if let Some(frac) = gap_hit(y[k + 1] - y[k], y1[k + 1] - y1[k], dt, u) {
                hits.push((frac, blocks[k].hi));
            }
        }
        for (b, &v) in blocks.iter().zip(&y1) {
            for q in b.indices() {
                x[q - 1] = v;
            }
        }
        if hits.is_empty() {
            y = y1;
        } else {
            hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(frac, g) in &hits {
                record.merge_at(g, bundle.time(j) + frac * dt);
            }
            blocks = record.last().blocks().collect();
            lambda = rule.get(record.last())?.to_vec();
            // merged block sits at the λ²-weighted mean of its members
            for b in &blocks {
                let first = x[b.lo - 1];
                if b.indices().all(|q| x[q - 1] == first) {
                    continue;
                }
                let pos = b.indices().fold(T::zero(), |acc, q| acc + lambda[q - 1] * lambda[q - 1] * x[q - 1]);
                for q in b.indices() {
                    x[q - 1] = pos;
                }
            }
            y = blocks.iter().map(|b| x[b.lo - 1]).collect();
        }
        if let Some(tr) = traj.as_mut() {
            for (v, &xq) in tr.iter_mut().zip(&x) {
                v.push(xq);
            }
        }
    }
    Ok((traj, record, x))
}

/// 1 iff the merges realized by time `t` are exactly `chain` (so the next
/// merge, if any, comes after `t`). Non-strict chains never match.
pub fn scenario_indicator<T: Real>(record: &ScenarioRecord<T>, chain: &PartitionChain, t: T) -> bool {
    chain.is_strict() && record.partitions[..=record.merges_by(t)] == *chain.partitions()
}

/// Sample of `reps` independent runs of a rule, each on its own replica
/// stream of `seed`. Runs are independent of thread scheduling.
pub fn simulate_batch<T: Real>(
    starts: &[T],
    rule: &FlowRule<T>,
    horizon: T,
    dt: T,
    reps: usize,
    seed: u64,
    bridge: bool,
) -> Result<Vec<FlowOutcome<T>>> {
    check_sorted(starts)?;
    let n = starts.len();
    if let FlowRule::Lambda(r) = rule {
        check_rule(r, n)?;
    }
    let streams = RngStreams::new(seed);
    crate::noise::replicate(reps, |rep| -> Result<FlowOutcome<T>> {
        let bundle = WienerBundle::sample(n, horizon, dt, &streams, rep, None)?;
        match rule {
            FlowRule::Sequential => {
                let (sys, record) = simulate_sequential(starts, &bundle, bridge)?;
                Ok(FlowOutcome { positions: sys.final_positions(), record })
            }
            FlowRule::Lambda(r) => {
                let (_, record, positions) =
                    run_blocks(&IntervalPartition::trivial(n), starts, r, &bundle, bridge, false)?;
                Ok(FlowOutcome { positions, record })
            }
        }
    })
    .into_iter()
    .collect()
}

/// CSV `rep,chain,tau1,…,final_blocks` for a batch of runs.
pub fn write_scenarios_csv<T: Real, W: Write>(outcomes: &[FlowOutcome<T>], mut w: W) -> Result<()> {
    let max_merges = outcomes.iter().map(|o| o.record.merges()).max().unwrap_or(0);
    let taus: Vec<String> = (1..=max_merges).map(|k| format!("tau{k}")).collect();
    let mut header = vec!["rep".to_string(), "chain".to_string()];
    header.extend(taus);
    header.push("final_blocks".into());
    writeln!(w, "{}", header.join(","))?;
    for (rep, o) in outcomes.iter().enumerate() {
        let mut row = vec![rep.to_string(), o.record.chain_string()];
        for k in 0..max_merges {
            row.push(o.record.times().get(k).map(ToString::to_string).unwrap_or_default());
        }
        row.push(o.record.last().num_blocks().to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_bundle;

    #[test]
    fn crossing_probability_examples() {
        assert_eq!(detect_crossing(0.0, 0.7, 0.01, 2.0).unwrap(), 1.0);
        assert!(detect_crossing(3.0, 3.0, 0.01, 2.0).unwrap() < 1e-100);
        assert!((detect_crossing(0.1, 0.2, 0.01, 2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert!(matches!(detect_crossing(-0.1, 0.2, 0.01, 2.0), Err(Error::NegativeInput(_))));
    }

    #[test]
    fn single_particle_is_its_driver() {
        let b = sample_bundle::<f64>(1, 1.0, 0.01, 3, None).unwrap();
        let (sys, rec) = simulate_sequential(&[0.5], &b, true).unwrap();
        for (x, w) in sys.trajectory(1).iter().zip(b.path(1).unwrap()) {
            assert!((x - (0.5 + w)).abs() < 1e-12);
        }
        assert_eq!(rec.merges(), 0);
    }

    #[test]
    fn coinciding_starts_coalesce_at_once() {
        let b = sample_bundle::<f64>(2, 1.0, 0.01, 3, None).unwrap();
        let (sys, rec) = simulate_sequential(&[0.2, 0.2], &b, false).unwrap();
        assert_eq!(sys.trajectory(1), sys.trajectory(2));
        assert_eq!(rec.times(), &[0.0]);
        let (sys, rec) = simulate_lambda(&[0.2, 0.2], &LambdaRule::leader(2), &b, false).unwrap();
        assert_eq!(sys.trajectory(1), sys.trajectory(2));
        assert_eq!(rec.times(), &[0.0]);
        assert_eq!(rec.chain_string(), "{1}{2} < {1,2}");
    }

    #[test]
    fn leader_rule_before_meeting_follows_drivers() {
        let b = sample_bundle::<f64>(3, 0.05, 0.01, 4, None).unwrap();
        let starts = [-10.0, 0.0, 10.0];
        let (sys, rec) = simulate_lambda(&starts, &LambdaRule::leader(3), &b, true).unwrap();
        assert_eq!(rec.merges(), 0);
        for i in 1..=3 {
            let w = b.path(i).unwrap();
            for j in 0..=b.steps() {
                assert!((sys.trajectory(i)[j] - starts[i - 1] - w[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn errors() {
        let b = sample_bundle::<f64>(2, 1.0, 0.01, 3, None).unwrap();
        assert!(matches!(simulate_sequential(&[1.0, 0.0], &b, false), Err(Error::UnsortedStarts)));
        assert!(matches!(simulate_sequential(&[0.0, 1.0, 2.0], &b, false), Err(Error::NotEnoughDrivers { .. })));
        let mut bad = LambdaRule::leader(2);
        bad.insert(IntervalPartition::full(2), vec![0.5, 0.5]);
        assert!(matches!(simulate_lambda(&[0.0, 1.0], &bad, &b, false), Err(Error::InvalidLambda(_))));
    }

    #[test]
    fn indicator_examples() {
        let b = sample_bundle::<f64>(2, 1.0, 0.01, 3, None).unwrap();
        let (_, rec) = simulate_sequential(&[0.0, 0.0], &b, false).unwrap();
        let single = PartitionChain::singleton(IntervalPartition::trivial(2));
        assert!(!scenario_indicator(&rec, &single, 0.5));
        let (_, rec) = simulate_sequential(&[0.0, 50.0], &b, false).unwrap();
        assert!(scenario_indicator(&rec, &single, 0.5));
    }

    #[test]
    fn labelled_blocks_merge_from_either_side() {
        let b = sample_bundle::<f64>(2, 1.0, 0.01, 5, None).unwrap();
        let kappa = IntervalPartition::trivial(2);
        // block 1 above block 2: gap negative until it reaches zero
        let out = simulate_blocks(&kappa, &[0.05, 0.0], &LambdaRule::leader(2), &b, true).unwrap();
        assert!(out.record.merges() <= 1);
        let out = simulate_blocks(&kappa, &[0.3, 0.3], &LambdaRule::leader(2), &b, true).unwrap();
        assert_eq!(out.record.times(), &[0.0]);
        assert_eq!(out.positions[0], out.positions[1]);
    }
}
