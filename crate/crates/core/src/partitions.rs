//! Interval partitions of `{1..n}`, chains of partitions and λ-rules.
//!
//! A partition is stored as a composition of `n` (the list of block lengths),
//! so blocks are contiguous and cover `{1..n}` by construction. Chains record
//! merge histories: every step either keeps the partition (a *stationary*
//! step) or merges exactly one pair of adjacent blocks.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Contiguous block `{lo, lo+1, .., hi}`, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    pub lo: usize,
    pub hi: usize,
}

impl Block {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::InvalidPartition(format!("bad block bounds {lo}..{hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.lo <= i && i <= self.hi
    }

    /// Member indices, 1-based.
    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Partition of `{1..n}` into consecutive blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntervalPartition {
    sizes: Vec<usize>,
}

impl IntervalPartition {
    /// The partition into singletons, `{1}{2}..{n}`.
    pub fn trivial(n: usize) -> Self {
        Self { sizes: vec![1; n] }
    }

    /// The one-block partition `{1,..,n}`.
    pub fn full(n: usize) -> Self {
        Self { sizes: vec![n] }
    }

    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidPartition(format!("bad composition {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    pub fn from_blocks(blocks: &[Block]) -> Result<Self> {
        let mut next = 1;
        let mut sizes = Vec::with_capacity(blocks.len());
        for b in blocks {
            if b.lo != next {
                return Err(Error::InvalidPartition(format!(
                    "block {b} does not start at {next}"
                )));
            }
            sizes.push(b.len());
            next = b.hi + 1;
        }
        Self::from_sizes(sizes)
    }

    /// Groups consecutive equal values; used to read the start partition κ
    /// off a sorted vector of starting points.
    pub fn from_coinciding<T: Real>(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidPartition("no points".into()));
        }
        let mut sizes = vec![1];
        for w in values.windows(2) {
            if w[0] == w[1] {
                *sizes.last_mut().unwrap() += 1;
            } else {
                sizes.push(1);
            }
        }
        Ok(Self { sizes })
    }

    /// Every interval partition of `{1..n}` (all `2^(n-1)` compositions).
    pub fn all(n: usize) -> Vec<Self> {
        if n == 0 {
            return Vec::new();
        }
        (0..1u64 << (n - 1))
            .map(|mask| {
                let mut sizes = vec![1];
                for bit in 0..n - 1 {
                    if mask >> bit & 1 == 1 {
                        *sizes.last_mut().unwrap() += 1;
                    } else {
                        sizes.push(1);
                    }
                }
                Self { sizes }
            })
            .collect()
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        self.sizes.iter().scan(1, |next, &len| {
            let b = Block { lo: *next, hi: *next + len - 1 };
            *next += len;
            Some(b)
        })
    }

    pub fn block(&self, j: usize) -> Block {
        self.blocks().nth(j).expect("block index in range")
    }

    /// 0-based position of the block containing the 1-based index `i`.
    pub fn block_index_of(&self, i: usize) -> Result<usize> {
        let n = self.n();
        if i == 0 || i > n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        let mut hi = 0;
        for (j, &len) in self.sizes.iter().enumerate() {
            hi += len;
            if i <= hi {
                return Ok(j);
            }
        }
        unreachable!()
    }

    pub fn block_of(&self, i: usize) -> Result<Block> {
        Ok(self.block(self.block_index_of(i)?))
    }

    /// Merge blocks `j` and `j + 1` (0-based).
    pub fn merge_adjacent(&self, j: usize) -> Result<Self> {
        if j + 1 >= self.sizes.len() {
            return Err(Error::IndexOutOfRange { index: j + 1, n: self.sizes.len() });
        }
        let mut sizes = self.sizes.clone();
        sizes[j] += sizes.remove(j + 1);
        Ok(Self { sizes })
    }

    /// Partitions obtained by exactly one adjacent merge.
    pub fn strict_successors(&self) -> Vec<Self> {
        (0..self.sizes.len().saturating_sub(1))
            .map(|j| self.merge_adjacent(j).expect("j in range"))
            .collect()
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Self) -> bool {
        if self.n() != coarser.n() {
            return false;
        }
        let cuts: Vec<usize> = coarser.blocks().map(|b| b.hi).collect();
        cuts.iter().all(|c| self.blocks().any(|b| b.hi == *c))
    }
}

impl fmt::Display for IntervalPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.blocks() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for IntervalPartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPartition(format!("cannot parse `{s}`"));
        let s = s.trim();
        if !s.starts_with('{') || !s.ends_with('}') {
            return Err(bad());
        }
        let mut blocks = Vec::new();
        for body in s[1..s.len() - 1].split("}{") {
            let idx: Vec<usize> = body
                .split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            let (lo, hi) = (idx[0], *idx.last().unwrap());
            if idx.iter().enumerate().any(|(k, &i)| i != lo + k) {
                return Err(bad());
            }
            blocks.push(Block::new(lo, hi)?);
        }
        Self::from_blocks(&blocks)
    }
}

/// True iff `p2 = p1` or `p2` is `p1` with one pair of adjacent blocks merged.
pub fn follows(p1: &IntervalPartition, p2: &IntervalPartition) -> Result<bool> {
    if p1.n() != p2.n() {
        return Err(Error::IncompatiblePartitions(format!(
            "{p1} has n={}, {p2} has n={}",
            p1.n(),
            p2.n()
        )));
    }
    if p1 == p2 {
        return Ok(true);
    }
    if p2.num_blocks() + 1 != p1.num_blocks() {
        return Ok(false);
    }
    // first differing block must be the sum of two consecutive blocks of p1
    let a = &p1.sizes;
    let b = &p2.sizes;
    let j = (0..b.len()).find(|&j| a[j] != b[j]).unwrap_or(b.len() - 1);
    Ok(a[j] + a[j + 1] == b[j] && a[j + 2..] == b[j + 1..])
}

/// The unique block of `p` containing the 1-based index `i`.
pub fn block_of(p: &IntervalPartition, i: usize) -> Result<Block> {
    p.block_of(i)
}

/// Sequence `π_0, .., π_l` in which each partition follows its predecessor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartitionChain {
    partitions: Vec<IntervalPartition>,
    stationary_count: usize,
}

impl PartitionChain {
    pub fn new(partitions: Vec<IntervalPartition>) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::InvalidPartition("empty chain".into()));
        }
        let mut stationary_count = 0;
        for w in partitions.windows(2) {
            if !follows(&w[0], &w[1])? {
                return Err(Error::InvalidPartition(format!("{} does not follow {}", w[1], w[0])));
            }
            if w[0] == w[1] {
                stationary_count += 1;
            }
        }
        Ok(Self { partitions, stationary_count })
    }

    pub fn singleton(p: IntervalPartition) -> Self {
        Self { partitions: vec![p], stationary_count: 0 }
    }

    pub fn partitions(&self) -> &[IntervalPartition] {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn start(&self) -> &IntervalPartition {
        &self.partitions[0]
    }

    pub fn last(&self) -> &IntervalPartition {
        self.partitions.last().unwrap()
    }

    pub fn n(&self) -> usize {
        self.start().n()
    }

    pub fn stationary_count(&self) -> usize {
        self.stationary_count
    }

    pub fn is_strict(&self) -> bool {
        self.stationary_count == 0
    }

    pub fn push(&mut self, p: IntervalPartition) -> Result<()> {
        if !follows(self.last(), &p)? {
            return Err(Error::InvalidPartition(format!("{p} does not follow {}", self.last())));
        }
        if *self.last() == p {
            self.stationary_count += 1;
        }
        self.partitions.push(p);
        Ok(())
    }

    /// Left elements of the stationary steps, in order.
    pub fn stationary_partitions(&self) -> Vec<&IntervalPartition> {
        self.partitions.windows(2).filter(|w| w[0] == w[1]).map(|w| &w[0]).collect()
    }

    /// The `k + 1` strictly decreasing pieces obtained by cutting the chain at
    /// each of its `k` stationary steps.
    pub fn pieces(&self) -> Vec<PartitionChain> {
        let mut out = Vec::with_capacity(self.stationary_count + 1);
        let mut current = vec![self.partitions[0].clone()];
        for w in self.partitions.windows(2) {
            if w[0] == w[1] {
                out.push(Self { partitions: std::mem::take(&mut current), stationary_count: 0 });
            }
            current.push(w[1].clone());
        }
        out.push(Self { partitions: current, stationary_count: 0 });
        out
    }

    /// The chain with all stationary steps deleted.
    pub fn strict_reduction(&self) -> PartitionChain {
        let mut partitions = vec![self.partitions[0].clone()];
        for w in self.partitions.windows(2) {
            if w[0] != w[1] {
                partitions.push(w[1].clone());
            }
        }
        Self { partitions, stationary_count: 0 }
    }
}

impl fmt::Display for PartitionChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.partitions[0])?;
        for w in self.partitions.windows(2) {
            let sep = if w[0] == w[1] { '=' } else { '<' };
            write!(f, " {sep} {}", w[1])?;
        }
        Ok(())
    }
}

impl FromStr for PartitionChain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(['<', '='])
            .map(str::parse::<IntervalPartition>)
            .collect::<Result<Vec<_>>>()?;
        let chain = Self::new(parts)?;
        // the separators must agree with the partitions
        let seps: Vec<char> = s.chars().filter(|c| *c == '<' || *c == '=').collect();
        for (w, sep) in chain.partitions.windows(2).zip(seps) {
            if (sep == '=') != (w[0] == w[1]) {
                return Err(Error::InvalidPartition(format!("separator `{sep}` mismatch in `{s}`")));
            }
        }
        Ok(chain)
    }
}

/// Which set of chains to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainClass {
    /// `R`: any number of stationary steps (needs a length cap).
    All,
    /// `R_k`: exactly `k` stationary steps.
    Stationary(usize),
    /// `R̆ = R_0`: strictly decreasing chains.
    Strict,
}

impl FromStr for ChainClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" => Ok(Self::All),
            "Rbreve" | "R0" => Ok(Self::Strict),
            _ => match s.strip_prefix('R').map(str::parse::<usize>) {
                Some(Ok(k)) => Ok(Self::Stationary(k)),
                _ => Err(Error::Config(format!("unknown chain class `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerationBudget {
    pub max_n: usize,
    pub max_chains: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self { max_n: 8, max_chains: 2_000_000 }
    }
}

/// Enumerate chains of `class` starting at the trivial partition of `{1..n}`.
pub fn enumerate_chains(
    n: usize,
    class: ChainClass,
    max_length: Option<usize>,
) -> Result<Vec<PartitionChain>> {
    if n == 0 {
        return Err(Error::InvalidPartition("n must be at least 1".into()));
    }
    enumerate_chains_from(&IntervalPartition::trivial(n), class, max_length, EnumerationBudget::default())
}

/// Enumerate chains of `class` starting at `start` (the partition κ).
///
/// Output order is a depth-first walk: a chain is emitted before its
/// extensions, stationary extensions come before merges, merges in
/// left-to-right order.
pub fn enumerate_chains_from(
    start: &IntervalPartition,
    class: ChainClass,
    max_length: Option<usize>,
    budget: EnumerationBudget,
) -> Result<Vec<PartitionChain>> {
    let n = start.n();
    if n > budget.max_n {
        return Err(Error::BudgetExceeded(format!("n={n} exceeds max_n={}", budget.max_n)));
    }
    let (max_stationary, exact) = match class {
        ChainClass::All => {
            if max_length.is_none() {
                return Err(Error::BudgetExceeded("class R is infinite without a max_length".into()));
            }
            (usize::MAX, None)
        }
        ChainClass::Stationary(k) => (k, Some(k)),
        ChainClass::Strict => (0, Some(0)),
    };
    let cap = max_length.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    if cap == 0 {
        return Ok(out);
    }
    let mut stack = vec![start.clone()];
    walk(&mut stack, 0, max_stationary, exact, cap, budget.max_chains, &mut out)?;
    Ok(out)
}

fn walk(
    stack: &mut Vec<IntervalPartition>,
    stationary: usize,
    max_stationary: usize,
    exact: Option<usize>,
    cap: usize,
    max_chains: usize,
    out: &mut Vec<PartitionChain>,
) -> Result<()> {
    if exact.is_none_or(|k| k == stationary) {
        if out.len() >= max_chains {
            return Err(Error::BudgetExceeded(format!("more than {max_chains} chains")));
        }
        out.push(PartitionChain { partitions: stack.clone(), stationary_count: stationary });
    }
    if stack.len() >= cap {
        return Ok(());
    }
    let last = stack.last().unwrap().clone();
    if stationary < max_stationary {
        stack.push(last.clone());
        walk(stack, stationary + 1, max_stationary, exact, cap, max_chains, out)?;
        stack.pop();
    }
    for next in last.strict_successors() {
        stack.push(next);
        walk(stack, stationary, max_stationary, exact, cap, max_chains, out)?;
        stack.pop();
    }
    Ok(())
}

/// Strict chains from the trivial partition down to the one-block partition.
pub fn maximal_chains(n: usize) -> Result<Vec<PartitionChain>> {
    Ok(enumerate_chains(n, ChainClass::Strict, None)?
        .into_iter()
        .filter(|c| c.last().num_blocks() == 1)
        .collect())
}

/// Per-partition weight vectors `λ_π ∈ ℝ^n` with unit norm on every block.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRule<T> {
    n: usize,
    vectors: HashMap<IntervalPartition, Vec<T>>,
}

impl<T: Real> LambdaRule<T> {
    pub fn new(n: usize) -> Self {
        Self { n, vectors: HashMap::new() }
    }

    /// Weight 1 on each block's lowest index, 0 elsewhere.
    pub fn leader(n: usize) -> Self {
        Self::from_fn(n, |p| {
            let mut v = vec![T::zero(); n];
            for b in p.blocks() {
                v[b.lo - 1] = T::one();
            }
            v
        })
    }

    /// Weight `1/√|B|` on every index of block `B`.
    pub fn uniform(n: usize) -> Self {
        Self::from_fn(n, |p| {
            let mut v = vec![T::zero(); n];
            for b in p.blocks() {
                let w = T::one() / T::from_usize_lossy(b.len()).sqrt();
                for i in b.indices() {
                    v[i - 1] = w;
                }
            }
            v
        })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(&IntervalPartition) -> Vec<T>) -> Self {
        let vectors = IntervalPartition::all(n).into_iter().map(|p| {
            let v = f(&p);
            (p, v)
        });
        Self { n, vectors: vectors.collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, p: IntervalPartition, lambda: Vec<T>) {
        self.vectors.insert(p, lambda);
    }

    pub fn get(&self, p: &IntervalPartition) -> Result<&[T]> {
        self.vectors
            .get(p)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingPartition(p.to_string()))
    }

    /// Parse lines of the form `{1,2}{3}: 0.6, 0.8, 1`; `#` starts a comment.
    pub fn parse(n: usize, text: &str) -> Result<Self> {
        let mut rule = Self::new(n);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (lhs, rhs) = line
                .split_once(':')
                .ok_or_else(|| Error::InvalidLambda(format!("line {}: missing `:`", lineno + 1)))?;
            let p: IntervalPartition = lhs.parse()?;
            let v = rhs
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|_| Error::InvalidLambda(format!("line {}: bad number `{x}`", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rule.insert(p, v);
        }
        Ok(rule)
    }
}

/// Checks the per-block unit-norm constraint on every partition of `{1..n}`.
///
/// A partition without a vector is an error; a vector of the wrong length or
/// with a non-unit block norm makes the rule invalid (`Ok(false)`).
pub fn validate_lambda<T: Real>(rule: &LambdaRule<T>, n: usize) -> Result<bool> {
    let tol = T::epsilon() * T::lit(64.0);
    let mut ok = true;
    for p in IntervalPartition::all(n) {
        let v = rule.get(&p)?;
        if v.len() != n {
            ok = false;
            continue;
        }
        for b in p.blocks() {
            let norm: T = b.indices().map(|q| v[q - 1] * v[q - 1]).sum();
            if (norm - T::one()).abs() > tol || !norm.is_finite() {
                ok = false;
            }
        }
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> IntervalPartition {
        s.parse().unwrap()
    }

    #[test]
    fn follows_examples() {
        assert!(follows(&p("{1}{2}{3}"), &p("{1,2}{3}")).unwrap());
        assert!(follows(&p("{1,2}{3}"), &p("{1,2}{3}")).unwrap());
        assert!(!follows(&p("{1}{2}{3}"), &p("{1,2,3}")).unwrap());
        assert!(!follows(&p("{1,2}{3}"), &p("{1}{2}{3}")).unwrap());
        assert!(!follows(&p("{1,2}{3}{4}"), &p("{1}{2,3,4}")).unwrap());
        assert!(matches!(
            follows(&p("{1}{2}"), &p("{1}{2}{3}")),
            Err(Error::IncompatiblePartitions(_))
        ));
    }

    #[test]
    fn block_of_examples() {
        assert_eq!(block_of(&p("{1,2}{3}"), 2).unwrap(), Block { lo: 1, hi: 2 });
        assert_eq!(block_of(&p("{1}{2}{3}"), 3).unwrap(), Block { lo: 3, hi: 3 });
        assert_eq!(block_of(&p("{1,2,3}"), 1).unwrap(), Block { lo: 1, hi: 3 });
        assert!(matches!(block_of(&p("{1,2,3}"), 4), Err(Error::IndexOutOfRange { .. })));
        assert!(block_of(&p("{1,2,3}"), 0).is_err());
    }

    #[test]
    fn strict_chains_for_three_points() {
        let chains = enumerate_chains(3, ChainClass::Strict, None).unwrap();
        let text: Vec<String> = chains.iter().map(|c| c.to_string()).collect();
        assert_eq!(
            text,
            vec![
                "{1}{2}{3}",
                "{1}{2}{3} < {1,2}{3}",
                "{1}{2}{3} < {1,2}{3} < {1,2,3}",
                "{1}{2}{3} < {1}{2,3}",
                "{1}{2}{3} < {1}{2,3} < {1,2,3}",
            ]
        );
        assert_eq!(enumerate_chains(1, ChainClass::Strict, None).unwrap().len(), 1);
        assert_eq!(maximal_chains(4).unwrap().len(), 6);
    }

    #[test]
    fn class_r_needs_a_cap() {
        assert!(matches!(
            enumerate_chains(3, ChainClass::All, None),
            Err(Error::BudgetExceeded(_))
        ));
        assert!(matches!(
            enumerate_chains(9, ChainClass::Strict, None),
            Err(Error::BudgetExceeded(_))
        ));
        let tight = EnumerationBudget { max_n: 8, max_chains: 3 };
        assert!(enumerate_chains_from(&IntervalPartition::trivial(3), ChainClass::Strict, None, tight).is_err());
    }

    #[test]
    fn stationary_chains_and_pieces() {
        let r1 = enumerate_chains(2, ChainClass::Stationary(1), None).unwrap();
        let text: Vec<String> = r1.iter().map(|c| c.to_string()).collect();
        assert_eq!(text, vec!["{1}{2} = {1}{2}", "{1}{2} = {1}{2} < {1,2}", "{1}{2} < {1,2} = {1,2}"]);
        let c: PartitionChain = "{1}{2}{3} < {1,2}{3} = {1,2}{3} < {1,2,3}".parse().unwrap();
        assert_eq!(c.stationary_count(), 1);
        assert_eq!(c.stationary_partitions(), vec![&p("{1,2}{3}")]);
        let pieces: Vec<String> = c.pieces().iter().map(|x| x.to_string()).collect();
        assert_eq!(pieces, vec!["{1}{2}{3} < {1,2}{3}", "{1,2}{3} < {1,2,3}"]);
        assert!("{1}{2} < {1}{2}".parse::<PartitionChain>().is_err());
    }

    #[test]
    fn chain_text_round_trip() {
        for c in enumerate_chains(4, ChainClass::Stationary(2), None).unwrap() {
            assert_eq!(c.to_string().parse::<PartitionChain>().unwrap(), c);
        }
    }

    #[test]
    fn lambda_rules() {
        let leader = LambdaRule::<f64>::leader(3);
        let uniform = LambdaRule::<f64>::uniform(3);
        assert!(validate_lambda(&leader, 3).unwrap());
        assert!(validate_lambda(&uniform, 3).unwrap());
        let zero = LambdaRule::<f64>::from_fn(3, |_| vec![0.0; 3]);
        assert!(!validate_lambda(&zero, 3).unwrap());
        let mut partial = LambdaRule::<f64>::leader(3);
        partial.vectors.remove(&p("{1}{2,3}"));
        assert_eq!(
            validate_lambda(&partial, 3),
            Err(Error::MissingPartition("{1}{2,3}".into()))
        );
    }

    #[test]
    fn lambda_rule_text_format() {
        let text = "# rotated rule\n{1}{2}: 1, 1\n{1,2}: 0.6, 0.8\n";
        let rule = LambdaRule::<f64>::parse(2, text).unwrap();
        assert!(validate_lambda(&rule, 2).unwrap());
        assert_eq!(rule.get(&p("{1,2}")).unwrap(), &[0.6, 0.8]);
        assert!(LambdaRule::<f64>::parse(2, "{1,2} 0.6").is_err());
    }

    #[test]
    fn coinciding_starts() {
        let k = IntervalPartition::from_coinciding(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(k, p("{1,2}{3}"));
        assert!(p("{1}{2}{3}").refines(&k));
        assert!(!p("{1}{2,3}").refines(&k));
    }
}
