//! Cached kernel pipelines `T_{r_1} A T_{r_2 - r_1} … A T_{t - r_k} f (u)`.
//!
//! Kernels are sampled at the midpoints of `cells` equal time cells and held
//! constant on each cell. A kernel of order `k` is assembled from suffix
//! grid functions: `H(c) = A T^in_{t - r_c} f` and
//! `H(c, rest) = A T^out_{r_{rest_0} - r_c} H(rest)`, then read off at `u`
//! with the row of `T^out_{r_{c_1}}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{fourier_wiener_pairing, iterated_integral, SimplexKernel, WienerBundle};
use crate::scalar::{ExactSum, Real};
use crate::semigroup::{
    apply_semigroup, derivative_values, evaluate_semigroup, semigroup_weights, Axis, Coefficient, GridFunction,
    Operator, SemigroupSpec,
};

/// Highest chaos order any expansion will build.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheOptions {
    /// Time cells on `[0, t]`.
    pub cells: usize,
}

impl Default for CacheOptions {
    fn default() -> Self {
        Self { cells: 32 }
    }
}

/// Truncated chaos expansion `a₀ + Σ_k ∫_{Δ_k} a_k dw^{⊗k}`.
#[derive(Debug, Clone)]
pub struct ChaosExpansion<T> {
    a0: T,
    kernels: Vec<SimplexKernel<T>>,
    horizon: T,
}

impl<T: Real> ChaosExpansion<T> {
    pub fn new(a0: T, kernels: Vec<SimplexKernel<T>>, horizon: T) -> Result<Self> {
        for (k, kern) in kernels.iter().enumerate() {
            if kern.order() != k + 1 {
                return Err(Error::DimensionMismatch { expected: k + 1, got: kern.order() });
            }
        }
        Ok(Self { a0, kernels, horizon })
    }

    pub fn order(&self) -> usize {
        self.kernels.len()
    }

    pub fn a0(&self) -> T {
        self.a0
    }

    pub fn kernels(&self) -> &[SimplexKernel<T>] {
        &self.kernels
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// `[a₀, I_1(a_1), …, I_K(a_K)]` on one path.
    pub fn terms(&self, bundle: &WienerBundle<T>) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.order() + 1);
        out.push(self.a0);
        for k in &self.kernels {
            out.push(iterated_integral(k, bundle, self.horizon)?);
        }
        Ok(out)
    }

    /// Partial sums `S_0, …, S_K` on one path.
    pub fn partial_sums(&self, bundle: &WienerBundle<T>) -> Result<Vec<T>> {
        let mut acc = T::zero();
        Ok(self
            .terms(bundle)?
            .into_iter()
            .map(|x| {
                acc = acc + x;
                acc
            })
            .collect())
    }

    /// The full truncated series on one path.
    pub fn value(&self, bundle: &WienerBundle<T>) -> Result<T> {
        Ok(*self.partial_sums(bundle)?.last().unwrap())
    }

    /// Expectation of the series against the stochastic exponent `E(φ)`.
    pub fn pairing(&self, phi: impl Fn(T) -> T) -> Result<T> {
        fourier_wiener_pairing(self.a0, &self.kernels, phi, self.horizon)
    }

    /// `‖a_k‖² = ∫_{Δ_k} a_k²` for `k = 1..K`, exact for cell kernels.
    pub fn kernel_norms(&self) -> Vec<T> {
        self.kernels.iter().map(|k| kernel_norm(k, self.horizon)).collect()
    }
}

fn kernel_norm<T: Real>(kern: &SimplexKernel<T>, t: T) -> T {
    use crate::noise::KernelShape;
    let k = kern.order();
    match kern.shape() {
        KernelShape::Constant(c) => *c * *c * t.powi(k as i32) / crate::noise::factorial::<T>(k),
        KernelShape::Cells { cells, values, .. } => {
            let h = t / T::from_usize_lossy(*cells);
            let sq: Vec<T> = values.iter().map(|&v| v * v).collect();
            crate::noise::cell_pairing(k, *cells, &sq, &vec![h; *cells])
        }
        _ => {
            let sq = kern.clone();
            // midpoint rule through the pairing with φ ≡ 1 on the squared kernel
            let f = move |r: &[T]| {
                let v = sq.eval(r);
                v * v
            };
            let g = SimplexKernel::general(kern.components().to_vec(), f).expect("valid order");
            fourier_wiener_pairing(T::zero(), &[g], |_| T::one(), t).unwrap_or(T::nan())
        }
    }
}

/// `A g = b g'` on raw node values.
fn generator<T: Real>(b: &Coefficient<T>, axis: &Axis<T>, g: &[T]) -> Vec<T> {
    let d = derivative_values(g, axis.spacing());
    match b {
        Coefficient::Constant(c) => d.into_iter().map(|x| *c * x).collect(),
        Coefficient::Grid(bg) => d.into_iter().zip(bg.values()).map(|(x, &y)| x * y).collect(),
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).collect::<ExactSum<T>>().value()
}

/// Builds the cached expansion of `f` at `u` up to order `order`.
#[allow(clippy::too_many_arguments)]
pub fn build_pipeline_expansion<T: Real>(
    inner: &SemigroupSpec<T>,
    outer: &SemigroupSpec<T>,
    b: &Coefficient<T>,
    f: &GridFunction<T>,
    t: T,
    u: T,
    order: usize,
    opts: CacheOptions,
) -> Result<ChaosExpansion<T>> {
    if order > MAX_ORDER {
        return Err(Error::OrderTooHigh { order, max: MAX_ORDER });
    }
    if f.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: f.dim() });
    }
    if !(t > T::zero()) {
        return Err(Error::NegativeTime(t.as_f64()));
    }
    let axis = *f.grid().axis(0);
    if !axis.contains(u) {
        return Err(Error::OutsideGrid(u.as_f64()));
    }
    if let Coefficient::Grid(bg) = b {
        if bg.grid() != f.grid() {
            return Err(Error::InvalidGrid("coefficient lives on a different grid".into()));
        }
    }
    let a0 = evaluate_semigroup(inner, f, t, u)?;
    if order == 0 {
        return ChaosExpansion::new(a0, Vec::new(), t);
    }
    let m = opts.cells.max(1);
    let h = t / T::from_usize_lossy(m);
    let mid = |c: usize| h * (T::from_usize_lossy(c) + T::lit(0.5));

    let level1: Vec<Vec<T>> = (0..m)
        .into_par_iter()
        .map(|c| -> Result<Vec<T>> {
            let g = apply_semigroup(inner, f, t - mid(c))?;
            Ok(generator(b, &axis, g.values()))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<T>> = (0..m)
        .into_par_iter()
        .map(|c| semigroup_weights(outer, &axis, mid(c), u))
        .collect::<Result<_>>()?;
    let ops: Vec<Operator<T>> = if order >= 2 {
        (0..m)
            .into_par_iter()
            .map(|q| {
                if q == 0 {
                    // never applied: equal cells use the identity directly
                    Ok(Operator::identity(1))
                } else {
                    Operator::new(outer, &axis, h * T::from_usize_lossy(q))
                }
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut kernels = Vec::with_capacity(order);
    // suffix functions of the previous level, indexed by the full M^L tensor index
    let mut prev: Vec<(Vec<usize>, Vec<T>)> = (0..m).map(|c| (vec![c], level1[c].clone())).collect();
    for level in 1..=order {
        if level > 1 {
            prev = prev_level_extend(&prev, m, &ops, b, &axis);
        }
        let mut values = vec![T::zero(); m.pow(level as u32)];
        let computed: Vec<(usize, T)> = prev
            .par_iter()
            .map(|(tuple, hv)| {
                let idx = tuple.iter().fold(0, |a, &c| a * m + c);
                (idx, dot(&rows[tuple[0]], hv))
            })
            .collect();
        for (idx, v) in computed {
            values[idx] = v;
        }
        kernels.push(SimplexKernel::cells(vec![1; level], t, m, values)?);
    }
    ChaosExpansion::new(a0, kernels, t)
}

fn prev_level_extend<T: Real>(
    prev: &[(Vec<usize>, Vec<T>)],
    m: usize,
    ops: &[Operator<T>],
    b: &Coefficient<T>,
    axis: &Axis<T>,
) -> Vec<(Vec<usize>, Vec<T>)> {
    let jobs: Vec<(usize, usize)> = (0..m)
        .flat_map(|c| (0..prev.len()).filter(move |&p| prev[p].0[0] >= c).map(move |p| (c, p)))
        .collect();
    jobs.into_par_iter()
        .map(|(c, p)| {
            let (rest, hv) = &prev[p];
            let gap = rest[0] - c;
            let moved = if gap == 0 { hv.clone() } else { ops[gap].apply(hv) };
            let mut tuple = Vec::with_capacity(rest.len() + 1);
            tuple.push(c);
            tuple.extend_from_slice(rest);
            (tuple, generator(b, axis, &moved))
        })
        .collect()
}
