//! Expansion of `f(x(u, t))` for the flat flow `dx = b(x) dw`, whose mean
//! semigroup is the heat (or Ornstein-Uhlenbeck) semigroup and whose random
//! generator is `A = b ∂`.

use crate::error::{Error, Result};
use crate::kv::engine::{build_pipeline_expansion, CacheOptions, ChaosExpansion};
use crate::kv::lie::Matrix;
use crate::noise::WienerBundle;
use crate::scalar::Real;
use crate::semigroup::{Coefficient, GridFunction, SemigroupSpec};

/// Random generator of the functional.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator<T> {
    /// `A g = b g'`.
    BTimesDerivative(Coefficient<T>),
    /// Left multiplication by a fixed matrix.
    Matrix(Matrix<T>),
}

/// Parameters of a truncated expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionSpec<T> {
    pub semigroup: SemigroupSpec<T>,
    pub generator: Generator<T>,
    pub order: usize,
    /// Evaluation point (one coordinate per particle for n-point expansions).
    pub point: Vec<T>,
    pub horizon: T,
}

impl<T: Real> ExpansionSpec<T> {
    /// Heat semigroup with `A = ∂` at a single point.
    pub fn heat(u: T, horizon: T, order: usize) -> Self {
        Self {
            semigroup: SemigroupSpec::Heat,
            generator: Generator::BTimesDerivative(Coefficient::Constant(T::one())),
            order,
            point: vec![u],
            horizon,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > T::zero()) {
            return Err(Error::NegativeTime(self.horizon.as_f64()));
        }
        Ok(())
    }
}

/// Kernels of the expansion, cached once for repeated evaluation.
pub fn theorem11_expansion<T: Real>(
    spec: &ExpansionSpec<T>,
    f: &GridFunction<T>,
    opts: CacheOptions,
) -> Result<ChaosExpansion<T>> {
    spec.validate()?;
    let Generator::BTimesDerivative(b) = &spec.generator else {
        return Err(Error::Config("flat expansion needs a b·∂ generator".into()));
    };
    if !matches!(spec.semigroup, SemigroupSpec::Heat | SemigroupSpec::Ou { .. }) {
        return Err(Error::Config("flat expansion needs the heat or OU semigroup".into()));
    }
    let [u] = spec.point[..] else {
        return Err(Error::DimensionMismatch { expected: 1, got: spec.point.len() });
    };
    build_pipeline_expansion(&spec.semigroup, &spec.semigroup, b, f, spec.horizon, u, spec.order, opts)
}

/// `T_t f(u) + Σ_{k ≤ K} ∫_{Δ_k} a_k dw^{⊗k}` on one path.
pub fn theorem11_series<T: Real>(spec: &ExpansionSpec<T>, f: &GridFunction<T>, bundle: &WienerBundle<T>) -> Result<T> {
    theorem11_expansion(spec, f, CacheOptions::default())?.value(bundle)
}
