//! Chaos expansion of `f(w̃(t))` for Brownian motion `w̃` started at `u ≥ 0`
//! and stopped at its first zero.
//!
//! The zeroth kernel is `T̃_t f(u)` with the absorbed semigroup. In the higher
//! kernels `P⁰_{r_1} ∂ P⁰_{r_2 - r_1} ∂ … ∂ T̃_{t - r_k} f (u)` only the
//! innermost semigroup is the absorbed one; the outer ones are the killed
//! semigroup `P⁰`, because the stochastic integral stops once the path is
//! absorbed. With `f(v) = v` this gives `a_1(r) = P_u(τ > r)`, as optional
//! stopping requires.

use crate::error::{Error, Result};
use crate::flow::detect_crossing;
use crate::kv::engine::{build_pipeline_expansion, CacheOptions, ChaosExpansion};
use crate::noise::{RngStreams, WienerBundle};
use crate::scalar::Real;
use crate::semigroup::{Coefficient, GridFunction, SemigroupSpec};

/// Stream component for the absorption bridge test.
const ABSORB_STREAM: u64 = 1 << 41;

pub fn stopped_expansion<T: Real>(
    f: &GridFunction<T>,
    u: T,
    t: T,
    order: usize,
    opts: CacheOptions,
) -> Result<ChaosExpansion<T>> {
    if u < T::zero() {
        return Err(Error::NegativeInput(format!("start {u} below the absorbing point")));
    }
    build_pipeline_expansion(
        &SemigroupSpec::Absorbed,
        &SemigroupSpec::Killed,
        &Coefficient::Constant(T::one()),
        f,
        t,
        u,
        order,
        opts,
    )
}

/// Truncated series of order `order` on the first component of `bundle`.
pub fn stopped_wiener_series<T: Real>(
    f: &GridFunction<T>,
    u: T,
    t: T,
    order: usize,
    bundle: &WienerBundle<T>,
) -> Result<T> {
    stopped_expansion(f, u, t, order, CacheOptions::default())?.value(bundle)
}

/// `w̃(t)` for `w̃ = u + w_1` stopped at 0. With `bridge`, a crossing between
/// grid points is drawn from the Brownian-bridge probability, which makes the
/// endpoint exact in law at any step size.
pub fn stopped_endpoint<T: Real>(u: T, t: T, bundle: &WienerBundle<T>, bridge: bool) -> Result<T> {
    if u < T::zero() {
        return Err(Error::NegativeInput(format!("start {u} below the absorbing point")));
    }
    let n = bundle.steps_to(t)?;
    let w = bundle.path(1)?;
    let mut rng = bridge.then(|| RngStreams::new(bundle.seed()).stream(bundle.replica(), ABSORB_STREAM));
    let mut x = u;
    for j in 0..n {
        if x <= T::zero() {
            return Ok(T::zero());
        }
        let x1 = x + w[j + 1] - w[j];
        if x1 <= T::zero() {
            return Ok(T::zero());
        }
        if let Some(r) = rng.as_mut() {
            let p = detect_crossing(x, x1, bundle.dt(), T::one())?;
            if T::uniform(r) < p {
                return Ok(T::zero());
            }
        }
        x = x1;
    }
    Ok(x)
}

/// Probability that the stopped path has been absorbed by `t`.
pub fn hitting_probability<T: Real>(u: T, t: T) -> T {
    if u <= T::zero() {
        return T::one();
    }
    T::lit(2.0) * crate::scalar::normal_cdf(-u / t.sqrt())
}
