//! Scalar abstraction shared by every numeric module.
//!
//! All grid, noise and expansion code is written against [`Real`], which is
//! implemented for `f32` and `f64`. Special functions that need more accuracy
//! than a generic series would give are evaluated in `f64` and cast back.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw from U[0, 1).
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Literal conversion; every `f64` constant used in this crate is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal fits the scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits the scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Real for f64 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }
}

impl Real for f32 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf<T: Real>(x: T) -> T {
    T::lit(0.5 * libm::erfc(-x.as_f64() / std::f64::consts::SQRT_2))
}

/// Standard normal density φ(x).
pub fn normal_pdf<T: Real>(x: T) -> T {
    let x = x.as_f64();
    T::lit((-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Error-compensated accumulator whose rounded result does not depend on the
/// order in which terms were added (Shewchuk's exact partials).
///
/// Two accumulators can be merged without any rounding, which is how the
/// scenario decomposition reproduces a plain Monte Carlo mean bit for bit.
#[derive(Debug, Clone, Default)]
pub struct ExactSum<T> {
    partials: Vec<T>,
}

impl<T: Real> ExactSum<T> {
    pub fn new() -> Self {
        Self { partials: Vec::new() }
    }

    pub fn add(&mut self, mut x: T) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum<T>) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// Correctly rounded value of the exact sum.
    pub fn value(&self) -> T {
        let p = &self.partials;
        if p.is_empty() {
            return T::zero();
        }
        let mut n = p.len() - 1;
        let mut hi = p[n];
        let mut lo = T::zero();
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != T::zero() {
                break;
            }
        }
        // half-way correction
        if n > 0
            && ((lo < T::zero() && p[n - 1] < T::zero()) || (lo > T::zero() && p[n - 1] > T::zero()))
        {
            let y = lo + lo;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl<T: Real> FromIterator<T> for ExactSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0_f64) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0_f64) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-1.0_f32) - 0.158_655_25).abs() < 1e-6);
        assert!(normal_cdf(-40.0_f64) >= 0.0);
    }

    #[test]
    fn exact_sum_is_order_independent() {
        let xs = [1e16, 1.0, -1e16, 3.5e-7, 2.0, -3.5e-7, 1e-30];
        let forward: ExactSum<f64> = xs.iter().copied().collect();
        let backward: ExactSum<f64> = xs.iter().rev().copied().collect();
        assert_eq!(forward.value(), 3.0 + 1e-30);
        assert_eq!(forward.value(), backward.value());

        let mut a: ExactSum<f64> = xs[..3].iter().copied().collect();
        let b: ExactSum<f64> = xs[3..].iter().copied().collect();
        a.merge(&b);
        assert_eq!(a.value(), forward.value());
    }
}
