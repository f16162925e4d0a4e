//! Multiplicative functionals with values in a matrix group, `dG = G Z dw`.
//!
//! With the equation read in the Itô sense the mean semigroup is the
//! identity and the expansion is `I + Σ_k Z^k I_k(t)`, where `I_k` is the
//! order-`k` iterated integral of the constant kernel.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::noise::{SimplexKernel, WienerBundle};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch { expected: c, got: bad.len() });
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    fn require_square(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    /// Determinant and inverse by Gauss-Jordan elimination with partial pivoting.
    fn gauss_jordan(&self) -> Result<(T, Self)> {
        self.require_square()?;
        let n = self.rows;
        let mut a = self.data.clone();
        let mut inv = Self::identity(n).data;
        let mut det = T::one();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
                .unwrap();
            let p = a[piv * n + col];
            if p == T::zero() {
                return Ok((T::zero(), Self::zeros(n, n)));
            }
            if piv != col {
                for k in 0..n {
                    a.swap(piv * n + k, col * n + k);
                    inv.swap(piv * n + k, col * n + k);
                }
                det = -det;
            }
            det = det * p;
            for k in 0..n {
                a[col * n + k] = a[col * n + k] / p;
                inv[col * n + k] = inv[col * n + k] / p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let factor = a[i * n + col];
                if factor != T::zero() {
                    for k in 0..n {
                        a[i * n + k] = a[i * n + k] - factor * a[col * n + k];
                        inv[i * n + k] = inv[i * n + k] - factor * inv[col * n + k];
                    }
                }
            }
        }
        Ok((det, Self { rows: n, cols: n, data: inv }))
    }

    pub fn determinant(&self) -> Result<T> {
        Ok(self.gauss_jordan()?.0)
    }

    /// Inverse; matrices with `|det| < 1e-12` count as singular.
    pub fn inverse(&self) -> Result<Self> {
        let (det, inv) = self.gauss_jordan()?;
        if !(det.abs() >= T::lit(SINGULAR_DET)) {
            return Err(Error::Singular(0));
        }
        Ok(inv)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, got: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] = out.data[i * other.cols + j] + a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }
}

/// Determinant threshold below which a matrix is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: Self) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect() }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: Self) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect() }
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: Self) -> Matrix<T> {
        self.try_mul(rhs).expect("inner dimensions agree")
    }
}

impl<T: Real> fmt::Display for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// `I + Σ_{k ≤ K} Z^k I_k(t)` on the first component of `bundle`.
pub fn lie_series<T: Real>(z: &Matrix<T>, t: T, order: usize, bundle: &WienerBundle<T>) -> Result<Matrix<T>> {
    z.require_square()?;
    let n = z.rows();
    let mut out = Matrix::identity(n);
    let mut power = Matrix::identity(n);
    for k in 1..=order {
        power = &power * z;
        let ik = crate::noise::iterated_integral(&SimplexKernel::constant(vec![1; k], T::one())?, bundle, t)?;
        out = &out + &power.scale(ik);
    }
    Ok(out)
}

/// Euler scheme `G_{j+1} = G_j (I + Z Δw_j)` on every grid step of `bundle`.
pub fn euler_path<T: Real>(z: &Matrix<T>, bundle: &WienerBundle<T>) -> Result<Vec<Matrix<T>>> {
    z.require_square()?;
    let n = z.rows();
    let id = Matrix::identity(n);
    let mut g = Matrix::identity(n);
    let mut out = Vec::with_capacity(bundle.steps() + 1);
    out.push(g.clone());
    for j in 0..bundle.steps() {
        let step = &id + &z.scale(bundle.increment(1, j));
        g = &g * &step;
        out.push(g.clone());
    }
    Ok(out)
}

/// Partial sums `M_k = Σ_{l < k} (G_{lΔ}⁻¹ G_{(l+1)Δ} - I)` at the coarse times
/// `0, Δ, 2Δ, …` for a path sampled every `dt`.
pub fn extract_driver<T: Real>(path: &[Matrix<T>], dt: T, delta: T) -> Result<Vec<Matrix<T>>> {
    let first = path.first().ok_or(Error::TooFewPoints(0))?;
    first.require_square()?;
    let stride = crate::noise::step_count(delta, dt)?;
    let n = first.rows();
    let id = Matrix::identity(n);
    let mut acc = Matrix::zeros(n, n);
    let mut out = vec![acc.clone()];
    let mut l = 0;
    while l + stride < path.len() {
        let inv = path[l].inverse().map_err(|_| Error::Singular(l))?;
        let inc = &(&inv * &path[l + stride]) - &id;
        acc = &acc + &inc;
        out.push(acc.clone());
        l += stride;
    }
    Ok(out)
}
