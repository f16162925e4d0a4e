//! Functions on uniform grids and the semigroup / derivative operator algebra.
//!
//! Semigroups act on the piecewise-linear interpolant of a grid function,
//! extended by its edge values outside the window. The Gaussian expectation
//! of such a function has a closed form in Φ and φ, so every semigroup is a
//! row-stochastic matrix: positivity, `T_t 1 = 1` and `‖T_t f‖∞ ≤ ‖f‖∞` hold
//! exactly, and `t → 0` reduces to linear interpolation.
//!
//! Kinds:
//! * `Heat`: Brownian motion, `E f(u + w(t))`.
//! * `Ou { theta }`: `dy = -θ y dt + dw`.
//! * `Absorbed`: Brownian motion stopped at 0, realized by the image method
//!   plus an atom `f(0) P_u(hit by t)`.
//! * `Killed`: Brownian motion killed at 0 (Dirichlet), the same image kernel
//!   without the atom. Only `[0, ∞)` windows.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::partitions::IntervalPartition;
use crate::scalar::{normal_cdf, normal_pdf, Real};

/// One uniform grid axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub points: usize,
}

impl<T: Real> Axis<T> {
    pub fn new(lo: T, hi: T, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if points < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {points}")));
        }
        Ok(Self { lo, hi, points })
    }

    /// Axis with spacing `h` (the upper end is rounded to a whole number of cells).
    pub fn with_spacing(lo: T, hi: T, h: T) -> Result<Self> {
        let cells = ((hi - lo) / h).round().to_usize().unwrap_or(0);
        Self::new(lo, lo + h * T::from_usize_lossy(cells), cells + 1)
    }

    pub fn spacing(&self) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(self.points - 1)
    }

    pub fn node(&self, i: usize) -> T {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + self.spacing() * T::from_usize_lossy(i)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: T) -> bool {
        let slack = self.spacing() * T::lit(1e-9);
        x >= self.lo - slack && x <= self.hi + slack
    }

    /// Cell index and fractional position of `x`, clamped to the window.
    pub fn locate(&self, x: T) -> (usize, T) {
        let s = ((x - self.lo) / self.spacing()).max(T::zero());
        let cell = s.floor().to_usize().unwrap_or(0).min(self.points - 2);
        let frac = (s - T::from_usize_lossy(cell)).min(T::one());
        (cell, frac)
    }
}

/// Tensor product of up to three uniform axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    axes: Vec<Axis<T>>,
}

impl<T: Real> Grid<T> {
    pub fn new(axes: Vec<Axis<T>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::InvalidGrid(format!("dimension {} not in 1..=3", axes.len())));
        }
        Ok(Self { axes })
    }

    pub fn line(lo: T, hi: T, points: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lo, hi, points)?])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis<T> {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim() - 1).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].points;
        }
        s
    }

    /// Row-major multi-index of a flat index (last axis fastest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.axes[k].points;
            flat /= self.axes[k].points;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, flat: usize) -> Vec<T> {
        self.multi_index(flat)
            .into_iter()
            .zip(&self.axes)
            .map(|(i, a)| a.node(i))
            .collect()
    }
}

/// Values of a function at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid<T>, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Grid<T>, c: T) -> Result<Self> {
        let values = vec![c; grid.len()];
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub(crate) fn with_values(&self, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { grid: self.grid.clone(), values }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation; points outside the window are an error.
    pub fn eval(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for (a, &xi) in self.grid.axes.iter().zip(x) {
            if !a.contains(xi) {
                return Err(Error::OutsideGrid(xi.as_f64()));
            }
        }
        Ok(self.eval_clamped(x))
    }

    /// Multilinear interpolation with coordinates clamped to the window.
    pub fn eval_clamped(&self, x: &[T]) -> T {
        let loc: Vec<(usize, T)> = self.grid.axes.iter().zip(x).map(|(a, &xi)| a.locate(xi)).collect();
        let strides = self.grid.strides();
        let d = self.dim();
        let mut acc = T::zero();
        for corner in 0..1usize << d {
            let mut w = T::one();
            let mut flat = 0;
            for k in 0..d {
                let (cell, frac) = loc[k];
                if corner >> k & 1 == 1 {
                    w = w * frac;
                    flat += (cell + 1) * strides[k];
                } else {
                    w = w * (T::one() - frac);
                    flat += cell * strides[k];
                }
            }
            if w != T::zero() {
                acc = acc + w * self.values[flat];
            }
        }
        acc
    }

    /// CSV with header `u[,u2[,u3]],value`, rows in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names = ["u", "u2", "u3"];
        writeln!(w, "{},value", names[..self.dim()].join(","))?;
        for (k, v) in self.values.iter().enumerate() {
            let coords: Vec<String> = self.grid.point(k).iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{}", coords.join(","), v)?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv); the grid is
    /// recovered from the distinct coordinates on each axis.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty csv".into()))??;
        let d = header.split(',').count() - 1;
        if !(1..=3).contains(&d) {
            return Err(Error::Config(format!("bad header `{header}`")));
        }
        let mut coords: Vec<Vec<T>> = vec![Vec::new(); d];
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{x}`"))))
                .collect::<Result<_>>()?;
            if fields.len() != d + 1 {
                return Err(Error::Config(format!("bad row `{line}`")));
            }
            for k in 0..d {
                coords[k].push(T::lit(fields[k]));
            }
            values.push(T::lit(fields[d]));
        }
        let axes = coords
            .iter()
            .map(|c| {
                let mut u: Vec<T> = c.clone();
                u.sort_by(|a, b| a.partial_cmp(b).unwrap());
                u.dedup();
                Axis::new(u[0], *u.last().unwrap(), u.len())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(Grid::new(axes)?, values)
    }
}

/// Which semigroup to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SemigroupSpec<T> {
    Heat,
    Ou { theta: T },
    Absorbed,
    Killed,
}

impl<T: Real> SemigroupSpec<T> {
    fn check_axis(&self, axis: &Axis<T>) -> Result<()> {
        match self {
            Self::Ou { theta } if !(*theta > T::zero()) => {
                Err(Error::InvalidGrid(format!("OU rate must be positive, got {theta}")))
            }
            Self::Absorbed | Self::Killed if axis.lo != T::zero() => Err(Error::InvalidGrid(format!(
                "absorbed/killed semigroups need a window starting at 0, got {}",
                axis.lo
            ))),
            _ => Ok(()),
        }
    }

    fn is_half_line(&self) -> bool {
        matches!(self, Self::Absorbed | Self::Killed)
    }
}

/// `ψ(z) = φ(z) - z Φ(-z)` for `z ≥ 0`, the Gaussian part of
/// `R(x) = ∫_{-∞}^{x} Φ(y/σ) dy = x⁺ + σ ψ(|x|/σ)`.
fn psi(z: f64) -> f64 {
    (normal_pdf(z) - z * normal_cdf(-z)).max(0.0)
}

/// Weights `ω` with `E f̂(c + σ Z) = Σ ω_k f_k`, where `f̂` is the
/// piecewise-linear interpolant through `(nodes_k, f_k)`, constant beyond
/// the ends. Repeated nodes encode jumps.
fn gaussian_weights(nodes: &[f64], center: f64, sigma: f64) -> Vec<f64> {
    let m = nodes.len();
    // mean of P(c + σZ > v) over cell k
    let tail = |k: usize| -> f64 {
        let (a, b) = (nodes[k], nodes[k + 1]);
        let h = b - a;
        if sigma == 0.0 {
            if h == 0.0 {
                return if center > a {
                    1.0
                } else if center < a {
                    0.0
                } else {
                    0.5
                };
            }
            return ((center - a) / h).clamp(0.0, 1.0);
        }
        if h == 0.0 {
            return normal_cdf((center - a) / sigma);
        }
        // R(c - a) - R(c - b), linear parts differenced exactly
        let (xa, xb) = (center - a, center - b);
        let linear = if xb >= 0.0 { h } else { xa.max(0.0) };
        let gauss = sigma * (psi(xa.abs() / sigma) - psi(xb.abs() / sigma));
        ((linear + gauss) / h).clamp(0.0, 1.0)
    };
    let mut w = vec![0.0; m];
    let mut prev = 1.0;
    for k in 0..m - 1 {
        let a = tail(k);
        w[k] = prev - a;
        prev = a;
    }
    w[m - 1] = prev;
    w
}

fn mirrored_nodes(nodes: &[f64], duplicate_origin: bool) -> Vec<f64> {
    let mut out: Vec<f64> = nodes[1..].iter().rev().map(|&x| -x).collect();
    out.push(0.0);
    if duplicate_origin {
        out.push(0.0);
    }
    out.extend_from_slice(&nodes[1..]);
    out
}

/// Weights `w` with `(T_t f)(u) = Σ_j w_j f_j` for `f` sampled on `axis`.
/// Evaluated in double precision whatever the scalar type.
pub fn semigroup_weights<T: Real>(spec: &SemigroupSpec<T>, axis: &Axis<T>, t: T, u: T) -> Result<Vec<T>> {
    if t < T::zero() {
        return Err(Error::NegativeTime(t.as_f64()));
    }
    spec.check_axis(axis)?;
    if spec.is_half_line() && u < T::zero() {
        return Err(Error::NegativeInput(format!("evaluation point {u} on a half-line semigroup")));
    }
    let n = axis.points;
    let nodes: Vec<f64> = axis.nodes().into_iter().map(Real::as_f64).collect();
    let (t, u) = (t.as_f64(), u.as_f64());
    if spec.is_half_line() && u == 0.0 {
        let mut w = vec![T::zero(); n];
        if matches!(spec, SemigroupSpec::Absorbed) {
            w[0] = T::one();
        }
        return Ok(w);
    }
    let w = match *spec {
        SemigroupSpec::Heat => gaussian_weights(&nodes, u, t.sqrt()),
        SemigroupSpec::Ou { theta } => {
            let theta = theta.as_f64();
            let decay = (-theta * t).exp();
            let var = -(-2.0 * theta * t).exp_m1() / (2.0 * theta);
            gaussian_weights(&nodes, u * decay, var.max(0.0).sqrt())
        }
        SemigroupSpec::Absorbed => {
            // f(0) + heat applied to the odd extension of f - f(0); the image
            // differences are nonnegative, clamping only strips rounding noise
            let om = gaussian_weights(&mirrored_nodes(&nodes, false), u, t.sqrt());
            let mut w = vec![0.0; n];
            for j in 1..n {
                w[j] = (om[n - 1 + j] - om[n - 1 - j]).max(0.0);
            }
            w[0] = (1.0 - w[1..].iter().sum::<f64>()).max(0.0);
            w
        }
        SemigroupSpec::Killed => {
            // heat applied to the odd extension of f, with a jump at 0
            let om = gaussian_weights(&mirrored_nodes(&nodes, true), u, t.sqrt());
            (0..n).map(|j| (om[n + j] - om[n - 1 - j]).max(0.0)).collect()
        }
    };
    Ok(w.into_iter().map(T::lit).collect())
}

/// Dense matrix of a semigroup on a fixed 1-D axis.
#[derive(Debug, Clone)]
pub struct Operator<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Operator<T> {
    pub fn new(spec: &SemigroupSpec<T>, axis: &Axis<T>, t: T) -> Result<Self> {
        let n = axis.points;
        let mut data = Vec::with_capacity(n * n);
        for u in axis.nodes() {
            data.extend(semigroup_weights(spec, axis, t, u)?);
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Self { n, data }
    }

    pub fn apply(&self, f: &[T]) -> Vec<T> {
        assert_eq!(f.len(), self.n);
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(f).fold(T::zero(), |acc, (&w, &x)| acc + w * x))
            .collect()
    }
}

fn check_line<T: Real>(f: &GridFunction<T>) -> Result<&Axis<T>> {
    if f.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: f.dim() });
    }
    Ok(f.grid().axis(0))
}

/// `T_t f` on the nodes of `f`'s grid.
pub fn apply_semigroup<T: Real>(spec: &SemigroupSpec<T>, f: &GridFunction<T>, t: T) -> Result<GridFunction<T>> {
    let axis = check_line(f)?;
    if t < T::zero() {
        return Err(Error::NegativeTime(t.as_f64()));
    }
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    spec.check_axis(axis)?;
    if t == T::zero() {
        return Ok(f.clone());
    }
    let op = Operator::new(spec, axis, t)?;
    Ok(f.with_values(op.apply(f.values())))
}

/// `(T_t f)(u)` at a single point.
pub fn evaluate_semigroup<T: Real>(spec: &SemigroupSpec<T>, f: &GridFunction<T>, t: T, u: T) -> Result<T> {
    let axis = check_line(f)?;
    if !axis.contains(u) {
        return Err(Error::OutsideGrid(u.as_f64()));
    }
    let w = semigroup_weights(spec, axis, t, u)?;
    Ok(w.iter().zip(f.values()).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
}

pub(crate) fn derivative_values<T: Real>(v: &[T], h: T) -> Vec<T> {
    let n = v.len();
    let two_h = h + h;
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    let mut out = vec![T::zero(); n];
    out[0] = (-three * v[0] + four * v[1] - v[2]) / two_h;
    out[n - 1] = (three * v[n - 1] - four * v[n - 2] + v[n - 3]) / two_h;
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / two_h;
    }
    out
}

/// Partial derivative along `axis`: central differences inside, one-sided
/// second-order stencils at the two ends.
pub fn derivative<T: Real>(f: &GridFunction<T>, axis: usize) -> Result<GridFunction<T>> {
    if axis >= f.dim() {
        return Err(Error::IndexOutOfRange { index: axis, n: f.dim() });
    }
    let grid = f.grid();
    let ax = grid.axis(axis);
    let h = ax.spacing();
    let stride = grid.strides()[axis];
    let mut out = vec![T::zero(); f.values().len()];
    for start in 0..f.values().len() {
        if grid.multi_index(start)[axis] != 0 {
            continue;
        }
        let line: Vec<T> = (0..ax.points).map(|i| f.values()[start + i * stride]).collect();
        for (i, d) in derivative_values(&line, h).into_iter().enumerate() {
            out[start + i * stride] = d;
        }
    }
    Ok(f.with_values(out))
}

/// `Σ_{q ∈ B} ∂_q f`, where `B` is the block of `p` containing `i`: the
/// derivative along a rigid shift of the whole block.
pub fn block_derivative<T: Real>(f: &GridFunction<T>, p: &IntervalPartition, i: usize) -> Result<GridFunction<T>> {
    if p.n() != f.dim() {
        return Err(Error::DimensionMismatch { expected: p.n(), got: f.dim() });
    }
    let block = p.block_of(i)?;
    let mut acc = vec![T::zero(); f.values().len()];
    for q in block.indices() {
        let d = derivative(f, q - 1)?;
        for (a, v) in acc.iter_mut().zip(d.values()) {
            *a = *a + *v;
        }
    }
    Ok(f.with_values(acc))
}

/// Diffusion coefficient `b` in the generator `A = b ∂`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient<T> {
    Constant(T),
    Grid(GridFunction<T>),
}

impl<T: Real> Coefficient<T> {
    /// `A g = b g'` on a 1-D grid function.
    pub fn generator(&self, g: &GridFunction<T>) -> Result<GridFunction<T>> {
        let d = derivative(g, 0)?;
        match self {
            Self::Constant(c) => Ok(d.map(|x| *c * x)),
            Self::Grid(b) => {
                if b.grid() != g.grid() {
                    return Err(Error::InvalidGrid("coefficient lives on a different grid".into()));
                }
                let v = d.values().iter().zip(b.values()).map(|(&x, &y)| x * y).collect();
                Ok(d.with_values(v))
            }
        }
    }
}

fn check_times<T: Real>(t: T, times: &[T]) -> Result<()> {
    let mut prev = T::zero();
    for &r in times {
        if r < prev || r > t || !r.is_finite() {
            return Err(Error::UnorderedTimes);
        }
        prev = r;
    }
    Ok(())
}

/// `T_{r_1} A T_{r_2 - r_1} A … A T_{t - r_k} f` on the grid, applied innermost first.
pub fn kernel_pipeline<T: Real>(
    spec: &SemigroupSpec<T>,
    b: &Coefficient<T>,
    f: &GridFunction<T>,
    t: T,
    times: &[T],
) -> Result<GridFunction<T>> {
    kernel_pipeline_split(spec, spec, b, f, t, times)
}

/// Pipeline whose innermost semigroup (the one applied to `f`) is `inner`
/// and every other one is `outer`. The stopped Wiener expansion uses the
/// absorbed semigroup inside and the killed one outside.
pub fn kernel_pipeline_split<T: Real>(
    inner: &SemigroupSpec<T>,
    outer: &SemigroupSpec<T>,
    b: &Coefficient<T>,
    f: &GridFunction<T>,
    t: T,
    times: &[T],
) -> Result<GridFunction<T>> {
    check_times(t, times)?;
    let Some((&last, _)) = times.split_last() else {
        return apply_semigroup(inner, f, t);
    };
    let mut g = apply_semigroup(inner, f, t - last)?;
    for j in (0..times.len()).rev() {
        g = b.generator(&g)?;
        let gap = if j == 0 { times[0] } else { times[j] - times[j - 1] };
        g = apply_semigroup(outer, &g, gap)?;
    }
    Ok(g)
}
