//! Dense numeric substrate: matrices, Householder reflections, dropout,
//! RMSprop, gradient checking and checkpoints.

mod checkpoint;
mod gradcheck;
mod optim;

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use gradcheck::{gradient_check, sample_coordinates, GradCheckReport};
pub use optim::{Param, ParameterStore, RmsProp};

use crate::error::{Error, Result};

/// Floating-point precision the model can run at.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    const NAME: &'static str = "f64";
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Uniform entries in `[-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.get(i, p);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(p, j);
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Smallest row norm accepted by [`normalize_rows`].
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows<T: Real>(m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    normalize_rows_with_norms(m).map(|(n, _)| n)
}

/// As [`normalize_rows`], also returning the original row norms (needed to
/// differentiate through the normalisation).
pub fn normalize_rows_with_norms<T: Real>(m: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Vec<T>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = norm(m.row(i));
        if !(n.as_f64() >= MIN_ROW_NORM) {
            return Err(Error::DegenerateEmbedding { row: i, norm: n.as_f64() });
        }
        out.row_mut(i).iter_mut().for_each(|v| *v = *v / n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Backward of `y = x / ‖x‖`: `dx = (dy − y (yᵀdy)) / ‖x‖`.
pub fn normalize_backward<T: Real>(unit: &[T], norm: T, grad_unit: &[T], grad_raw: &mut [T]) {
    let proj = dot(unit, grad_unit);
    for ((g, &y), &dy) in grad_raw.iter_mut().zip(unit).zip(grad_unit) {
        *g += (dy - y * proj) / norm;
    }
}

/// `out = (I − 2hhᵀ) x` without forming the matrix. `h` is assumed unit-norm.
#[inline]
pub fn reflect_into<T: Real>(h: &[T], x: &[T], out: &mut [T]) {
    let two_proj = T::of(2.0) * dot(h, x);
    for ((o, &xi), &hi) in out.iter_mut().zip(x).zip(h) {
        *o = xi - two_proj * hi;
    }
}

/// Backward of `y = (I − 2hhᵀ) x` for upstream gradient `g`:
/// adds `Mg` to `grad_x` and `−2((hᵀx) g + (hᵀg) x)` to `grad_h`.
#[inline]
pub fn reflect_backward<T: Real>(h: &[T], x: &[T], g: &[T], grad_x: &mut [T], grad_h: &mut [T]) {
    let two = T::of(2.0);
    let hx = dot(h, x);
    let hg = dot(h, g);
    for i in 0..h.len() {
        grad_x[i] += g[i] - two * hg * h[i];
        grad_h[i] -= two * (hx * g[i] + hg * x[i]);
    }
}

/// Householder reflection `(I − 2hhᵀ) x` for a unit vector `h`.
pub fn householder_apply<T: Real>(h: &[T], x: &[T]) -> Result<Vec<T>> {
    if h.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            got: x.len(),
        });
    }
    let n = norm(h).as_f64();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!("householder vector has norm {n}, expected 1")));
    }
    let mut out = vec![T::zero(); x.len()];
    reflect_into(h, x, &mut out);
    Ok(out)
}

/// The explicit matrix `I − 2hhᵀ`.
pub fn householder_matrix<T: Real>(h: &[T]) -> DenseMatrix<T> {
    let k = h.len();
    let mut m = DenseMatrix::identity(k);
    let two = T::of(2.0);
    for i in 0..k {
        for j in 0..k {
            let v = m.get(i, j) - two * h[i] * h[j];
            m.set(i, j, v);
        }
    }
    m
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 − rate)`; the
/// per-element scale factors are returned for the backward pass. In eval
/// mode (or at rate 0) the input is returned unchanged with no mask.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &DenseMatrix<T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(DenseMatrix<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let mut out = x.clone();
    out.as_mut_slice().iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
    Ok((out, Some(mask)))
}
