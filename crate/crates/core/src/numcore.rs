//! Dense row-major linear algebra and a reproducible random stream.
//!
//! Everything is `f64`. Shapes are carried explicitly and every mismatch is an
//! error; there is no broadcasting.

use std::f64::consts::TAU;
use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::new(r.rows, r.cols, r.values)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix shape must be non-empty, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::dims(
                "Matrix::new",
                format!("{rows}x{cols}"),
                format!("{} values", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry {i}")));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from row slices; all rows must share a length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be non-empty");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        t
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::dims(
                "matvec",
                format!("matrix {}x{}", self.rows, self.cols),
                format!("vector of length {}", x.len()),
            ));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x.as_slice(), &mut out);
        Ok(Vector { values: out })
    }

    /// `x = Mᵀ y`.
    pub fn transpose_matvec(&self, y: &Vector) -> Result<Vector> {
        if y.len() != self.rows {
            return Err(Error::dims(
                "transpose_matvec",
                format!("matrix {}x{}", self.rows, self.cols),
                format!("vector of length {}", y.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        self.transpose_matvec_into(y.as_slice(), &mut out);
        Ok(Vector { values: out })
    }

    // Unchecked slice kernels used by the training loop; callers guarantee shapes.

    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.values.chunks_exact(self.cols)) {
            *o = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
        }
    }

    pub(crate) fn transpose_matvec_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (yi, row) in y.iter().zip(self.values.chunks_exact(self.cols)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
    }

    /// `M += a bᵀ`.
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (ai, row) in a.iter().zip(self.values.chunks_exact_mut(self.cols)) {
            if *ai == 0.0 {
                continue;
            }
            for (m, bj) in row.iter_mut().zip(b) {
                *m += ai * bj;
            }
        }
    }
}

/// Outer product `a bᵀ`, shape `len(a) x len(b)`.
pub fn outer(a: &Vector, b: &Vector) -> Matrix {
    let mut m = Matrix::zeros(a.len(), b.len());
    m.add_outer(a.as_slice(), b.as_slice());
    m
}

/// Non-empty vector of finite reals.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Vector::new(values)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.values
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.values).finish()
    }
}

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("vector must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector entry {i}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "vector must be non-empty");
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::dims(
                "dot",
                self.len().to_string(),
                other.len().to_string(),
            ));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Reproducible random stream.
///
/// Backed by ChaCha8 keyed through `SeedableRng::seed_from_u64`, both of
/// which have fixed, documented, endian-independent output. Conversions on
/// top of the raw `u64` stream are defined here rather than delegated, so the
/// stream does not depend on distribution code in other crates:
///
/// - unit uniform: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
/// - bounded integer `below(n)`: `(next_u64 * n) >> 64` (128-bit product);
/// - normals: Box–Muller on consecutive uniform pairs `(u1, u2)` with
///   `r = sqrt(-2 ln(1 - u1))`, emitting `r cos(2π u2)` then `r sin(2π u2)`.
///   An odd request discards the final sine.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream under the same seed, for separating concerns
    /// (initialisation vs shuffling vs data) without seed arithmetic.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// `n` samples uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "uniform bounds must satisfy lo < hi, got [{lo}, {hi})"
            )));
        }
        Ok((0..n).map(|_| self.uniform_one(lo, hi)).collect())
    }

    fn uniform_one(&mut self, lo: f64, hi: f64) -> f64 {
        loop {
            let x = lo + (hi - lo) * self.next_f64();
            // rounding can land exactly on `hi`
            if x < hi {
                return x;
            }
        }
    }

    /// `n` Gaussian samples. `sd == 0` still consumes the stream, so noisy and
    /// noiseless configurations stay aligned.
    pub fn normal(&mut self, mean: f64, sd: f64, n: usize) -> Result<Vec<f64>> {
        if !(sd >= 0.0) || !sd.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "normal requires finite mean and sd >= 0, got mean={mean}, sd={sd}"
            )));
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (z0, z1) = self.box_muller();
            out.push(mean + sd * z0);
            if out.len() < n {
                out.push(mean + sd * z1);
            }
        }
        Ok(out)
    }

    fn box_muller(&mut self) -> (f64, f64) {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Fisher–Yates shuffle driven by [`SeededRng::below`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> Vector {
        Vector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn matvec_examples() {
        assert_eq!(Matrix::identity(2).matvec(&v(&[3.0, 4.0])).unwrap(), v(&[3.0, 4.0]));
        assert_eq!(Matrix::zeros(3, 2).matvec(&v(&[5.0, -1.0])).unwrap(), v(&[0.0, 0.0, 0.0]));
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(m.matvec(&v(&[1.0, 1.0])).unwrap(), v(&[3.0, 7.0]));
    }

    #[test]
    fn matvec_shape_error_reports_both_shapes() {
        let err = Matrix::zeros(3, 2).matvec(&v(&[1.0, 2.0, 3.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3x2") && msg.contains("length 3"), "{msg}");
    }

    #[test]
    fn transpose_matvec_examples() {
        assert_eq!(
            Matrix::identity(2).transpose_matvec(&v(&[5.0, 6.0])).unwrap(),
            v(&[5.0, 6.0])
        );
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(m.transpose_matvec(&v(&[1.0, 0.0])).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(
            Matrix::zeros(2, 4).transpose_matvec(&v(&[1.0, 9.0])).unwrap(),
            Vector::zeros(4)
        );
        assert!(m.transpose_matvec(&v(&[1.0])).is_err());
    }

    #[test]
    fn outer_examples() {
        assert_eq!(outer(&v(&[1.0]), &v(&[1.0])).values(), &[1.0]);
        let m = outer(&v(&[2.0, 3.0]), &v(&[4.0]));
        assert_eq!(m.shape(), (2, 1));
        assert_eq!(m.values(), &[8.0, 12.0]);
        assert!(outer(&v(&[0.0, 0.0]), &v(&[1.0, -2.0, 3.0]))
            .values()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn uniform_range_and_determinism() {
        let mut rng = SeededRng::new(42);
        let xs = rng.uniform(0.0, 1.0, 5).unwrap();
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        let again = SeededRng::new(42).uniform(0.0, 1.0, 5).unwrap();
        assert_eq!(xs, again);
        let a = SeededRng::new(1).uniform(0.0, 1.0, 5).unwrap();
        let b = SeededRng::new(2).uniform(0.0, 1.0, 5).unwrap();
        assert_ne!(a, b);
        assert!(rng.uniform(1.0, 1.0, 1).is_err());
        assert!(rng.uniform(2.0, 1.0, 1).is_err());
    }

    #[test]
    fn streams_are_independent() {
        let a = SeededRng::with_stream(5, 0).uniform(0.0, 1.0, 4).unwrap();
        let b = SeededRng::with_stream(5, 1).uniform(0.0, 1.0, 4).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, SeededRng::new(5).uniform(0.0, 1.0, 4).unwrap());
    }

    #[test]
    fn normal_degenerate_and_errors() {
        let mut rng = SeededRng::new(3);
        assert_eq!(rng.normal(7.0, 0.0, 3).unwrap(), vec![7.0, 7.0, 7.0]);
        assert!(rng.normal(0.0, -1.0, 3).is_err());
        assert_eq!(
            SeededRng::new(9).normal(0.0, 1.0, 11).unwrap(),
            SeededRng::new(9).normal(0.0, 1.0, 11).unwrap()
        );
    }

    #[test]
    fn normal_moments() {
        let xs = SeededRng::new(2024).normal(0.0, 1.0, 100_000).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((sd - 1.0).abs() < 0.02, "sd {sd}");
    }

    const PINNED_FIRST_U64: u64 = 0xb585_f767_a79a_3b6c;

    #[test]
    fn stream_is_pinned() {
        // Frozen from the first run; guards against silent generator changes.
        let mut rng = SeededRng::new(0);
        let first = rng.next_u64();
        let mut again = SeededRng::new(0);
        assert_eq!(first, again.next_u64());
        assert_eq!(first, PINNED_FIRST_U64, "generator stream changed: {first:#x}");
        let draw = SeededRng::new(0).next_f64();
        assert_eq!(draw, (first >> 11) as f64 / (1u64 << 53) as f64);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut items: Vec<usize> = (0..50).collect();
        SeededRng::new(8).shuffle(&mut items);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(items, sorted);
    }

    fn small_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn identity_matvec_is_identity(x in (1usize..12).prop_flat_map(small_vec)) {
            let x = Vector::new(x).unwrap();
            prop_assert_eq!(Matrix::identity(x.len()).matvec(&x).unwrap(), x);
        }

        #[test]
        fn transpose_matvec_matches_explicit_transpose(
            (rows, cols, m, y) in (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
                (Just(r), Just(c), small_vec(r * c), small_vec(r))
            })
        ) {
            let m = Matrix::new(rows, cols, m).unwrap();
            let y = Vector::new(y).unwrap();
            let a = m.transpose_matvec(&y).unwrap();
            let b = m.transpose().matvec(&y).unwrap();
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
            }
        }

        #[test]
        fn outer_times_vector_is_scaled_a(
            (a, b, c) in (1usize..8, 1usize..8).prop_flat_map(|(na, nb)| {
                (small_vec(na), small_vec(nb), small_vec(nb))
            })
        ) {
            let (a, b, c) = (Vector::new(a).unwrap(), Vector::new(b).unwrap(), Vector::new(c).unwrap());
            let lhs = outer(&a, &b).matvec(&c).unwrap();
            let bc = b.dot(&c).unwrap();
            for (l, ai) in lhs.as_slice().iter().zip(a.as_slice()) {
                prop_assert!((l - ai * bc).abs() <= 1e-12 * (1.0 + (ai * bc).abs()));
            }
        }
    }
}
