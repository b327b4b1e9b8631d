//! Dense row-major matrices in `f64`, the small FFN used on attention inputs,
//! and a central-difference JVP used to check analytic derivatives.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable dense matrix. Entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Uniform entries in `[lo, hi)` from a seeded ChaCha stream.
    pub fn random(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(rows, cols, lo, hi, &mut rng)
    }

    pub fn random_with<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
        Self { rows, cols, data }
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

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero; a 0-column matrix has no row content anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    fn zip_with(&self, other: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix::new(self.rows, self.cols, data)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "axpy", |a, b| a + alpha * b)
    }

    pub fn scale(&self, s: f64) -> Result<Matrix> {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        Matrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Stacks `parts` vertically. All parts must share a column count.
    pub fn vstack(parts: &[Matrix]) -> Result<Matrix> {
        let Some(first) = parts.first() else {
            return Ok(Matrix::zeros(0, 0));
        };
        let cols = first.cols;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::shape(format!(
                    "vstack: {} vs {cols} columns",
                    p.cols
                )));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.rows.max(1) as f64;
        acc.iter().map(|a| a / n).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Writes the text interchange format: a `rows cols` header line followed
    /// by one line per row. `f64` display is shortest round-trip, so parsing
    /// the output reproduces the matrix bit for bit.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn from_text(s: &str) -> Result<Matrix> {
        s.parse()
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{v}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for Matrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Matrix> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty matrix text".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("bad header {header:?}: {e}")))?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Format(format!(
                "header must be `rows cols`, got {header:?}"
            )));
        };
        let data: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad entry {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        Matrix::new(rows, cols, data)
    }
}

/// Standard product with `f64` accumulation.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "matmul: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in out_row.iter_mut().zip(&b.data[p * m..(p + 1) * m]) {
                *o += aip * bv;
            }
        }
    }
    Matrix::new(n, m, out)
}

/// `a · bᵀ` without materialising the transpose.
pub fn matmul_transposed(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(format!(
            "matmul_transposed: {:?} x {:?}ᵀ",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Vec::with_capacity(a.rows * b.rows);
    for ar in a.row_iter() {
        for br in b.row_iter() {
            out.push(ar.iter().zip(br).map(|(x, y)| x * y).sum());
        }
    }
    Matrix::new(a.rows, b.rows, out)
}

/// Softmax of each row of `m / scale`, stabilised by subtracting the row max.
pub fn row_softmax(m: &Matrix, scale: f64) -> Result<Matrix> {
    if m.is_empty() {
        return Err(Error::shape("row_softmax of an empty matrix"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::argument(format!(
            "softmax scale must be > 0, got {scale}"
        )));
    }
    let mut data = Vec::with_capacity(m.data.len());
    for row in m.row_iter() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v / scale));
        let start = data.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v / scale - max).exp();
            total += e;
            data.push(e);
        }
        for e in &mut data[start..] {
            *e /= total;
        }
    }
    Matrix::new(m.rows, m.cols, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Gelu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Gelu => gelu(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Gelu => gelu_derivative(x),
        }
    }
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// One affine layer followed by an activation: `act(x·W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl FfnParams {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weight.rows != weight.cols {
            return Err(Error::shape(format!(
                "FFN weight must be square, got {:?}",
                weight.shape()
            )));
        }
        if bias.len() != weight.cols {
            return Err(Error::shape(format!(
                "FFN bias has {} entries for width {}",
                bias.len(),
                weight.cols
            )));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric("non-finite FFN bias".into()));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Matrix::identity(dim),
            bias: vec![0.0; dim],
            activation: Activation::Identity,
        }
    }

    /// Weights uniform in ±1/√d around the identity, small biases.
    pub fn seeded(dim: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        let noise = Matrix::random_with(dim, dim, -bound, bound, &mut rng);
        let weight = Matrix::identity(dim)
            .add(&noise)
            .expect("identity and noise share a shape");
        let bias = (0..dim).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.cols
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `m·W + b` before the activation.
    pub fn pre_activation(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols != self.weight.rows {
            return Err(Error::shape(format!(
                "FFN input width {} vs weight {:?}",
                m.cols,
                self.weight.shape()
            )));
        }
        let mut z = matmul(m, &self.weight)?;
        for row in z.data.chunks_exact_mut(self.bias.len().max(1)) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }
}

pub fn ffn_apply(m: &Matrix, p: &FfnParams) -> Result<Matrix> {
    let z = p.pre_activation(m)?;
    match p.activation {
        Activation::Identity => Ok(z),
        act => z.map(|v| act.apply(v)),
    }
}

/// Central-difference directional derivative `(f(x+hv) − f(x−hv)) / 2h`.
pub fn finite_diff_jvp<F>(f: F, x: &Matrix, v: &Matrix, h: f64) -> Result<Matrix>
where
    F: Fn(&Matrix) -> Result<Matrix>,
{
    if x.shape() != v.shape() {
        return Err(Error::shape(format!(
            "tangent {:?} vs point {:?}",
            v.shape(),
            x.shape()
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::argument(format!("step must be > 0, got {h}")));
    }
    let plus = f(&x.axpy(h, v)?)?;
    let minus = f(&x.axpy(-h, v)?)?;
    let diff = plus.sub(&minus)?;
    diff.scale(0.5 / h)
        .map_err(|e| Error::Numeric(format!("finite difference: {e}")))
}

/// Relative error `‖a − b‖ / max(‖b‖, floor)` in the Frobenius norm.
pub fn relative_error(a: &Matrix, b: &Matrix, floor: f64) -> Result<f64> {
    Ok(a.sub(b)?.frobenius() / b.frobenius().max(floor))
}
