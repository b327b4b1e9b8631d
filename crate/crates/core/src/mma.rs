//! Multiple-frequency mixing attention.
//!
//! High-frequency tokens query the low-frequency tokens of the whole video:
//!
//! ```text
//! π(L, H) = softmax(H'·L'ᵀ / √d) · L'      with L' = ffn_low(L), H' = ffn_high(H)
//! ```
//!
//! Each output row is a convex combination of the transformed low-frequency
//! rows and keeps the timestamp of the high-frequency row that queried it.

use crate::encoding::TokenMatrix;
use crate::error::{Error, Result};
use crate::numerics::{
    ffn_apply, matmul, matmul_transposed, row_softmax, Activation, FfnParams, Matrix,
};
use crate::sampling::Frequency;

#[derive(Debug, Clone, PartialEq)]
pub struct MmaParams {
    ffn_low: FfnParams,
    ffn_high: FfnParams,
}

impl MmaParams {
    pub fn new(ffn_low: FfnParams, ffn_high: FfnParams) -> Result<Self> {
        if ffn_low.dim() != ffn_high.dim() {
            return Err(Error::shape(format!(
                "FFN widths differ: {} vs {}",
                ffn_low.dim(),
                ffn_high.dim()
            )));
        }
        Ok(Self { ffn_low, ffn_high })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            ffn_low: FfnParams::identity(dim),
            ffn_high: FfnParams::identity(dim),
        }
    }

    /// GELU FFNs with independent seeded weights for the two paths.
    pub fn seeded(dim: usize, seed: u64) -> Self {
        Self {
            ffn_low: FfnParams::seeded(dim, Activation::Gelu, seed),
            ffn_high: FfnParams::seeded(
                dim,
                Activation::Gelu,
                seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
            ),
        }
    }

    pub fn dim(&self) -> usize {
        self.ffn_low.dim()
    }

    pub fn ffn_low(&self) -> &FfnParams {
        &self.ffn_low
    }

    pub fn ffn_high(&self) -> &FfnParams {
        &self.ffn_high
    }
}

fn check_inputs(low: &Matrix, high: &Matrix, params: &MmaParams) -> Result<()> {
    let d = params.dim();
    if low.rows() == 0 {
        return Err(Error::shape(
            "mixing attention needs at least one low-frequency token",
        ));
    }
    if high.rows() == 0 {
        return Err(Error::shape(
            "mixing attention needs at least one high-frequency token",
        ));
    }
    if low.cols() != d || high.cols() != d {
        return Err(Error::shape(format!(
            "token widths low={} high={} vs attention width {d}",
            low.cols(),
            high.cols()
        )));
    }
    Ok(())
}

struct Forward {
    /// `order[k]` is the input row of the k-th key in canonical order.
    order: Vec<usize>,
    low_t: Matrix,
    high_t: Matrix,
    weights: Matrix,
}

/// Key rows in lexicographic order. Sums over keys then run in an order that
/// does not depend on how the caller arranged them, which makes the output
/// exactly invariant to key permutations.
fn canonical_order(low: &Matrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..low.rows()).collect();
    order.sort_by(|&a, &b| {
        low.row(a)
            .iter()
            .zip(low.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn gather_rows(m: &Matrix, order: &[usize]) -> Result<Matrix> {
    let rows: Vec<&[f64]> = order.iter().map(|&i| m.row(i)).collect();
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, m.cols()));
    }
    Matrix::from_rows(&rows)
}

fn forward_parts(low: &Matrix, high: &Matrix, params: &MmaParams) -> Result<Forward> {
    check_inputs(low, high, params)?;
    let order = canonical_order(low);
    let low_t = ffn_apply(&gather_rows(low, &order)?, &params.ffn_low)?;
    let high_t = ffn_apply(high, &params.ffn_high)?;
    let scores = matmul_transposed(&high_t, &low_t)?;
    let weights = row_softmax(&scores, (params.dim() as f64).sqrt())?;
    Ok(Forward {
        order,
        low_t,
        high_t,
        weights,
    })
}

/// The `n_H × n_L` attention weights.
pub fn mma_attention_weights(low: &Matrix, high: &Matrix, params: &MmaParams) -> Result<Matrix> {
    let f = forward_parts(low, high, params)?;
    let (n_h, n_l) = f.weights.shape();
    let mut data = vec![0.0; n_h * n_l];
    for (i, row) in f.weights.row_iter().enumerate() {
        for (k, &w) in row.iter().enumerate() {
            data[i * n_l + f.order[k]] = w;
        }
    }
    Matrix::new(n_h, n_l, data)
}

/// `n_H × d` mixed tokens.
pub fn mma_forward(low: &Matrix, high: &Matrix, params: &MmaParams) -> Result<Matrix> {
    let f = forward_parts(low, high, params)?;
    matmul(&f.weights, &f.low_t)
}

/// Mixes token matrices; output rows carry the high-frequency timestamps.
pub fn mix_tokens(
    low: &TokenMatrix,
    high: &TokenMatrix,
    params: &MmaParams,
) -> Result<TokenMatrix> {
    let mixed = mma_forward(&low.tokens, &high.tokens, params)?;
    TokenMatrix::new(mixed, high.timestamps_s.clone(), Frequency::Mixed)
}

/// Tangent of `ffn(x)` along `dx`: `act'(x·W + b) ∘ (dx·W)`.
fn ffn_tangent(x: &Matrix, dx: &Matrix, p: &FfnParams) -> Result<Matrix> {
    let lin = matmul(dx, p.weight())?;
    match p.activation() {
        Activation::Identity => Ok(lin),
        act => {
            let slope = p.pre_activation(x)?.map(|z| act.derivative(z))?;
            lin.hadamard(&slope)
        }
    }
}

/// Analytic directional derivative of [`mma_forward`] at `(low, high)` along
/// `(tangent_low, tangent_high)`.
pub fn mma_jvp(
    low: &Matrix,
    high: &Matrix,
    params: &MmaParams,
    tangent_low: &Matrix,
    tangent_high: &Matrix,
) -> Result<Matrix> {
    if tangent_low.shape() != low.shape() || tangent_high.shape() != high.shape() {
        return Err(Error::shape(format!(
            "tangents {:?}/{:?} vs primals {:?}/{:?}",
            tangent_low.shape(),
            tangent_high.shape(),
            low.shape(),
            high.shape()
        )));
    }
    let f = forward_parts(low, high, params)?;
    let d_low_t = ffn_tangent(
        &gather_rows(low, &f.order)?,
        &gather_rows(tangent_low, &f.order)?,
        &params.ffn_low,
    )?;
    let d_high_t = ffn_tangent(high, tangent_high, &params.ffn_high)?;

    let inv_sqrt_d = 1.0 / (params.dim() as f64).sqrt();
    let d_scores = matmul_transposed(&d_high_t, &f.low_t)?
        .add(&matmul_transposed(&f.high_t, &d_low_t)?)?
        .scale(inv_sqrt_d)?;

    // softmax Jacobian per row: dP = P ∘ (dS − ⟨P, dS⟩)
    let (n_h, n_l) = f.weights.shape();
    let mut d_weights = Vec::with_capacity(n_h * n_l);
    for (p, ds) in f.weights.row_iter().zip(d_scores.row_iter()) {
        let mean: f64 = p.iter().zip(ds).map(|(a, b)| a * b).sum();
        d_weights.extend(p.iter().zip(ds).map(|(a, b)| a * (b - mean)));
    }
    let d_weights = Matrix::new(n_h, n_l, d_weights)?;

    matmul(&d_weights, &f.low_t)?.add(&matmul(&f.weights, &d_low_t)?)
}
