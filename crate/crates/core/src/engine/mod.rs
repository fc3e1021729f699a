//! Dense `f64` tensors, a reverse-mode tape, batch normalization, optimizers
//! and seeded randomness.

mod batch_norm;
mod graph;
mod optim;
mod rng;
mod tensor;

pub use batch_norm::{batch_norm, BatchNorm, BnMode, BnOutput, BN_MOMENTUM};
pub use graph::{Graph, Var};
pub use optim::{sgd_step, AdamState, SgdNesterovState};
pub use rng::{gaussian, seeded_rng, RngStream};
pub use tensor::Tensor;

pub(crate) use graph::softmax_rows;

/// Row-wise softmax of a plain tensor.
pub fn softmax(z: &Tensor, temperature: f64) -> crate::Result<Tensor> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(crate::Error::InvalidTemperature(temperature));
    }
    Ok(softmax_rows(z, temperature, false))
}

/// Mean over rows of `−Σ_c y(c)·ln softmax(logits)(c)`.
pub fn cross_entropy(g: &mut Graph, logits: Var, targets: &Tensor) -> crate::Result<Var> {
    let log_p = g.log_softmax(logits, 1.0)?;
    let y = g.constant(targets.clone());
    let picked = g.mul(log_p, y)?;
    let total = g.sum(picked);
    let rows = g.value(logits).rows() as f64;
    Ok(g.affine(total, -1.0 / rows, 0.0))
}
