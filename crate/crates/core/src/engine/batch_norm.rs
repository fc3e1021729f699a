use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Running-statistics momentum, as in the usual `running = (1-m)·running + m·batch`.
pub const BN_MOMENTUM: f64 = 0.1;

/// Which statistics normalize the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics; the caller then folds them into the running stats.
    Train,
    /// Stored running statistics.
    Eval,
    /// Batch statistics without touching the running stats.
    Batch,
}

/// Per-feature batch normalization parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
}

/// Result of one normalization: the output plus the statistics of the
/// layer *input* over the batch (biased variance), when the batch has at
/// least two rows.
#[derive(Clone, Copy, Debug)]
pub struct BnOutput {
    pub out: Var,
    pub batch_mean: Option<Var>,
    pub batch_var: Option<Var>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(&[width], 1.0),
            beta: Tensor::zeros(&[width]),
            running_mean: Tensor::zeros(&[width]),
            running_var: Tensor::full(&[width], 1.0),
            eps: 1e-5,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Folds one batch into the running statistics. `batch_var` is the
    /// biased variance over `n` rows; the running variance tracks the
    /// unbiased estimate.
    pub fn update_running(&mut self, batch_mean: &Tensor, batch_var: &Tensor, n: usize) {
        let correction = n as f64 / (n as f64 - 1.0);
        for (r, &b) in self
            .running_mean
            .data_mut()
            .iter_mut()
            .zip(batch_mean.data())
        {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(batch_var.data()) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b * correction;
        }
    }
}

/// Normalizes `x` (`[batch, width]`) feature-wise, then applies `gamma`/`beta`.
pub fn batch_norm(
    g: &mut Graph,
    x: Var,
    gamma: Var,
    beta: Var,
    layer: &BatchNorm,
    mode: BnMode,
) -> Result<BnOutput> {
    let shape = g.value(x).shape().to_vec();
    if shape.len() != 2 || shape[1] != layer.width() {
        return Err(Error::ShapeMismatch {
            op: "batch_norm",
            lhs: shape,
            rhs: vec![layer.width()],
        });
    }
    let n = shape[0];
    if n < 2 && mode != BnMode::Eval {
        return Err(Error::DegenerateBatch(n));
    }

    let stats = if n >= 2 {
        let mean = g.col_mean(x);
        let centered = g.sub(x, mean)?;
        let sq = g.square(centered);
        let var = g.col_mean(sq);
        Some((mean, centered, var))
    } else {
        None
    };

    let normalized = match (mode, stats) {
        (BnMode::Train | BnMode::Batch, Some((_, centered, var))) => {
            let shifted = g.affine(var, 1.0, layer.eps);
            let std = g.sqrt(shifted)?;
            g.div(centered, std)?
        }
        _ => {
            let mu = g.constant(layer.running_mean.clone());
            let std = g.constant(layer.running_var.map(|v| (v + layer.eps).sqrt()));
            let centered = g.sub(x, mu)?;
            g.div(centered, std)?
        }
    };
    let scaled = g.mul(normalized, gamma)?;
    let out = g.add(scaled, beta)?;
    Ok(BnOutput {
        out,
        batch_mean: stats.map(|s| s.0),
        batch_var: stats.map(|s| s.2),
    })
}
