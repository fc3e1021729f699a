use serde::{Deserialize, Serialize};

use crate::adapt::game_value_var;
use crate::engine::{cross_entropy, BatchNorm, Graph, Tensor, Var};
use crate::error::Result;
use crate::nets::{BnStatsRecord, BnTap};

/// How the BN-statistics loss compares spreads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BnsSigma {
    /// Batch variance against running variance.
    #[default]
    Variance,
    /// `sqrt(var + eps)` on both sides.
    Std,
}

/// Cross-entropy between `softmax(z_p − z_q)` and the one-hot labels.
pub fn loss_ds(g: &mut Graph, zp: Var, zq: Var, y: &Tensor) -> Result<Var> {
    let diff = g.sub(zp, zq)?;
    cross_entropy(g, diff, y)
}

/// Cross-entropy between `softmax(z_p + z_q)` and the one-hot labels.
pub fn loss_as(g: &mut Graph, zp: Var, zq: Var, y: &Tensor) -> Result<Var> {
    let sum = g.add(zp, zq)?;
    cross_entropy(g, sum, y)
}

/// Batch mean of `max(λ_l − H', 0) + max(H' − λ_u, 0)`.
pub fn loss_bound(g: &mut Graph, h_norm: Var, lambda_l: f64, lambda_u: f64) -> Result<Var> {
    let below = g.affine(h_norm, -1.0, lambda_l);
    let below = g.relu(below);
    let above = g.affine(h_norm, 1.0, -lambda_u);
    let above = g.relu(above);
    let both = g.add(below, above)?;
    Ok(g.mean(both))
}

/// `Σ_m ‖μ^g_m − μ_m‖² + ‖σ^g_m − σ_m‖²` over P's BN layers.
pub fn loss_bns(
    g: &mut Graph,
    taps: &[BnTap],
    layers: &[&BatchNorm],
    sigma: BnsSigma,
) -> Result<Var> {
    let mut total = g.scalar(0.0);
    for (tap, bn) in taps.iter().zip(layers) {
        let mu = g.constant(bn.running_mean.clone());
        let dm = g.sub(tap.mean, mu)?;
        let dm = g.square(dm);
        let dm = g.sum(dm);
        let (gen_sigma, stored) = match sigma {
            BnsSigma::Variance => (tap.var, bn.running_var.clone()),
            BnsSigma::Std => {
                let shifted = g.affine(tap.var, 1.0, bn.eps);
                (
                    g.sqrt(shifted)?,
                    bn.running_var.map(|v| (v + bn.eps).sqrt()),
                )
            }
        };
        let s = g.constant(stored);
        let ds = g.sub(gen_sigma, s)?;
        let ds = g.square(ds);
        let ds = g.sum(ds);
        let layer = g.add(dm, ds)?;
        total = g.add(total, layer)?;
    }
    Ok(total)
}

/// BN-statistics loss evaluated on a collected record.
pub fn loss_bns_value(record: &BnStatsRecord, sigma: BnsSigma) -> f64 {
    record
        .layers
        .iter()
        .map(|l| {
            let dm: f64 = l
                .batch_mean
                .data()
                .iter()
                .zip(l.running_mean.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let spread = |v: f64| match sigma {
                BnsSigma::Variance => v,
                BnsSigma::Std => (v + l.eps).sqrt(),
            };
            let ds: f64 = l
                .batch_var
                .data()
                .iter()
                .zip(l.running_var.data())
                .map(|(a, b)| (spread(*a) - spread(*b)).powi(2))
                .sum();
            dm + ds
        })
        .sum()
}

/// Weights of the generator objective. `alpha_ds` and `alpha_as` share one
/// value unless an ablation sets them apart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha_ds: f64,
    pub alpha_as: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    /// The recomposition every logged iteration must satisfy exactly.
    pub fn combine(&self, l_ds: f64, l_as: f64, l_b: f64, l_bns: f64) -> f64 {
        self.alpha_ds * l_ds + self.alpha_as * l_as + self.beta * l_b + self.gamma * l_bns
    }
}

/// Tape handles of one generator-loss evaluation.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorLoss {
    pub l_ds: Var,
    pub l_as: Var,
    pub l_b: Var,
    pub l_bns: Var,
    pub total: Var,
    pub h_norm: Var,
}

/// `L_G = α_ds·L_ds + α_as·L_as + β·L_b + γ·L_BNS` for one generated batch.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss(
    g: &mut Graph,
    zp: Var,
    zq: Var,
    y: &Tensor,
    taps: &[BnTap],
    bn_layers: &[&BatchNorm],
    weights: LossWeights,
    lambda_l: f64,
    lambda_u: f64,
    sigma: BnsSigma,
) -> Result<GeneratorLoss> {
    let l_ds = loss_ds(g, zp, zq, y)?;
    let l_as = loss_as(g, zp, zq, y)?;
    let terms = game_value_var(g, zp, zq, 1.0)?;
    let l_b = loss_bound(g, terms.h_norm, lambda_l, lambda_u)?;
    let l_bns = loss_bns(g, taps, bn_layers, sigma)?;
    // same association order as LossWeights::combine, so the logged total
    // recomposes bit-exactly
    let a = g.affine(l_ds, weights.alpha_ds, 0.0);
    let b = g.affine(l_as, weights.alpha_as, 0.0);
    let c = g.affine(l_b, weights.beta, 0.0);
    let d = g.affine(l_bns, weights.gamma, 0.0);
    let ab = g.add(a, b)?;
    let abc = g.add(ab, c)?;
    let total = g.add(abc, d)?;
    Ok(GeneratorLoss {
        l_ds,
        l_as,
        l_b,
        l_bns,
        total,
        h_norm: terms.h_norm,
    })
}

/// `mean(1 − H'(softmax((z_p − z_q)/τ)))`.
pub fn calibration_loss(g: &mut Graph, zp: Var, zq: Var, tau: f64) -> Result<Var> {
    Ok(game_value_var(g, zp, zq, tau)?.value)
}
