use serde::{Deserialize, Serialize};

use super::{Classifier, LabeledSet};
use crate::engine::{cross_entropy, AdamState, BnMode, Graph, RngStream, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 30,
            lr: 1e-2,
            batch_size: 64,
        }
    }
}

/// Trains P with cross-entropy and Adam, BN in train mode, then reports
/// eval-mode accuracy on `test`.
pub fn pretrain_p(
    p: &mut Classifier,
    train: &LabeledSet,
    test: &LabeledSet,
    cfg: &PretrainConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    if cfg.batch_size < 2 {
        return Err(Error::config("pretraining batch size must be at least 2"));
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= p.spec.classes) {
        return Err(Error::config(format!("label {bad} out of range")));
    }
    let mut params = p.params();
    let mut opt = AdamState::new(&params, cfg.lr);
    for epoch in 0..cfg.epochs {
        let order = rng.permutation(train.len());
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let batch = train.subset(chunk);
            let mut g = Graph::new();
            let vars = p.bind(&mut g, true);
            let x = g.constant(batch.x.clone());
            let f = p.forward(&mut g, x, &vars, BnMode::Train)?;
            let targets = Tensor::one_hot(&batch.labels, p.spec.classes);
            let loss = cross_entropy(&mut g, f.logits, &targets)?;
            let lv = g.item(loss);
            if !lv.is_finite() {
                return Err(Error::non_finite(
                    format!("pretraining loss {lv}"),
                    format!("epoch {epoch} step {step}"),
                ));
            }
            g.backward(loss)?;
            let grads: Vec<Tensor> = vars.iter().map(|&v| g.grad(v)).collect();
            opt.step(&mut params, &grads)?;
            p.stack.update_running(&g, &f.taps, chunk.len());
            p.set_params(&params)?;
        }
    }
    p.accuracy(test)
}
