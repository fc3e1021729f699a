use serde::{Deserialize, Serialize};

use crate::engine::{batch_norm, BatchNorm, BnMode, Graph, RngStream, Tensor, Var};
use crate::error::{Error, Result};
use crate::quant::{fake_quantize_var, QuantConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Affine layer of `width` outputs, optionally followed by batch norm, then
/// the activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub width: usize,
    pub batch_norm: bool,
    pub activation: Activation,
}

/// Input statistics of one BN layer, as tape variables.
#[derive(Clone, Copy, Debug)]
pub struct BnTap {
    pub mean: Var,
    pub var: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub bn: Option<BatchNorm>,
    pub activation: Activation,
}

impl Layer {
    fn param_count(&self) -> usize {
        if self.bn.is_some() {
            4
        } else {
            2
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Stack {
    pub layers: Vec<Layer>,
}

impl Stack {
    pub fn init(input_dim: usize, specs: &[LayerSpec], rng: &mut RngStream) -> Self {
        let mut fan_in = input_dim;
        let layers = specs
            .iter()
            .map(|s| {
                let gain = match s.activation {
                    Activation::Relu => 2.0,
                    Activation::Identity => 1.0,
                };
                let scale = (gain / fan_in as f64).sqrt();
                let weight = rng.gaussian(&[fan_in, s.width]).map(|v| v * scale);
                fan_in = s.width;
                Layer {
                    weight,
                    bias: Tensor::zeros(&[s.width]),
                    bn: s.batch_norm.then(|| BatchNorm::new(s.width)),
                    activation: s.activation,
                }
            })
            .collect();
        Stack { layers }
    }

    /// Layer shapes and flags, for structural comparison.
    pub fn structure(&self) -> Vec<(Vec<usize>, bool, Activation)> {
        self.layers
            .iter()
            .map(|l| (l.weight.shape().to_vec(), l.bn.is_some(), l.activation))
            .collect()
    }

    /// Trainable tensors: per layer weight, bias, then BN gamma and beta.
    pub fn params(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.clone());
            out.push(l.bias.clone());
            if let Some(bn) = &l.bn {
                out.push(bn.gamma.clone());
                out.push(bn.beta.clone());
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        let expected: usize = self.layers.iter().map(Layer::param_count).sum();
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                op: "set_params",
                lhs: vec![expected],
                rhs: vec![params.len()],
            });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            let mut slots: Vec<&mut Tensor> = vec![&mut l.weight, &mut l.bias];
            if let Some(bn) = &mut l.bn {
                slots.push(&mut bn.gamma);
                slots.push(&mut bn.beta);
            }
            for slot in slots {
                let src = it.next().expect("count checked");
                if src.shape() != slot.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "set_params",
                        lhs: slot.shape().to_vec(),
                        rhs: src.shape().to_vec(),
                    });
                }
                *slot = src.clone();
            }
        }
        Ok(())
    }

    /// Every stored array in declaration order, running stats included.
    pub fn arrays(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
            if let Some(bn) = &l.bn {
                out.extend([&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]);
            }
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
        }
        out
    }

    pub fn bn_layers(&self) -> Vec<&BatchNorm> {
        self.layers.iter().filter_map(|l| l.bn.as_ref()).collect()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|t| if trainable { g.param(t) } else { g.constant(t) })
            .collect()
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        vars: &[Var],
        mode: BnMode,
        quant: Option<QuantConfig>,
    ) -> Result<(Var, Vec<BnTap>)> {
        let mut h = x;
        let mut taps = Vec::new();
        let mut next = vars.iter().copied();
        let mut take = || {
            next.next()
                .ok_or_else(|| Error::config("parameter binding shorter than network"))
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut w, b) = (take()?, take()?);
            if let Some(q) = quant {
                if i > 0 || q.quantize_input {
                    h = fake_quantize_var(g, h, q.bits)?;
                }
                w = fake_quantize_var(g, w, q.bits)?;
            }
            let lin = g.matmul(h, w)?;
            h = g.add(lin, b)?;
            if let Some(bn) = &layer.bn {
                let (gamma, beta) = (take()?, take()?);
                let out = batch_norm(g, h, gamma, beta, bn, mode)?;
                if let (Some(mean), Some(var)) = (out.batch_mean, out.batch_var) {
                    taps.push(BnTap { mean, var });
                }
                h = out.out;
            }
            h = match layer.activation {
                Activation::Relu => g.relu(h),
                Activation::Identity => h,
            };
        }
        Ok((h, taps))
    }

    pub fn update_running(&mut self, g: &Graph, taps: &[BnTap], batch: usize) {
        let bns = self.layers.iter_mut().filter_map(|l| l.bn.as_mut());
        for (bn, tap) in bns.zip(taps) {
            bn.update_running(g.value(tap.mean), g.value(tap.var), batch);
        }
    }
}
