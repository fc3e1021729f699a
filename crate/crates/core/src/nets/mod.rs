//! The three players: full-precision classifier P, its fake-quantized copy Q
//! and the label-conditioned generator G.

mod checkpoint;
mod layers;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Network, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use layers::{Activation, BnTap, LayerSpec};
pub use train::{pretrain_p, PretrainConfig};

use crate::engine::{BnMode, Graph, RngStream, Tensor, Var};
use crate::error::{Error, Result};
use crate::quant::QuantConfig;
use layers::Stack;

/// Rows per forward pass when scoring a labelled set. Fixed so that Q's
/// dynamic activation ranges see the same batches on every evaluation.
pub const EVAL_BATCH: usize = 250;

/// Inputs with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub x: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Two BN+ReLU hidden layers followed by a linear classifier head.
    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&w| LayerSpec {
                width: w,
                batch_norm: true,
                activation: Activation::Relu,
            })
            .collect();
        layers.push(LayerSpec {
            width: classes,
            batch_norm: false,
            activation: Activation::Identity,
        });
        NetworkSpec {
            input_dim,
            classes,
            layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("classifier needs at least 2 classes"));
        }
        match self.layers.last() {
            Some(l) if l.width == self.classes => {}
            _ => {
                return Err(Error::config(
                    "final layer width must equal the class count",
                ))
            }
        }
        if !self.layers.iter().any(|l| l.batch_norm) {
            return Err(Error::config(
                "classifier needs at least one batch-norm layer",
            ));
        }
        if self.input_dim == 0 || self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::config("layer widths must be positive"));
        }
        Ok(())
    }
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::mlp(20, &[64, 64], 10)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Noise width; the learned label embedding has the same width and is
    /// added to the noise.
    pub noise_dim: usize,
    pub classes: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.output_dim == 0 || self.classes < 2 {
            return Err(Error::config("generator dimensions must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("generator hidden widths must be positive"));
        }
        Ok(())
    }

    pub fn validate_against(&self, p: &NetworkSpec) -> Result<()> {
        self.validate()?;
        if self.output_dim != p.input_dim {
            return Err(Error::config(format!(
                "generator output dim {} does not match classifier input dim {}",
                self.output_dim, p.input_dim
            )));
        }
        if self.classes != p.classes {
            return Err(Error::config(
                "generator and classifier disagree on class count",
            ));
        }
        Ok(())
    }

    fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut layers: Vec<LayerSpec> = self
            .hidden
            .iter()
            .map(|&w| LayerSpec {
                width: w,
                batch_norm: true,
                activation: Activation::Relu,
            })
            .collect();
        layers.push(LayerSpec {
            width: self.output_dim,
            batch_norm: false,
            activation: Activation::Identity,
        });
        layers
    }
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            noise_dim: 16,
            classes: 10,
            hidden: vec![64, 64],
            output_dim: 20,
        }
    }
}

/// Output of a classifier forward pass on the tape.
#[derive(Clone, Debug)]
pub struct Forward {
    pub logits: Var,
    pub taps: Vec<BnTap>,
}

/// Full-precision classifier P.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub spec: NetworkSpec,
    pub(crate) stack: Stack,
}

impl Classifier {
    pub fn build(spec: NetworkSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let stack = Stack::init(spec.input_dim, &spec.layers, rng);
        Ok(Classifier { spec, stack })
    }

    pub fn params(&self) -> Vec<Tensor> {
        self.stack.params()
    }

    pub fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        self.stack.set_params(params)
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.stack.bind(g, trainable)
    }

    pub fn forward(&self, g: &mut Graph, x: Var, vars: &[Var], mode: BnMode) -> Result<Forward> {
        let (logits, taps) = self.stack.forward(g, x, vars, mode, None)?;
        Ok(Forward { logits, taps })
    }

    /// Eval-mode logits.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let f = self.forward(&mut g, xv, &vars, BnMode::Eval)?;
        Ok(g.value(f.logits).clone())
    }

    pub fn accuracy(&self, set: &LabeledSet) -> Result<f64> {
        accuracy_by(set, |x| self.logits(x))
    }

    pub fn bn_layers(&self) -> Vec<&crate::engine::BatchNorm> {
        self.stack.bn_layers()
    }
}

/// Fake-quantized classifier Q.
///
/// Weights are quantized with their own per-tensor range on every forward;
/// hidden activations with the range of the current batch. BN always
/// normalizes with the running statistics inherited from P.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedClassifier {
    pub spec: NetworkSpec,
    pub quant: QuantConfig,
    pub(crate) stack: Stack,
}

impl QuantizedClassifier {
    pub fn params(&self) -> Vec<Tensor> {
        self.stack.params()
    }

    pub fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        self.stack.set_params(params)
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.stack.bind(g, trainable)
    }

    /// Eval-mode forward pass.
    pub fn forward(&self, g: &mut Graph, x: Var, vars: &[Var]) -> Result<Var> {
        Ok(self.forward_mode(g, x, vars, BnMode::Eval)?.logits)
    }

    pub fn forward_mode(
        &self,
        g: &mut Graph,
        x: Var,
        vars: &[Var],
        mode: BnMode,
    ) -> Result<Forward> {
        let (logits, taps) = self.stack.forward(g, x, vars, mode, Some(self.quant))?;
        Ok(Forward { logits, taps })
    }

    /// Folds the batch statistics recorded in `taps` into Q's running stats.
    pub fn update_running(&mut self, g: &Graph, taps: &[BnTap], batch: usize) {
        self.stack.update_running(g, taps, batch);
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, xv, &vars)?;
        Ok(g.value(out).clone())
    }

    pub fn accuracy(&self, set: &LabeledSet) -> Result<f64> {
        accuracy_by(set, |x| self.logits(x))
    }

    /// True when both networks have the same layer structure.
    pub fn same_architecture(&self, p: &Classifier) -> bool {
        self.spec == p.spec && self.stack.structure() == p.stack.structure()
    }
}

/// Copies P into Q with fake quantization at `cfg.bits`.
pub fn init_q_from_p(p: &Classifier, cfg: QuantConfig) -> Result<QuantizedClassifier> {
    cfg.validate()?;
    Ok(QuantizedClassifier {
        spec: p.spec.clone(),
        quant: cfg,
        stack: p.stack.clone(),
    })
}

/// Label-conditioned generator G: `x = G(z | y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub spec: GeneratorSpec,
    /// `[classes, noise_dim]` label embedding table.
    pub embedding: Tensor,
    pub(crate) stack: Stack,
}

impl Generator {
    pub fn build(spec: GeneratorSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let embedding = rng.gaussian(&[spec.classes, spec.noise_dim]);
        let stack = Stack::init(spec.noise_dim, &spec.layer_specs(), rng);
        Ok(Generator {
            spec,
            embedding,
            stack,
        })
    }

    pub fn params(&self) -> Vec<Tensor> {
        let mut p = vec![self.embedding.clone()];
        p.extend(self.stack.params());
        p
    }

    pub fn set_params(&mut self, params: &[Tensor]) -> Result<()> {
        let (emb, rest) = params
            .split_first()
            .ok_or_else(|| Error::config("empty generator parameter list"))?;
        if emb.shape() != self.embedding.shape() {
            return Err(Error::ShapeMismatch {
                op: "generator.set_params",
                lhs: self.embedding.shape().to_vec(),
                rhs: emb.shape().to_vec(),
            });
        }
        self.stack.set_params(rest)?;
        self.embedding = emb.clone();
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        let mut vars = vec![if trainable {
            g.param(self.embedding.clone())
        } else {
            g.constant(self.embedding.clone())
        }];
        vars.extend(self.stack.bind(g, trainable));
        vars
    }

    /// Generates one sample per row of `z`, conditioned on the one-hot rows of `y`.
    pub fn forward(
        &self,
        g: &mut Graph,
        z: &Tensor,
        y: &Tensor,
        vars: &[Var],
        mode: BnMode,
    ) -> Result<(Var, Vec<BnTap>)> {
        if z.shape().len() != 2 || z.cols() != self.spec.noise_dim {
            return Err(Error::ShapeMismatch {
                op: "generator noise",
                lhs: z.shape().to_vec(),
                rhs: vec![self.spec.noise_dim],
            });
        }
        check_one_hot(y, self.spec.classes)?;
        if y.rows() != z.rows() {
            return Err(Error::ShapeMismatch {
                op: "generator labels",
                lhs: z.shape().to_vec(),
                rhs: y.shape().to_vec(),
            });
        }
        let yv = g.constant(y.clone());
        let emb = g.matmul(yv, vars[0])?;
        let zv = g.constant(z.clone());
        let h = g.add(zv, emb)?;
        self.stack.forward(g, h, &vars[1..], mode, None)
    }

    /// Samples without recording gradients.
    pub fn sample(&self, z: &Tensor, y: &Tensor, mode: BnMode) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let (x, _) = self.forward(&mut g, z, y, &vars, mode)?;
        Ok(g.value(x).clone())
    }

    /// Folds the batch statistics recorded in `taps` into G's running stats.
    pub fn update_running(&mut self, g: &Graph, taps: &[BnTap], batch: usize) {
        self.stack.update_running(g, taps, batch);
    }
}

/// Rejects anything but rows with a single 1 among zeros.
pub fn check_one_hot(y: &Tensor, classes: usize) -> Result<()> {
    if y.shape().len() != 2 || y.cols() != classes {
        return Err(Error::ShapeMismatch {
            op: "one_hot",
            lhs: y.shape().to_vec(),
            rhs: vec![classes],
        });
    }
    for (row, r) in y.row_iter().enumerate() {
        let ones = r.iter().filter(|&&v| v == 1.0).count();
        let zeros = r.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != r.len() {
            return Err(Error::MalformedOneHot { row });
        }
    }
    Ok(())
}

fn accuracy_by(set: &LabeledSet, logits: impl Fn(&Tensor) -> Result<Tensor>) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::config("accuracy on an empty set"));
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let out = logits(&set.x.select_rows(chunk))?;
        if !out.all_finite() {
            return Err(Error::non_finite("logits", "accuracy"));
        }
        correct += out
            .argmax_rows()
            .iter()
            .zip(chunk)
            .filter(|(pred, &i)| **pred == set.labels[i])
            .count();
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Statistics of one BN layer of P: what it stored during training and what
/// a generated batch produces at its input.
#[derive(Clone, Debug, PartialEq)]
pub struct BnLayerStats {
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub batch_mean: Tensor,
    pub batch_var: Tensor,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnStatsRecord {
    pub layers: Vec<BnLayerStats>,
}

/// Runs P in eval mode on `x` and pairs each BN layer's input statistics
/// with the layer's stored running statistics.
pub fn collect_generated_bns(p: &Classifier, x: &Tensor) -> Result<BnStatsRecord> {
    if x.rows() < 2 {
        return Err(Error::DegenerateBatch(x.rows()));
    }
    let mut g = Graph::new();
    let vars = p.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let f = p.forward(&mut g, xv, &vars, BnMode::Eval)?;
    let layers = f
        .taps
        .iter()
        .zip(p.bn_layers())
        .map(|(tap, bn)| BnLayerStats {
            running_mean: bn.running_mean.clone(),
            running_var: bn.running_var.clone(),
            batch_mean: g.value(tap.mean).clone(),
            batch_var: g.value(tap.var).clone(),
            eps: bn.eps,
        })
        .collect();
    Ok(BnStatsRecord { layers })
}
