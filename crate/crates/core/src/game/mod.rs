//! The maximization/minimization game between G and Q.
//!
//! Every iteration first updates G against the generator objective with Q
//! frozen, then updates Q against the calibration loss on a fresh batch from
//! the updated G. Around both steps the game value is measured on one fixed
//! probe batch, which gives the balance gap and its two halves.

mod losses;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use losses::{
    calibration_loss, generator_loss, loss_as, loss_bns, loss_bns_value, loss_bound, loss_ds,
    BnsSigma, GeneratorLoss, LossWeights,
};

use crate::adapt::{game_value_var, lipschitz_diagnostic, BalanceGapRecord, LipschitzDiagnostic};
use crate::engine::{sgd_step, AdamState, BnMode, Graph, RngStream, SgdNesterovState, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{Classifier, Generator, LabeledSet, QuantizedClassifier};

const STREAM_BATCHES: u64 = 11;
const STREAM_PROBE: u64 = 12;

/// How a player turns its gradient into a parameter update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Adam for G, SGD with Nesterov momentum for Q.
    #[default]
    Optimizer,
    /// `θ -= lr·∇` for both players; used for first-order checks.
    PlainGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub alpha_ds: f64,
    pub alpha_as: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_l: f64,
    pub lambda_u: f64,
    pub tau: f64,
    pub lr_g: f64,
    pub lr_q: f64,
    pub momentum_q: f64,
    pub weight_decay_q: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    /// `lr_q` is multiplied by this every `lr_decay_period` epochs.
    pub lr_decay_factor: f64,
    pub lr_decay_period: usize,
    pub probe_size: usize,
    pub bns_sigma: BnsSigma,
    pub step_rule: StepRule,
    /// Evaluate Q on the held-out set every this many epochs (0 disables).
    pub eval_period: usize,
    /// Compute the gradient-norm bound on the balance gap every iteration.
    pub track_lipschitz: bool,
    pub lipschitz_curvature: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha_ds: 0.1,
            alpha_as: 0.1,
            beta: 1.0,
            gamma: 1.0,
            lambda_l: 0.3,
            lambda_u: 0.8,
            tau: 1.0,
            lr_g: 1e-3,
            lr_q: 1e-4,
            momentum_q: 0.9,
            weight_decay_q: 1e-4,
            batch_size: 16,
            epochs: 100,
            iters_per_epoch: 50,
            lr_decay_factor: 0.1,
            lr_decay_period: 50,
            probe_size: 64,
            bns_sigma: BnsSigma::Variance,
            step_rule: StepRule::Optimizer,
            eval_period: 10,
            track_lipschitz: false,
            lipschitz_curvature: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let hp = self;
        if !(0.0 <= hp.lambda_l && hp.lambda_l < hp.lambda_u && hp.lambda_u <= 1.0) {
            return Err(Error::config(format!(
                "need 0 <= lambda_l < lambda_u <= 1, got {} and {}",
                hp.lambda_l, hp.lambda_u
            )));
        }
        if !(hp.tau > 0.0 && hp.tau.is_finite()) {
            return Err(Error::InvalidTemperature(hp.tau));
        }
        if [hp.alpha_ds, hp.alpha_as, hp.beta, hp.gamma]
            .iter()
            .any(|w| w.is_nan() || *w < 0.0)
        {
            return Err(Error::config("loss weights must be non-negative"));
        }
        if !(hp.lr_g >= 0.0 && hp.lr_q >= 0.0) {
            return Err(Error::config("learning rates must be non-negative"));
        }
        if hp.batch_size < 2 || hp.probe_size < 2 {
            return Err(Error::config("batch and probe sizes must be at least 2"));
        }
        if hp.lr_decay_period == 0 {
            return Err(Error::config("lr_decay_period must be positive"));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha_ds: self.alpha_ds,
            alpha_as: self.alpha_as,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    /// Calibration learning rate in effect during `epoch`.
    pub fn lr_q_at(&self, epoch: usize) -> f64 {
        self.lr_q
            * self
                .lr_decay_factor
                .powi((epoch / self.lr_decay_period) as i32)
    }
}

/// One term of the generator objective, for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossTerm {
    Ds,
    As,
    B,
    Bns,
}

impl LossTerm {
    pub const ALL: [LossTerm; 4] = [LossTerm::Ds, LossTerm::As, LossTerm::B, LossTerm::Bns];

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Ds => "L_ds",
            LossTerm::As => "L_as",
            LossTerm::B => "L_b",
            LossTerm::Bns => "L_BNS",
        }
    }
}

impl fmt::Display for LossTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_start_matches("l_") {
            "ds" => Ok(LossTerm::Ds),
            "as" => Ok(LossTerm::As),
            "b" => Ok(LossTerm::B),
            "bns" => Ok(LossTerm::Bns),
            other => Err(Error::config(format!("unknown loss term {other:?}"))),
        }
    }
}

/// Parses a comma-separated list such as `ds,as,b`. Empty means none.
pub fn parse_loss_terms(s: &str) -> Result<Vec<LossTerm>> {
    let mut out: Vec<LossTerm> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// `base` with the weights of the `disable`d terms set to zero.
pub fn ablation_config(base: &HyperParams, disable: &[LossTerm]) -> HyperParams {
    let mut hp = base.clone();
    for t in disable {
        match t {
            LossTerm::Ds => hp.alpha_ds = 0.0,
            LossTerm::As => hp.alpha_as = 0.0,
            LossTerm::B => hp.beta = 0.0,
            LossTerm::Bns => hp.gamma = 0.0,
        }
    }
    hp
}

/// Fixed `(z, y)` batch on which the game value is tracked.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub z: Tensor,
    pub y: Tensor,
}

impl Probe {
    pub fn draw(rng: &mut RngStream, size: usize, noise_dim: usize, classes: usize) -> Self {
        let z = rng.gaussian(&[size, noise_dim]);
        let labels: Vec<usize> = (0..size).map(|i| i % classes).collect();
        Probe {
            z,
            y: Tensor::one_hot(&labels, classes),
        }
    }
}

/// Scalars logged for one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    pub epoch: usize,
    pub iter: usize,
    pub l_ds: f64,
    pub l_as: f64,
    pub l_b: f64,
    pub l_bns: f64,
    pub l_g: f64,
    pub l_q: f64,
    pub gap: BalanceGapRecord,
    pub mean_h_norm: f64,
    pub q_acc: Option<f64>,
    pub lipschitz: Option<LipschitzDiagnostic>,
}

/// Result of one generator update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorStep {
    pub l_ds: f64,
    pub l_as: f64,
    pub l_b: f64,
    pub l_bns: f64,
    pub l_g: f64,
    pub mean_h_norm: f64,
}

/// Mutable state of the game: both players, their optimizers and the log.
#[derive(Clone, Debug)]
pub struct GameState {
    pub generator: Generator,
    pub q: QuantizedClassifier,
    pub g_opt: AdamState,
    pub q_opt: SgdNesterovState,
    pub probe: Probe,
    pub rng: RngStream,
    pub logs: Vec<IterationLog>,
}

impl GameState {
    pub fn new(
        generator: Generator,
        q: QuantizedClassifier,
        hp: &HyperParams,
        seed: u64,
    ) -> Result<Self> {
        hp.validate()?;
        let g_opt = AdamState::new(&generator.params(), hp.lr_g);
        let q_opt = SgdNesterovState::new(&q.params(), hp.lr_q, hp.momentum_q, hp.weight_decay_q);
        let mut probe_rng = RngStream::derive(seed, STREAM_PROBE);
        let probe = Probe::draw(
            &mut probe_rng,
            hp.probe_size,
            generator.spec.noise_dim,
            generator.spec.classes,
        );
        Ok(GameState {
            generator,
            q,
            g_opt,
            q_opt,
            probe,
            rng: RngStream::derive(seed, STREAM_BATCHES),
            logs: Vec::new(),
        })
    }

    pub fn iterations(&self) -> usize {
        self.logs.len()
    }

    fn draw_batch(&mut self, size: usize) -> (Tensor, Tensor) {
        let spec = &self.generator.spec;
        let z = self.rng.gaussian(&[size, spec.noise_dim]);
        let labels: Vec<usize> = (0..size).map(|_| self.rng.below(spec.classes)).collect();
        (z, Tensor::one_hot(&labels, spec.classes))
    }
}

fn check_finite(what: &str, v: f64, context: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::non_finite(format!("{what} = {v}"), context))
    }
}

fn commit(params: Vec<Tensor>, context: &str) -> Result<Vec<Tensor>> {
    if params.iter().all(Tensor::all_finite) {
        Ok(params)
    } else {
        Err(Error::non_finite("parameter", context))
    }
}

/// One update of G against the generator objective, Q and P frozen.
pub fn maximization_step(
    state: &mut GameState,
    p: &Classifier,
    hp: &HyperParams,
) -> Result<GeneratorStep> {
    let (z, y) = state.draw_batch(hp.batch_size);
    let mut g = Graph::new();
    let g_vars = state.generator.bind(&mut g, true);
    let (x, g_taps) = state
        .generator
        .forward(&mut g, &z, &y, &g_vars, BnMode::Train)?;
    let p_vars = p.bind(&mut g, false);
    let pf = p.forward(&mut g, x, &p_vars, BnMode::Eval)?;
    let q_vars = state.q.bind(&mut g, false);
    let zq = state.q.forward(&mut g, x, &q_vars)?;
    let bn_layers = p.bn_layers();
    let loss = generator_loss(
        &mut g,
        pf.logits,
        zq,
        &y,
        &pf.taps,
        &bn_layers,
        hp.weights(),
        hp.lambda_l,
        hp.lambda_u,
        hp.bns_sigma,
    )?;
    let ctx = "maximization step";
    let report = GeneratorStep {
        l_ds: check_finite("L_ds", g.item(loss.l_ds), ctx)?,
        l_as: check_finite("L_as", g.item(loss.l_as), ctx)?,
        l_b: check_finite("L_b", g.item(loss.l_b), ctx)?,
        l_bns: check_finite("L_BNS", g.item(loss.l_bns), ctx)?,
        l_g: check_finite("L_G", g.item(loss.total), ctx)?,
        mean_h_norm: mean(g.value(loss.h_norm).data()),
    };
    g.backward(loss.total)?;
    let grads: Vec<Tensor> = g_vars.iter().map(|&v| g.grad(v)).collect();
    let mut params = state.generator.params();
    match hp.step_rule {
        StepRule::Optimizer => {
            state.g_opt.lr = hp.lr_g;
            state.g_opt.step(&mut params, &grads)?;
        }
        StepRule::PlainGradient => sgd_step(&mut params, &grads, hp.lr_g)?,
    }
    let params = commit(params, ctx)?;
    state.generator.set_params(&params)?;
    state.generator.update_running(&g, &g_taps, hp.batch_size);
    Ok(report)
}

/// One update of Q against the calibration loss on a fresh batch from G.
/// Returns the calibration loss before the update.
pub fn minimization_step(
    state: &mut GameState,
    p: &Classifier,
    hp: &HyperParams,
    lr_q: f64,
) -> Result<f64> {
    let (z, y) = state.draw_batch(hp.batch_size);
    let x = state.generator.sample(&z, &y, BnMode::Batch)?;
    let mut g = Graph::new();
    let xv = g.constant(x);
    let p_vars = p.bind(&mut g, false);
    let zp = p.forward(&mut g, xv, &p_vars, BnMode::Eval)?.logits;
    let q_vars = state.q.bind(&mut g, true);
    let zq = state.q.forward(&mut g, xv, &q_vars)?;
    let loss = calibration_loss(&mut g, zp, zq, hp.tau)?;
    let ctx = "minimization step";
    let l_q = check_finite("L_Q", g.item(loss), ctx)?;
    g.backward(loss)?;
    let grads: Vec<Tensor> = q_vars.iter().map(|&v| g.grad(v)).collect();
    let mut params = state.q.params();
    match hp.step_rule {
        StepRule::Optimizer => {
            state.q_opt.lr = lr_q;
            state.q_opt.step(&mut params, &grads)?;
        }
        StepRule::PlainGradient => sgd_step(&mut params, &grads, lr_q)?,
    }
    let params = commit(params, ctx)?;
    state.q.set_params(&params)?;
    Ok(l_q)
}

struct ProbeTape {
    g: Graph,
    value: Var,
    g_vars: Vec<Var>,
    q_vars: Vec<Var>,
}

fn probe_tape(
    p: &Classifier,
    generator: &Generator,
    q: &QuantizedClassifier,
    probe: &Probe,
    trainable: bool,
) -> Result<ProbeTape> {
    let mut g = Graph::new();
    let g_vars = generator.bind(&mut g, trainable);
    // batch statistics without running-stat updates: R depends on θ_g only
    let (x, _) = generator.forward(&mut g, &probe.z, &probe.y, &g_vars, BnMode::Batch)?;
    let p_vars = p.bind(&mut g, false);
    let zp = p.forward(&mut g, x, &p_vars, BnMode::Eval)?.logits;
    let q_vars = q.bind(&mut g, trainable);
    let zq = q.forward(&mut g, x, &q_vars)?;
    let value = game_value_var(&mut g, zp, zq, 1.0)?.value;
    Ok(ProbeTape {
        g,
        value,
        g_vars,
        q_vars,
    })
}

/// `R(θ_g, θ_q)` on the probe batch.
pub fn probe_value(
    p: &Classifier,
    generator: &Generator,
    q: &QuantizedClassifier,
    probe: &Probe,
) -> Result<f64> {
    let t = probe_tape(p, generator, q, probe, false)?;
    check_finite("R", t.g.item(t.value), "probe")
}

/// `∇R` on the probe batch w.r.t. `[θ_g; θ_q]` (straight-through for Q).
pub fn probe_gradients(
    p: &Classifier,
    generator: &Generator,
    q: &QuantizedClassifier,
    probe: &Probe,
) -> Result<Vec<Tensor>> {
    let mut t = probe_tape(p, generator, q, probe, true)?;
    t.g.backward(t.value)?;
    Ok(t.g_vars
        .iter()
        .chain(&t.q_vars)
        .map(|&v| t.g.grad(v))
        .collect())
}

/// Balance gap of one iteration from its three parameter snapshots.
pub fn balance_gap(
    p: &Classifier,
    probe: &Probe,
    before: (&Generator, &QuantizedClassifier),
    generator_after: &Generator,
    q_after: &QuantizedClassifier,
) -> Result<BalanceGapRecord> {
    let r_before = probe_value(p, before.0, before.1, probe)?;
    let r_mid = probe_value(p, generator_after, before.1, probe)?;
    let r_after = probe_value(p, generator_after, q_after, probe)?;
    Ok(BalanceGapRecord::new(r_before, r_mid, r_after))
}

fn concat_params(generator: &Generator, q: &QuantizedClassifier) -> Vec<Tensor> {
    let mut v = generator.params();
    v.extend(q.params());
    v
}

/// One full iteration: maximization, minimization and the balance gap.
pub fn run_iteration(
    state: &mut GameState,
    p: &Classifier,
    hp: &HyperParams,
    epoch: usize,
    iter: usize,
) -> Result<IterationLog> {
    let g1 = state.generator.clone();
    let q1 = state.q.clone();
    let grads = if hp.track_lipschitz {
        Some(probe_gradients(p, &g1, &q1, &state.probe)?)
    } else {
        None
    };
    let r_before = probe_value(p, &g1, &q1, &state.probe)?;

    let gen = maximization_step(state, p, hp)?;
    let r_mid = probe_value(p, &state.generator, &q1, &state.probe)?;
    let l_q = minimization_step(state, p, hp, hp.lr_q_at(epoch))?;
    let r_after = probe_value(p, &state.generator, &state.q, &state.probe)?;
    let gap = BalanceGapRecord::new(r_before, r_mid, r_after);

    let lipschitz = match grads {
        Some(grads) => Some(lipschitz_diagnostic(
            &gap,
            &grads,
            &concat_params(&g1, &q1),
            &concat_params(&state.generator, &state.q),
            hp.lipschitz_curvature,
        )?),
        None => None,
    };

    Ok(IterationLog {
        epoch,
        iter,
        l_ds: gen.l_ds,
        l_as: gen.l_as,
        l_b: gen.l_b,
        l_bns: gen.l_bns,
        l_g: gen.l_g,
        l_q,
        gap,
        mean_h_norm: gen.mean_h_norm,
        q_acc: None,
        lipschitz,
    })
}

/// Plays `hp.epochs × hp.iters_per_epoch` iterations, appending to
/// `state.logs`. On a numerical failure the error is returned and `state`
/// still holds the last parameters that produced finite values.
pub fn run_game(
    state: &mut GameState,
    p: &Classifier,
    hp: &HyperParams,
    test: Option<&LabeledSet>,
) -> Result<()> {
    hp.validate()?;
    for epoch in 0..hp.epochs {
        for iter in 0..hp.iters_per_epoch {
            let mut log = run_iteration(state, p, hp, epoch, iter)?;
            let last_iter = iter + 1 == hp.iters_per_epoch;
            if let Some(test) = test {
                if last_iter && hp.eval_period > 0 && (epoch + 1) % hp.eval_period == 0 {
                    log.q_acc = Some(state.q.accuracy(test)?);
                }
            }
            state.logs.push(log);
        }
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
