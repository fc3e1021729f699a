//! Experiment harness: synthetic task, configuration, the full
//! pretrain → quantize → game pipeline, metrics files and ablation sweeps.

mod dataset;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use dataset::{synth_dataset, DatasetSpec};
pub use metrics::{emit_metrics, emit_similarity, read_metrics, MetricsRow, METRICS_HEADER};

use crate::engine::RngStream;
use crate::error::{Error, Result};
use crate::game::{ablation_config, run_game, GameState, HyperParams, LossTerm};
use crate::nets::{
    init_q_from_p, pretrain_p, save_checkpoint, Classifier, Generator, GeneratorSpec, LabeledSet,
    Network, NetworkSpec, PretrainConfig, QuantizedClassifier,
};
use crate::quant::QuantConfig;

const STREAM_P_INIT: u64 = 2;
const STREAM_PRETRAIN: u64 = 3;
const STREAM_G_INIT: u64 = 4;

/// Everything a run depends on besides the build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub network: NetworkSpec,
    pub generator: GeneratorSpec,
    pub pretrain: PretrainConfig,
    pub quant: QuantConfig,
    pub game: HyperParams,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            dataset: DatasetSpec::default(),
            network: NetworkSpec::default(),
            generator: GeneratorSpec::default(),
            pretrain: PretrainConfig::default(),
            quant: QuantConfig {
                bits: 3,
                quantize_input: false,
            },
            game: HyperParams {
                lr_q: 1e-3,
                epochs: 40,
                lr_decay_period: 30,
                ..HyperParams::default()
            },
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.network.validate()?;
        self.generator.validate_against(&self.network)?;
        if self.dataset.input_dim != self.network.input_dim
            || self.dataset.classes != self.network.classes
        {
            return Err(Error::config(
                "dataset and network disagree on input dim or class count",
            ));
        }
        self.quant.validate()?;
        self.game.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Every field, defaults included, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(bits) = o.bits {
            self.quant.bits = bits;
        }
        if let Some(epochs) = o.epochs {
            self.game.epochs = epochs;
        }
        if let Some(tau) = o.tau {
            self.game.tau = tau;
        }
        if let Some(l) = o.lambda_l {
            self.game.lambda_l = l;
        }
        if let Some(u) = o.lambda_u {
            self.game.lambda_u = u;
        }
        if let Some(out) = &o.out {
            self.out_dir = Some(out.clone());
        }
        self.game = ablation_config(&self.game, &o.disable);
        self.validate()
    }
}

/// Command-line adjustments layered over a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub bits: Option<u32>,
    pub epochs: Option<usize>,
    pub tau: Option<f64>,
    pub lambda_l: Option<f64>,
    pub lambda_u: Option<f64>,
    pub out: Option<PathBuf>,
    pub disable: Vec<LossTerm>,
}

/// P trained on the synthetic task, with its data.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub p: Classifier,
    pub train: LabeledSet,
    pub test: LabeledSet,
    pub p_acc: f64,
}

/// Builds the dataset and trains P. Depends only on the seed, dataset,
/// network and pretraining sections of `cfg`.
pub fn pretrain_stage(cfg: &ExperimentConfig) -> Result<Pretrained> {
    cfg.validate()?;
    let (train, test) = synth_dataset(&cfg.dataset, cfg.seed)?;
    let mut p = Classifier::build(
        cfg.network.clone(),
        &mut RngStream::derive(cfg.seed, STREAM_P_INIT),
    )?;
    let p_acc = pretrain_p(
        &mut p,
        &train,
        &test,
        &cfg.pretrain,
        &mut RngStream::derive(cfg.seed, STREAM_PRETRAIN),
    )?;
    Ok(Pretrained {
        p,
        train,
        test,
        p_acc,
    })
}

/// Accuracies of P and of its direct quantization, before any calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizeReport {
    pub bits: u32,
    pub p_acc: f64,
    pub q_init_acc: f64,
}

pub fn quantize_eval(
    pre: &Pretrained,
    quant: QuantConfig,
) -> Result<(QuantizedClassifier, QuantizeReport)> {
    let q = init_q_from_p(&pre.p, quant)?;
    let q_init_acc = q.accuracy(&pre.test)?;
    Ok((
        q,
        QuantizeReport {
            bits: quant.bits,
            p_acc: pre.p_acc,
            q_init_acc,
        },
    ))
}

/// Outcome of one full run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub bits: u32,
    pub iterations: usize,
    pub p_acc: f64,
    pub q_init_acc: f64,
    pub q_final_acc: f64,
    pub mean_abs_bg_first_quartile: f64,
    pub mean_abs_bg_last_quartile: f64,
    pub median_l_b_first_quartile: f64,
    pub median_l_b_last_quartile: f64,
}

/// Mean |BG| and median L_b over the first and last quarter of the
/// iterations, in that order.
pub fn quartile_stats(logs: &[crate::game::IterationLog]) -> (f64, f64, f64, f64) {
    let n = logs.len();
    let k = (n / 4).max(1).min(n);
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let first = &logs[..k];
    let last = &logs[n - k..];
    let mean_bg = |s: &[crate::game::IterationLog]| {
        s.iter().map(|l| l.gap.bg.abs()).sum::<f64>() / s.len() as f64
    };
    let med_lb =
        |s: &[crate::game::IterationLog]| median(&s.iter().map(|l| l.l_b).collect::<Vec<_>>());
    (mean_bg(first), mean_bg(last), med_lb(first), med_lb(last))
}

/// Median of a non-empty slice; the mean of the two middle values for even
/// lengths.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    state: &GameState,
    p: &Classifier,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    emit_metrics(&state.logs, dir.join("metrics.csv"))?;
    save_checkpoint(&Network::FullPrecision(p.clone()), dir.join("p.ckpt"))?;
    save_checkpoint(&Network::Quantized(state.q.clone()), dir.join("q.ckpt"))?;
    save_checkpoint(
        &Network::Generator(state.generator.clone()),
        dir.join("g.ckpt"),
    )?;
    Ok(())
}

/// Runs the game from an already pretrained P.
pub fn run_from_pretrained(cfg: &ExperimentConfig, pre: &Pretrained) -> Result<Summary> {
    cfg.validate()?;
    let (q, report) = quantize_eval(pre, cfg.quant)?;
    let generator = Generator::build(
        cfg.generator.clone(),
        &mut RngStream::derive(cfg.seed, STREAM_G_INIT),
    )?;
    let mut state = GameState::new(generator, q, &cfg.game, cfg.seed)?;
    let outcome = run_game(&mut state, &pre.p, &cfg.game, Some(&pre.test));
    if let Some(dir) = &cfg.out_dir {
        // partial outputs are kept when the game aborts
        write_outputs(dir, cfg, &state, &pre.p)?;
    }
    outcome?;
    let q_final_acc = state.q.accuracy(&pre.test)?;
    let (bg_first, bg_last, lb_first, lb_last) = quartile_stats(&state.logs);
    let summary = Summary {
        seed: cfg.seed,
        bits: cfg.quant.bits,
        iterations: state.iterations(),
        p_acc: report.p_acc,
        q_init_acc: report.q_init_acc,
        q_final_acc,
        mean_abs_bg_first_quartile: bg_first,
        mean_abs_bg_last_quartile: bg_last,
        median_l_b_first_quartile: lb_first,
        median_l_b_last_quartile: lb_last,
    };
    if let Some(dir) = &cfg.out_dir {
        let text = toml::to_string(&summary).expect("summary is representable");
        fs::write(dir.join("summary.toml"), text)?;
    }
    Ok(summary)
}

/// pretrain → quantize → game → evaluate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    let pre = pretrain_stage(cfg)?;
    run_from_pretrained(cfg, &pre)
}

/// The six standard loss subsets, as enabled terms, plus
/// the statistics-only baseline.
pub fn ablation_rows() -> Vec<Vec<LossTerm>> {
    use LossTerm::*;
    vec![
        vec![As, B, Bns],
        vec![Ds, B, Bns],
        vec![Ds, As, Bns],
        vec![B, Bns],
        vec![Ds, As, B],
        vec![Ds, As, B, Bns],
        vec![Bns],
    ]
}

/// One row of an ablation table.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub enabled: Vec<LossTerm>,
    /// Final Q accuracy per seed, or the error that stopped the run.
    pub results: Vec<std::result::Result<f64, String>>,
}

impl AblationRow {
    /// Median over the seeds that finished.
    pub fn median(&self) -> f64 {
        let ok: Vec<f64> = self
            .results
            .iter()
            .filter_map(|r| r.as_ref().ok().copied())
            .collect();
        median(&ok)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Check-mark columns followed by the median and per-seed accuracies.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = LossTerm::ALL.iter().map(|t| t.name().to_string()).collect();
        header.push("median".into());
        header.extend(self.seeds.iter().map(|s| format!("seed_{s}")));
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut cells: Vec<String> = LossTerm::ALL
                .iter()
                .map(|t| if row.enabled.contains(t) { "x" } else { "" }.to_string())
                .collect();
            cells.push(row.median().to_string());
            cells.extend(row.results.iter().map(|r| match r {
                Ok(a) => a.to_string(),
                Err(_) => "failed".into(),
            }));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Runs every row for every seed. P is pretrained once per seed and shared
/// by the rows. A failing run is recorded and the sweep moves on.
pub fn ablation_sweep(
    cfg: &ExperimentConfig,
    rows: &[Vec<LossTerm>],
    seeds: &[u64],
) -> Result<AblationTable> {
    cfg.validate()?;
    let mut table = AblationTable {
        seeds: seeds.to_vec(),
        rows: rows
            .iter()
            .map(|r| AblationRow {
                enabled: r.clone(),
                results: Vec::new(),
            })
            .collect(),
    };
    for &seed in seeds {
        let mut seed_cfg = cfg.clone();
        seed_cfg.seed = seed;
        let pre = pretrain_stage(&seed_cfg);
        for (i, row) in table.rows.iter_mut().enumerate() {
            let result = pre.as_ref().map_err(|e| e.to_string()).and_then(|pre| {
                let disabled: Vec<LossTerm> = LossTerm::ALL
                    .iter()
                    .copied()
                    .filter(|t| !row.enabled.contains(t))
                    .collect();
                let mut row_cfg = seed_cfg.clone();
                row_cfg.game = ablation_config(&cfg.game, &disabled);
                row_cfg.out_dir = cfg
                    .out_dir
                    .as_ref()
                    .map(|d| d.join(format!("row{i}_seed{seed}")));
                run_from_pretrained(&row_cfg, pre)
                    .map(|s| s.q_final_acc)
                    .map_err(|e| e.to_string())
            });
            row.results.push(result);
        }
    }
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("ablation.csv"), table.to_csv())?;
    }
    Ok(table)
}
