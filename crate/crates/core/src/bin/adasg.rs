use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adasg::game::{parse_loss_terms, LossTerm};
use adasg::nets::{load_checkpoint, save_checkpoint, Network};
use adasg::xp::{
    ablation_rows, ablation_sweep, pretrain_stage, quantize_eval, run_experiment, synth_dataset,
    ExperimentConfig, Overrides, Pretrained,
};
use adasg::{Error, Result};

#[derive(Parser)]
#[command(
    name = "adasg",
    version,
    about = "Adaptability-aware data-free quantization at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the full-precision network P on the synthetic task.
    Pretrain(Common),
    /// Quantize P and report accuracy before any calibration.
    QuantizeEval {
        #[command(flatten)]
        common: Common,
        /// Load P from this checkpoint instead of pretraining it.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Pretrain, quantize and play the game.
    Train(Common),
    /// Run the loss-term ablation over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Number of seeds, counting up from the configured seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Print the effective configuration with every default filled in.
    PrintConfig(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "lambda-l")]
    lambda_l: Option<f64>,
    #[arg(long = "lambda-u")]
    lambda_u: Option<f64>,
    /// Comma-separated loss terms to switch off: ds, as, b, bns.
    #[arg(long)]
    disable: Option<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let disable: Vec<LossTerm> = match &self.disable {
            Some(s) => parse_loss_terms(s)?,
            None => Vec::new(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            bits: self.bits,
            epochs: self.epochs,
            tau: self.tau,
            lambda_l: self.lambda_l,
            lambda_u: self.lambda_u,
            out: self.out.clone(),
            disable,
        })?;
        Ok(cfg)
    }
}

fn print_toml<T: serde::Serialize>(value: &T) {
    print!(
        "{}",
        toml::to_string(value).expect("plain records serialize")
    );
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(c) => {
            let cfg = c.config()?;
            let pre = pretrain_stage(&cfg)?;
            if let Some(dir) = &cfg.out_dir {
                write_config(dir, &cfg)?;
                save_checkpoint(&Network::FullPrecision(pre.p.clone()), dir.join("p.ckpt"))?;
            }
            println!("p_acc = {}", pre.p_acc);
        }
        Command::QuantizeEval { common, checkpoint } => {
            let cfg = common.config()?;
            let pre = match checkpoint {
                Some(path) => {
                    let Network::FullPrecision(p) = load_checkpoint(&path)? else {
                        return Err(Error::Config(format!(
                            "{} is not a full-precision checkpoint",
                            path.display()
                        )));
                    };
                    let (train, test) = synth_dataset(&cfg.dataset, cfg.seed)?;
                    let p_acc = p.accuracy(&test)?;
                    Pretrained {
                        p,
                        train,
                        test,
                        p_acc,
                    }
                }
                None => pretrain_stage(&cfg)?,
            };
            let (q, report) = quantize_eval(&pre, cfg.quant)?;
            if let Some(dir) = &cfg.out_dir {
                write_config(dir, &cfg)?;
                save_checkpoint(&Network::Quantized(q), dir.join("q_init.ckpt"))?;
            }
            print_toml(&report);
        }
        Command::Train(c) => {
            let summary = run_experiment(&c.config()?)?;
            print_toml(&summary);
        }
        Command::Ablate { common, seeds } => {
            let cfg = common.config()?;
            let seeds: Vec<u64> = (0..seeds.max(1)).map(|k| cfg.seed + k).collect();
            let table = ablation_sweep(&cfg, &ablation_rows(), &seeds)?;
            print!("{}", table.to_csv());
        }
        Command::PrintConfig(c) => print!("{}", c.config()?.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
