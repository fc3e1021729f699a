//! Full pipeline: pretrain P, quantize, play the game, write metrics and
//! checkpoints.
//!
//! `cargo run --release --example game -- [epochs] [bits] [out_dir]`

use std::path::PathBuf;

use adasg::xp::{read_metrics, run_experiment, ExperimentConfig};

fn main() -> adasg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::default();
    cfg.game.epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(5);
    cfg.quant.bits = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let out = args
        .get(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("adasg-example-game"));
    cfg.out_dir = Some(out.clone());
    cfg.game.eval_period = 1;

    let s = run_experiment(&cfg)?;
    println!(
        "P {:.2}%  Q-init {:.2}%  Q-final {:.2}%",
        100.0 * s.p_acc,
        100.0 * s.q_init_acc,
        100.0 * s.q_final_acc
    );
    println!(
        "mean |BG|: first quartile {:.3e}, last quartile {:.3e}",
        s.mean_abs_bg_first_quartile, s.mean_abs_bg_last_quartile
    );
    for row in read_metrics(out.join("metrics.csv"))?
        .iter()
        .filter(|r| r.q_acc.is_some())
    {
        println!(
            "epoch {:>3}  L_G {:>10.4}  L_Q {:.4}  Q {:.2}%",
            row.epoch,
            row.values[4],
            row.values[5],
            100.0 * row.q_acc.unwrap_or(0.0)
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
