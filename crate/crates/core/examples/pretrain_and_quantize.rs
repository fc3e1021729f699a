//! Trains P on the synthetic task, then measures the accuracy left after
//! quantizing it at each width, with no calibration.
//!
//! `cargo run --release --example pretrain_and_quantize -- [seed]`

use adasg::nets::{load_checkpoint, save_checkpoint, Network};
use adasg::quant::QuantConfig;
use adasg::xp::{pretrain_stage, quantize_eval, ExperimentConfig};

fn main() -> adasg::Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(seed) = std::env::args().nth(1) {
        cfg.seed = seed
            .parse()
            .map_err(|_| adasg::Error::Config("seed must be an integer".into()))?;
    }
    let pre = pretrain_stage(&cfg)?;
    println!("P test accuracy: {:.2}%", 100.0 * pre.p_acc);
    for bits in 2..=8 {
        let (_, r) = quantize_eval(&pre, QuantConfig::new(bits)?)?;
        println!(
            "{bits}-bit Q before calibration: {:.2}%",
            100.0 * r.q_init_acc
        );
    }

    let path = std::env::temp_dir().join("adasg-example-p.ckpt");
    save_checkpoint(&Network::FullPrecision(pre.p.clone()), &path)?;
    let Network::FullPrecision(p) = load_checkpoint(&path)? else {
        unreachable!("saved a full-precision network")
    };
    println!(
        "reloaded {} -> {:.2}%",
        path.display(),
        100.0 * p.accuracy(&pre.test)?
    );
    Ok(())
}
