//! Loss-term ablation: one row per subset of generator losses, final Q
//! accuracy per seed.
//!
//! `cargo run --release --example ablation -- [epochs] [seeds]`

use adasg::xp::{ablation_rows, ablation_sweep, ExperimentConfig};

fn main() -> adasg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::default();
    cfg.game.epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(3);
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let seeds: Vec<u64> = (0..seeds).collect();
    let table = ablation_sweep(&cfg, &ablation_rows(), &seeds)?;
    print!("{}", table.to_csv());
    Ok(())
}
