//! Pairwise ℓ1 distances between the disagreement distributions of a
//! generated batch, before and after a short game.

use adasg::adapt::{disagreement_distribution, LogitsPair};
use adasg::engine::{BnMode, RngStream, Tensor};
use adasg::game::{run_game, GameState};
use adasg::nets::{init_q_from_p, Generator};
use adasg::xp::{emit_similarity, pretrain_stage, ExperimentConfig};

fn main() -> adasg::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.game.epochs = 2;
    let pre = pretrain_stage(&cfg)?;
    let q = init_q_from_p(&pre.p, cfg.quant)?;
    let generator = Generator::build(cfg.generator.clone(), &mut RngStream::seeded(cfg.seed))?;
    let mut state = GameState::new(generator, q, &cfg.game, cfg.seed)?;

    let mut rng = RngStream::seeded(1);
    let z = rng.gaussian(&[20, cfg.generator.noise_dim]);
    let labels: Vec<usize> = (0..20).map(|i| i % cfg.generator.classes).collect();
    let y = Tensor::one_hot(&labels, cfg.generator.classes);

    let dir = std::env::temp_dir();
    for stage in ["before", "after"] {
        if stage == "after" {
            run_game(&mut state, &pre.p, &cfg.game, None)?;
        }
        let x = state.generator.sample(&z, &y, BnMode::Batch)?;
        let lp = LogitsPair::new(pre.p.logits(&x)?, state.q.logits(&x)?)?;
        let path = dir.join(format!("adasg-similarity-{stage}.csv"));
        emit_similarity(&disagreement_distribution(&lp), &path)?;
        println!("{stage}: {}", path.display());
    }
    Ok(())
}
