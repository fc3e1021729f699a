//! Plays a few iterations of the game and prints the balance gap, its two
//! halves and the first-order bound for each.

use adasg::engine::RngStream;
use adasg::game::{run_iteration, GameState};
use adasg::nets::{init_q_from_p, Generator};
use adasg::xp::{pretrain_stage, ExperimentConfig};

fn main() -> adasg::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.game.track_lipschitz = true;
    let pre = pretrain_stage(&cfg)?;
    let q = init_q_from_p(&pre.p, cfg.quant)?;
    let generator = Generator::build(cfg.generator.clone(), &mut RngStream::seeded(cfg.seed))?;
    let mut state = GameState::new(generator, q, &cfg.game, cfg.seed)?;

    println!("iter  r_before   delta_g     delta_q     bg          |bg-(dg-dq)|  grad*step");
    for it in 0..10 {
        let log = run_iteration(&mut state, &pre.p, &cfg.game, 0, it)?;
        let gap = log.gap;
        let bound = log.lipschitz.map_or(f64::NAN, |l| l.bound_product);
        println!(
            "{it:>4}  {:.6}  {:+.3e}  {:+.3e}  {:+.3e}  {:.1e}       {:.3e}",
            gap.r_before,
            gap.delta_g,
            gap.delta_q,
            gap.bg,
            gap.identity_residual(),
            bound
        );
        state.logs.push(log);
    }
    Ok(())
}
