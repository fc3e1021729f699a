mod common;

use std::fs;
use std::process::Command;

use adasg::engine::BnMode;
use adasg::engine::RngStream;
use adasg::game::{
    ablation_config, maximization_step, minimization_step, run_game, run_iteration, GameState,
    IterationLog, LossTerm, StepRule,
};
use adasg::nets::{init_q_from_p, load_checkpoint, Generator, Network};
use adasg::xp::{
    ablation_sweep, emit_metrics, pretrain_stage, read_metrics, run_experiment,
    run_from_pretrained, ExperimentConfig, METRICS_HEADER,
};
use common::*;

fn game_state(cfg: &ExperimentConfig, pre: &adasg::xp::Pretrained) -> GameState {
    let q = init_q_from_p(&pre.p, cfg.quant).unwrap();
    let generator = Generator::build(
        cfg.generator.clone(),
        &mut RngStream::seeded(cfg.seed + 100),
    )
    .unwrap();
    GameState::new(generator, q, &cfg.game, cfg.seed).unwrap()
}

#[test]
fn checkpoints_reproduce_reported_accuracy() {
    let dir = scratch_dir("ckpt");
    let mut cfg = tiny_config(4);
    cfg.out_dir = Some(dir.clone());
    let s = run_experiment(&cfg).unwrap();
    let pre = pretrain_stage(&cfg).unwrap();

    let Network::FullPrecision(p) = load_checkpoint(dir.join("p.ckpt")).unwrap() else {
        panic!("p.ckpt holds another network kind")
    };
    let Network::Quantized(q) = load_checkpoint(dir.join("q.ckpt")).unwrap() else {
        panic!("q.ckpt holds another network kind")
    };
    assert!(matches!(
        load_checkpoint(dir.join("g.ckpt")).unwrap(),
        Network::Generator(_)
    ));
    assert_eq!(p.accuracy(&pre.test).unwrap(), s.p_acc);
    assert_eq!(q.accuracy(&pre.test).unwrap(), s.q_final_acc);
    for f in ["config.toml", "metrics.csv", "summary.toml"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let reloaded = ExperimentConfig::load(dir.join("config.toml")).unwrap();
    assert_eq!(reloaded, cfg);
}

#[test]
fn metrics_round_trip() {
    let cfg = tiny_config(1);
    let pre = pretrain_stage(&cfg).unwrap();
    let mut state = game_state(&cfg, &pre);
    run_game(&mut state, &pre.p, &cfg.game, Some(&pre.test)).unwrap();

    let dir = scratch_dir("metrics");
    let path = dir.join("metrics.csv");
    emit_metrics(&state.logs, &path).unwrap();
    let rows = read_metrics(&path).unwrap();
    assert_eq!(rows.len(), state.logs.len());
    for (row, log) in rows.iter().zip(&state.logs) {
        assert_eq!((row.epoch, row.iter), (log.epoch, log.iter));
        let expect = [
            log.l_ds,
            log.l_as,
            log.l_b,
            log.l_bns,
            log.l_g,
            log.l_q,
            log.gap.bg,
            log.gap.delta_g,
            log.gap.delta_q,
            log.mean_h_norm,
        ];
        for (a, b) in row.values.iter().zip(expect) {
            assert!(rel_err(*a, b) < 1e-12, "{a} vs {b}");
        }
        assert_eq!(row.q_acc, log.q_acc);
    }
    assert!(rows.iter().any(|r| r.q_acc.is_some()));

    let empty = dir.join("empty.csv");
    emit_metrics(&[] as &[IterationLog], &empty).unwrap();
    assert_eq!(
        fs::read_to_string(&empty).unwrap().trim_end(),
        METRICS_HEADER.join(",")
    );
    assert!(read_metrics(&empty).unwrap().is_empty());
}

#[test]
fn same_seed_same_trajectory() {
    let run = |seed| {
        let cfg = tiny_config(seed);
        let pre = pretrain_stage(&cfg).unwrap();
        let mut state = game_state(&cfg, &pre);
        run_game(&mut state, &pre.p, &cfg.game, None).unwrap();
        (state.logs, state.q)
    };
    let (a, qa) = run(2);
    let (b, qb) = run(2);
    assert_eq!(a, b);
    assert_eq!(qa, qb);
    let (c, _) = run(3);
    assert_ne!(a, c);
}

#[test]
fn zero_learning_rates_leave_value_unchanged() {
    let mut cfg = tiny_config(5);
    cfg.game.lr_g = 0.0;
    cfg.game.lr_q = 0.0;
    cfg.game.weight_decay_q = 0.0;
    cfg.game.step_rule = StepRule::PlainGradient;
    let pre = pretrain_stage(&cfg).unwrap();
    let mut state = game_state(&cfg, &pre);
    for it in 0..4 {
        let log = run_iteration(&mut state, &pre.p, &cfg.game, 0, it).unwrap();
        // G's running statistics still move, but the probe runs in batch mode
        assert_eq!(log.gap.bg, 0.0);
        assert_eq!(log.gap.delta_g, 0.0);
        assert_eq!(log.gap.delta_q, 0.0);
    }
}

#[test]
fn tiny_generator_step_does_not_lower_value() {
    let mut cfg = tiny_config(6);
    cfg.game.lr_g = 1e-7;
    cfg.game.step_rule = StepRule::PlainGradient;
    // a pure ascent on R: only the terms that push Q and P apart
    cfg.game.alpha_as = 0.0;
    cfg.game.beta = 0.0;
    cfg.game.gamma = 0.0;
    let pre = pretrain_stage(&cfg).unwrap();
    let mut state = game_state(&cfg, &pre);
    for it in 0..10 {
        let log = run_iteration(&mut state, &pre.p, &cfg.game, 0, it).unwrap();
        assert!(log.gap.delta_g >= -1e-8, "delta_g = {:e}", log.gap.delta_g);
    }
}

#[test]
fn balance_gap_identity_holds_every_iteration() {
    let cfg = tiny_config(7);
    let pre = pretrain_stage(&cfg).unwrap();
    let mut state = game_state(&cfg, &pre);
    run_game(&mut state, &pre.p, &cfg.game, None).unwrap();
    for log in &state.logs {
        assert!(log.gap.identity_residual() <= 1e-12);
        assert!(rel_err(log.gap.bg, log.gap.r_after - log.gap.r_before) == 0.0);
    }
}

#[test]
fn abort_keeps_partial_outputs() {
    let dir = scratch_dir("abort");
    let mut cfg = tiny_config(8);
    cfg.game.lr_g = 1e200;
    cfg.game.step_rule = StepRule::PlainGradient;
    cfg.out_dir = Some(dir.clone());
    let pre = pretrain_stage(&cfg).unwrap();
    let err = run_from_pretrained(&cfg, &pre).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    assert!(dir.join("metrics.csv").is_file());
    assert!(dir.join("q.ckpt").is_file());
    assert!(!dir.join("summary.toml").exists());
}

#[test]
fn duplicate_ablation_rows_agree() {
    let cfg = tiny_config(9);
    let row = vec![LossTerm::Ds, LossTerm::B, LossTerm::Bns];
    let table = ablation_sweep(&cfg, &[row.clone(), row], &[9, 10]).unwrap();
    assert_eq!(table.rows[0].results, table.rows[1].results);
    assert!(table.rows[0].results.iter().all(Result::is_ok));
    let csv = table.to_csv();
    assert!(
        csv.starts_with("L_ds,L_as,L_b,L_BNS,median,seed_9,seed_10"),
        "{csv}"
    );
}

fn adasg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adasg"))
}

fn write_tiny_config(dir: &std::path::Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join("in.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn cli_exit_codes() {
    let dir = scratch_dir("cli");
    let cfg_path = write_tiny_config(&dir, &tiny_config(0));

    let out = adasg()
        .args(["print-config", "--bits", "4", "--tau", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let printed = ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((printed.quant.bits, printed.game.tau), (4, 2.0));

    let config_errors: [&[&str]; 5] = [
        &["print-config", "--bits", "1"],
        &["print-config", "--lambda-l", "0.9", "--lambda-u", "0.2"],
        &["print-config", "--tau", "0"],
        &["print-config", "--config", "/nonexistent/adasg.toml"],
        &["print-config", "--disable", "ds,xyz"],
    ];
    for args in config_errors {
        let status = adasg().args(args).output().unwrap().status;
        assert_eq!(status.code(), Some(2), "{args:?}");
    }

    let out_dir = dir.join("train");
    let status = adasg()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .args(["--epochs", "1", "--disable", "as", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let written = ExperimentConfig::load(out_dir.join("config.toml")).unwrap();
    assert_eq!((written.game.epochs, written.game.alpha_as), (1, 0.0));

    let mut bad = tiny_config(0);
    bad.game.lr_g = 1e200;
    bad.game.step_rule = StepRule::PlainGradient;
    let bad_path = dir.join("bad.toml");
    fs::write(&bad_path, bad.to_toml()).unwrap();
    let status = adasg()
        .args(["train", "--config"])
        .arg(&bad_path)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(3));

    let status = adasg()
        .args(["quantize-eval", "--config"])
        .arg(&cfg_path)
        .args(["--checkpoint"])
        .arg(out_dir.join("p.ckpt"))
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
}

#[test]
fn each_step_moves_only_its_own_player() {
    let cfg = tiny_config(11);
    let pre = pretrain_stage(&cfg).unwrap();
    let mut state = game_state(&cfg, &pre);
    for _ in 0..3 {
        let q_before = state.q.clone();
        maximization_step(&mut state, &pre.p, &cfg.game).unwrap();
        assert_eq!(state.q, q_before);
        let g_before = state.generator.clone();
        minimization_step(&mut state, &pre.p, &cfg.game, cfg.game.lr_q).unwrap();
        assert_eq!(state.generator, g_before);
        assert_ne!(state.q, q_before);
    }
}

#[test]
fn logged_generator_loss_recomposes() {
    let mut cfg = tiny_config(12);
    cfg.game.alpha_ds = 0.3;
    cfg.game.alpha_as = 0.07;
    cfg.game.beta = 1.5;
    cfg.game.gamma = 0.25;
    let pre = pretrain_stage(&cfg).unwrap();
    let mut state = game_state(&cfg, &pre);
    run_game(&mut state, &pre.p, &cfg.game, None).unwrap();
    let hp = &cfg.game;
    for l in &state.logs {
        let expect =
            hp.alpha_ds * l.l_ds + hp.alpha_as * l.l_as + hp.beta * l.l_b + hp.gamma * l.l_bns;
        assert_eq!(l.l_g, expect);
    }
}

#[test]
fn calibration_loss_at_unit_temperature_is_game_value() {
    let cfg = tiny_config(13);
    let pre = pretrain_stage(&cfg).unwrap();
    let mut state = game_state(&cfg, &pre);
    for _ in 0..3 {
        maximization_step(&mut state, &pre.p, &cfg.game).unwrap();
        // replay the minimization batch from a copy of the batch stream
        let mut rng = state.rng.clone();
        let spec = &state.generator.spec;
        let z = rng.gaussian(&[cfg.game.batch_size, spec.noise_dim]);
        let labels: Vec<usize> = (0..cfg.game.batch_size)
            .map(|_| rng.below(spec.classes))
            .collect();
        let y = adasg::engine::Tensor::one_hot(&labels, spec.classes);
        let x = state.generator.sample(&z, &y, BnMode::Batch).unwrap();
        let zp = rows(&pre.p.logits(&x).unwrap());
        let zq = rows(&state.q.logits(&x).unwrap());

        let l_q = minimization_step(&mut state, &pre.p, &cfg.game, cfg.game.lr_q).unwrap();
        assert!((l_q - game_value(&zp, &zq, 1.0)).abs() <= 1e-12, "{l_q}");
    }
}

#[test]
fn null_objective_leaves_generator_alone() {
    let mut cfg = tiny_config(14);
    cfg.game = ablation_config(&cfg.game, &LossTerm::ALL);
    let pre = pretrain_stage(&cfg).unwrap();
    let mut state = game_state(&cfg, &pre);
    let params = state.generator.params();
    run_game(&mut state, &pre.p, &cfg.game, None).unwrap();
    assert!(state.logs.iter().all(|l| l.l_g == 0.0));
    assert_eq!(state.generator.params(), params);
}

#[test]
fn tight_clusters_are_separable() {
    let mut cfg = tiny_config(15);
    cfg.dataset.spread = 1e-3;
    cfg.pretrain.epochs = 10;
    assert_eq!(pretrain_stage(&cfg).unwrap().p_acc, 1.0);
}
