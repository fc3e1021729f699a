//! Straight-line scalar oracles and small fixtures shared by the
//! integration tests. Nothing here calls into the library's math.

#![allow(dead_code)]

use adasg::engine::{RngStream, Tensor};
use adasg::nets::{pretrain_p, Classifier, GeneratorSpec, NetworkSpec, PretrainConfig};
use adasg::xp::{synth_dataset, DatasetSpec};

/// `p_i = 1 / Σ_j exp(z_j − z_i)`.
pub fn softmax_row(z: &[f64], tau: f64) -> Vec<f64> {
    z.iter()
        .map(|zi| 1.0 / z.iter().map(|zj| ((zj - zi) / tau).exp()).sum::<f64>())
        .collect()
}

pub fn entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    h
}

/// `−ln softmax(z)_y` as `logsumexp(z) − z_y`.
pub fn cross_entropy_row(z: &[f64], y: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[y]
}

pub fn diff_rows(zp: &[Vec<f64>], zq: &[Vec<f64>], sign: f64) -> Vec<Vec<f64>> {
    zp.iter()
        .zip(zq)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + sign * y).collect())
        .collect()
}

/// Raw entropies, `H'` and the batch minimum for `softmax((z_p − z_q)/τ)`.
pub fn normalized_entropies(
    zp: &[Vec<f64>],
    zq: &[Vec<f64>],
    tau: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let c = zp[0].len() as f64;
    let h: Vec<f64> = diff_rows(zp, zq, -1.0)
        .iter()
        .map(|d| entropy(&softmax_row(d, tau)))
        .collect();
    let mut min = h[0];
    for &v in &h {
        if v < min {
            min = v;
        }
    }
    let denom = c.ln() - min + 1e-8;
    let hn = h.iter().map(|v| (v - min) / denom).collect();
    (h, hn, min)
}

pub fn game_value(zp: &[Vec<f64>], zq: &[Vec<f64>], tau: f64) -> f64 {
    let (_, hn, _) = normalized_entropies(zp, zq, tau);
    let mut s = 0.0;
    for v in &hn {
        s += 1.0 - v;
    }
    s / hn.len() as f64
}

pub fn loss_ce(z: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut s = 0.0;
    for (row, &y) in z.iter().zip(labels) {
        s += cross_entropy_row(row, y);
    }
    s / labels.len() as f64
}

pub fn oracle_bound(hn: &[f64], lo: f64, hi: f64) -> f64 {
    let mut s = 0.0;
    for &h in hn {
        s += (lo - h).max(0.0) + (h - hi).max(0.0);
    }
    s / hn.len() as f64
}

/// `Σ ‖μ_g − μ‖² + ‖v_g − v‖²` over layers given as `(μ_g, v_g, μ, v)`.
pub fn oracle_bns(layers: &[(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)]) -> f64 {
    let mut s = 0.0;
    for (mg, vg, m, v) in layers {
        for i in 0..m.len() {
            s += (mg[i] - m[i]).powi(2) + (vg[i] - v[i]).powi(2);
        }
    }
    s
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.row_iter().map(<[f64]>::to_vec).collect()
}

pub fn random_logits(rng: &mut RngStream, batch: usize, classes: usize, scale: f64) -> Tensor {
    rng.gaussian(&[batch, classes]).map(|v| v * scale)
}

/// `ln C − entropy(softmax(d))` as `Σ_i p_i·ln(C·p_i)`, where
/// `C·p_i − 1 = Σ_j exp(d_j − m)·expm1(d_i − d_j) / Σ_j exp(d_j − m)`.
pub fn divergence_from_uniform(d: &[f64]) -> f64 {
    let m = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = d.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = w.iter().sum();
    let mut kl = 0.0;
    for i in 0..d.len() {
        let mut u_minus_1 = 0.0;
        for j in 0..d.len() {
            u_minus_1 += w[j] * (d[i] - d[j]).exp_m1();
        }
        kl += w[i] / s * (u_minus_1 / s).ln_1p();
    }
    kl
}

/// `|a − b| / max(|a|, |b|)`, zero when both are zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// A small P pretrained for a few epochs so its BN running statistics are
/// not the identity.
pub fn small_p(seed: u64) -> Classifier {
    let data = DatasetSpec {
        classes: 4,
        input_dim: 6,
        samples_per_class: 40,
        ..DatasetSpec::default()
    };
    let (train, test) = synth_dataset(&data, seed).unwrap();
    let mut rng = RngStream::seeded(seed);
    let mut p = Classifier::build(NetworkSpec::mlp(6, &[12, 10], 4), &mut rng).unwrap();
    let cfg = PretrainConfig {
        epochs: 3,
        lr: 1e-2,
        batch_size: 16,
    };
    pretrain_p(&mut p, &train, &test, &cfg, &mut rng).unwrap();
    p
}

pub fn small_generator_spec() -> GeneratorSpec {
    GeneratorSpec {
        noise_dim: 5,
        classes: 4,
        hidden: vec![9],
        output_dim: 6,
    }
}

/// Worst relative error of each quantity against its oracle over
/// `batches` random batches, as `(name, error)`.
pub fn oracle_sweep(batches: usize, seed: u64) -> Vec<(&'static str, f64)> {
    use adasg::adapt::{
        adaptability_report, game_value as lib_game_value, game_value_var, LogitsPair,
    };
    use adasg::engine::{BatchNorm, Graph};
    use adasg::game::{
        calibration_loss, generator_loss, loss_as, loss_bns, loss_bound, loss_ds, BnsSigma,
        LossWeights,
    };
    use adasg::nets::BnTap;

    let names = [
        "p_ds",
        "p_as",
        "h_info",
        "h_norm",
        "h_c",
        "game_value",
        "L_ds",
        "L_as",
        "L_b",
        "L_BNS",
        "L_Q",
        "L_G",
    ];
    let mut worst = vec![0.0f64; names.len()];
    let mut rng = RngStream::seeded(seed);
    for _ in 0..batches {
        let b = 2 + rng.below(11);
        let c = 2 + rng.below(9);
        let scale = rng.uniform(0.1, 5.0);
        let tau = rng.uniform(0.5, 3.0);
        let lo = rng.uniform(0.0, 0.5);
        let hi = rng.uniform(lo + 0.05, 1.0);
        let zp_t = random_logits(&mut rng, b, c, scale);
        let zq_t = random_logits(&mut rng, b, c, scale);
        let labels: Vec<usize> = (0..b).map(|_| rng.below(c)).collect();
        let (zp, zq) = (rows(&zp_t), rows(&zq_t));

        let lp = LogitsPair::new(zp_t.clone(), zq_t.clone()).unwrap();
        let rep = adaptability_report(&lp).unwrap();
        let (h_o, hn_o, _) = normalized_entropies(&zp, &zq, 1.0);
        let min_o = h_o.iter().copied().fold(f64::INFINITY, f64::min);
        let ln_c = (c as f64).ln();
        let mut k = 0;
        let mut track = |k: usize, a: f64, o: f64| worst[k] = worst[k].max(rel_err(a, o));

        for (i, (d, s)) in diff_rows(&zp, &zq, -1.0)
            .iter()
            .zip(diff_rows(&zp, &zq, 1.0))
            .enumerate()
        {
            let pds = softmax_row(d, 1.0);
            let pas = softmax_row(&s, 1.0);
            let norm = pds.iter().map(|v| v * v).sum::<f64>().sqrt();
            let big_h = (divergence_from_uniform(d) + 1e-8) / (ln_c - min_o + 1e-8);
            for j in 0..c {
                track(0, rep.p_ds.at(i, j), pds[j]);
                track(1, rep.p_as.at(i, j), pas[j]);
                track(4, rep.h_c.at(i, j), pds[j] / norm * big_h);
            }
            track(2, rep.h_info[i], h_o[i]);
            track(3, rep.h_norm[i], hn_o[i]);
        }
        k += 5;
        track(k, lib_game_value(&lp), game_value(&zp, &zq, 1.0));

        let mut g = Graph::new();
        let zpv = g.constant(zp_t.clone());
        let zqv = g.constant(zq_t.clone());
        let y = Tensor::one_hot(&labels, c);
        let lds = loss_ds(&mut g, zpv, zqv, &y).unwrap();
        let las = loss_as(&mut g, zpv, zqv, &y).unwrap();
        let terms = game_value_var(&mut g, zpv, zqv, 1.0).unwrap();
        let lb = loss_bound(&mut g, terms.h_norm, lo, hi).unwrap();
        let lq = calibration_loss(&mut g, zpv, zqv, tau).unwrap();

        // BN statistics: two layers of random width
        let mut taps = Vec::new();
        let mut bns = Vec::new();
        let mut stats = Vec::new();
        for _ in 0..2 {
            let w = 1 + rng.below(8);
            let mut bn = BatchNorm::new(w);
            bn.running_mean = rng.gaussian(&[w]);
            bn.running_var = rng.gaussian(&[w]).map(|v| v.abs() + 0.1);
            let mg = rng.gaussian(&[w]);
            let vg = rng.gaussian(&[w]).map(|v| v.abs() + 0.1);
            stats.push((
                mg.data().to_vec(),
                vg.data().to_vec(),
                bn.running_mean.data().to_vec(),
                bn.running_var.data().to_vec(),
            ));
            let mean = g.constant(mg);
            let var = g.constant(vg);
            taps.push(BnTap { mean, var });
            bns.push(bn);
        }
        let bn_refs: Vec<&BatchNorm> = bns.iter().collect();
        let lbns = loss_bns(&mut g, &taps, &bn_refs, BnsSigma::Variance).unwrap();
        let w = LossWeights {
            alpha_ds: rng.uniform(0.0, 1.0),
            alpha_as: rng.uniform(0.0, 1.0),
            beta: rng.uniform(0.0, 2.0),
            gamma: rng.uniform(0.0, 2.0),
        };
        let lg = generator_loss(
            &mut g,
            zpv,
            zqv,
            &y,
            &taps,
            &bn_refs,
            w,
            lo,
            hi,
            BnsSigma::Variance,
        )
        .unwrap();

        let o_ds = loss_ce(&diff_rows(&zp, &zq, -1.0), &labels);
        let o_as = loss_ce(&diff_rows(&zp, &zq, 1.0), &labels);
        let o_b = oracle_bound(&hn_o, lo, hi);
        let o_bns = oracle_bns(&stats);
        let o_q = game_value(&zp, &zq, tau);
        let o_g = w.alpha_ds * o_ds + w.alpha_as * o_as + w.beta * o_b + w.gamma * o_bns;
        for (a, o) in [
            (g.item(lds), o_ds),
            (g.item(las), o_as),
            (g.item(lb), o_b),
            (g.item(lbns), o_bns),
            (g.item(lq), o_q),
            (g.item(lg.total), o_g),
        ] {
            k += 1;
            track(k, a, o);
        }
    }
    names.into_iter().zip(worst).collect()
}

/// Loss names checked by [`gradient_sweep`], in output order.
pub const GRADIENT_LOSSES: [&str; 6] = ["L_ds", "L_as", "L_b", "L_BNS", "L_G", "L_Q"];

struct GradFixture {
    p: Classifier,
    q: Classifier,
    generator: adasg::nets::Generator,
    z: Tensor,
    y: Tensor,
    weights: adasg::game::LossWeights,
    lo: f64,
    hi: f64,
    tau: f64,
}

/// G-side losses `[L_ds, L_as, L_b, L_BNS, L_G]`. With `frozen = Some(min)`
/// the batch minimum inside `H'` is the given constant, which is the
/// function the tape differentiates.
fn g_side(
    fx: &GradFixture,
    gen: &adasg::nets::Generator,
    frozen: Option<f64>,
) -> ([f64; 5], f64, Vec<Tensor>) {
    use adasg::adapt::entropy_of_logits;
    use adasg::engine::{BnMode, Graph};
    use adasg::game::{generator_loss, loss_as, loss_bns, loss_bound, loss_ds, BnsSigma};

    let mut g = Graph::new();
    let gv = gen.bind(&mut g, true);
    let (x, _) = gen
        .forward(&mut g, &fx.z, &fx.y, &gv, BnMode::Train)
        .unwrap();
    let pv = fx.p.bind(&mut g, false);
    let pf = fx.p.forward(&mut g, x, &pv, BnMode::Eval).unwrap();
    let qv = fx.q.bind(&mut g, false);
    let zq = fx.q.forward(&mut g, x, &qv, BnMode::Eval).unwrap().logits;
    let bns = fx.p.bn_layers();
    let total = generator_loss(
        &mut g,
        pf.logits,
        zq,
        &fx.y,
        &pf.taps,
        &bns,
        fx.weights,
        fx.lo,
        fx.hi,
        BnsSigma::Variance,
    )
    .unwrap();
    let _ = total;
    let diff = g.sub(pf.logits, zq).unwrap();
    let h = entropy_of_logits(&mut g, diff, 1.0).unwrap();
    let min = frozen.unwrap_or_else(|| g.value(h).min());
    let c = fx.p.spec.classes as f64;
    let hc = g.affine(h, 1.0, -min);
    let hn = g.affine(hc, 1.0 / (c.ln() - min + 1e-8), 0.0);
    let lds = loss_ds(&mut g, pf.logits, zq, &fx.y).unwrap();
    let las = loss_as(&mut g, pf.logits, zq, &fx.y).unwrap();
    let lb = loss_bound(&mut g, hn, fx.lo, fx.hi).unwrap();
    let lbns = loss_bns(&mut g, &pf.taps, &bns, BnsSigma::Variance).unwrap();
    let w = fx.weights;
    let vals = [g.item(lds), g.item(las), g.item(lb), g.item(lbns)];
    let lg = w.alpha_ds * vals[0] + w.alpha_as * vals[1] + w.beta * vals[2] + w.gamma * vals[3];
    if frozen.is_some() {
        return ([vals[0], vals[1], vals[2], vals[3], lg], min, Vec::new());
    }
    // analytic: one backward per loss on fresh tapes
    let mut grads = Vec::new();
    for k in 0..5 {
        let mut g2 = Graph::new();
        let gv2 = gen.bind(&mut g2, true);
        let (x2, _) = gen
            .forward(&mut g2, &fx.z, &fx.y, &gv2, BnMode::Train)
            .unwrap();
        let pv2 = fx.p.bind(&mut g2, false);
        let pf2 = fx.p.forward(&mut g2, x2, &pv2, BnMode::Eval).unwrap();
        let qv2 = fx.q.bind(&mut g2, false);
        let zq2 =
            fx.q.forward(&mut g2, x2, &qv2, BnMode::Eval)
                .unwrap()
                .logits;
        let out = generator_loss(
            &mut g2,
            pf2.logits,
            zq2,
            &fx.y,
            &pf2.taps,
            &bns,
            fx.weights,
            fx.lo,
            fx.hi,
            BnsSigma::Variance,
        )
        .unwrap();
        let loss = [out.l_ds, out.l_as, out.l_b, out.l_bns, out.total][k];
        g2.backward(loss).unwrap();
        grads.push(Tensor::vector(
            gv2.iter().flat_map(|&v| g2.grad(v).into_data()).collect(),
        ));
    }
    ([vals[0], vals[1], vals[2], vals[3], lg], min, grads)
}

fn q_side(fx: &GradFixture, q: &Classifier, frozen: Option<f64>) -> (f64, f64, Option<Tensor>) {
    use adasg::adapt::entropy_of_logits;
    use adasg::engine::{BnMode, Graph};
    use adasg::game::calibration_loss;

    let x = fx.generator.sample(&fx.z, &fx.y, BnMode::Batch).unwrap();
    let mut g = Graph::new();
    let xv = g.constant(x);
    let pv = fx.p.bind(&mut g, false);
    let zp = fx.p.forward(&mut g, xv, &pv, BnMode::Eval).unwrap().logits;
    let qv = q.bind(&mut g, true);
    let zq = q.forward(&mut g, xv, &qv, BnMode::Eval).unwrap().logits;
    match frozen {
        None => {
            let diff = g.sub(zp, zq).unwrap();
            let h = entropy_of_logits(&mut g, diff, fx.tau).unwrap();
            let min = g.value(h).min();
            let l = calibration_loss(&mut g, zp, zq, fx.tau).unwrap();
            let v = g.item(l);
            g.backward(l).unwrap();
            let grad = Tensor::vector(qv.iter().flat_map(|&v| g.grad(v).into_data()).collect());
            (v, min, Some(grad))
        }
        Some(min) => {
            let diff = g.sub(zp, zq).unwrap();
            let h = entropy_of_logits(&mut g, diff, fx.tau).unwrap();
            let c = fx.p.spec.classes as f64;
            let hc = g.affine(h, 1.0, -min);
            let hn = g.affine(hc, 1.0 / (c.ln() - min + 1e-8), 0.0);
            let one_minus = g.affine(hn, -1.0, 1.0);
            let l = g.mean(one_minus);
            (g.item(l), min, None)
        }
    }
}

fn perturbed(params: &[Tensor], flat: usize, delta: f64) -> Vec<Tensor> {
    let mut out = params.to_vec();
    let mut k = flat;
    for t in &mut out {
        if k < t.len() {
            t.data_mut()[k] += delta;
            return out;
        }
        k -= t.len();
    }
    panic!("flat index out of range")
}

/// Coordinates with `|grad| ≥ 1e-6`, sampled without replacement.
fn pick(rng: &mut RngStream, grad: &Tensor, n: usize) -> Vec<usize> {
    let candidates: Vec<usize> = (0..grad.len())
        .filter(|&i| grad.data()[i].abs() >= 1e-6)
        .collect();
    let order = rng.permutation(candidates.len());
    order.into_iter().take(n).map(|i| candidates[i]).collect()
}

/// Central differences with `h = 1e-5` against the tape for each loss in
/// [`GRADIENT_LOSSES`]: `(name, worst relative error, coordinates checked)`.
pub fn gradient_sweep(
    configs: usize,
    per_loss: usize,
    seed: u64,
) -> Vec<(&'static str, f64, usize)> {
    use adasg::game::LossWeights;
    use adasg::nets::Generator;

    const H: f64 = 1e-5;
    let mut worst = [0.0f64; 6];
    let mut counts = [0usize; 6];
    for cfg in 0..configs as u64 {
        let s = seed.wrapping_mul(1000).wrapping_add(cfg);
        let mut rng = RngStream::seeded(s);
        let p = small_p(s);
        let q = Classifier::build(p.spec.clone(), &mut rng).unwrap();
        let generator = Generator::build(small_generator_spec(), &mut rng).unwrap();
        let b = 6 + rng.below(6);
        let z = rng.gaussian(&[b, 5]);
        let labels: Vec<usize> = (0..b).map(|_| rng.below(4)).collect();
        let fx = GradFixture {
            p,
            q,
            generator,
            z,
            y: Tensor::one_hot(&labels, 4),
            weights: LossWeights {
                alpha_ds: rng.uniform(0.05, 1.0),
                alpha_as: rng.uniform(0.05, 1.0),
                beta: rng.uniform(0.5, 2.0),
                gamma: rng.uniform(0.5, 2.0),
            },
            lo: rng.uniform(0.2, 0.5),
            hi: rng.uniform(0.55, 0.9),
            tau: rng.uniform(0.5, 3.0),
        };

        let (_, min, grads) = g_side(&fx, &fx.generator, None);
        let base = fx.generator.params();
        for (k, grad) in grads.iter().enumerate() {
            for idx in pick(&mut rng, grad, per_loss) {
                let mut gp = fx.generator.clone();
                gp.set_params(&perturbed(&base, idx, H)).unwrap();
                let mut gm = fx.generator.clone();
                gm.set_params(&perturbed(&base, idx, -H)).unwrap();
                let fp = g_side(&fx, &gp, Some(min)).0[k];
                let fm = g_side(&fx, &gm, Some(min)).0[k];
                let fd = (fp - fm) / (2.0 * H);
                worst[k] = worst[k].max(rel_err(grad.data()[idx], fd));
                counts[k] += 1;
            }
        }

        let (_, min, grad) = q_side(&fx, &fx.q, None);
        let grad = grad.unwrap();
        let base = fx.q.params();
        for idx in pick(&mut rng, &grad, per_loss) {
            let mut qp = fx.q.clone();
            qp.set_params(&perturbed(&base, idx, H)).unwrap();
            let mut qm = fx.q.clone();
            qm.set_params(&perturbed(&base, idx, -H)).unwrap();
            let fd = (q_side(&fx, &qp, Some(min)).0 - q_side(&fx, &qm, Some(min)).0) / (2.0 * H);
            worst[5] = worst[5].max(rel_err(grad.data()[idx], fd));
            counts[5] += 1;
        }
    }
    (0..6)
        .map(|k| (GRADIENT_LOSSES[k], worst[k], counts[k]))
        .collect()
}

/// Outcome of [`quantizer_sweep`].
#[derive(Debug, Default)]
pub struct QuantizerSweep {
    pub tensors: usize,
    pub code_range_violations: usize,
    pub monotonicity_violations: usize,
    pub round_trip_violations: usize,
    pub endpoint_violations: usize,
    /// Largest `|θ − deq(q(θ))| / step` seen.
    pub worst_round_trip_in_steps: f64,
}

/// Random tensors of 2 to 32 entries at every width in `2..=8`.
pub fn quantizer_sweep(tensors: usize, seed: u64) -> QuantizerSweep {
    use adasg::quant::{code_range, dequantize, quantize};
    let mut rng = RngStream::seeded(seed);
    let mut out = QuantizerSweep::default();
    for i in 0..tensors {
        let bits = 2 + (i % 7) as u32;
        let n = 2 + rng.below(31);
        let scale = 10f64.powf(rng.uniform(-3.0, 3.0));
        let offset = rng.uniform(-5.0, 5.0) * scale;
        let t = rng.gaussian(&[n]).map(|v| v * scale + offset);
        let q = quantize(&t, bits).unwrap();
        let back = dequantize(&q);
        let (lo, hi) = code_range(bits);
        let (min, max) = (t.min(), t.max());
        let step = (max - min) / ((1u64 << bits) - 1) as f64;
        out.tensors += 1;
        out.code_range_violations += q.codes.iter().filter(|&&c| c < lo || c > hi).count();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| t.data()[a].total_cmp(&t.data()[b]));
        out.monotonicity_violations += order
            .windows(2)
            .filter(|w| q.codes[w[0]] > q.codes[w[1]])
            .count();

        let slack = 1e-12 * min.abs().max(max.abs());
        for (a, b) in t.data().iter().zip(back.data()) {
            let e = (a - b).abs();
            if step > 0.0 {
                out.worst_round_trip_in_steps = out.worst_round_trip_in_steps.max(e / step);
            }
            if e > step / 2.0 + slack {
                out.round_trip_violations += 1;
            }
        }
        for (k, &v) in t.data().iter().enumerate() {
            if v == min && (q.codes[k] != lo || back.data()[k] != min) {
                out.endpoint_violations += 1;
            }
            if v == max && (q.codes[k] != hi || back.data()[k] != max) {
                out.endpoint_violations += 1;
            }
        }
    }
    out
}

/// A full experiment small enough to run in well under a second.
pub fn tiny_config(seed: u64) -> adasg::xp::ExperimentConfig {
    let mut cfg = adasg::xp::ExperimentConfig::default();
    cfg.seed = seed;
    cfg.dataset = DatasetSpec {
        classes: 4,
        input_dim: 6,
        samples_per_class: 40,
        ..DatasetSpec::default()
    };
    cfg.network = NetworkSpec::mlp(6, &[12, 10], 4);
    cfg.generator = small_generator_spec();
    cfg.pretrain = PretrainConfig {
        epochs: 3,
        lr: 1e-2,
        batch_size: 16,
    };
    cfg.game.epochs = 2;
    cfg.game.iters_per_epoch = 5;
    cfg.game.batch_size = 8;
    cfg.game.probe_size = 16;
    cfg.game.eval_period = 1;
    cfg
}

/// A fresh, empty scratch directory under the target's temp area.
pub fn scratch_dir(name: &str) -> std::path::PathBuf {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
