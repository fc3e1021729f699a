//! Sample adaptability: how strongly a generated batch separates P from Q.
//!
//! For logits `z_p = P(x)` and `z_q = Q(x)` the disagreement distribution is
//! `p_ds = softmax(z_p − z_q)` and the agreement distribution
//! `p_as = softmax(z_p + z_q)`. The entropy of `p_ds` is maximal (`ln C`) when
//! Q matches P up to a constant shift and minimal when one class dominates
//! the difference. Entropies are min/max normalized within the batch
//!
//! ```text
//! H' = (h − min_batch h) / (ln C − min_batch h + ε),   H = 1 − H'
//! ```
//!
//! and the game value `R` is the batch mean of `H`. G tries to raise it, Q
//! to lower it. `min_batch h` and `ln C` are constants for differentiation.

use crate::engine::{softmax, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Guards the normalizer when every sample in the batch is perfectly aligned.
pub const NORMALIZATION_EPS: f64 = 1e-8;

/// Logits of P and Q on the same batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsPair {
    zp: Tensor,
    zq: Tensor,
}

impl LogitsPair {
    pub fn new(zp: Tensor, zq: Tensor) -> Result<Self> {
        if zp.shape() != zq.shape() || zp.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "logits_pair",
                lhs: zp.shape().to_vec(),
                rhs: zq.shape().to_vec(),
            });
        }
        if !zp.all_finite() || !zq.all_finite() {
            return Err(Error::non_finite("logit", "logits_pair"));
        }
        Ok(LogitsPair { zp, zq })
    }

    pub fn zp(&self) -> &Tensor {
        &self.zp
    }

    pub fn zq(&self) -> &Tensor {
        &self.zq
    }

    pub fn classes(&self) -> usize {
        self.zp.cols()
    }

    pub fn batch(&self) -> usize {
        self.zp.rows()
    }

    fn combined(&self, sign: f64) -> Tensor {
        let data = self
            .zp
            .data()
            .iter()
            .zip(self.zq.data())
            .map(|(p, q)| p + sign * q)
            .collect();
        Tensor::new(self.zp.shape().to_vec(), data).expect("validated shape")
    }
}

/// Everything measured about one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptabilityReport {
    pub p_ds: Tensor,
    pub p_as: Tensor,
    pub h_info: Vec<f64>,
    pub h_norm: Vec<f64>,
    pub h: Vec<f64>,
    pub h_c: Tensor,
    pub batch_min: f64,
    pub max_const: f64,
}

pub fn disagreement_distribution(lp: &LogitsPair) -> Tensor {
    softmax(&lp.combined(-1.0), 1.0).expect("unit temperature")
}

pub fn agreement_distribution(lp: &LogitsPair) -> Tensor {
    softmax(&lp.combined(1.0), 1.0).expect("unit temperature")
}

/// `Σ_c p(c)·ln(1/p(c))` per row, with `0·ln(1/0) = 0`.
pub fn info_entropy(p: &Tensor) -> Result<Vec<f64>> {
    p.row_iter()
        .enumerate()
        .map(|(row, r)| {
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || r.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::OffSimplex { row, sum });
            }
            Ok(r.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum())
        })
        .collect()
}

/// Returns `(H', batch_min)` for raw entropies over `classes` classes.
pub fn normalize_entropy(h_info: &[f64], classes: usize) -> (Vec<f64>, f64) {
    let min = h_info.iter().copied().fold(f64::INFINITY, f64::min);
    let denom = (classes as f64).ln() - min + NORMALIZATION_EPS;
    (h_info.iter().map(|&h| (h - min) / denom).collect(), min)
}

/// `H_C = p_ds / ‖p_ds‖₂ · H`, row by row.
pub fn adaptability_vector(p_ds: &Tensor, h: &[f64]) -> Tensor {
    let mut out = Vec::with_capacity(p_ds.len());
    for (row, &hr) in p_ds.row_iter().zip(h) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.extend(row.iter().map(|v| v / norm * hr));
    }
    Tensor::new(p_ds.shape().to_vec(), out).expect("shape preserved")
}

pub fn adaptability_report(lp: &LogitsPair) -> Result<AdaptabilityReport> {
    let p_ds = disagreement_distribution(lp);
    let p_as = agreement_distribution(lp);
    let h_info = info_entropy(&p_ds)?;
    let (h_norm, batch_min) = normalize_entropy(&h_info, lp.classes());
    let max_const = (lp.classes() as f64).ln();
    let denom = max_const - batch_min + NORMALIZATION_EPS;
    // 1 − H' rewritten as (ln C − h + ε)/denom, with ln C − h taken directly
    // so rows near ln C keep their relative precision
    let h: Vec<f64> = lp
        .combined(-1.0)
        .row_iter()
        .map(|d| (divergence_from_uniform(d) + NORMALIZATION_EPS) / denom)
        .collect();
    let h_c = adaptability_vector(&p_ds, &h);
    Ok(AdaptabilityReport {
        p_ds,
        p_as,
        h_info,
        h_norm,
        h,
        h_c,
        batch_min,
        max_const,
    })
}

/// `ln C − entropy(softmax(d))`, the KL divergence of the row's softmax from
/// uniform. `ln(C·p_i) = −ln(mean_j exp(d_j − d_i))` avoids the cancellation.
fn divergence_from_uniform(d: &[f64]) -> f64 {
    let c = d.len() as f64;
    let m = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = d.iter().map(|v| (v - m).exp()).sum();
    let kl: f64 = d
        .iter()
        .map(|&di| {
            let mean_expm1 = d.iter().map(|&dj| (dj - di).exp_m1()).sum::<f64>() / c;
            -(di - m).exp() / s * mean_expm1.ln_1p()
        })
        .sum();
    kl.max(0.0)
}

/// Per-row entropy of `softmax(logits / temperature)`, on the tape.
pub fn entropy_of_logits(g: &mut Graph, logits: Var, temperature: f64) -> Result<Var> {
    let p = g.softmax(logits, temperature)?;
    let log_p = g.log_softmax(logits, temperature)?;
    let plogp = g.mul(p, log_p)?;
    let s = g.row_sum(plogp);
    Ok(g.neg(s))
}

/// Batch-normalized entropy `H'` on the tape; the batch minimum is a constant.
pub fn normalized_entropy_var(g: &mut Graph, h_info: Var, classes: usize) -> (Var, f64) {
    let min = g.value(h_info).min();
    let denom = (classes as f64).ln() - min + NORMALIZATION_EPS;
    let centered = g.affine(h_info, 1.0, -min);
    (g.affine(centered, 1.0 / denom, 0.0), min)
}

/// Tape terms shared by the game value and the calibration loss.
#[derive(Clone, Copy, Debug)]
pub struct GameTerms {
    /// `mean(1 − H')`.
    pub value: Var,
    /// `H'` per sample.
    pub h_norm: Var,
}

/// `mean(1 − H'(softmax((z_p − z_q)/τ)))` on the tape.
pub fn game_value_var(g: &mut Graph, zp: Var, zq: Var, temperature: f64) -> Result<GameTerms> {
    let classes = g.value(zp).cols();
    let diff = g.sub(zp, zq)?;
    let h = entropy_of_logits(g, diff, temperature)?;
    let (h_norm, _) = normalized_entropy_var(g, h, classes);
    let one_minus = g.affine(h_norm, -1.0, 1.0);
    Ok(GameTerms {
        value: g.mean(one_minus),
        h_norm,
    })
}

/// Monte-Carlo estimate of `R(θ_g, θ_q)` on one batch.
pub fn game_value(lp: &LogitsPair) -> f64 {
    let mut g = Graph::new();
    let zp = g.constant(lp.zp.clone());
    let zq = g.constant(lp.zq.clone());
    let terms = game_value_var(&mut g, zp, zq, 1.0).expect("validated logits");
    g.item(terms.value)
}

/// Pairwise `ℓ1` distances between rows of `p_ds`.
pub fn similarity_matrix(p_ds: &Tensor) -> Result<Tensor> {
    let b = p_ds.rows();
    if b < 2 || p_ds.shape().len() != 2 {
        return Err(Error::DegenerateBatch(b));
    }
    let mut out = vec![0.0; b * b];
    for i in 0..b {
        for j in (i + 1)..b {
            let d: f64 = p_ds
                .row(i)
                .iter()
                .zip(p_ds.row(j))
                .map(|(a, c)| (a - c).abs())
                .sum();
            out[i * b + j] = d;
            out[j * b + i] = d;
        }
    }
    Tensor::matrix(b, b, out)
}

/// Change of the game value across one iteration, on a fixed probe batch.
///
/// `r_before = R(θ¹_g, θ¹_q)`, `r_mid = R(θ²_g, θ¹_q)`, `r_after = R(θ²_g, θ²_q)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalanceGapRecord {
    pub r_before: f64,
    pub r_mid: f64,
    pub r_after: f64,
    pub bg: f64,
    pub delta_g: f64,
    pub delta_q: f64,
}

impl BalanceGapRecord {
    pub fn new(r_before: f64, r_mid: f64, r_after: f64) -> Self {
        BalanceGapRecord {
            r_before,
            r_mid,
            r_after,
            bg: r_after - r_before,
            delta_g: r_mid - r_before,
            delta_q: r_mid - r_after,
        }
    }

    /// `|bg − (Δg − Δq)|`, zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        (self.bg - (self.delta_g - self.delta_q)).abs()
    }
}

/// First-order bound on the balance gap: `|BG| ≤ ‖∇R‖·‖Δθ‖ + O(‖Δθ‖²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzDiagnostic {
    pub grad_norm: f64,
    pub param_step_norm: f64,
    pub bound_product: f64,
    pub observed: f64,
    /// `observed − bound_product − c·‖Δθ‖²` exceeded zero.
    pub violated: bool,
}

/// `grads` are `∇R` at `before` for all of `[θ_g; θ_q]`, in the same order as
/// the parameter snapshots. `curvature` is the constant `c` of the
/// second-order slack.
pub fn lipschitz_diagnostic(
    record: &BalanceGapRecord,
    grads: &[Tensor],
    before: &[Tensor],
    after: &[Tensor],
    curvature: f64,
) -> Result<LipschitzDiagnostic> {
    if before.len() != after.len() || grads.len() != before.len() {
        return Err(Error::ShapeMismatch {
            op: "lipschitz_diagnostic",
            lhs: vec![before.len(), after.len()],
            rhs: vec![grads.len()],
        });
    }
    let mut step_sq = 0.0;
    for (a, b) in before.iter().zip(after) {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                op: "lipschitz_diagnostic",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        step_sq += a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (y - x).powi(2))
            .sum::<f64>();
    }
    let grad_norm = grads
        .iter()
        .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let param_step_norm = step_sq.sqrt();
    let bound_product = grad_norm * param_step_norm;
    let observed = record.bg.abs();
    Ok(LipschitzDiagnostic {
        grad_norm,
        param_step_norm,
        bound_product,
        observed,
        violated: observed > bound_product + curvature * step_sq,
    })
}
