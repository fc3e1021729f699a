use super::Tensor;
use crate::error::{Error, Result};

fn check_shapes(op: &'static str, params: &[Tensor], other: &[Tensor]) -> Result<()> {
    if params.len() != other.len() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: vec![params.len()],
            rhs: vec![other.len()],
        });
    }
    for (p, o) in params.iter().zip(other) {
        if p.shape() != o.shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: p.shape().to_vec(),
                rhs: o.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: params.iter().map(Tensor::zeros_like).collect(),
            v: params.iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes("adam_step", params, grads)?;
        check_shapes("adam_step", params, &self.m)?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gi = gi + self.weight_decay * *pi;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// SGD with Nesterov momentum and L2 weight decay folded into the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdNesterovState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub step: u64,
    velocity: Vec<Tensor>,
}

impl SgdNesterovState {
    pub fn new(params: &[Tensor], lr: f64, momentum: f64, weight_decay: f64) -> Self {
        SgdNesterovState {
            lr,
            momentum,
            weight_decay,
            step: 0,
            velocity: params.iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes("sgd_nesterov_step", params, grads)?;
        check_shapes("sgd_nesterov_step", params, &self.velocity)?;
        self.step += 1;
        for ((p, g), buf) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            for ((pi, &gi), bi) in p.data_mut().iter_mut().zip(g.data()).zip(buf.data_mut()) {
                let d = gi + self.weight_decay * *pi;
                *bi = self.momentum * *bi + d;
                *pi -= self.lr * (d + self.momentum * *bi);
            }
        }
        Ok(())
    }
}

/// Plain `p -= lr * g`, used for first-order checks.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
    check_shapes("sgd_step", params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pi, &gi) in p.data_mut().iter_mut().zip(g.data()) {
            *pi -= lr * gi;
        }
    }
    Ok(())
}
