use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary op lines up with the left one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rhs is one row repeated over every row of lhs.
    Row,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Div(Var, Var, Broadcast),
    MatMul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Square(Var),
    Softmax(Var, f64),
    LogSoftmax(Var, f64),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ColMean(Var),
    StraightThrough(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the node index is already a
/// topological order and `backward` is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, zeros if `backward` never reached it.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros_like(&node.value))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, value: Tensor, op: Op) -> Var {
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, rg, op)
    }

    fn broadcast_kind(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            return Ok(Broadcast::Same);
        }
        let row_like = match sb {
            [n] => sa.len() == 2 && *n == sa[1],
            [1, n] => sa.len() == 2 && *n == sa[1],
            _ => false,
        };
        if row_like {
            Ok(Broadcast::Row)
        } else {
            Err(Error::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: fn(Var, Var, Broadcast) -> Op,
    ) -> Result<Var> {
        let kind = self.broadcast_kind(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let cols = vb.len();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match kind {
                    Broadcast::Same => vb.data()[i],
                    Broadcast::Row => vb.data()[i % cols],
                };
                f(x, y)
            })
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        Ok(self.push(value, rg, make(a, b, kind)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::Domain {
                op: "div",
                detail: "divisor contains zero".into(),
            });
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let shape_err = || Error::ShapeMismatch {
            op: "matmul",
            lhs: va.shape().to_vec(),
            rhs: vb.shape().to_vec(),
        };
        let (m, k) = match va.shape() {
            [m, k] => (*m, *k),
            _ => return Err(shape_err()),
        };
        let n = match vb.shape() {
            [k2, n] if *k2 == k => *n,
            [k2] if *k2 == k => 1,
            _ => return Err(shape_err()),
        };
        let out = matmul_raw(va.data(), vb.data(), m, k, n);
        let shape = if vb.shape().len() == 1 {
            vec![m]
        } else {
            vec![m, n]
        };
        let value = Tensor::new(shape, out)?;
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.unary(x, value, Op::Affine(x, scale))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.unary(x, value, Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        self.unary(x, value, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain {
                op: "ln",
                detail: "non-positive argument".into(),
            });
        }
        let value = self.value(x).map(f64::ln);
        Ok(self.unary(x, value, Op::Ln(x)))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| v < 0.0) {
            return Err(Error::Domain {
                op: "sqrt",
                detail: "negative argument".into(),
            });
        }
        let value = self.value(x).map(f64::sqrt);
        Ok(self.unary(x, value, Op::Sqrt(x)))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.unary(x, value, Op::Square(x))
    }

    /// Row-wise `softmax(z / temperature)`.
    pub fn softmax(&mut self, z: Var, temperature: f64) -> Result<Var> {
        check_temperature(temperature)?;
        let value = softmax_rows(self.value(z), temperature, false);
        Ok(self.unary(z, value, Op::Softmax(z, temperature)))
    }

    /// Row-wise `log softmax(z / temperature)`.
    pub fn log_softmax(&mut self, z: Var, temperature: f64) -> Result<Var> {
        check_temperature(temperature)?;
        let value = softmax_rows(self.value(z), temperature, true);
        Ok(self.unary(z, value, Op::LogSoftmax(z, temperature)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.unary(x, value, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = Tensor::scalar(v.sum() / v.len() as f64);
        self.unary(x, value, Op::Mean(x))
    }

    /// `[m, n] -> [m]`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data: Vec<f64> = v.row_iter().map(|r| r.iter().sum()).collect();
        let value = Tensor::vector(data);
        self.unary(x, value, Op::RowSum(x))
    }

    /// `[m, n] -> [n]`, averaging over the batch dimension.
    pub fn col_mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let (m, n) = (v.rows(), v.cols());
        let mut acc = vec![0.0; n];
        for row in v.row_iter() {
            for (a, &r) in acc.iter_mut().zip(row) {
                *a += r;
            }
        }
        acc.iter_mut().for_each(|a| *a /= m as f64);
        let value = Tensor::vector(acc);
        self.unary(x, value, Op::ColMean(x))
    }

    /// Records `forward` as the value of `x` while passing gradients straight
    /// through in the backward pass.
    pub fn straight_through(&mut self, x: Var, forward: Tensor) -> Result<Var> {
        if forward.shape() != self.value(x).shape() {
            return Err(Error::ShapeMismatch {
                op: "straight_through",
                lhs: self.value(x).shape().to_vec(),
                rhs: forward.shape().to_vec(),
            });
        }
        Ok(self.unary(x, forward, Op::StraightThrough(x)))
    }

    /// Accumulates `d loss / d leaf` into every trainable leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let (requires_grad, op) = (self.nodes[i].requires_grad, self.nodes[i].op);
            if !requires_grad {
                continue;
            }
            match op {
                Op::Leaf => {
                    let slot = &mut self.nodes[i].grad;
                    match slot {
                        Some(acc) => acc.add_assign(&g),
                        None => *slot = Some(g),
                    }
                }
                op => self.propagate(op, i, &g, &mut grads),
            }
        }
        Ok(())
    }

    fn propagate(&self, op: Op, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        let mut send = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match op {
            Op::Leaf => unreachable!(),
            Op::Add(a, b, k) => {
                send(a, g.clone());
                send(b, reduce_like(g.clone(), k, self.value(b)));
            }
            Op::Sub(a, b, k) => {
                send(a, g.clone());
                send(b, reduce_like(g.map(|v| -v), k, self.value(b)));
            }
            Op::Mul(a, b, k) => {
                let (va, vb) = (self.value(a), self.value(b));
                send(a, zip_bcast(g, vb, k, |gi, y| gi * y));
                let gb = zip_same(g, va, |gi, x| gi * x);
                send(b, reduce_like(gb, k, vb));
            }
            Op::Div(a, b, k) => {
                let (va, vb) = (self.value(a), self.value(b));
                send(a, zip_bcast(g, vb, k, |gi, y| gi / y));
                let ga_over_b = zip_bcast(g, vb, k, |gi, y| gi / (y * y));
                let gb = zip_same(&ga_over_b, va, |q, x| -q * x);
                send(b, reduce_like(gb, k, vb));
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let n = if vb.shape().len() == 1 {
                    1
                } else {
                    vb.shape()[1]
                };
                // dA = G Bᵀ, dB = Aᵀ G
                if self.nodes[a.0].requires_grad {
                    let ga = matmul_rhs_t(g.data(), vb.data(), m, n, k);
                    send(a, Tensor::new(va.shape().to_vec(), ga).expect("shape"));
                }
                if self.nodes[b.0].requires_grad {
                    let gb = matmul_lhs_t(va.data(), g.data(), m, k, n);
                    send(b, Tensor::new(vb.shape().to_vec(), gb).expect("shape"));
                }
            }
            Op::Affine(x, s) => send(x, g.map(|v| v * s)),
            Op::Relu(x) => {
                let vx = self.value(x);
                send(x, zip_same(g, vx, |gi, xi| if xi > 0.0 { gi } else { 0.0 }));
            }
            Op::Exp(x) => send(x, zip_same(g, out, |gi, yi| gi * yi)),
            Op::Ln(x) => send(x, zip_same(g, self.value(x), |gi, xi| gi / xi)),
            Op::Sqrt(x) => send(x, zip_same(g, out, |gi, yi| 0.5 * gi / yi)),
            Op::Square(x) => send(x, zip_same(g, self.value(x), |gi, xi| 2.0 * gi * xi)),
            Op::Softmax(z, t) => {
                let mut d = Vec::with_capacity(out.len());
                for (yr, gr) in out.row_iter().zip(g.row_iter()) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    d.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot) / t));
                }
                send(z, Tensor::new(out.shape().to_vec(), d).expect("shape"));
            }
            Op::LogSoftmax(z, t) => {
                let mut d = Vec::with_capacity(out.len());
                for (lr, gr) in out.row_iter().zip(g.row_iter()) {
                    let gsum: f64 = gr.iter().sum();
                    d.extend(lr.iter().zip(gr).map(|(l, g)| (g - l.exp() * gsum) / t));
                }
                send(z, Tensor::new(out.shape().to_vec(), d).expect("shape"));
            }
            Op::Sum(x) => send(x, Tensor::full(self.value(x).shape(), g.item())),
            Op::Mean(x) => {
                let vx = self.value(x);
                send(x, Tensor::full(vx.shape(), g.item() / vx.len() as f64));
            }
            Op::RowSum(x) => {
                let vx = self.value(x);
                let n = vx.cols();
                let d = (0..vx.len()).map(|i| g.data()[i / n]).collect();
                send(x, Tensor::new(vx.shape().to_vec(), d).expect("shape"));
            }
            Op::ColMean(x) => {
                let vx = self.value(x);
                let (m, n) = (vx.rows(), vx.cols());
                let d = (0..vx.len()).map(|i| g.data()[i % n] / m as f64).collect();
                send(x, Tensor::new(vx.shape().to_vec(), d).expect("shape"));
            }
            Op::StraightThrough(x) => send(x, g.clone()),
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(t))
    }
}

/// Max-subtracted softmax (or log-softmax) of each row of `z / t`.
pub(crate) fn softmax_rows(z: &Tensor, t: f64, log: bool) -> Tensor {
    let mut out = Vec::with_capacity(z.len());
    for row in z.row_iter() {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b / t));
        let sum: f64 = row.iter().map(|&v| (v / t - m).exp()).sum();
        if log {
            let lse = sum.ln();
            out.extend(row.iter().map(|&v| v / t - m - lse));
        } else {
            out.extend(row.iter().map(|&v| (v / t - m).exp() / sum));
        }
    }
    Tensor::new(z.shape().to_vec(), out).expect("shape preserved")
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `G Bᵀ` for `G: [m, n]`, `B: [k, n]`.
fn matmul_rhs_t(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `Aᵀ G` for `A: [m, k]`, `G: [m, n]`.
fn matmul_lhs_t(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, &gv) in out[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *o += aip * gv;
            }
        }
    }
    out
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let d = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), d).expect("shape")
}

fn zip_bcast(a: &Tensor, b: &Tensor, k: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    match k {
        Broadcast::Same => zip_same(a, b, f),
        Broadcast::Row => {
            let n = b.len();
            let d = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, b.data()[i % n]))
                .collect();
            Tensor::new(a.shape().to_vec(), d).expect("shape")
        }
    }
}

/// Sums a full-size gradient back down to the broadcast operand's shape.
fn reduce_like(g: Tensor, k: Broadcast, target: &Tensor) -> Tensor {
    match k {
        Broadcast::Same => g,
        Broadcast::Row => {
            let n = target.len();
            let mut acc = vec![0.0; n];
            for row in g.row_iter() {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            Tensor::new(target.shape().to_vec(), acc).expect("shape")
        }
    }
}
