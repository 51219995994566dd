//! Reverse-mode differentiation over dense arrays.
//!
//! Every op evaluates eagerly and appends a node. [`Tape::backward`] walks the
//! nodes in exact reverse order, so gradients are well defined for any DAG the
//! caller built. Custom ops supply their own vector-Jacobian product.

use super::kernels::{col2im, gemm, im2col, ConvGeom, MatRef};
use super::{Array, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product of a custom op: maps the output gradient to one
/// gradient per input, in input order.
pub type BackwardFn = Box<dyn Fn(&Array) -> Vec<Array> + Send>;

enum Op {
    Input,
    Param(String),
    MatMul(usize, usize),
    Conv2d {
        input: usize,
        kernel: usize,
        geom: ConvGeom,
        batch: usize,
        cols: Vec<f64>,
    },
    AddBias(usize, usize),
    Add(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    MeanPool(usize),
    BatchNorm {
        x: usize,
        inv_std: Vec<f64>,
    },
    L2Normalize {
        x: usize,
        norms: Vec<f64>,
    },
    SoftmaxXent {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(usize),
    Reshape(usize),
    Custom {
        inputs: Vec<usize>,
        backward: BackwardFn,
    },
}

struct Node {
    value: Array,
    op: Op,
}

/// Norm below which a vector cannot be normalized.
pub const NORM_EPS: f64 = 1e-12;

/// Variance offset in [`Tape::batch_norm`].
pub const BN_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, value: Array) -> Var {
        self.push(value, Op::Input)
    }

    /// Record a parameter leaf; its gradient flows back to `store` in [`backward`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let value = store.value(name)?.clone();
        Ok(self.push(value, Op::Param(name.to_string())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    /// Cross-correlation of `[C, H, W]` or `[B, C, H, W]` input with
    /// `[C_out, C, kh, kw]` kernels.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let x = self.value(input);
        let k = self.value(kernel);
        let (batch, geom) = conv_geom(x.shape(), k.shape(), stride, padding)?;
        let c_out = k.shape()[0];
        let p = geom.out_len();
        let total = batch * p;
        let mut cols = vec![0.0; geom.patch_len() * total];
        let plane = geom.channels * geom.height * geom.width;
        for b in 0..batch {
            im2col(&geom, &x.data()[b * plane..(b + 1) * plane], &mut cols, total, b * p);
        }
        let mut mat = vec![0.0; c_out * total];
        gemm(
            MatRef::row_major(k.data(), c_out, geom.patch_len()),
            MatRef::row_major(&cols, geom.patch_len(), total),
            &mut mat,
            0.0,
        );
        // [C_out, B*P] -> [B, C_out, P]
        let mut data = vec![0.0; c_out * total];
        for b in 0..batch {
            for c in 0..c_out {
                data[(b * c_out + c) * p..(b * c_out + c + 1) * p]
                    .copy_from_slice(&mat[c * total + b * p..c * total + (b + 1) * p]);
            }
        }
        let shape = if x.rank() == 3 {
            vec![c_out, geom.out_h, geom.out_w]
        } else {
            vec![batch, c_out, geom.out_h, geom.out_w]
        };
        let out = Array::new(shape, data)?;
        Ok(self.push(
            out,
            Op::Conv2d {
                input: input.0,
                kernel: kernel.0,
                geom,
                batch,
                cols,
            },
        ))
    }

    /// Add a per-channel bias: `[B, n] + [n]`, `[n] + [n]`, or `[B, C, H, W] + [C]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let (outer, channels, inner) = bias_layout(xv.shape(), bv.shape())?;
        let mut data = xv.data().to_vec();
        for o in 0..outer {
            for c in 0..channels {
                let off = (o * channels + c) * inner;
                let b = bv.data()[c];
                data[off..off + inner].iter_mut().for_each(|v| *v += b);
            }
        }
        let out = Array::new(xv.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddBias(x.0, bias.0)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Dimension {
                op: "add",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Array::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a.0, b.0)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x.0, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(out, Op::Relu(x.0))
    }

    /// Global mean over the trailing two (spatial) axes.
    pub fn mean_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() < 3 {
            return Err(Error::Shape(format!("mean_pool needs rank >= 3, got {s:?}")));
        }
        let hw = s[s.len() - 2] * s[s.len() - 1];
        let data: Vec<f64> = xv
            .data()
            .chunks_exact(hw)
            .map(|c| c.iter().sum::<f64>() / hw as f64)
            .collect();
        let out = Array::new(s[..s.len() - 2].to_vec(), data)?;
        Ok(self.push(out, Op::MeanPool(x.0)))
    }

    /// Normalize each channel of `[B, C, H, W]` to zero mean and unit
    /// variance using the statistics of this batch (no affine terms).
    pub fn batch_norm(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let [b, c, h, w] = *xv.shape() else {
            return Err(Error::Shape(format!("batch_norm needs rank 4, got {:?}", xv.shape())));
        };
        let hw = h * w;
        let n = (b * hw) as f64;
        let mut data = xv.data().to_vec();
        let mut inv_std = Vec::with_capacity(c);
        for ch in 0..c {
            let planes = || (0..b).map(move |i| (i * c + ch) * hw);
            let mean = planes().map(|o| data[o..o + hw].iter().sum::<f64>()).sum::<f64>() / n;
            let var = planes()
                .map(|o| data[o..o + hw].iter().map(|v| (v - mean).powi(2)).sum::<f64>())
                .sum::<f64>()
                / n;
            let is = 1.0 / (var + BN_EPS).sqrt();
            for o in planes() {
                data[o..o + hw].iter_mut().for_each(|v| *v = (*v - mean) * is);
            }
            inv_std.push(is);
        }
        let out = Array::new(xv.shape().to_vec(), data)?;
        Ok(self.push(out, Op::BatchNorm { x: x.0, inv_std }))
    }

    /// Scale each row (the last axis) to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let d = *xv.shape().last().unwrap_or(&1);
        let mut norms = Vec::with_capacity(xv.len() / d);
        let mut data = Vec::with_capacity(xv.len());
        for row in xv.data().chunks_exact(d) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n > NORM_EPS) {
                return Err(Error::DegenerateVector {
                    norm: n,
                    eps: NORM_EPS,
                });
            }
            norms.push(n);
            data.extend(row.iter().map(|v| v / n));
        }
        let out = Array::new(xv.shape().to_vec(), data)?;
        Ok(self.push(out, Op::L2Normalize { x: x.0, norms }))
    }

    /// Mean over rows of `-log softmax(logits)[label]`. Accepts `[C]` with one
    /// label or `[B, C]` with `B` labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let c = *lv.shape().last().unwrap_or(&0);
        let rows = lv.len() / c.max(1);
        if lv.rank() > 2 || rows != labels.len() {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                lhs: lv.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let mut probs = Vec::with_capacity(lv.len());
        let mut total = 0.0;
        for (row, &label) in lv.data().chunks_exact(c).zip(labels) {
            if label >= c {
                return Err(Error::Index { index: label, len: c });
            }
            let (lse, p) = log_softmax_parts(row);
            total += lse - row[label];
            probs.extend(p);
        }
        let out = Array::scalar(total / rows as f64);
        Ok(self.push(
            out,
            Op::SoftmaxXent {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Array::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x.0))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x.0)))
    }

    /// Record an op evaluated outside the tape together with its VJP.
    pub fn custom(&mut self, inputs: &[Var], value: Array, backward: BackwardFn) -> Var {
        self.push(
            value,
            Op::Custom {
                inputs: inputs.iter().map(|v| v.0).collect(),
                backward,
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Array>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array::full(self.value(loss).shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input | Op::Param(_) => {
                    // leaves keep their gradient for the caller
                    grads[id] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    let mut ga = vec![0.0; m * k];
                    gemm(
                        MatRef::row_major(g.data(), m, n),
                        MatRef::transposed(bv.data(), k, n),
                        &mut ga,
                        0.0,
                    );
                    let mut gb = vec![0.0; k * n];
                    gemm(
                        MatRef::transposed(av.data(), m, k),
                        MatRef::row_major(g.data(), m, n),
                        &mut gb,
                        0.0,
                    );
                    accumulate(&mut grads, *a, Array::new(vec![m, k], ga)?);
                    accumulate(&mut grads, *b, Array::new(vec![k, n], gb)?);
                }
                Op::Conv2d {
                    input,
                    kernel,
                    geom,
                    batch,
                    cols,
                } => {
                    let kv = &self.nodes[*kernel].value;
                    let c_out = kv.shape()[0];
                    let p = geom.out_len();
                    let total = batch * p;
                    let mut gmat = vec![0.0; c_out * total];
                    for b in 0..*batch {
                        for c in 0..c_out {
                            gmat[c * total + b * p..c * total + (b + 1) * p]
                                .copy_from_slice(&g.data()[(b * c_out + c) * p..(b * c_out + c + 1) * p]);
                        }
                    }
                    let kl = geom.patch_len();
                    let mut gk = vec![0.0; c_out * kl];
                    gemm(
                        MatRef::row_major(&gmat, c_out, total),
                        MatRef::transposed(cols, kl, total),
                        &mut gk,
                        0.0,
                    );
                    let mut gcols = vec![0.0; kl * total];
                    gemm(
                        MatRef::transposed(kv.data(), c_out, kl),
                        MatRef::row_major(&gmat, c_out, total),
                        &mut gcols,
                        0.0,
                    );
                    let xv = &self.nodes[*input].value;
                    let plane = geom.channels * geom.height * geom.width;
                    let mut gx = vec![0.0; xv.len()];
                    for b in 0..*batch {
                        col2im(geom, &gcols, total, b * p, &mut gx[b * plane..(b + 1) * plane]);
                    }
                    accumulate(&mut grads, *kernel, Array::new(kv.shape().to_vec(), gk)?);
                    accumulate(&mut grads, *input, Array::new(xv.shape().to_vec(), gx)?);
                }
                Op::AddBias(x, bias) => {
                    let bv = &self.nodes[*bias].value;
                    let (outer, channels, inner) = bias_layout(g.shape(), bv.shape())?;
                    let mut gb = vec![0.0; channels];
                    for o in 0..outer {
                        for (c, acc) in gb.iter_mut().enumerate() {
                            let off = (o * channels + c) * inner;
                            *acc += g.data()[off..off + inner].iter().sum::<f64>();
                        }
                    }
                    accumulate(&mut grads, *bias, Array::new(bv.shape().to_vec(), gb)?);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Scale(x, c) => accumulate(&mut grads, *x, g.map(|v| v * c)),
                Op::Relu(x) => {
                    let xv = &self.nodes[*x].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, Array::new(xv.shape().to_vec(), data)?);
                }
                Op::MeanPool(x) => {
                    let xv = &self.nodes[*x].value;
                    let s = xv.shape();
                    let hw = s[s.len() - 2] * s[s.len() - 1];
                    let mut data = Vec::with_capacity(xv.len());
                    for gv in g.data() {
                        data.extend(std::iter::repeat_n(gv / hw as f64, hw));
                    }
                    accumulate(&mut grads, *x, Array::new(s.to_vec(), data)?);
                }
                Op::BatchNorm { x, inv_std } => {
                    let y = &node.value;
                    let [b, c, h, w] = *y.shape() else { unreachable!() };
                    let hw = h * w;
                    let n = (b * hw) as f64;
                    let mut data = vec![0.0; y.len()];
                    for (ch, is) in inv_std.iter().enumerate() {
                        let planes = || (0..b).map(move |i| (i * c + ch) * hw);
                        let (mut gm, mut gym) = (0.0, 0.0);
                        for o in planes() {
                            for k in o..o + hw {
                                gm += g.data()[k];
                                gym += g.data()[k] * y.data()[k];
                            }
                        }
                        gm /= n;
                        gym /= n;
                        for o in planes() {
                            for k in o..o + hw {
                                data[k] = is * (g.data()[k] - gm - y.data()[k] * gym);
                            }
                        }
                    }
                    accumulate(&mut grads, *x, Array::new(y.shape().to_vec(), data)?);
                }
                Op::L2Normalize { x, norms } => {
                    let y = &node.value;
                    let d = *y.shape().last().unwrap_or(&1);
                    let mut data = Vec::with_capacity(y.len());
                    for ((yr, gr), n) in y.data().chunks_exact(d).zip(g.data().chunks_exact(d)).zip(norms) {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        data.extend(yr.iter().zip(gr).map(|(yv, gv)| (gv - yv * dot) / n));
                    }
                    accumulate(&mut grads, *x, Array::new(y.shape().to_vec(), data)?);
                }
                Op::SoftmaxXent { logits, labels, probs } => {
                    let lv = &self.nodes[*logits].value;
                    let c = *lv.shape().last().unwrap();
                    let scale = g.item() / labels.len() as f64;
                    let mut data: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (r, &label) in labels.iter().enumerate() {
                        data[r * c + label] -= scale;
                    }
                    accumulate(&mut grads, *logits, Array::new(lv.shape().to_vec(), data)?);
                }
                Op::Sum(x) => {
                    let xv = &self.nodes[*x].value;
                    accumulate(&mut grads, *x, Array::full(xv.shape(), g.item()));
                }
                Op::Reshape(x) => {
                    let shape = self.nodes[*x].value.shape().to_vec();
                    accumulate(&mut grads, *x, g.reshape(&shape)?);
                }
                Op::Custom { inputs, backward } => {
                    let gs = backward(&g);
                    if gs.len() != inputs.len() {
                        return Err(Error::Shape(format!(
                            "custom op returned {} gradients for {} inputs",
                            gs.len(),
                            inputs.len()
                        )));
                    }
                    for (i, gi) in inputs.iter().zip(gs) {
                        if gi.shape() != self.nodes[*i].value.shape() {
                            return Err(Error::Dimension {
                                op: "custom backward",
                                lhs: self.nodes[*i].value.shape().to_vec(),
                                rhs: gi.shape().to_vec(),
                            });
                        }
                        accumulate(&mut grads, *i, gi);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn param_nodes(&self) -> impl Iterator<Item = (usize, &str)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match &n.op {
            Op::Param(name) => Some((i, name.as_str())),
            _ => None,
        })
    }
}

/// Gradients of a scalar with respect to the leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// Differentiate `loss` and add each parameter's gradient into `store`.
/// Non-trainable parameters keep a zero gradient.
pub fn backward(tape: &Tape, loss: Var, store: &mut ParamStore) -> Result<()> {
    let grads = tape.backward(loss)?;
    for (id, name) in tape.param_nodes() {
        let param = store.get_mut(name)?;
        if !param.trainable {
            continue;
        }
        if let Some(g) = &grads.grads[id] {
            for (acc, v) in param.grad.data_mut().iter_mut().zip(g.data()) {
                *acc += v;
            }
        }
    }
    Ok(())
}

fn accumulate(grads: &mut [Option<Array>], id: usize, g: Array) {
    match &mut grads[id] {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
        slot => *slot = Some(g),
    }
}

/// Standard matrix product of `[m, k]` and `[k, n]`.
pub fn matmul(a: &Array, b: &Array) -> Result<Array> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Dimension {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    gemm(
        MatRef::row_major(a.data(), m, k),
        MatRef::row_major(b.data(), k, n),
        &mut out,
        0.0,
    );
    Array::new(vec![m, n], out)
}

/// `(log-sum-exp, softmax)` of a row, computed with max subtraction.
pub fn log_softmax_parts(row: &[f64]) -> (f64, Vec<f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = exps.iter().sum();
    (max + s.ln(), exps.into_iter().map(|e| e / s).collect())
}

fn conv_geom(x: &[usize], k: &[usize], stride: usize, padding: usize) -> Result<(usize, ConvGeom)> {
    let dim_err = || Error::Dimension {
        op: "conv2d",
        lhs: x.to_vec(),
        rhs: k.to_vec(),
    };
    let (batch, c, h, w) = match *x {
        [c, h, w] => (1, c, h, w),
        [b, c, h, w] => (b, c, h, w),
        _ => return Err(dim_err()),
    };
    let [c_out, kc, kh, kw] = *k else {
        return Err(dim_err());
    };
    if c_out == 0 || kc != c || stride == 0 || kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(dim_err());
    }
    Ok((
        batch,
        ConvGeom {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        },
    ))
}

fn bias_layout(x: &[usize], bias: &[usize]) -> Result<(usize, usize, usize)> {
    let err = || Error::Dimension {
        op: "add_bias",
        lhs: x.to_vec(),
        rhs: bias.to_vec(),
    };
    let [n] = *bias else { return Err(err()) };
    match *x {
        [c] if c == n => Ok((1, n, 1)),
        [b, c] if c == n => Ok((b, n, 1)),
        [c, h, w] if c == n => Ok((1, n, h * w)),
        [b, c, h, w] if c == n => Ok((b, n, h * w)),
        _ => Err(err()),
    }
}
