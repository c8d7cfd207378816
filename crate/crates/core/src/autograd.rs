//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op as it is evaluated; nodes are appended in
//! evaluation order, so reverse index order is a valid topological order for
//! [`Graph::backward`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::kernels::{self, ConvGeom};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    LeakyRelu(Var, f64),
    /// Elementwise multiply by fixed per-element slopes.
    Gate(Var, Tensor),
    Tanh(Var),
    Softplus(Var),
    Abs(Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    AvgPool2(Var),
    Upsample2(Var),
    InstanceNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    ChannelAffine {
        input: Var,
        scale: Var,
        shift: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Gather {
        input: Var,
        labels: Vec<usize>,
        width: usize,
    },
    Concat(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SumSq(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of every trainable parameter that took part in the graph.
    ///
    /// Frozen parameters are skipped. Trainable parameters that were read but
    /// received no gradient signal report an all-zero tensor, never `None`.
    pub fn param_grads<'a>(&'a self, graph: &'a Graph) -> impl Iterator<Item = (ParamId, Tensor)> + 'a {
        self.params.iter().map(move |&(id, v)| {
            let g = self.grads[v.0]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()));
            (id, g)
        })
    }
}

/// An evaluation tape.
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
    frozen: BTreeSet<ParamId>,
    grad_enabled: bool,
    gates: Gates,
}

/// Leaky-ReLU slope patterns, recorded on one pass and replayed on another.
#[derive(Default)]
enum Gates {
    #[default]
    Off,
    Record(Vec<Tensor>),
    Replay(Vec<Tensor>, usize),
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            frozen: BTreeSet::new(),
            grad_enabled: true,
            gates: Gates::Off,
        }
    }

    /// A graph whose parameters are treated as constants.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    /// Parameters read after this call are treated as constants.
    pub fn freeze(&mut self, ids: impl IntoIterator<Item = ParamId>) {
        self.frozen.extend(ids);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Input,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input whose gradient is wanted (e.g. for gradient penalties).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Input,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reads a parameter into the graph. Repeated reads share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: store.get(id).clone(),
            op: Op::Param,
            requires_grad: self.grad_enabled && !self.frozen.contains(&id),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| k * x);
        self.push(value, Op::Scale(a, k), &[a])
    }

    /// `a + c` for a constant tensor `c`; the gradient w.r.t. `a` is the identity.
    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Var {
        let value = self.value(a).zip_map(c, |x, y| x + y);
        self.push(value, Op::AddConst(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        if let Gates::Replay(pattern, cursor) = &mut self.gates {
            let slopes = pattern[*cursor].clone();
            *cursor += 1;
            assert_eq!(
                slopes.shape(),
                self.shape(a),
                "replayed gate pattern has the wrong shape"
            );
            let value = self.value(a).zip_map(&slopes, |x, k| k * x);
            return self.push(value, Op::Gate(a, slopes), &[a]);
        }
        if let Gates::Record(pattern) = &mut self.gates {
            pattern.push(self.nodes[a.0].value.map(|x| if x > 0.0 { 1.0 } else { slope }));
        }
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(value, Op::LeakyRelu(a, slope), &[a])
    }

    /// Starts recording the slope pattern of every following `leaky_relu`.
    pub fn record_gates(&mut self) {
        self.gates = Gates::Record(Vec::new());
    }

    /// Stops recording and returns the patterns in call order.
    pub fn take_gates(&mut self) -> Vec<Tensor> {
        match core::mem::take(&mut self.gates) {
            Gates::Record(p) | Gates::Replay(p, _) => p,
            Gates::Off => Vec::new(),
        }
    }

    /// Makes the following `leaky_relu` calls apply recorded slopes instead of
    /// looking at their input, so a piecewise-linear network becomes affine.
    pub fn replay_gates(&mut self, pattern: Vec<Tensor>) {
        self.gates = Gates::Replay(pattern, 0);
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(libm::tanh);
        self.push(value, Op::Tanh(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(kernels::softplus);
        self.push(value, Op::Softplus(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(libm::fabs);
        self.push(value, Op::Abs(a), &[a])
    }

    /// Stride-1 "same" convolution. `weight` is `[out, in, k, k]`, `bias` is `[out]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let ishape = self.shape(input);
        let wshape = self.shape(weight);
        assert_eq!(ishape.len(), 4, "conv2d input must be NCHW");
        assert_eq!(ishape[1], wshape[1], "conv2d channel mismatch");
        let geom = ConvGeom {
            batch: ishape[0],
            in_ch: ishape[1],
            out_ch: wshape[0],
            height: ishape[2],
            width: ishape[3],
            kernel: wshape[2],
        };
        let (out, cols) = kernels::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(&[geom.batch, geom.out_ch, geom.height, geom.width], out);
        let keep = self.nodes[weight.0].requires_grad;
        let cols = if keep { cols } else { Vec::new() };
        self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            &[input, weight, bias],
        )
    }

    pub fn avg_pool2(&mut self, a: Var) -> Var {
        let s = self.shape(a).to_vec();
        let out = kernels::avg_pool2(s[0] * s[1], s[2], s[3], self.value(a).data());
        let value = Tensor::new(&[s[0], s[1], s[2] / 2, s[3] / 2], out);
        self.push(value, Op::AvgPool2(a), &[a])
    }

    pub fn upsample2(&mut self, a: Var) -> Var {
        let s = self.shape(a).to_vec();
        let out = kernels::upsample2(s[0] * s[1], s[2], s[3], self.value(a).data());
        let value = Tensor::new(&[s[0], s[1], s[2] * 2, s[3] * 2], out);
        self.push(value, Op::Upsample2(a), &[a])
    }

    /// Per-(sample, channel) normalization without affine parameters.
    pub fn instance_norm(&mut self, a: Var, eps: f64) -> Var {
        let s = self.shape(a).to_vec();
        let (out, inv_std) = kernels::instance_norm(s[0] * s[1], s[2] * s[3], eps, self.value(a).data());
        let value = Tensor::new(&s, out);
        self.push(value, Op::InstanceNorm { input: a, inv_std }, &[a])
    }

    /// `x[n,c,:,:] * scale[n,c] + shift[n,c]`.
    pub fn channel_affine(&mut self, input: Var, scale: Var, shift: Var) -> Var {
        let s = self.shape(input).to_vec();
        let (nc, hw) = (s[0] * s[1], s[2] * s[3]);
        assert_eq!(self.value(scale).len(), nc, "channel_affine scale shape");
        assert_eq!(self.value(shift).len(), nc, "channel_affine shift shape");
        let x = self.value(input).data();
        let sc = self.value(scale).data();
        let sh = self.value(shift).data();
        let mut out = vec![0.0; x.len()];
        for p in 0..nc {
            for i in 0..hw {
                out[p * hw + i] = x[p * hw + i] * sc[p] + sh[p];
            }
        }
        let value = Tensor::new(&s, out);
        self.push(value, Op::ChannelAffine { input, scale, shift }, &[input, scale, shift])
    }

    /// `input[N, in] * weight[out, in]^T + bias[out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let is = self.shape(input);
        let ws = self.shape(weight);
        assert_eq!(is.len(), 2, "linear input must be 2-d");
        assert_eq!(is[1], ws[1], "linear feature mismatch");
        let (n, fin, fout) = (is[0], is[1], ws[0]);
        let mut out = vec![0.0; n * fout];
        for row in out.chunks_mut(fout) {
            row.copy_from_slice(self.value(bias).data());
        }
        kernels::gemm(
            n,
            fin,
            fout,
            1.0,
            self.value(input).data(),
            false,
            self.value(weight).data(),
            true,
            1.0,
            &mut out,
        );
        let value = Tensor::new(&[n, fout], out);
        self.push(value, Op::Linear { input, weight, bias }, &[input, weight, bias])
    }

    /// Selects, per row `n`, the `width`-wide column block `labels[n]`.
    pub fn gather(&mut self, input: Var, labels: &[usize], width: usize) -> Var {
        let s = self.shape(input);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], labels.len(), "gather: one label per row");
        let cols = s[1];
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(labels.len() * width);
        for (n, &l) in labels.iter().enumerate() {
            assert!((l + 1) * width <= cols, "gather: label {l} out of range");
            out.extend_from_slice(&x[n * cols + l * width..n * cols + (l + 1) * width]);
        }
        let value = Tensor::new(&[labels.len(), width], out);
        self.push(
            value,
            Op::Gather {
                input,
                labels: labels.to_vec(),
                width,
            },
            &[input],
        )
    }

    /// Concatenates 2-d tensors along the column axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let n = self.shape(parts[0])[0];
        let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p)[1]).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            assert_eq!(self.shape(p)[0], n, "concat: row mismatch");
            for r in 0..n {
                out[r * total + offset..r * total + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::new(&[n, total], out);
        self.push(value, Op::Concat(parts.to_vec()), parts)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.value(a).clone().reshape(shape);
        self.push(value, Op::Reshape(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(value, Op::Mean(a), &[a])
    }

    pub fn sum_sq(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum_sq());
        self.push(value, Op::SumSq(a), &[a])
    }

    /// Reverse pass from a scalar `root`, seeded with `d root = 1`.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).len(), 1, "backward root must be a scalar");
        let seed = Tensor::full(self.shape(root), 1.0);
        self.backward_with(root, seed)
    }

    /// Reverse pass from `root` seeded with an arbitrary cotangent.
    pub fn backward_with(&self, root: Var, seed: Tensor) -> Grads {
        assert_eq!(seed.shape(), self.shape(root));
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads {
            grads,
            params: self
                .params
                .iter()
                .filter(|(_, v)| v.0 <= root.0 && self.nodes[v.0].requires_grad)
                .map(|(&id, &v)| (id, v))
                .collect(),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.axpy(1.0, &t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Input | Op::Param => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Scale(a, k) => acc(*a, g.map(|x| k * x)),
            Op::Gate(a, slopes) => acc(*a, g.zip_map(slopes, |d, k| d * k)),
            Op::AddConst(a) => acc(*a, g.clone()),
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |d, x| if x > 0.0 { d } else { slope * d }));
            }
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |d, y| d * (1.0 - y * y))),
            Op::Softplus(a) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |d, x| d * kernels::sigmoid(x)));
            }
            Op::Abs(a) => {
                let x = self.value(*a);
                acc(
                    *a,
                    g.zip_map(x, |d, x| {
                        if x > 0.0 {
                            d
                        } else if x < 0.0 {
                            -d
                        } else {
                            0.0
                        }
                    }),
                );
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let grads = kernels::conv2d_backward(
                    geom,
                    cols,
                    self.value(*weight).data(),
                    g.data(),
                    self.wants(*input),
                    self.wants(*weight),
                );
                if let Some(di) = grads.input {
                    acc(*input, Tensor::new(self.shape(*input), di));
                }
                if let Some(dw) = grads.weight {
                    acc(*weight, Tensor::new(self.shape(*weight), dw));
                }
                acc(*bias, Tensor::new(self.shape(*bias), grads.bias));
            }
            Op::AvgPool2(a) => {
                let s = self.shape(*a);
                let d = kernels::avg_pool2_backward(s[0] * s[1], s[2], s[3], g.data());
                acc(*a, Tensor::new(s, d));
            }
            Op::Upsample2(a) => {
                let s = self.shape(*a);
                let d = kernels::upsample2_backward(s[0] * s[1], s[2], s[3], g.data());
                acc(*a, Tensor::new(s, d));
            }
            Op::InstanceNorm { input, inv_std } => {
                let s = self.shape(*input);
                let d = kernels::instance_norm_backward(s[0] * s[1], s[2] * s[3], node.value.data(), inv_std, g.data());
                acc(*input, Tensor::new(s, d));
            }
            Op::ChannelAffine { input, scale, shift } => {
                let s = self.shape(*input);
                let (nc, hw) = (s[0] * s[1], s[2] * s[3]);
                let x = self.value(*input).data();
                let sc = self.value(*scale).data();
                let gd = g.data();
                let mut dx = vec![0.0; x.len()];
                let mut dscale = vec![0.0; nc];
                let mut dshift = vec![0.0; nc];
                for p in 0..nc {
                    for k in p * hw..(p + 1) * hw {
                        dx[k] = gd[k] * sc[p];
                        dscale[p] += gd[k] * x[k];
                        dshift[p] += gd[k];
                    }
                }
                acc(*input, Tensor::new(s, dx));
                acc(*scale, Tensor::new(self.shape(*scale), dscale));
                acc(*shift, Tensor::new(self.shape(*shift), dshift));
            }
            Op::Linear { input, weight, bias } => {
                let is = self.shape(*input);
                let ws = self.shape(*weight);
                let (n, fin, fout) = (is[0], is[1], ws[0]);
                if self.wants(*input) {
                    let mut dx = vec![0.0; n * fin];
                    kernels::gemm(
                        n,
                        fout,
                        fin,
                        1.0,
                        g.data(),
                        false,
                        self.value(*weight).data(),
                        false,
                        0.0,
                        &mut dx,
                    );
                    acc(*input, Tensor::new(is, dx));
                }
                let mut dw = vec![0.0; fout * fin];
                kernels::gemm(
                    fout,
                    n,
                    fin,
                    1.0,
                    g.data(),
                    true,
                    self.value(*input).data(),
                    false,
                    0.0,
                    &mut dw,
                );
                acc(*weight, Tensor::new(ws, dw));
                let mut db = vec![0.0; fout];
                for row in g.data().chunks(fout) {
                    for (b, r) in db.iter_mut().zip(row) {
                        *b += r;
                    }
                }
                acc(*bias, Tensor::new(&[fout], db));
            }
            Op::Gather { input, labels, width } => {
                let s = self.shape(*input);
                let cols = s[1];
                let mut dx = vec![0.0; s[0] * cols];
                for (n, &l) in labels.iter().enumerate() {
                    dx[n * cols + l * width..n * cols + (l + 1) * width]
                        .copy_from_slice(&g.data()[n * width..(n + 1) * width]);
                }
                acc(*input, Tensor::new(s, dx));
            }
            Op::Concat(parts) => {
                let n = g.shape()[0];
                let total = g.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    let mut d = Vec::with_capacity(n * w);
                    for r in 0..n {
                        d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    acc(p, Tensor::new(&[n, w], d));
                    offset += w;
                }
            }
            Op::Reshape(a) => acc(*a, g.clone().reshape(self.shape(*a))),
            Op::Sum(a) => acc(*a, Tensor::full(self.shape(*a), g.item())),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                acc(*a, Tensor::full(self.shape(*a), g.item() / n));
            }
            Op::SumSq(a) => {
                let k = 2.0 * g.item();
                acc(*a, self.value(*a).map(|x| k * x));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], f: impl Fn(usize) -> f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(f).collect())
    }

    /// Central-difference check of d(root)/d(input) for a scalar-valued builder.
    fn check_input_grad(x: Tensor, build: impl Fn(&mut Graph, Var) -> Var) {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let out = build(&mut g, xv);
        let grads = g.backward(out);
        let analytic = grads.get(xv).unwrap().clone();
        let h = 1e-5;
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let f = |v: Tensor| {
                let mut g = Graph::new();
                let xv = g.constant(v);
                let o = build(&mut g, xv);
                g.value(o).item()
            };
            let numeric = (f(plus) - f(minus)) / (2.0 * h);
            let a = analytic.data()[i];
            assert!(
                (a - numeric).abs() <= 1e-6 * (1.0 + a.abs().max(numeric.abs())),
                "element {i}: analytic {a} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn conv_pool_upsample_chain_gradient() {
        let w = t(&[3, 2, 3, 3], |i| libm::sin(i as f64 * 0.7) * 0.3);
        let b = t(&[3], |i| i as f64 * 0.1);
        check_input_grad(t(&[2, 2, 4, 4], |i| libm::cos(i as f64 * 0.31)), |g, x| {
            let wv = g.constant(w.clone());
            let bv = g.constant(b.clone());
            let y = g.conv2d(x, wv, bv);
            let y = g.avg_pool2(y);
            let y = g.upsample2(y);
            let y = g.tanh(y);
            g.sum_sq(y)
        });
    }

    #[test]
    fn instance_norm_affine_gradient() {
        let scale = t(&[2, 3], |i| 1.0 + 0.1 * i as f64);
        let shift = t(&[2, 3], |i| 0.05 * i as f64);
        let probe = t(&[2, 3, 2, 2], |i| libm::sin(i as f64));
        check_input_grad(t(&[2, 3, 2, 2], |i| libm::cos(i as f64 * 1.7)), |g, x| {
            let s = g.constant(scale.clone());
            let sh = g.constant(shift.clone());
            let y = g.instance_norm(x, 1e-5);
            let y = g.channel_affine(y, s, sh);
            let y = g.add_const(y, &probe);
            g.sum_sq(y)
        });
    }

    #[test]
    fn linear_gather_concat_gradient() {
        let w = t(&[4, 3], |i| libm::sin(i as f64 * 0.9));
        let b = t(&[4], |i| 0.1 * i as f64);
        check_input_grad(t(&[3, 3], |i| libm::cos(i as f64 * 0.4)), |g, x| {
            let wv = g.constant(w.clone());
            let bv = g.constant(b.clone());
            let y = g.linear(x, wv, bv);
            let y2 = g.leaky_relu(y, 0.2);
            let y = g.concat(&[y, y2]);
            let y = g.gather(y, &[0, 3, 1], 2);
            let y = g.softplus(y);
            g.mean(y)
        });
    }

    #[test]
    fn gather_leaves_unselected_columns_with_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 6], |i| i as f64));
        let y = g.gather(x, &[1, 1], 2);
        let s = g.sum(y);
        let grads = g.backward(s);
        let d = grads.get(x).unwrap().data();
        assert_eq!(d, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn repeated_param_reads_accumulate() {
        let mut store = ParamStore::new();
        let id = store.insert("p", Tensor::new(&[2], alloc::vec![1.0, 2.0]));
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let s = g.add(a, b);
        let s = g.sum_sq(s);
        let grads = g.backward(s);
        let (pid, grad) = grads.param_grads(&g).next().unwrap();
        assert_eq!(pid, id);
        assert_eq!(grad.data(), &[8.0, 16.0]);
    }

    #[test]
    fn replayed_gates_keep_recorded_slopes() {
        let x = Tensor::new(&[4], alloc::vec![-2.0, -0.5, 0.5, 2.0]);
        let mut g = Graph::new();
        g.record_gates();
        let xv = g.constant(x.clone());
        g.leaky_relu(xv, 0.2);
        let pattern = g.take_gates();
        assert_eq!(pattern[0].data(), &[0.2, 0.2, 1.0, 1.0]);

        // Shift every input across zero: replay must still apply the recorded slopes.
        let mut g = Graph::new();
        g.replay_gates(pattern);
        let shifted = g.input(x.map(|v| -v));
        let y = g.leaky_relu(shifted, 0.2);
        assert_eq!(g.value(y).data(), &[0.4, 0.1, -0.5, -2.0]);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert_eq!(grads.get(shifted).unwrap().data(), &[0.2, 0.2, 1.0, 1.0]);
    }
}
