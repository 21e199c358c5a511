//! Computation record and reverse-mode sweep.
//!
//! A [`Graph`] is an append-only list of nodes. Every node stores its forward
//! value plus whatever the backward rule needs; inputs always refer to earlier
//! nodes, so the list is topologically ordered by construction and the
//! backward pass is a single reverse scan.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blas::gemm;
use crate::error::{NumericsError, Result};
use crate::tensor::Tensor;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of one particular [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    pub(crate) id: usize,
    pub(crate) graph: u64,
}

impl Var {
    pub fn index(self) -> usize {
        self.id
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub t_in: usize,
    pub t_out: usize,
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub width: usize,
    pub stride: usize,
    pub pad_left: usize,
}

pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddRow {
        x: usize,
        bias: usize,
    },
    Matmul(usize, usize),
    Transpose(usize),
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    SliceRows {
        x: usize,
        start: usize,
    },
    Reshape(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    Dropout {
        x: usize,
        mask: Vec<f64>,
    },
    GruStep {
        gx: usize,
        h: usize,
        w_hh: usize,
        b_hh: usize,
        r: Vec<f64>,
        z: Vec<f64>,
        n: Vec<f64>,
        ghn: Vec<f64>,
    },
    Conv1d {
        input: usize,
        kernel: usize,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        pad_id: usize,
        probs: Vec<f64>,
        count: usize,
    },
    Sum(usize),
    Mean(usize),
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub needs_grad: bool,
}

/// The computation record: forward values plus the tape used by [`Graph::backward`].
pub struct Graph {
    pub(crate) id: u64,
    pub(crate) nodes: Vec<Node>,
    pub(crate) dropout_rng: Option<ChaCha8Rng>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// Evaluation-mode record: dropout is the identity.
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            dropout_rng: None,
        }
    }

    /// Training-mode record; dropout masks are drawn from a stream seeded by `seed`.
    pub fn training(seed: u64) -> Self {
        let mut g = Self::new();
        g.dropout_rng = Some(ChaCha8Rng::seed_from_u64(seed));
        g
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf; gradients are tracked if `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = t.requires_grad();
        self.push(t, Op::Leaf, needs_grad)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_grad())
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.without_grad())
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.graph, self.id, "variable from another graph");
        &self.nodes[v.id].value
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.graph != self.id || v.id >= self.nodes.len() {
            return Err(NumericsError::ForeignVar);
        }
        Ok(())
    }

    pub(crate) fn val(&self, id: usize) -> &Tensor {
        &self.nodes[id].value
    }

    pub(crate) fn grad_flag(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { value, op, needs_grad });
        Var { id, graph: self.id }
    }

    /// Reverse sweep from the scalar `loss`; returns gradients for every leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let lv = &self.nodes[loss.id].value;
        if lv.numel() != 1 {
            return Err(NumericsError::NonScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.id + 1, || None);
        let mut leaves: Vec<Option<Vec<f64>>> = Vec::new();
        leaves.resize_with(self.nodes.len(), || None);
        grads[loss.id] = Some(vec![1.0]);

        for i in (0..=loss.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backprop_node(i, g, &mut grads, &mut leaves);
        }
        Ok(Gradients {
            graph: self.id,
            leaves,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn backprop_node(&self, i: usize, g: Vec<f64>, grads: &mut [Option<Vec<f64>>], leaves: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        // Lazily materialize the gradient buffer of an input that wants one.
        let mut acc = |id: usize, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[id].needs_grad {
                return;
            }
            let buf = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.numel()]);
            f(buf);
        };
        match &nodes[i].op {
            Op::Leaf => leaves[i] = Some(g),
            Op::Add(a, b) => {
                acc(*a, &mut |d| axpy(d, 1.0, &g));
                acc(*b, &mut |d| axpy(d, 1.0, &g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| axpy(d, 1.0, &g));
                acc(*b, &mut |d| axpy(d, -1.0, &g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a).data(), self.val(*b).data());
                acc(*a, &mut |d| {
                    for ((d, g), y) in d.iter_mut().zip(&g).zip(vb) {
                        *d += g * y;
                    }
                });
                acc(*b, &mut |d| {
                    for ((d, g), x) in d.iter_mut().zip(&g).zip(va) {
                        *d += g * x;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |d| axpy(d, *c, &g)),
            Op::AddRow { x, bias } => {
                acc(*x, &mut |d| axpy(d, 1.0, &g));
                let cols = out.cols();
                acc(*bias, &mut |d| {
                    for row in g.chunks_exact(cols) {
                        axpy(d, 1.0, row);
                    }
                });
            }
            Op::Matmul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                acc(*a, &mut |d| gemm(m, n, k, &g, false, vb.data(), true, 1.0, d));
                acc(*b, &mut |d| gemm(k, m, n, va.data(), true, &g, false, 1.0, d));
            }
            Op::Transpose(a) => {
                let (r, c) = (self.val(*a).rows(), self.val(*a).cols());
                acc(*a, &mut |d| {
                    for row in 0..r {
                        for col in 0..c {
                            d[row * c + col] += g[col * r + row];
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let out_cols = out.cols();
                let mut offset = 0;
                for &src in inputs {
                    let v = self.val(src);
                    if *axis == 0 {
                        let len = v.numel();
                        acc(src, &mut |d| axpy(d, 1.0, &g[offset..offset + len]));
                        offset += len;
                    } else {
                        let c = v.cols();
                        acc(src, &mut |d| {
                            for (row, drow) in d.chunks_exact_mut(c).enumerate() {
                                let s = row * out_cols + offset;
                                axpy(drow, 1.0, &g[s..s + c]);
                            }
                        });
                        offset += c;
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let c = out.cols();
                acc(*x, &mut |d| axpy(&mut d[start * c..start * c + g.len()], 1.0, &g));
            }
            Op::Reshape(a) => acc(*a, &mut |d| axpy(d, 1.0, &g)),
            Op::Softmax(a) => {
                let c = out.cols();
                acc(*a, &mut |d| {
                    for ((drow, grow), yrow) in d
                        .chunks_exact_mut(c)
                        .zip(g.chunks_exact(c))
                        .zip(out.data().chunks_exact(c))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (g - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let c = out.cols();
                acc(*a, &mut |d| {
                    for ((drow, grow), yrow) in d
                        .chunks_exact_mut(c)
                        .zip(g.chunks_exact(c))
                        .zip(out.data().chunks_exact(c))
                    {
                        let total: f64 = grow.iter().sum();
                        for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += g - y.exp() * total;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => acc(*a, &mut |d| {
                for ((d, g), y) in d.iter_mut().zip(&g).zip(out.data()) {
                    *d += g * y * (1.0 - y);
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |d| {
                for ((d, g), y) in d.iter_mut().zip(&g).zip(out.data()) {
                    *d += g * (1.0 - y * y);
                }
            }),
            Op::Relu(a) => acc(*a, &mut |d| {
                for ((d, g), y) in d.iter_mut().zip(&g).zip(out.data()) {
                    if *y > 0.0 {
                        *d += g;
                    }
                }
            }),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = out.cols();
                let gam = self.val(*gamma).data();
                acc(*x, &mut |d| {
                    let mut dxhat = vec![0.0; c];
                    for (r, drow) in d.chunks_exact_mut(c).enumerate() {
                        let grow = &g[r * c..(r + 1) * c];
                        let xrow = &xhat[r * c..(r + 1) * c];
                        for j in 0..c {
                            dxhat[j] = grow[j] * gam[j];
                        }
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xrow).map(|(a, b)| a * b).sum();
                        let scale = inv_std[r] / c as f64;
                        for j in 0..c {
                            drow[j] += scale * (c as f64 * dxhat[j] - s1 - xrow[j] * s2);
                        }
                    }
                });
                acc(*gamma, &mut |d| {
                    for (grow, xrow) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for j in 0..c {
                            d[j] += grow[j] * xrow[j];
                        }
                    }
                });
                acc(*beta, &mut |d| {
                    for grow in g.chunks_exact(c) {
                        axpy(d, 1.0, grow);
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let c = out.cols();
                acc(*table, &mut |d| {
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(&mut d[id * c..(id + 1) * c], 1.0, &g[r * c..(r + 1) * c]);
                    }
                });
            }
            Op::Dropout { x, mask } => acc(*x, &mut |d| {
                for ((d, g), m) in d.iter_mut().zip(&g).zip(mask) {
                    *d += g * m;
                }
            }),
            Op::GruStep {
                gx,
                h,
                w_hh,
                b_hh,
                r,
                z,
                n,
                ghn,
            } => {
                let hv = self.val(*h);
                let (b, hd) = (hv.rows(), hv.cols());
                let mut dgx = vec![0.0; b * 3 * hd];
                let mut dgh = vec![0.0; b * 3 * hd];
                let mut dh = vec![0.0; b * hd];
                for row in 0..b {
                    for j in 0..hd {
                        let k = row * hd + j;
                        let gk = g[k];
                        let dz = gk * (hv.data()[k] - n[k]);
                        let dn = gk * (1.0 - z[k]);
                        dh[k] = gk * z[k];
                        let dn_pre = dn * (1.0 - n[k] * n[k]);
                        let dr_pre = dn_pre * ghn[k] * r[k] * (1.0 - r[k]);
                        let dz_pre = dz * z[k] * (1.0 - z[k]);
                        let base = row * 3 * hd;
                        dgx[base + j] = dr_pre;
                        dgx[base + hd + j] = dz_pre;
                        dgx[base + 2 * hd + j] = dn_pre;
                        dgh[base + j] = dr_pre;
                        dgh[base + hd + j] = dz_pre;
                        dgh[base + 2 * hd + j] = dn_pre * r[k];
                    }
                }
                let w = self.val(*w_hh);
                gemm(b, 3 * hd, hd, &dgh, false, w.data(), true, 1.0, &mut dh);
                acc(*gx, &mut |d| axpy(d, 1.0, &dgx));
                acc(*h, &mut |d| axpy(d, 1.0, &dh));
                acc(*w_hh, &mut |d| {
                    gemm(hd, b, 3 * hd, hv.data(), true, &dgh, false, 1.0, d)
                });
                acc(*b_hh, &mut |d| {
                    for row in dgh.chunks_exact(3 * hd) {
                        axpy(d, 1.0, row);
                    }
                });
            }
            Op::Conv1d {
                input,
                kernel,
                geom,
                cols,
            } => {
                let rows = geom.t_out * geom.width;
                let kc = geom.k * geom.c_in;
                acc(*kernel, &mut |d| {
                    gemm(kc, rows, geom.c_out, cols, true, &g, false, 1.0, d)
                });
                if nodes[*input].needs_grad {
                    let kv = self.val(*kernel);
                    let mut dcols = vec![0.0; rows * kc];
                    gemm(rows, geom.c_out, kc, &g, false, kv.data(), true, 0.0, &mut dcols);
                    acc(*input, &mut |d| col2im(geom, &dcols, d));
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                pad_id,
                probs,
                count,
            } => {
                let v = self.val(*logits).cols();
                let s = g[0] / *count as f64;
                acc(*logits, &mut |d| {
                    for (r, &t) in targets.iter().enumerate() {
                        if t == *pad_id {
                            continue;
                        }
                        let drow = &mut d[r * v..(r + 1) * v];
                        axpy(drow, s, &probs[r * v..(r + 1) * v]);
                        drow[t] -= s;
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = self.val(*a).numel() as f64;
                acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += g[0] / n));
            }
        }
    }
}

pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

pub(crate) fn im2col(geom: &ConvGeom, x: &[f64]) -> Vec<f64> {
    let kc = geom.k * geom.c_in;
    let in_cols = geom.width * geom.c_in;
    let mut cols = vec![0.0; geom.t_out * geom.width * kc];
    for t in 0..geom.t_out {
        for kk in 0..geom.k {
            let src_t = (t * geom.stride + kk) as isize - geom.pad_left as isize;
            if src_t < 0 || src_t as usize >= geom.t_in {
                continue;
            }
            let src = &x[src_t as usize * in_cols..(src_t as usize + 1) * in_cols];
            for j in 0..geom.width {
                let dst = ((t * geom.width + j) * kc) + kk * geom.c_in;
                cols[dst..dst + geom.c_in].copy_from_slice(&src[j * geom.c_in..(j + 1) * geom.c_in]);
            }
        }
    }
    cols
}

fn col2im(geom: &ConvGeom, dcols: &[f64], dx: &mut [f64]) {
    let kc = geom.k * geom.c_in;
    let in_cols = geom.width * geom.c_in;
    for t in 0..geom.t_out {
        for kk in 0..geom.k {
            let src_t = (t * geom.stride + kk) as isize - geom.pad_left as isize;
            if src_t < 0 || src_t as usize >= geom.t_in {
                continue;
            }
            let row = src_t as usize * in_cols;
            for j in 0..geom.width {
                let s = ((t * geom.width + j) * kc) + kk * geom.c_in;
                let d = row + j * geom.c_in;
                axpy(&mut dx[d..d + geom.c_in], 1.0, &dcols[s..s + geom.c_in]);
            }
        }
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients {
    graph: u64,
    leaves: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; all zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        assert_eq!(v.graph, self.graph, "variable from another graph");
        let shape = &self.shapes[v.id];
        match &self.leaves[v.id] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Raw gradient buffer, or `None` when it is identically zero.
    pub fn raw(&self, v: Var) -> Option<&[f64]> {
        assert_eq!(v.graph, self.graph, "variable from another graph");
        self.leaves[v.id].as_deref()
    }
}
