//! Forward definitions of the differentiable primitives.
//!
//! Most primitives work on 2-D views: a rank-1 tensor is a single row and
//! higher ranks fold their trailing dims into columns.

use rand::Rng;

use crate::blas::gemm;
use crate::error::{NumericsError, Result};
use crate::graph::{im2col, ConvGeom, Graph, Op, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Padding mode for [`Graph::conv1d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output length `ceil(T / stride)`, zero padding split left/right.
    Same,
    /// No padding; output length `(T - K) / stride + 1`.
    Valid,
}

/// Output length and left padding of a 1-D convolution.
pub fn conv_output_len(t: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if t == 0 {
        return Err(NumericsError::EmptyInput("conv1d"));
    }
    if stride == 0 {
        return Err(NumericsError::Shape("stride must be positive".into()));
    }
    match padding {
        Padding::Same => {
            let t_out = t.div_ceil(stride);
            let total = ((t_out - 1) * stride + k).saturating_sub(t);
            if k > t + total {
                return Err(NumericsError::KernelTooWide {
                    kernel: k,
                    padded: t + total,
                });
            }
            Ok((t_out, total / 2))
        }
        Padding::Valid => {
            if k > t {
                return Err(NumericsError::KernelTooWide { kernel: k, padded: t });
            }
            Ok(((t - k) / stride + 1, 0))
        }
    }
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(NumericsError::Shape(msg))
}

impl Graph {
    fn check_all(&self, vars: &[Var]) -> Result<()> {
        vars.iter().try_for_each(|&v| self.check(v))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        self.check_all(&[a, b])?;
        if self.val(a.id).shape() != self.val(b.id).shape() {
            return shape_err(format!(
                "{what}: {:?} vs {:?}",
                self.val(a.id).shape(),
                self.val(b.id).shape()
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (va, vb) = (self.val(a.id), self.val(b.id));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(va.shape(), data).unwrap();
        let ng = self.grad_flag(&[a.id, b.id]);
        self.push(out, op, ng)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let va = self.val(a.id);
        let out = Tensor::new(va.shape(), va.data().iter().map(|x| f(*x)).collect()).unwrap();
        let ng = self.grad_flag(&[a.id]);
        self.push(out, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a.id, b.id), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a.id, b.id), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a.id, b.id), |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        Ok(self.map(a, Op::Scale(a.id, c), |x| c * x))
    }

    /// Adds a length-`C` bias to every row of an `R x C` tensor.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check_all(&[x, bias])?;
        let (vx, vb) = (self.val(x.id), self.val(bias.id));
        let c = vx.cols();
        if vb.numel() != c {
            return shape_err(format!("add_row: {} columns vs bias of {}", c, vb.numel()));
        }
        let mut data = vx.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            for (y, b) in row.iter_mut().zip(vb.data()) {
                *y += b;
            }
        }
        let out = Tensor::new(vx.shape(), data).unwrap();
        let ng = self.grad_flag(&[x.id, bias.id]);
        Ok(self.push(out, Op::AddRow { x: x.id, bias: bias.id }, ng))
    }

    /// `(m x k) . (k x n) -> (m x n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_all(&[a, b])?;
        let (va, vb) = (self.val(a.id), self.val(b.id));
        let (m, k) = (va.rows(), va.cols());
        if vb.rank() != 2 || vb.rows() != k {
            return shape_err(format!("matmul: {:?} x {:?}", va.shape(), vb.shape()));
        }
        let n = vb.cols();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), false, 0.0, &mut c);
        let out = Tensor::new(&[m, n], c).unwrap();
        let ng = self.grad_flag(&[a.id, b.id]);
        Ok(self.push(out, Op::Matmul(a.id, b.id), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let va = self.val(a.id);
        let (r, c) = (va.rows(), va.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = va.data()[i * c + j];
            }
        }
        let out = Tensor::new(&[c, r], data).unwrap();
        let ng = self.grad_flag(&[a.id]);
        Ok(self.push(out, Op::Transpose(a.id), ng))
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.check_all(parts)?;
        if parts.is_empty() {
            return Err(NumericsError::EmptyInput("concat"));
        }
        let vals: Vec<&Tensor> = parts.iter().map(|v| self.val(v.id)).collect();
        let (out, shape) = match axis {
            0 => {
                let c = vals[0].cols();
                if vals.iter().any(|t| t.cols() != c) {
                    return shape_err("concat rows: column mismatch".into());
                }
                let r: usize = vals.iter().map(|t| t.rows()).sum();
                let data: Vec<f64> = vals.iter().flat_map(|t| t.data().iter().copied()).collect();
                (data, vec![r, c])
            }
            1 => {
                let r = vals[0].rows();
                if vals.iter().any(|t| t.rows() != r) {
                    return shape_err("concat cols: row mismatch".into());
                }
                let c: usize = vals.iter().map(|t| t.cols()).sum();
                let mut data = Vec::with_capacity(r * c);
                for row in 0..r {
                    for t in &vals {
                        data.extend_from_slice(t.row(row));
                    }
                }
                (data, vec![r, c])
            }
            _ => return shape_err(format!("concat: unsupported axis {axis}")),
        };
        let out = Tensor::new(&shape, out).unwrap();
        let ids: Vec<usize> = parts.iter().map(|v| v.id).collect();
        let ng = self.grad_flag(&ids);
        Ok(self.push(out, Op::Concat { inputs: ids, axis }, ng))
    }

    /// Rows `start .. start + len` of a 2-D tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let vx = self.val(x.id);
        if len == 0 || start + len > vx.rows() {
            return Err(NumericsError::IndexOutOfRange {
                index: start + len,
                len: vx.rows(),
            });
        }
        let c = vx.cols();
        let out = Tensor::new(&[len, c], vx.data()[start * c..(start + len) * c].to_vec()).unwrap();
        let ng = self.grad_flag(&[x.id]);
        Ok(self.push(out, Op::SliceRows { x: x.id, start }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let out = self.val(x.id).reshape(shape)?;
        let ng = self.grad_flag(&[x.id]);
        Ok(self.push(out, Op::Reshape(x.id), ng))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let vx = self.val(x.id);
        let c = vx.cols();
        let mut data = vx.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let out = Tensor::new(vx.shape(), data).unwrap();
        let ng = self.grad_flag(&[x.id]);
        Ok(self.push(out, Op::Softmax(x.id), ng))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let vx = self.val(x.id);
        let c = vx.cols();
        let mut data = vx.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor::new(vx.shape(), data).unwrap();
        let ng = self.grad_flag(&[x.id]);
        Ok(self.push(out, Op::LogSoftmax(x.id), ng))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        Ok(self.map(x, Op::Sigmoid(x.id), sigmoid))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        Ok(self.map(x, Op::Tanh(x.id), f64::tanh))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        Ok(self.map(x, Op::Relu(x.id), |v| v.max(0.0)))
    }

    /// Normalizes each row to zero mean / unit variance, then applies `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        self.check_all(&[x, gamma, beta])?;
        let vx = self.val(x.id);
        let c = vx.cols();
        let (vg, vb) = (self.val(gamma.id), self.val(beta.id));
        if vg.numel() != c || vb.numel() != c {
            return shape_err(format!(
                "layer_norm: {c} columns, gamma {}, beta {}",
                vg.numel(),
                vb.numel()
            ));
        }
        let rows = vx.rows();
        let mut xhat = vec![0.0; rows * c];
        let mut inv_std = vec![0.0; rows];
        let mut data = vec![0.0; rows * c];
        for r in 0..rows {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[r * c + j] = h;
                data[r * c + j] = vg.data()[j] * h + vb.data()[j];
            }
        }
        let out = Tensor::new(vx.shape(), data).unwrap();
        let ng = self.grad_flag(&[x.id, gamma.id, beta.id]);
        let op = Op::LayerNorm {
            x: x.id,
            gamma: gamma.id,
            beta: beta.id,
            xhat,
            inv_std,
        };
        Ok(self.push(out, op, ng))
    }

    /// Gathers rows of a `V x D` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.check(table)?;
        let vt = self.val(table.id);
        if ids.is_empty() {
            return Err(NumericsError::EmptyInput("embedding"));
        }
        let (v, d) = (vt.rows(), vt.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NumericsError::IndexOutOfRange { index: id, len: v });
            }
            data.extend_from_slice(vt.row(id));
        }
        let out = Tensor::new(&[ids.len(), d], data).unwrap();
        let ng = self.grad_flag(&[table.id]);
        Ok(self.push(
            out,
            Op::Embedding {
                table: table.id,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`; identity
    /// in evaluation mode.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        self.check(x)?;
        if !(0.0..1.0).contains(&p) {
            return shape_err(format!("dropout probability {p} outside [0, 1)"));
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let n = self.nodes[x.id].value.numel();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let vx = self.val(x.id);
        let data = vx.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(vx.shape(), data).unwrap();
        let ng = self.grad_flag(&[x.id]);
        Ok(self.push(out, Op::Dropout { x: x.id, mask }, ng))
    }

    /// One GRU step given the precomputed input projection `gx = x W_ih + b_ih`
    /// (`B x 3H`, gate order reset | update | candidate).
    ///
    /// `r = sig(gx_r + gh_r)`, `z = sig(gx_z + gh_z)`, `n = tanh(gx_n + r * gh_n)`,
    /// `h' = (1 - z) * n + z * h`, where `gh = h W_hh + b_hh`.
    pub fn gru_step(&mut self, gx: Var, h: Var, w_hh: Var, b_hh: Var) -> Result<Var> {
        self.check_all(&[gx, h, w_hh, b_hh])?;
        let (vgx, vh, vw, vb) = (self.val(gx.id), self.val(h.id), self.val(w_hh.id), self.val(b_hh.id));
        let (b, hd) = (vh.rows(), vh.cols());
        if vgx.rows() != b || vgx.cols() != 3 * hd || vw.shape() != [hd, 3 * hd] || vb.numel() != 3 * hd {
            return shape_err(format!(
                "gru_step: gx {:?}, h {:?}, w_hh {:?}, b_hh {:?}",
                vgx.shape(),
                vh.shape(),
                vw.shape(),
                vb.shape()
            ));
        }
        let mut gh = vec![0.0; b * 3 * hd];
        for row in gh.chunks_exact_mut(3 * hd) {
            row.copy_from_slice(vb.data());
        }
        gemm(b, hd, 3 * hd, vh.data(), false, vw.data(), false, 1.0, &mut gh);
        let mut r = vec![0.0; b * hd];
        let mut z = vec![0.0; b * hd];
        let mut n = vec![0.0; b * hd];
        let mut ghn = vec![0.0; b * hd];
        let mut hn = vec![0.0; b * hd];
        for row in 0..b {
            let base = row * 3 * hd;
            for j in 0..hd {
                let k = row * hd + j;
                r[k] = sigmoid(vgx.data()[base + j] + gh[base + j]);
                z[k] = sigmoid(vgx.data()[base + hd + j] + gh[base + hd + j]);
                ghn[k] = gh[base + 2 * hd + j];
                n[k] = (vgx.data()[base + 2 * hd + j] + r[k] * ghn[k]).tanh();
                hn[k] = (1.0 - z[k]) * n[k] + z[k] * vh.data()[k];
            }
        }
        let out = Tensor::new(&[b, hd], hn).unwrap();
        let ng = self.grad_flag(&[gx.id, h.id, w_hh.id, b_hh.id]);
        let op = Op::GruStep {
            gx: gx.id,
            h: h.id,
            w_hh: w_hh.id,
            b_hh: b_hh.id,
            r,
            z,
            n,
            ghn,
        };
        Ok(self.push(out, op, ng))
    }

    /// Full GRU cell: `gru_step(x W_ih + b_ih, h, W_hh, b_hh)`.
    pub fn gru_cell(&mut self, x: Var, h: Var, w_ih: Var, w_hh: Var, b_ih: Var, b_hh: Var) -> Result<Var> {
        let xw = self.matmul(x, w_ih)?;
        let gx = self.add_row(xw, b_ih)?;
        self.gru_step(gx, h, w_hh, b_hh)
    }

    /// Cross-correlation of a `T x Cin` input with a `K x Cin x Cout` kernel.
    pub fn conv1d(&mut self, input: Var, kernel: Var, stride: usize, padding: Padding) -> Result<Var> {
        self.conv1d_shared(input, kernel, stride, padding, 1)
    }

    /// Convolution over time applied independently to each of `width`
    /// column groups with one shared `K x Cin x Cout` kernel. The input is
    /// `T x (width * Cin)` with column `j * Cin + c`; the output is
    /// `T' x (width * Cout)` with the same layout.
    pub fn conv1d_shared(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: Padding,
        width: usize,
    ) -> Result<Var> {
        self.check_all(&[input, kernel])?;
        let (vx, vk) = (self.val(input.id), self.val(kernel.id));
        if vk.rank() != 3 {
            return shape_err(format!("conv1d: kernel must be K x Cin x Cout, got {:?}", vk.shape()));
        }
        let (k, c_in, c_out) = (vk.shape()[0], vk.shape()[1], vk.shape()[2]);
        if width == 0 || vx.cols() != width * c_in {
            return shape_err(format!(
                "conv1d: input {:?} does not hold {width} groups of {c_in} channels",
                vx.shape()
            ));
        }
        let t_in = vx.rows();
        let (t_out, pad_left) = conv_output_len(t_in, k, stride, padding)?;
        let geom = ConvGeom {
            t_in,
            t_out,
            k,
            c_in,
            c_out,
            width,
            stride,
            pad_left,
        };
        let cols = im2col(&geom, vx.data());
        let mut out = vec![0.0; t_out * width * c_out];
        gemm(
            t_out * width,
            k * c_in,
            c_out,
            &cols,
            false,
            vk.data(),
            false,
            0.0,
            &mut out,
        );
        let out = Tensor::new(&[t_out, width * c_out], out).unwrap();
        let ng = self.grad_flag(&[input.id, kernel.id]);
        let op = Op::Conv1d {
            input: input.id,
            kernel: kernel.id,
            geom,
            cols,
        };
        Ok(self.push(out, op, ng))
    }

    /// Mean over non-pad positions of `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], pad_id: usize) -> Result<Var> {
        self.check(logits)?;
        let vl = self.val(logits.id);
        let (l, v) = (vl.rows(), vl.cols());
        if targets.len() != l {
            return shape_err(format!("cross_entropy: {l} rows vs {} targets", targets.len()));
        }
        let mut probs = vec![0.0; l * v];
        let mut total = 0.0;
        let mut count = 0;
        for (r, &t) in targets.iter().enumerate() {
            let row = vl.row(r);
            let lse = log_sum_exp(row);
            for j in 0..v {
                probs[r * v + j] = (row[j] - lse).exp();
            }
            if t == pad_id {
                continue;
            }
            if t >= v {
                return Err(NumericsError::TargetOutOfRange { id: t, vocab: v });
            }
            total += lse - row[t];
            count += 1;
        }
        if count == 0 {
            return Err(NumericsError::AllPadding);
        }
        let out = Tensor::scalar(total / count as f64);
        let ng = self.grad_flag(&[logits.id]);
        let op = Op::CrossEntropy {
            logits: logits.id,
            targets: targets.to_vec(),
            pad_id,
            probs,
            count,
        };
        Ok(self.push(out, op, ng))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.val(x.id).data().iter().sum();
        let ng = self.grad_flag(&[x.id]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x.id), ng))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let vx = self.val(x.id);
        let m = vx.data().iter().sum::<f64>() / vx.numel() as f64;
        let ng = self.grad_flag(&[x.id]);
        Ok(self.push(Tensor::scalar(m), Op::Mean(x.id), ng))
    }

    /// `sum(a * b)`.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        self.sum(p)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
