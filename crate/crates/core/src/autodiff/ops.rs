use super::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{broadcast_shapes, broadcast_strides, for_each_offset, strides, Tensor};

/// `out[m,n] += a[m,k] · b[k,n]` on flat row-major slices.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// Batch layout of a matmul: broadcast batch shape and per-operand batch strides
/// in units of whole matrices.
pub(crate) struct MatmulLayout {
    pub batch: Vec<usize>,
    pub a_strides: Vec<usize>,
    pub b_strides: Vec<usize>,
    pub out_strides: Vec<usize>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

pub(crate) fn matmul_layout(a: &[usize], b: &[usize]) -> Result<MatmulLayout> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::shape("matmul", a, b));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(Error::shape("matmul", a, b));
    }
    let a_batch = &a[..a.len() - 2];
    let b_batch = &b[..b.len() - 2];
    let batch = broadcast_shapes("matmul", a_batch, b_batch)?;
    let scale = |s: Vec<usize>, f: usize| s.into_iter().map(|x| x * f).collect::<Vec<_>>();
    Ok(MatmulLayout {
        a_strides: scale(broadcast_strides(a_batch, &batch), m * k),
        b_strides: scale(broadcast_strides(b_batch, &batch), k * n),
        out_strides: scale(strides(&batch), m * n),
        batch,
        m,
        k,
        n,
    })
}

/// Splits a shape around `axis` into (outer, axis length, inner).
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    fn binary_broadcast(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            return Tensor::new(ta.shape(), data);
        }
        let out_shape = broadcast_shapes(op, ta.shape(), tb.shape())?;
        let sa = broadcast_strides(ta.shape(), &out_shape);
        let sb = broadcast_strides(tb.shape(), &out_shape);
        let mut data = Vec::with_capacity(out_shape.iter().product());
        let (da, db) = (ta.data(), tb.data());
        for_each_offset(&out_shape, [&sa, &sb], |[ia, ib]| data.push(f(da[ia], db[ib])));
        Tensor::new(&out_shape, data)
    }

    fn unary(&mut self, v: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(v);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(t.shape(), data).expect("same shape");
        self.push_op(out, op, &[v])
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary_broadcast("add", a, b, |x, y| x + y)?;
        Ok(self.push_op(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary_broadcast("sub", a, b, |x, y| x - y)?;
        Ok(self.push_op(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary_broadcast("mul", a, b, |x, y| x * y)?;
        Ok(self.push_op(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, v: Var, factor: f64) -> Var {
        self.unary(v, Op::Scale(v, factor), |x| x * factor)
    }

    pub fn relu(&mut self, v: Var) -> Var {
        self.unary(v, Op::Relu(v), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn log(&mut self, v: Var) -> Var {
        self.unary(v, Op::Log(v), f64::ln)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, v: Var) -> Var {
        let s = self.value(v).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(v), &[v])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, v: Var) -> Var {
        let t = self.value(v);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push_op(Tensor::scalar(s), Op::Mean(v), &[v])
    }

    /// Matrix product over the last two axes; leading axes broadcast.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let layout = matmul_layout(ta.shape(), tb.shape())?;
        let MatmulLayout { m, k, n, .. } = layout;
        let mut shape = layout.batch.clone();
        shape.extend([m, n]);
        let mut data = vec![0.0; shape.iter().product()];
        let (da, db) = (ta.data(), tb.data());
        for_each_offset(
            &layout.batch,
            [&layout.a_strides, &layout.b_strides, &layout.out_strides],
            |[oa, ob, oo]| {
                gemm_acc(
                    &da[oa..oa + m * k],
                    &db[ob..ob + k * n],
                    &mut data[oo..oo + m * n],
                    m,
                    k,
                    n,
                )
            },
        );
        let out = Tensor::new(&shape, data)?;
        Ok(self.push_op(out, Op::Matmul(a, b), &[a, b]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, v: Var) -> Result<Var> {
        let t = self.value(v);
        let shape = t.shape();
        if shape.len() < 2 {
            return Err(Error::shape("transpose", shape, &[]));
        }
        let (r, c) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let mut out_shape = shape.to_vec();
        let rank = out_shape.len();
        out_shape.swap(rank - 2, rank - 1);
        let data = transpose_last(t.data(), r, c);
        let out = Tensor::new(&out_shape, data)?;
        Ok(self.push_op(out, Op::Transpose(v), &[v]))
    }

    pub fn reshape(&mut self, v: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(v);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::shape("reshape", t.shape(), shape));
        }
        let out = t.reshaped(shape)?;
        Ok(self.push_op(out, Op::Reshape(v), &[v]))
    }

    /// Concatenates along the last axis; all leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let lead = {
            let s = self.shape(*first);
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat_last", self.shape(*first), s));
            }
            widths.push(s[s.len() - 1]);
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let out = Tensor::new(&shape, data)?;
        Ok(self.push_op(out, Op::Concat(parts.to_vec()), parts))
    }

    /// Softmax along `axis`, max-subtracted.
    pub fn softmax(&mut self, v: Var, axis: usize) -> Result<Var> {
        let t = self.value(v);
        if axis >= t.rank() {
            return Err(Error::Contract(format!(
                "softmax axis {axis} out of range for shape {:?}",
                t.shape()
            )));
        }
        let (outer, len, inner) = axis_split(t.shape(), axis);
        let src = t.data();
        let mut data = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                softmax_strided(src, &mut data, base, inner, len);
            }
        }
        let out = Tensor::new(t.shape(), data)?;
        Ok(self.push_op(out, Op::Softmax { input: v, axis }, &[v]))
    }

    /// Softmax over the last axis of a `[.., T, T]` score tensor where row `i`
    /// only sees columns `0..=i`. Masked weights are exactly zero.
    pub fn causal_softmax(&mut self, v: Var) -> Result<Var> {
        let t = self.value(v);
        let shape = t.shape();
        let rank = shape.len();
        if rank < 2 || shape[rank - 1] != shape[rank - 2] {
            return Err(Error::shape("causal_softmax", shape, &[]));
        }
        let len = shape[rank - 1];
        let src = t.data();
        let mut data = vec![0.0; src.len()];
        for (row_idx, row) in src.chunks(len).enumerate() {
            let visible = row_idx % len + 1;
            let base = row_idx * len;
            softmax_strided(row, &mut data[base..], 0, 1, visible);
        }
        let out = Tensor::new(shape, data)?;
        Ok(self.push_op(
            out,
            Op::Softmax { input: v, axis: rank - 1 },
            &[v],
        ))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, v: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let t = self.value(v);
        let c = t.last_dim();
        for p in [gamma, beta] {
            if self.shape(p) != [c] {
                return Err(Error::shape("layer_norm", t.shape(), self.shape(p)));
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = t.numel() / c;
        let mut xhat = Vec::with_capacity(t.numel());
        let mut rstd = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(t.numel());
        for row in t.data().chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd.push(r);
            for (j, &x) in row.iter().enumerate() {
                let h = (x - mean) * r;
                xhat.push(h);
                data.push(g[j] * h + b[j]);
            }
        }
        let out = Tensor::new(t.shape(), data)?;
        Ok(self.push_op(
            out,
            Op::LayerNorm { input: v, gamma, beta, xhat, rstd },
            &[v, gamma, beta],
        ))
    }

    /// Mean softmax cross-entropy of `[B, K]` logits against class indices,
    /// using a fused log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 2 || t.shape()[0] != labels.len() {
            return Err(Error::shape("cross_entropy", t.shape(), &[labels.len()]));
        }
        let k = t.shape()[1];
        if let Some(row) = labels.iter().position(|&y| y >= k) {
            return Err(Error::Data {
                row,
                msg: format!("label {} outside 0..{k}", labels[row]),
            });
        }
        let mut probs = vec![0.0; t.numel()];
        let mut total = 0.0;
        for (r, (row, &y)) in t.data().chunks(k).zip(labels).enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
            for (j, &x) in row.iter().enumerate() {
                probs[r * k + j] = (x - lse).exp();
            }
        }
        let loss = total / labels.len() as f64;
        Ok(self.push_op(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, labels: labels.to_vec(), probs },
            &[logits],
        ))
    }
}

pub(crate) fn transpose_last(src: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for (mat_in, mat_out) in src.chunks(r * c).zip(out.chunks_mut(r * c)) {
        for i in 0..r {
            for j in 0..c {
                mat_out[j * r + i] = mat_in[i * c + j];
            }
        }
    }
    out
}

/// Softmax of `len` elements starting at `base` with the given stride.
fn softmax_strided(src: &[f64], dst: &mut [f64], base: usize, stride: usize, len: usize) {
    let max = (0..len)
        .map(|j| src[base + j * stride])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for j in 0..len {
        let e = (src[base + j * stride] - max).exp();
        dst[base + j * stride] = e;
        denom += e;
    }
    for j in 0..len {
        dst[base + j * stride] /= denom;
    }
}
