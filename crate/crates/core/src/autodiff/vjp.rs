//! Vector-Jacobian products for every recorded op.

use super::ops::{axis_split, gemm_acc, matmul_layout, transpose_last};
use super::{Node, Op, Var};
use crate::tensor::{broadcast_strides, for_each_offset};

type Grads = [Option<Vec<f64>>];

fn needs(nodes: &[Node], v: Var) -> bool {
    nodes[v.0].value.requires_grad
}

fn slot<'a>(nodes: &[Node], grads: &'a mut Grads, v: Var) -> &'a mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()])
}

fn accumulate(nodes: &[Node], grads: &mut Grads, v: Var, delta: impl IntoIterator<Item = f64>) {
    if !needs(nodes, v) {
        return;
    }
    let g = slot(nodes, grads, v);
    for (a, d) in g.iter_mut().zip(delta) {
        *a += d;
    }
}

/// Reduces an output-shaped gradient onto a (possibly broadcast) input.
fn accumulate_broadcast(
    nodes: &[Node],
    grads: &mut Grads,
    out_shape: &[usize],
    v: Var,
    g: &[f64],
    weight: Option<Var>,
) {
    if !needs(nodes, v) {
        return;
    }
    let in_shape = nodes[v.0].value.shape().to_vec();
    let si = broadcast_strides(&in_shape, out_shape);
    let (other_data, so) = match weight {
        Some(w) => {
            let t = &nodes[w.0].value;
            (Some(t.data()), broadcast_strides(t.shape(), out_shape))
        }
        None => (None, vec![0; out_shape.len()]),
    };
    let dst = slot(nodes, grads, v);
    let mut k = 0;
    for_each_offset(out_shape, [&si, &so], |[ii, io]| {
        let factor = other_data.map_or(1.0, |d| d[io]);
        dst[ii] += g[k] * factor;
        k += 1;
    });
}

pub(super) fn propagate(nodes: &[Node], i: usize, g: &[f64], grads: &mut Grads) {
    let out = &nodes[i].value;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate_broadcast(nodes, grads, out.shape(), *a, g, None);
            accumulate_broadcast(nodes, grads, out.shape(), *b, g, None);
        }
        Op::Sub(a, b) => {
            accumulate_broadcast(nodes, grads, out.shape(), *a, g, None);
            let neg: Vec<f64> = g.iter().map(|x| -x).collect();
            accumulate_broadcast(nodes, grads, out.shape(), *b, &neg, None);
        }
        Op::Mul(a, b) => {
            accumulate_broadcast(nodes, grads, out.shape(), *a, g, Some(*b));
            accumulate_broadcast(nodes, grads, out.shape(), *b, g, Some(*a));
        }
        Op::Scale(v, f) => accumulate(nodes, grads, *v, g.iter().map(|x| x * f)),
        Op::Relu(v) => {
            let x = nodes[v.0].value.data();
            accumulate(
                nodes,
                grads,
                *v,
                g.iter().zip(x).map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 }),
            );
        }
        Op::Log(v) => {
            let x = nodes[v.0].value.data();
            accumulate(nodes, grads, *v, g.iter().zip(x).map(|(gi, xi)| gi / xi));
        }
        Op::Sum(v) => {
            let n = nodes[v.0].value.numel();
            accumulate(nodes, grads, *v, std::iter::repeat_n(g[0], n));
        }
        Op::Mean(v) => {
            let n = nodes[v.0].value.numel();
            accumulate(nodes, grads, *v, std::iter::repeat_n(g[0] / n as f64, n));
        }
        Op::Matmul(a, b) => matmul_vjp(nodes, grads, *a, *b, g),
        Op::Transpose(v) => {
            let s = out.shape();
            let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
            accumulate(nodes, grads, *v, transpose_last(g, r, c));
        }
        Op::Reshape(v) => accumulate(nodes, grads, *v, g.iter().copied()),
        Op::Concat(parts) => {
            let total = out.last_dim();
            let rows = out.numel() / total;
            let mut start = 0;
            for p in parts {
                let w = nodes[p.0].value.last_dim();
                if needs(nodes, *p) {
                    let dst = slot(nodes, grads, *p);
                    for r in 0..rows {
                        let src = &g[r * total + start..r * total + start + w];
                        for (d, s) in dst[r * w..(r + 1) * w].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                start += w;
            }
        }
        Op::Softmax { input, axis, .. } => {
            if !needs(nodes, *input) {
                return;
            }
            // dx = y ⊙ (g − Σ g⊙y) along the axis; masked entries have y = 0.
            let y = out.data();
            let (outer, len, inner) = axis_split(out.shape(), *axis);
            let dst = slot(nodes, grads, *input);
            for o in 0..outer {
                for k in 0..inner {
                    let base = o * len * inner + k;
                    let dot: f64 = (0..len)
                        .map(|j| g[base + j * inner] * y[base + j * inner])
                        .sum();
                    for j in 0..len {
                        let at = base + j * inner;
                        dst[at] += y[at] * (g[at] - dot);
                    }
                }
            }
        }
        Op::LayerNorm { input, gamma, beta, xhat, rstd } => {
            let c = out.last_dim();
            if needs(nodes, *gamma) {
                let dst = slot(nodes, grads, *gamma);
                for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                    for j in 0..c {
                        dst[j] += gr[j] * hr[j];
                    }
                }
            }
            if needs(nodes, *beta) {
                let dst = slot(nodes, grads, *beta);
                for gr in g.chunks(c) {
                    for j in 0..c {
                        dst[j] += gr[j];
                    }
                }
            }
            if needs(nodes, *input) {
                let gamma_v = nodes[gamma.0].value.data().to_vec();
                let dst = slot(nodes, grads, *input);
                for (r, (gr, hr)) in g.chunks(c).zip(xhat.chunks(c)).enumerate() {
                    let dh: Vec<f64> = gr.iter().zip(&gamma_v).map(|(a, b)| a * b).collect();
                    let mean_dh = dh.iter().sum::<f64>() / c as f64;
                    let mean_dh_h = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        dst[r * c + j] += rstd[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        }
        Op::CrossEntropy { logits, labels, probs } => {
            let k = nodes[logits.0].value.shape()[1];
            let scale = g[0] / labels.len() as f64;
            let mut d = probs.clone();
            for (r, &y) in labels.iter().enumerate() {
                d[r * k + y] -= 1.0;
            }
            accumulate(nodes, grads, *logits, d.into_iter().map(|x| x * scale));
        }
    }
}

fn matmul_vjp(nodes: &[Node], grads: &mut Grads, a: Var, b: Var, g: &[f64]) {
    let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
    let layout = matmul_layout(ta.shape(), tb.shape()).expect("validated in forward");
    let (m, k, n) = (layout.m, layout.k, layout.n);
    if needs(nodes, a) {
        // dA = dOut · Bᵀ
        let bt = transpose_last(tb.data(), k, n);
        let dst = slot(nodes, grads, a);
        for_each_offset(
            &layout.batch,
            [&layout.a_strides, &layout.b_strides, &layout.out_strides],
            |[oa, ob, oo]| {
                gemm_acc(&g[oo..oo + m * n], &bt[ob..ob + k * n], &mut dst[oa..oa + m * k], m, n, k)
            },
        );
    }
    if needs(nodes, b) {
        // dB = Aᵀ · dOut
        let at = transpose_last(ta.data(), m, k);
        let dst = slot(nodes, grads, b);
        for_each_offset(
            &layout.batch,
            [&layout.a_strides, &layout.b_strides, &layout.out_strides],
            |[oa, ob, oo]| {
                gemm_acc(&at[oa..oa + m * k], &g[oo..oo + m * n], &mut dst[ob..ob + k * n], k, m, n)
            },
        );
    }
}
