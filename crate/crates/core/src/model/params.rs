//! Parameter trees, generic over the leaf type.
//!
//! `P = Tensor` is the stored model; `P = Var` is the same tree bound onto a
//! tape for one forward pass. Visiting order is fixed and defines both the
//! optimizer-state layout and the checkpoint array order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::sentencing::EmbeddingWeights;
use crate::tensor::Tensor;

pub type Named<'a, P> = Vec<(String, &'a P)>;
pub type NamedMut<'a, P> = Vec<(String, &'a mut P)>;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights<P> {
    pub w_q: P,
    pub w_k: P,
    pub w_v: P,
}

/// Per-head `C × C/H` projections and the `C × C` output mixer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<P> {
    pub heads: Vec<HeadWeights<P>>,
    pub w_out: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormWeights<P> {
    pub gamma: P,
    pub beta: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights<P> {
    pub weight: P,
    pub bias: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlockWeights<P> {
    pub ln_attn: LayerNormWeights<P>,
    pub attn: AttentionWeights<P>,
    pub ln_mlp: LayerNormWeights<P>,
    pub mlp_in: LinearWeights<P>,
    pub mlp_out: LinearWeights<P>,
    pub ln_out: LayerNormWeights<P>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PllmWeights<P> {
    pub embedding: EmbeddingWeights<P>,
    pub blocks: Vec<EncoderBlockWeights<P>>,
    pub head: LinearWeights<P>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnWeights<P> {
    pub layers: Vec<LinearWeights<P>>,
}

pub type AttentionParams = AttentionWeights<Tensor>;
pub type EncoderBlockParams = EncoderBlockWeights<Tensor>;
pub type ModelParams = PllmWeights<Tensor>;
pub type FnnParams = FnnWeights<Tensor>;

/// Structural map and ordered visits over a parameter tree.
pub trait ParamTree<P> {
    type Mapped<U>;

    fn map<U>(&self, f: &mut impl FnMut(&P) -> U) -> Self::Mapped<U>;
    fn visit<'a>(&'a self, prefix: &str, out: &mut Named<'a, P>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut NamedMut<'a, P>);

    fn named(&self) -> Named<'_, P> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn named_mut(&mut self) -> NamedMut<'_, P> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

macro_rules! leaf_struct {
    ($ty:ident { $($field:ident),* }) => {
        impl<P> ParamTree<P> for $ty<P> {
            type Mapped<U> = $ty<U>;

            fn map<U>(&self, f: &mut impl FnMut(&P) -> U) -> $ty<U> {
                $ty { $($field: f(&self.$field)),* }
            }

            fn visit<'a>(&'a self, prefix: &str, out: &mut Named<'a, P>) {
                $(out.push((join(prefix, stringify!($field)), &self.$field));)*
            }

            fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut NamedMut<'a, P>) {
                $(out.push((join(prefix, stringify!($field)), &mut self.$field));)*
            }
        }
    };
}

leaf_struct!(HeadWeights { w_q, w_k, w_v });
leaf_struct!(LayerNormWeights { gamma, beta });
leaf_struct!(LinearWeights { weight, bias });
leaf_struct!(EmbeddingWeights { weight, bias, position });

impl<P> ParamTree<P> for AttentionWeights<P> {
    type Mapped<U> = AttentionWeights<U>;

    fn map<U>(&self, f: &mut impl FnMut(&P) -> U) -> AttentionWeights<U> {
        AttentionWeights {
            heads: self.heads.iter().map(|h| h.map(f)).collect(),
            w_out: f(&self.w_out),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Named<'a, P>) {
        for (i, h) in self.heads.iter().enumerate() {
            h.visit(&join(prefix, &format!("head{i}")), out);
        }
        out.push((join(prefix, "w_out"), &self.w_out));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut NamedMut<'a, P>) {
        for (i, h) in self.heads.iter_mut().enumerate() {
            h.visit_mut(&join(prefix, &format!("head{i}")), out);
        }
        out.push((join(prefix, "w_out"), &mut self.w_out));
    }
}

impl<P> ParamTree<P> for EncoderBlockWeights<P> {
    type Mapped<U> = EncoderBlockWeights<U>;

    fn map<U>(&self, f: &mut impl FnMut(&P) -> U) -> EncoderBlockWeights<U> {
        EncoderBlockWeights {
            ln_attn: self.ln_attn.map(f),
            attn: self.attn.map(f),
            ln_mlp: self.ln_mlp.map(f),
            mlp_in: self.mlp_in.map(f),
            mlp_out: self.mlp_out.map(f),
            ln_out: self.ln_out.map(f),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Named<'a, P>) {
        self.ln_attn.visit(&join(prefix, "ln_attn"), out);
        self.attn.visit(&join(prefix, "attn"), out);
        self.ln_mlp.visit(&join(prefix, "ln_mlp"), out);
        self.mlp_in.visit(&join(prefix, "mlp_in"), out);
        self.mlp_out.visit(&join(prefix, "mlp_out"), out);
        self.ln_out.visit(&join(prefix, "ln_out"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut NamedMut<'a, P>) {
        self.ln_attn.visit_mut(&join(prefix, "ln_attn"), out);
        self.attn.visit_mut(&join(prefix, "attn"), out);
        self.ln_mlp.visit_mut(&join(prefix, "ln_mlp"), out);
        self.mlp_in.visit_mut(&join(prefix, "mlp_in"), out);
        self.mlp_out.visit_mut(&join(prefix, "mlp_out"), out);
        self.ln_out.visit_mut(&join(prefix, "ln_out"), out);
    }
}

impl<P> ParamTree<P> for PllmWeights<P> {
    type Mapped<U> = PllmWeights<U>;

    fn map<U>(&self, f: &mut impl FnMut(&P) -> U) -> PllmWeights<U> {
        PllmWeights {
            embedding: self.embedding.map(f),
            blocks: self.blocks.iter().map(|b| b.map(f)).collect(),
            head: self.head.map(f),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Named<'a, P>) {
        self.embedding.visit(&join(prefix, "embedding"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), out);
        }
        self.head.visit(&join(prefix, "head"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut NamedMut<'a, P>) {
        self.embedding.visit_mut(&join(prefix, "embedding"), out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{i}")), out);
        }
        self.head.visit_mut(&join(prefix, "head"), out);
    }
}

impl<P> ParamTree<P> for FnnWeights<P> {
    type Mapped<U> = FnnWeights<U>;

    fn map<U>(&self, f: &mut impl FnMut(&P) -> U) -> FnnWeights<U> {
        FnnWeights {
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Named<'a, P>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layer{i}")), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut NamedMut<'a, P>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("layer{i}")), out);
        }
    }
}

/// Glorot-uniform `fan_in × fan_out` matrix: `U(−a, a)`, `a = √(6 / (fan_in + fan_out))`.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)).collect();
    Tensor::new(&[fan_in, fan_out], data).expect("shape matches data")
}

pub(crate) fn layer_norm(dim: usize) -> LayerNormWeights<Tensor> {
    LayerNormWeights {
        gamma: Tensor::ones(&[dim]),
        beta: Tensor::zeros(&[dim]),
    }
}

pub(crate) fn linear(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> LinearWeights<Tensor> {
    LinearWeights {
        weight: glorot(rng, fan_in, fan_out),
        bias: Tensor::zeros(&[fan_out]),
    }
}

/// Total scalar parameter count of a tree.
pub fn parameter_count<T: ParamTree<Tensor>>(tree: &T) -> usize {
    tree.named().iter().map(|(_, t)| t.numel()).sum()
}
