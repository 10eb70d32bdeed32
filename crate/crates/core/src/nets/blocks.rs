//! Token-level transformer pieces: patch tokenizer, multi-head attention and
//! the gated feed-forward used in every block.

use dimlight_tensor::Tensor;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{join, LayerNorm, Linear, Module};

/// Splits `(1, C, H, W)` into non-overlapping `patch`×`patch` tokens:
/// `(H/p · W/p, C · p · p)`.
pub fn patchify(x: &Tensor, patch: usize) -> Result<Tensor> {
    let &[1, c, h, w] = x.shape() else {
        return Err(Error::Shape(format!("patchify expects (1, C, H, W), got {:?}", x.shape())));
    };
    if h % patch != 0 || w % patch != 0 {
        return Err(Error::Shape(format!("{h}x{w} is not a multiple of patch {patch}")));
    }
    let (gh, gw) = (h / patch, w / patch);
    Ok(x.reshape(&[c, gh, patch, gw, patch])?
        .permute(&[1, 3, 0, 2, 4])?
        .reshape(&[gh * gw, c * patch * patch])?)
}

/// Inverse of [`patchify`].
pub fn unpatchify(tokens: &Tensor, channels: usize, h: usize, w: usize, patch: usize) -> Result<Tensor> {
    let (gh, gw) = (h / patch, w / patch);
    Ok(tokens
        .reshape(&[gh, gw, channels, patch, patch])?
        .permute(&[2, 0, 3, 1, 4])?
        .reshape(&[1, channels, h, w])?)
}

/// Average-pools `(1, C, H, W)` onto the token grid: `(H/p · W/p, C)`.
pub fn pool_tokens(x: &Tensor, patch: usize) -> Result<Tensor> {
    let c = x.shape()[1];
    let t = patchify(x, patch)?;
    let n = t.shape()[0];
    Ok(t.reshape(&[n, c, patch * patch])?.mean(&[2], false)?)
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    /// `context_dim` is the width of the key/value source tokens.
    pub fn new<R: Rng + ?Sized>(dim: usize, context_dim: usize, heads: usize, rng: &mut R) -> Self {
        MultiHeadAttention {
            query: Linear::new(dim, dim, rng),
            key: Linear::new(context_dim, dim, rng),
            value: Linear::new(context_dim, dim, rng),
            output: Linear::new(dim, dim, rng),
            heads,
        }
    }

    fn split(&self, x: &Tensor) -> Result<Tensor> {
        let (n, d) = (x.shape()[0], x.shape()[1]);
        Ok(x.reshape(&[n, self.heads, d / self.heads])?.permute(&[1, 0, 2])?)
    }

    /// Queries from `x` `(N, D)`, keys and values from `context` `(M, Dc)`.
    pub fn forward(&self, x: &Tensor, context: &Tensor) -> Result<Tensor> {
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let q = self.split(&self.query.forward(x)?)?;
        let k = self.split(&self.key.forward(context)?)?;
        let v = self.split(&self.value.forward(context)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let weights = q.matmul(&k.transpose_last()?)?.mul_scalar(scale)?.softmax(2)?;
        let merged = weights.matmul(&v)?.permute(&[1, 0, 2])?.reshape(&[n, d])?;
        self.output.forward(&merged)
    }
}

impl Module for MultiHeadAttention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}

/// `out(lin(x) ⊙ sigmoid(gate(x)))`.
#[derive(Debug, Clone)]
pub struct GatedFeedForward {
    pub linear: Linear,
    pub gate: Linear,
    pub output: Linear,
}

impl GatedFeedForward {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        GatedFeedForward {
            linear: Linear::new(dim, hidden, rng),
            gate: Linear::new(dim, hidden, rng),
            output: Linear::new(hidden, dim, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.linear.forward(x)?.mul(&self.gate.forward(x)?.sigmoid()?)?;
        self.output.forward(&h)
    }
}

impl Module for GatedFeedForward {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.linear.visit(&join(prefix, "linear"), f);
        self.gate.visit(&join(prefix, "gate"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.linear.visit_mut(&join(prefix, "linear"), f);
        self.gate.visit_mut(&join(prefix, "gate"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}

/// Pre-norm block: attention then gating, each with a residual connection.
/// With a context norm present the attention is cross-attention onto
/// external tokens; otherwise self-attention.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub norm_attn: LayerNorm,
    pub norm_context: Option<LayerNorm>,
    pub attention: MultiHeadAttention,
    pub norm_gate: LayerNorm,
    pub gate: GatedFeedForward,
}

impl TransformerBlock {
    pub fn self_attention<R: Rng + ?Sized>(dim: usize, heads: usize, hidden: usize, rng: &mut R) -> Self {
        TransformerBlock {
            norm_attn: LayerNorm::new(dim),
            norm_context: None,
            attention: MultiHeadAttention::new(dim, dim, heads, rng),
            norm_gate: LayerNorm::new(dim),
            gate: GatedFeedForward::new(dim, hidden, rng),
        }
    }

    pub fn cross_attention<R: Rng + ?Sized>(
        dim: usize,
        context_dim: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        TransformerBlock {
            norm_attn: LayerNorm::new(dim),
            norm_context: Some(LayerNorm::new(context_dim)),
            attention: MultiHeadAttention::new(dim, context_dim, heads, rng),
            norm_gate: LayerNorm::new(dim),
            gate: GatedFeedForward::new(dim, hidden, rng),
        }
    }

    pub fn forward(&self, x: &Tensor, context: Option<&Tensor>) -> Result<Tensor> {
        let q = self.norm_attn.forward(x)?;
        let attended = match (&self.norm_context, context) {
            (Some(norm), Some(ctx)) => self.attention.forward(&q, &norm.forward(ctx)?)?,
            (None, None) => self.attention.forward(&q, &q)?,
            (Some(_), None) => return Err(Error::Shape("cross-attention block needs context tokens".into())),
            (None, Some(_)) => return Err(Error::Shape("self-attention block given context tokens".into())),
        };
        let x = x.add(&attended)?;
        Ok(x.add(&self.gate.forward(&self.norm_gate.forward(&x)?)?)?)
    }
}

impl Module for TransformerBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.norm_attn.visit(&join(prefix, "norm_attn"), f);
        if let Some(n) = &self.norm_context {
            n.visit(&join(prefix, "norm_context"), f);
        }
        self.attention.visit(&join(prefix, "attention"), f);
        self.norm_gate.visit(&join(prefix, "norm_gate"), f);
        self.gate.visit(&join(prefix, "gate"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.norm_attn.visit_mut(&join(prefix, "norm_attn"), f);
        if let Some(n) = &mut self.norm_context {
            n.visit_mut(&join(prefix, "norm_context"), f);
        }
        self.attention.visit_mut(&join(prefix, "attention"), f);
        self.norm_gate.visit_mut(&join(prefix, "norm_gate"), f);
        self.gate.visit_mut(&join(prefix, "gate"), f);
    }
}
