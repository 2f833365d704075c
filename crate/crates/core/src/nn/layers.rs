//! Pre-norm transformer encoder and sinusoidal positions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// `PE[p, 2i] = sin(p / 10000^(2i/d))`, `PE[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn sinusoidal_positions(seq_len: usize, d_model: usize) -> Result<Tensor> {
    if !d_model.is_multiple_of(2) {
        return Err(Error::TensorShape(format!("positional codes need an even d_model, got {d_model}")));
    }
    let mut data = vec![0.0; seq_len * d_model];
    for p in 0..seq_len {
        for i in 0..d_model / 2 {
            let angle = p as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data[p * d_model + 2 * i] = angle.sin();
            data[p * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(&[seq_len, d_model], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
}

impl EncoderConfig {
    pub fn new(d_model: usize, heads: usize, layers: usize) -> Self {
        EncoderConfig {
            d_model,
            heads,
            layers,
            ff_hidden: 2 * d_model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::TensorShape(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::TensorShape(format!("d_model {} must be even", self.d_model)));
        }
        Ok(())
    }
}

/// Register every encoder parameter under `enc.{layer}.*`.
pub fn init_encoder<R: Rng>(params: &mut ParamSet, cfg: &EncoderConfig, rng: &mut R) -> Result<()> {
    cfg.validate()?;
    let d = cfg.d_model;
    for l in 0..cfg.layers {
        let p = |s: &str| format!("enc.{l}.{s}");
        params.add(&p("ln1.g"), Tensor::filled(&[d], 1.0));
        params.add(&p("ln1.b"), Tensor::zeros(&[d]));
        // No key bias: it shifts every score in a row equally and cancels
        // in the softmax.
        for w in ["q", "k", "v", "o"] {
            params.add(&p(&format!("attn.w{w}")), Tensor::glorot(rng, d, d));
            if w != "k" {
                params.add(&p(&format!("attn.b{w}")), Tensor::zeros(&[d]));
            }
        }
        params.add(&p("ln2.g"), Tensor::filled(&[d], 1.0));
        params.add(&p("ln2.b"), Tensor::zeros(&[d]));
        params.add(&p("ff1.w"), Tensor::glorot(rng, d, cfg.ff_hidden));
        params.add(&p("ff1.b"), Tensor::zeros(&[cfg.ff_hidden]));
        params.add(&p("ff2.w"), Tensor::glorot(rng, cfg.ff_hidden, d));
        params.add(&p("ff2.b"), Tensor::zeros(&[d]));
    }
    Ok(())
}

pub struct EncoderOutput {
    pub out: Var,
    /// One attention node per layer; see [`Graph::attention_probs`].
    pub attention: Vec<Var>,
}

/// Run the encoder on `x: [B, S, d_model]` with `mask: [B * S]` (1 = real token).
pub fn encoder_forward(g: &mut Graph, x: Var, mask: &[f64], cfg: &EncoderConfig) -> Result<EncoderOutput> {
    cfg.validate()?;
    let s = g.shape(x).to_vec();
    if s.len() != 3 || s[2] != cfg.d_model {
        return Err(Error::TensorShape(format!("encoder input {s:?} for d_model {}", cfg.d_model)));
    }
    if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(Error::TensorShape("attention mask must be 0/1".into()));
    }
    let mut h = x;
    let mut attention = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let p = |s: &str| format!("enc.{l}.{s}");
        let (g1, b1) = (g.param(&p("ln1.g"))?, g.param(&p("ln1.b"))?);
        let n1 = g.layer_norm(h, g1, b1)?;
        let mut proj = Vec::with_capacity(3);
        for w in ["q", "k", "v"] {
            let wm = g.param(&p(&format!("attn.w{w}")))?;
            let bv = if w == "k" { None } else { Some(g.param(&p(&format!("attn.b{w}")))?) };
            proj.push(g.linear(n1, wm, bv)?);
        }
        let a = g.attention(proj[0], proj[1], proj[2], mask, cfg.heads)?;
        attention.push(a);
        let (wo, bo) = (g.param(&p("attn.wo"))?, g.param(&p("attn.bo"))?);
        let o = g.linear(a, wo, Some(bo))?;
        h = g.add(h, o)?;

        let (g2, b2) = (g.param(&p("ln2.g"))?, g.param(&p("ln2.b"))?);
        let n2 = g.layer_norm(h, g2, b2)?;
        let (w1, c1) = (g.param(&p("ff1.w"))?, g.param(&p("ff1.b"))?);
        let f = g.linear(n2, w1, Some(c1))?;
        let f = g.relu(f);
        let (w2, c2) = (g.param(&p("ff2.w"))?, g.param(&p("ff2.b"))?);
        let f = g.linear(f, w2, Some(c2))?;
        h = g.add(h, f)?;
    }
    Ok(EncoderOutput { out: h, attention })
}
