//! Column-based and flat-text transformer detectors.
//!
//! Both prepend a learned CLS vector (no positional code) to their token
//! sequence, run the shared pre-norm encoder, and read a logit off the CLS
//! output through a zero-initialised affine head.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, TransformerConfig};
use super::split::{check_labels, validation_split, EarlyStopper};
use crate::encoders::{ColumnVec, TokenSeq, PAD};
use crate::error::{Error, Result};
use crate::nn::{encoder_forward, init_encoder, sinusoidal_positions, Adam, EncoderConfig, Graph, ParamSet, Tensor, Var};
use crate::par::{map_range, Parallelism};
use crate::util::{rng_from, sigmoid};

/// Shape hyperparameters of a transformer detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arch {
    pub encoder: EncoderConfig,
    pub dropout: f64,
    pub c_max: usize,
    pub max_len: usize,
}

impl Arch {
    pub fn from_config(t: &TransformerConfig) -> Self {
        Arch {
            encoder: EncoderConfig {
                d_model: t.d_model,
                heads: t.heads,
                layers: t.layers,
                ff_hidden: t.ff_hidden,
            },
            dropout: t.dropout,
            c_max: t.c_max,
            max_len: t.max_len,
        }
    }
}

/// Everything about a column model except its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub arch: Arch,
    pub d_num: usize,
    pub d_cat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLayout {
    pub arch: Arch,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTransformerModel {
    pub layout: ColumnLayout,
    pub params: ParamSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextTransformerModel {
    pub layout: TextLayout,
    pub params: ParamSet,
}

fn init_common(p: &mut ParamSet, arch: &Arch, rng: &mut ChaCha8Rng) -> Result<()> {
    let d = arch.encoder.d_model;
    p.add("cls", Tensor::normal(rng, &[d], 1.0));
    init_encoder(p, &arch.encoder, rng)?;
    p.add("head.w", Tensor::zeros(&[d, 1]));
    p.add("head.b", Tensor::zeros(&[1]));
    Ok(())
}

impl ColumnTransformerModel {
    pub fn new(layout: ColumnLayout, seed: u64) -> Result<Self> {
        layout.arch.encoder.validate()?;
        let d = layout.arch.encoder.d_model;
        let mut rng = rng_from(seed, &["column-transformer", "init"]);
        let mut params = ParamSet::new();
        params.add("num.w", Tensor::normal(&mut rng, &[d], 1.0));
        params.add("num.b", Tensor::normal(&mut rng, &[d], 1.0));
        params.add("cat.table", Tensor::normal(&mut rng, &[layout.arch.c_max + 1, d], 1.0));
        init_common(&mut params, &layout.arch, &mut rng)?;
        Ok(ColumnTransformerModel { layout, params })
    }
}

impl ColumnLayout {
    pub fn seq_len(&self) -> usize {
        1 + self.d_num + self.d_cat
    }

    /// Logits `[B]` for a batch of rows; `g` must wrap this model's params.
    pub fn forward(&self, g: &mut Graph, rows: &[&ColumnVec], dropout: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let (b, dn, dc, d) = (rows.len(), self.d_num, self.d_cat, self.arch.encoder.d_model);
        for r in rows {
            if r.num.len() != dn || r.cat.len() != dc || r.num_mask.len() != dn || r.cat_mask.len() != dc {
                return Err(Error::TensorShape(format!(
                    "column row of {}+{} slots for a model of {dn}+{dc}",
                    r.num.len(),
                    r.cat.len()
                )));
            }
        }
        let mut tokens: Option<Var> = None;
        if dn > 0 {
            let vals: Vec<f64> = rows.iter().flat_map(|r| r.num.iter().copied()).collect();
            let x = g.input(&[b, dn], vals)?;
            let (w, bias) = (g.param("num.w")?, g.param("num.b")?);
            tokens = Some(g.scalar_embed(x, w, bias)?);
        }
        if dc > 0 {
            let ids: Vec<usize> = rows
                .iter()
                .flat_map(|r| r.cat.iter().map(|&c| (c as usize).min(self.arch.c_max)))
                .collect();
            let table = g.param("cat.table")?;
            let e = g.embedding(table, &ids, &[b, dc])?;
            tokens = Some(match tokens {
                Some(t) => g.concat_seq(t, e)?,
                None => e,
            });
        }
        let mut mask = Vec::with_capacity(b * self.seq_len());
        for r in rows {
            mask.push(1.0);
            mask.extend(r.num_mask.iter().chain(&r.cat_mask).map(|&v| v as f64));
        }
        Ok(head_forward(g, &self.arch, tokens.map(|t| (t, dn + dc)), b, d, &mask, dropout)?.0)
    }
}

/// Positions, CLS, encoder and head, shared by both families.
fn head_forward(
    g: &mut Graph,
    arch: &Arch,
    body: Option<(Var, usize)>,
    batch: usize,
    d: usize,
    mask: &[f64],
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Vec<Var>)> {
    let cls = g.param("cls")?;
    let seq = match body {
        Some((t, s)) => {
            let pe = sinusoidal_positions(s, d)?;
            let pe = g.input(&pe.shape, pe.data)?;
            let mut t = g.add_broadcast(t, pe)?;
            if let Some(rng) = dropout {
                t = g.dropout(t, arch.dropout, rng);
            }
            g.prepend_row(cls, t)?
        }
        None => {
            let zero = g.input(&[batch, 0, d], Vec::new())?;
            g.prepend_row(cls, zero)?
        }
    };
    let out = encoder_forward(g, seq, mask, &arch.encoder)?;
    let first = g.select_first(out.out)?;
    let (w, b) = (g.param("head.w")?, g.param("head.b")?);
    let z = g.linear(first, w, Some(b))?;
    Ok((g.reshape(z, &[batch])?, out.attention))
}

impl TextTransformerModel {
    pub fn new(layout: TextLayout, seed: u64) -> Result<Self> {
        layout.arch.encoder.validate()?;
        let d = layout.arch.encoder.d_model;
        let mut rng = rng_from(seed, &["text-transformer", "init"]);
        let mut params = ParamSet::new();
        params.add("tok.table", Tensor::normal(&mut rng, &[layout.vocab_size, d], 1.0));
        init_common(&mut params, &layout.arch, &mut rng)?;
        Ok(TextTransformerModel { layout, params })
    }
}

impl TextLayout {
    /// Logits `[B]`; the batch is padded to its longest sequence and PAD
    /// positions are masked out of attention.
    pub fn forward(&self, g: &mut Graph, seqs: &[&TokenSeq], dropout: Option<&mut ChaCha8Rng>) -> Result<Var> {
        Ok(self.forward_traced(g, seqs, dropout)?.0)
    }

    /// Like [`TextLayout::forward`], also returning each layer's attention node.
    pub fn forward_traced(
        &self,
        g: &mut Graph,
        seqs: &[&TokenSeq],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, Vec<Var>)> {
        if seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::TensorShape("empty token sequence".into()));
        }
        let b = seqs.len();
        let d = self.arch.encoder.d_model;
        let len = self.batch_len(seqs) - 1;
        let mut ids = Vec::with_capacity(b * len);
        let mut mask = Vec::with_capacity(b * (len + 1));
        for s in seqs {
            let n = s.len().min(self.arch.max_len);
            mask.push(1.0);
            for j in 0..len {
                if j < n {
                    ids.push(s.ids[j] as usize);
                    mask.push(1.0);
                } else {
                    ids.push(PAD as usize);
                    mask.push(0.0);
                }
            }
        }
        let table = g.param("tok.table")?;
        let e = g.embedding(table, &ids, &[b, len])?;
        head_forward(g, &self.arch, Some((e, len)), b, d, &mask, dropout)
    }

    /// Padded length of a batch, CLS included.
    pub fn batch_len(&self, seqs: &[&TokenSeq]) -> usize {
        1 + seqs.iter().map(|s| s.len().min(self.arch.max_len)).max().unwrap_or(0)
    }
}

/// Training sequences for the text model; linearisation permutations may
/// be redrawn per epoch.
pub trait SeqSource {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn epoch_seqs(&self, epoch: usize) -> Result<Vec<TokenSeq>>;
    fn eval_seqs(&self) -> Result<Vec<TokenSeq>>;
}

impl SeqSource for [TokenSeq] {
    fn len(&self) -> usize {
        <[TokenSeq]>::len(self)
    }
    fn epoch_seqs(&self, _epoch: usize) -> Result<Vec<TokenSeq>> {
        Ok(self.to_vec())
    }
    fn eval_seqs(&self) -> Result<Vec<TokenSeq>> {
        Ok(self.to_vec())
    }
}

/// Mini-batch Adam with early stopping on validation AUC. `forward`
/// computes logits for a batch given the epoch's data.
#[allow(clippy::too_many_arguments)]
fn fit<D>(
    params: &mut ParamSet,
    y: &[u8],
    strata: Option<&[usize]>,
    cfg: &TrainConfig,
    epoch_data: impl Fn(usize) -> Result<D>,
    forward: impl Fn(&mut Graph, &D, &[usize], &mut ChaCha8Rng) -> Result<Var>,
    validate: impl Fn(&ParamSet, &[usize]) -> Result<Vec<f64>>,
) -> Result<()> {
    let (mut train, val) = validation_split(y, strata, cfg.val_fraction, cfg.seed);
    let val_y: Vec<u8> = val.iter().map(|&i| y[i]).collect();
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience);
    let mut rng = rng_from(cfg.seed, &["transformer", "shuffle"]);
    let mut drop_rng = rng_from(cfg.seed, &["transformer", "dropout"]);
    let adam = Adam::new(cfg.lr);
    for epoch in 0..cfg.epochs {
        let data = epoch_data(epoch)?;
        train.shuffle(&mut rng);
        for batch in train.chunks(cfg.batch_size) {
            let labels: Vec<f64> = batch.iter().map(|&i| y[i] as f64).collect();
            let grads = {
                let mut g = Graph::new(params).with_parallelism(cfg.parallelism);
                let z = forward(&mut g, &data, batch, &mut drop_rng)?;
                let loss = g.bce_loss(z, &labels)?;
                if !g.scalar(loss).is_finite() {
                    return Err(Error::Graph(format!("non-finite loss at epoch {epoch}")));
                }
                g.backward(loss)?
            };
            params.accumulate(&grads);
            adam.step(params);
        }
        if !val.is_empty() {
            let scores = validate(params, &val)?;
            if stopper.observe(&scores, &val_y, || params.snapshot())? {
                break;
            }
        }
    }
    if let Some(best) = stopper.into_best() {
        params.restore(&best);
    }
    Ok(())
}

/// Probabilities for rows `0..n`, scored in batches of `batch` (parallel over batches).
fn score_batches(
    n: usize,
    batch: usize,
    mode: Parallelism,
    params: &ParamSet,
    logits: impl Fn(&mut Graph, &[usize]) -> Result<Var> + Sync,
) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..n).collect();
    let chunks: Vec<&[usize]> = idx.chunks(batch.max(1)).collect();
    let inner = if mode.is_parallel() && chunks.len() > 1 {
        Parallelism::Sequential
    } else {
        mode
    };
    let parts = map_range(chunks.len(), mode, |c| -> Result<Vec<f64>> {
        let mut g = Graph::new(params).with_parallelism(inner);
        let z = logits(&mut g, chunks[c])?;
        Ok(g.value(z).iter().map(|&v| sigmoid(v)).collect())
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn train_column_transformer(
    rows: &[ColumnVec],
    y: &[u8],
    strata: Option<&[usize]>,
    d_num: usize,
    d_cat: usize,
    cfg: &TrainConfig,
) -> Result<ColumnTransformerModel> {
    cfg.validate()?;
    check_labels(y, rows.len())?;
    let layout = ColumnLayout {
        arch: Arch::from_config(&cfg.transformer),
        d_num,
        d_cat,
    };
    let mut model = ColumnTransformerModel::new(layout.clone(), cfg.seed)?;
    let dropout = cfg.transformer.dropout > 0.0;
    fit(
        &mut model.params,
        y,
        strata,
        cfg,
        |_| Ok(()),
        |g, _, batch, rng| {
            let refs: Vec<&ColumnVec> = batch.iter().map(|&i| &rows[i]).collect();
            layout.forward(g, &refs, dropout.then_some(rng))
        },
        |p, idx| {
            let sub: Vec<ColumnVec> = idx.iter().map(|&i| rows[i].clone()).collect();
            score_columns(&layout, p, &sub, cfg)
        },
    )?;
    Ok(model)
}

fn score_columns(layout: &ColumnLayout, params: &ParamSet, rows: &[ColumnVec], cfg: &TrainConfig) -> Result<Vec<f64>> {
    score_batches(rows.len(), cfg.batch_size, cfg.parallelism, params, |g, b| {
        let sub: Vec<&ColumnVec> = b.iter().map(|&i| &rows[i]).collect();
        layout.forward(g, &sub, None)
    })
}

fn score_seqs(layout: &TextLayout, params: &ParamSet, seqs: &[&TokenSeq], cfg: &TrainConfig) -> Result<Vec<f64>> {
    score_batches(seqs.len(), cfg.batch_size, cfg.parallelism, params, |g, b| {
        let sub: Vec<&TokenSeq> = b.iter().map(|&i| seqs[i]).collect();
        layout.forward(g, &sub, None)
    })
}

pub fn predict_column_transformer(m: &ColumnTransformerModel, rows: &[ColumnVec], cfg: &TrainConfig) -> Result<Vec<f64>> {
    score_columns(&m.layout, &m.params, rows, cfg)
}

pub fn train_text_transformer<S: SeqSource + ?Sized>(
    source: &S,
    y: &[u8],
    strata: Option<&[usize]>,
    vocab_size: usize,
    cfg: &TrainConfig,
) -> Result<TextTransformerModel> {
    cfg.validate()?;
    check_labels(y, source.len())?;
    let layout = TextLayout {
        arch: Arch::from_config(&cfg.transformer),
        vocab_size,
    };
    let mut model = TextTransformerModel::new(layout.clone(), cfg.seed)?;
    let eval = source.eval_seqs()?;
    let dropout = cfg.transformer.dropout > 0.0;
    fit(
        &mut model.params,
        y,
        strata,
        cfg,
        |epoch| source.epoch_seqs(epoch),
        |g, data: &Vec<TokenSeq>, batch, rng| {
            let refs: Vec<&TokenSeq> = batch.iter().map(|&i| &data[i]).collect();
            layout.forward(g, &refs, dropout.then_some(rng))
        },
        |p, idx| {
            let refs: Vec<&TokenSeq> = idx.iter().map(|&i| &eval[i]).collect();
            score_seqs(&layout, p, &refs, cfg)
        },
    )?;
    Ok(model)
}

pub fn predict_text_transformer(m: &TextTransformerModel, seqs: &[TokenSeq], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let refs: Vec<&TokenSeq> = seqs.iter().collect();
    score_seqs(&m.layout, &m.params, &refs, cfg)
}
