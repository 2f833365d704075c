//! Detector families: logistic regression, gradient-boosted trees, and the
//! column and flat-text transformers.

pub mod config;
pub mod features;
pub mod gbdt;
pub mod logistic;
pub mod split;
pub mod transformer;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{GbdtConfig, LogisticConfig, TrainConfig, TransformerConfig};
pub use features::{feature_space, FeatureMatrix};
pub use gbdt::{predict_gbdt, train_gbdt, GbdtModel, Tree, TreeNode};
pub use logistic::{predict_logistic, train_logistic, LogisticModel};
pub use transformer::{
    predict_column_transformer, predict_text_transformer, train_column_transformer, train_text_transformer,
    ColumnLayout, ColumnTransformerModel, SeqSource, TextLayout, TextTransformerModel,
};

use crate::data::RowRecord;
use crate::encoders::{ColumnVec, EncodedRow, EncoderKind, FittedEncoder, TokenSeq};
use crate::error::{Error, Result};
use crate::nn::{read_checkpoint, write_checkpoint, ParamSet, Tensor};
use crate::util::Fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Logistic,
    Gbdt,
    ColumnTransformer,
    TextTransformer,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Logistic,
        DetectorKind::Gbdt,
        DetectorKind::ColumnTransformer,
        DetectorKind::TextTransformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Logistic => "logistic",
            DetectorKind::Gbdt => "gbdt",
            DetectorKind::ColumnTransformer => "column-transformer",
            DetectorKind::TextTransformer => "text-transformer",
        }
    }

    /// Logistic and trees take every encoding; each transformer takes its own.
    pub fn supports(self, enc: EncoderKind) -> bool {
        match self {
            DetectorKind::Logistic | DetectorKind::Gbdt => true,
            DetectorKind::ColumnTransformer => enc == EncoderKind::Column,
            DetectorKind::TextTransformer => enc == EncoderKind::FlatText,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("detector", format!("unknown detector `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Logistic(LogisticModel),
    Gbdt(GbdtModel),
    ColumnTransformer(ColumnTransformerModel),
    TextTransformer(TextTransformerModel),
}

impl Detector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Logistic(_) => DetectorKind::Logistic,
            Detector::Gbdt(_) => DetectorKind::Gbdt,
            Detector::ColumnTransformer(_) => DetectorKind::ColumnTransformer,
            Detector::TextTransformer(_) => DetectorKind::TextTransformer,
        }
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprint::new("detector");
        fp.str(self.kind().name());
        let (_, params) = self.to_tensors();
        for (name, t) in params.iter() {
            fp.str(name);
            for &v in &t.data {
                fp.f64(v);
            }
        }
        fp.finish()
    }

    /// Layout header and the parameter tensors of this model.
    fn to_tensors(&self) -> (serde_json::Value, ParamSet) {
        let mut p = ParamSet::new();
        let meta = match self {
            Detector::Logistic(m) => {
                p.add("w", Tensor::new(&[m.weights.len()], m.weights.clone()).expect("consistent"));
                p.add("b", Tensor::new(&[1], vec![m.bias]).expect("consistent"));
                serde_json::json!({ "feature_space": m.feature_space })
            }
            Detector::Gbdt(m) => {
                for (i, t) in m.trees.iter().enumerate() {
                    let mut data = Vec::with_capacity(t.nodes.len() * 5);
                    for n in &t.nodes {
                        data.extend_from_slice(&match *n {
                            TreeNode::Leaf { weight } => [0.0, 0.0, weight, 0.0, 0.0],
                            TreeNode::Split { feature, threshold, left, right } => {
                                [1.0, feature as f64, threshold, left as f64, right as f64]
                            }
                        });
                    }
                    p.add(&format!("tree.{i}"), Tensor::new(&[t.nodes.len(), 5], data).expect("consistent"));
                }
                serde_json::json!({
                    "feature_space": m.feature_space,
                    "n_features": m.n_features,
                    "learning_rate": m.learning_rate,
                    "base_score": m.base_score,
                })
            }
            Detector::ColumnTransformer(m) => {
                p = m.params.clone();
                serde_json::to_value(&m.layout).expect("serialisable layout")
            }
            Detector::TextTransformer(m) => {
                p = m.params.clone();
                serde_json::to_value(&m.layout).expect("serialisable layout")
            }
        };
        (meta, p)
    }

    fn from_tensors(kind: DetectorKind, meta: &serde_json::Value, p: ParamSet) -> Result<Self> {
        let bad = |what: &str| Error::Format(format!("model file: {what}"));
        let field = |k: &str| meta.get(k).ok_or_else(|| bad(&format!("missing `{k}`")));
        let string = |k: &str| field(k).and_then(|v| v.as_str().map(str::to_string).ok_or_else(|| bad(k)));
        let number = |k: &str| field(k).and_then(|v| v.as_f64().ok_or_else(|| bad(k)));
        Ok(match kind {
            DetectorKind::Logistic => Detector::Logistic(LogisticModel {
                weights: p.get("w").ok_or_else(|| bad("missing weights"))?.data.clone(),
                bias: p.get("b").ok_or_else(|| bad("missing bias"))?.data[0],
                feature_space: string("feature_space")?,
            }),
            DetectorKind::Gbdt => {
                let mut trees = Vec::new();
                for (_, t) in p.iter() {
                    if t.shape.len() != 2 || t.shape[1] != 5 {
                        return Err(bad("tree tensor shape"));
                    }
                    let nodes = t
                        .data
                        .chunks(5)
                        .map(|r| {
                            if r[0] == 0.0 {
                                TreeNode::Leaf { weight: r[2] }
                            } else {
                                TreeNode::Split {
                                    feature: r[1] as u32,
                                    threshold: r[2],
                                    left: r[3] as u32,
                                    right: r[4] as u32,
                                }
                            }
                        })
                        .collect::<Vec<_>>();
                    let n = nodes.len() as u32;
                    if nodes.iter().any(|x| matches!(x, TreeNode::Split { left, right, .. } if *left >= n || *right >= n)) {
                        return Err(bad("tree child out of range"));
                    }
                    trees.push(Tree { nodes });
                }
                Detector::Gbdt(GbdtModel {
                    trees,
                    learning_rate: number("learning_rate")?,
                    base_score: number("base_score")?,
                    feature_space: string("feature_space")?,
                    n_features: number("n_features")? as usize,
                })
            }
            DetectorKind::ColumnTransformer => Detector::ColumnTransformer(ColumnTransformerModel {
                layout: serde_json::from_value(meta.clone()).map_err(|e| bad(&e.to_string()))?,
                params: p,
            }),
            DetectorKind::TextTransformer => Detector::TextTransformer(TextTransformerModel {
                layout: serde_json::from_value(meta.clone()).map_err(|e| bad(&e.to_string()))?,
                params: p,
            }),
        })
    }
}

/// Training sequences drawn from records, with per-epoch permutations.
pub struct RecordSeqs<'a> {
    pub encoder: &'a FittedEncoder,
    pub rows: &'a [&'a RowRecord],
}

fn as_tokens(e: EncodedRow) -> Result<TokenSeq> {
    match e {
        EncodedRow::Tokens(t) => Ok(t),
        _ => Err(Error::Unsupported("text transformer needs the flat-text encoder".into())),
    }
}

fn as_columns(e: EncodedRow) -> Result<ColumnVec> {
    match e {
        EncodedRow::Columns(c) => Ok(c),
        _ => Err(Error::Unsupported("column transformer needs the column encoder".into())),
    }
}

impl SeqSource for RecordSeqs<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn epoch_seqs(&self, epoch: usize) -> Result<Vec<TokenSeq>> {
        self.rows.iter().map(|r| self.encoder.encode_epoch(r, epoch).and_then(as_tokens)).collect()
    }

    fn eval_seqs(&self) -> Result<Vec<TokenSeq>> {
        self.rows.iter().map(|r| self.encoder.encode(r).and_then(as_tokens)).collect()
    }
}

fn encode_all(enc: &FittedEncoder, rows: &[&RowRecord]) -> Result<Vec<EncodedRow>> {
    rows.iter().map(|r| enc.encode(r)).collect()
}

fn column_dims(enc: &FittedEncoder) -> Result<(usize, usize)> {
    match enc {
        FittedEncoder::Column { d_num, d_cat, .. } => Ok((*d_num, *d_cat)),
        _ => Err(Error::Unsupported("column transformer needs the column encoder".into())),
    }
}

/// Fit a detector of `kind` on records encoded by `enc`. `strata` groups
/// rows for the validation split; labels are always stratified on too.
pub fn fit_detector(
    kind: DetectorKind,
    enc: &FittedEncoder,
    rows: &[&RowRecord],
    strata: Option<&[usize]>,
    cfg: &TrainConfig,
) -> Result<Detector> {
    if !kind.supports(enc.kind()) {
        return Err(Error::Unsupported(format!("{kind} on {} encoding", enc.kind().name())));
    }
    let y: Vec<u8> = rows.iter().map(|r| r.label()).collect();
    Ok(match kind {
        DetectorKind::Logistic => {
            let x = FeatureMatrix::from_encoded(&encode_all(enc, rows)?, enc)?;
            Detector::Logistic(train_logistic(&x, &y, strata, cfg)?)
        }
        DetectorKind::Gbdt => {
            let x = FeatureMatrix::from_encoded(&encode_all(enc, rows)?, enc)?;
            Detector::Gbdt(train_gbdt(&x, &y, cfg)?)
        }
        DetectorKind::ColumnTransformer => {
            let (d_num, d_cat) = column_dims(enc)?;
            let cols = encode_all(enc, rows)?.into_iter().map(as_columns).collect::<Result<Vec<_>>>()?;
            Detector::ColumnTransformer(train_column_transformer(&cols, &y, strata, d_num, d_cat, cfg)?)
        }
        DetectorKind::TextTransformer => {
            let vocab = enc.vocab().ok_or_else(|| Error::Unsupported("text transformer needs a vocabulary".into()))?;
            let src = RecordSeqs { encoder: enc, rows };
            Detector::TextTransformer(train_text_transformer(&src, &y, strata, vocab.size(), cfg)?)
        }
    })
}

/// Synthetic-class probabilities for `rows`.
pub fn score_records(det: &Detector, enc: &FittedEncoder, rows: &[&RowRecord], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let encoded = encode_all(enc, rows)?;
    match det {
        Detector::Logistic(m) => predict_logistic(m, &FeatureMatrix::from_encoded(&encoded, enc)?, cfg),
        Detector::Gbdt(m) => predict_gbdt(m, &FeatureMatrix::from_encoded(&encoded, enc)?, cfg.parallelism),
        Detector::ColumnTransformer(m) => {
            let cols = encoded.into_iter().map(as_columns).collect::<Result<Vec<_>>>()?;
            predict_column_transformer(m, &cols, cfg)
        }
        Detector::TextTransformer(m) => {
            let seqs = encoded.into_iter().map(as_tokens).collect::<Result<Vec<_>>>()?;
            predict_text_transformer(m, &seqs, cfg)
        }
    }
}

/// A detector bundled with the encoder it was trained behind.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub encoder: FittedEncoder,
    pub detector: Detector,
    pub config: TrainConfig,
}

const MODEL_FORMAT: &str = "tabdetect-model";

impl TrainedModel {
    /// Write as a parameter checkpoint whose header carries the family,
    /// encoding, hyperparameters, fitted encoder and fingerprints.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        let (layout, params) = self.detector.to_tensors();
        let header = serde_json::json!({
            "format": MODEL_FORMAT,
            "family": self.detector.kind(),
            "encoding": self.encoder.kind().name(),
            "hyperparameters": self.config,
            "layout": layout,
            "encoder_fingerprint": self.encoder.fingerprint(),
            "encoder": self.encoder,
        });
        write_checkpoint(w, &header, &params)
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let (header, params) = read_checkpoint(r)?;
        let bad = |what: &str| Error::Format(format!("model header: {what}"));
        if header.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
            return Err(bad("not a detector model"));
        }
        let get = |k: &str| header.get(k).cloned().ok_or_else(|| bad(&format!("missing `{k}`")));
        let kind: DetectorKind = serde_json::from_value(get("family")?).map_err(|e| bad(&e.to_string()))?;
        let encoder: FittedEncoder = serde_json::from_value(get("encoder")?).map_err(|e| bad(&e.to_string()))?;
        let config: TrainConfig = serde_json::from_value(get("hyperparameters")?).map_err(|e| bad(&e.to_string()))?;
        if get("encoder_fingerprint")?.as_str() != Some(encoder.fingerprint().as_str()) {
            return Err(bad("encoder fingerprint does not match"));
        }
        let detector = Detector::from_tensors(kind, &get("layout")?, params)?;
        Ok(TrainedModel { encoder, detector, config })
    }

    pub fn score(&self, rows: &[&RowRecord]) -> Result<Vec<f64>> {
        score_records(&self.detector, &self.encoder, rows, &self.config)
    }
}
