use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::codec::{apply_column_codec, fit_codec_rows, ColumnCodec, ColumnVec};
use super::flat::{chars_of, tokenize_flat_text, TokenSeq};
use super::linearize::{epoch_seed, eval_seed, linearize_row, LinearizedRow};
use super::trigram::{char_trigram_bag, char_trigrams, word_trigram_bag, word_trigrams, SparseBag};
use super::vocab::{build_vocab, Vocab};
use super::{EncoderKind, EncodingConfig};
use crate::data::RowRecord;
use crate::error::{Error, Result};
use crate::util::Fingerprint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncodedRow {
    Bag(SparseBag),
    Tokens(TokenSeq),
    Columns(ColumnVec),
}

/// An encoder whose vocabulary or codecs have been fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedEncoder {
    CharTrigram { vocab: Vocab, seed: u64 },
    WordTrigram { vocab: Vocab, seed: u64 },
    FlatText { vocab: Vocab, max_len: usize, seed: u64 },
    Column {
        codecs: BTreeMap<String, ColumnCodec>,
        d_num: usize,
        d_cat: usize,
    },
}

fn eval_line(r: &RowRecord, seed: u64) -> Result<LinearizedRow> {
    linearize_row(r, eval_seed(seed, r))
}

impl FittedEncoder {
    /// Fit on training rows only. `seed` drives the linearisation permutations.
    pub fn fit(kind: EncoderKind, train: &[&RowRecord], cfg: &EncodingConfig, seed: u64) -> Result<Self> {
        let lines = || train.iter().map(|r| eval_line(r, seed));
        Ok(match kind {
            EncoderKind::CharTrigram => FittedEncoder::CharTrigram {
                vocab: build_vocab(
                    lines().map(|l| l.map(|l| char_trigrams(&l.text))).collect::<Result<Vec<_>>>()?,
                    cfg.vocab_max,
                )?,
                seed,
            },
            EncoderKind::WordTrigram => FittedEncoder::WordTrigram {
                vocab: build_vocab(
                    lines().map(|l| l.map(|l| word_trigrams(&l.text))).collect::<Result<Vec<_>>>()?,
                    cfg.vocab_max,
                )?,
                seed,
            },
            EncoderKind::FlatText => FittedEncoder::FlatText {
                vocab: build_vocab(
                    lines().map(|l| l.map(|l| chars_of(&l.text))).collect::<Result<Vec<_>>>()?,
                    cfg.vocab_max,
                )?,
                max_len: cfg.max_len,
                seed,
            },
            EncoderKind::Column => {
                let mut enc = FittedEncoder::Column {
                    codecs: BTreeMap::new(),
                    d_num: cfg.d_num,
                    d_cat: cfg.d_cat,
                };
                enc.fit_missing_codecs(train)?;
                enc
            }
        })
    }

    /// Fit column codecs for tables that have none yet, from the given rows.
    /// Returns the table ids that were fitted. Other encoders are unaffected.
    pub fn fit_missing_codecs(&mut self, rows: &[&RowRecord]) -> Result<Vec<String>> {
        let FittedEncoder::Column { codecs, .. } = self else {
            return Ok(Vec::new());
        };
        let mut by_table: BTreeMap<&str, Vec<&RowRecord>> = BTreeMap::new();
        for r in rows {
            if !codecs.contains_key(&r.table_id) {
                by_table.entry(r.table_id.as_str()).or_default().push(r);
            }
        }
        let mut fitted = Vec::new();
        for (table, recs) in by_table {
            let codec = fit_codec_rows(table, &recs[0].schema, recs.iter().map(|r| r.cells.as_slice()))?;
            codecs.insert(table.to_string(), codec);
            fitted.push(table.to_string());
        }
        Ok(fitted)
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            FittedEncoder::CharTrigram { .. } => EncoderKind::CharTrigram,
            FittedEncoder::WordTrigram { .. } => EncoderKind::WordTrigram,
            FittedEncoder::FlatText { .. } => EncoderKind::FlatText,
            FittedEncoder::Column { .. } => EncoderKind::Column,
        }
    }

    /// Encode with the fixed evaluation permutation.
    pub fn encode(&self, r: &RowRecord) -> Result<EncodedRow> {
        let seed = self.seed();
        self.encode_line(r, |r| eval_line(r, seed))
    }

    /// Encode with the permutation drawn for a training epoch.
    pub fn encode_epoch(&self, r: &RowRecord, epoch: usize) -> Result<EncodedRow> {
        let seed = self.seed();
        self.encode_line(r, |r| linearize_row(r, epoch_seed(seed, epoch, r)))
    }

    fn seed(&self) -> u64 {
        match self {
            FittedEncoder::CharTrigram { seed, .. }
            | FittedEncoder::WordTrigram { seed, .. }
            | FittedEncoder::FlatText { seed, .. } => *seed,
            FittedEncoder::Column { .. } => 0,
        }
    }

    fn encode_line(
        &self,
        r: &RowRecord,
        line: impl Fn(&RowRecord) -> Result<LinearizedRow>,
    ) -> Result<EncodedRow> {
        Ok(match self {
            FittedEncoder::CharTrigram { vocab, .. } => EncodedRow::Bag(char_trigram_bag(&line(r)?.text, vocab)),
            FittedEncoder::WordTrigram { vocab, .. } => EncodedRow::Bag(word_trigram_bag(&line(r)?, vocab)),
            FittedEncoder::FlatText { vocab, max_len, .. } => {
                EncodedRow::Tokens(tokenize_flat_text(&line(r)?, vocab, *max_len))
            }
            FittedEncoder::Column { codecs, d_num, d_cat } => {
                let codec = codecs.get(&r.table_id).ok_or_else(|| Error::CodecMismatch {
                    expected: codecs.keys().cloned().collect::<Vec<_>>().join("|"),
                    found: r.table_id.clone(),
                })?;
                EncodedRow::Columns(apply_column_codec(codec, r, *d_num, *d_cat)?)
            }
        })
    }

    pub fn vocab(&self) -> Option<&Vocab> {
        match self {
            FittedEncoder::CharTrigram { vocab, .. }
            | FittedEncoder::WordTrigram { vocab, .. }
            | FittedEncoder::FlatText { vocab, .. } => Some(vocab),
            FittedEncoder::Column { .. } => None,
        }
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprint::new("encoder");
        fp.str(self.kind().name());
        match self {
            FittedEncoder::CharTrigram { vocab, seed } | FittedEncoder::WordTrigram { vocab, seed } => {
                fp.str(vocab.fingerprint()).u64(*seed);
            }
            FittedEncoder::FlatText { vocab, max_len, seed } => {
                fp.str(vocab.fingerprint()).u64(*max_len as u64).u64(*seed);
            }
            FittedEncoder::Column { codecs, d_num, d_cat } => {
                fp.u64(*d_num as u64).u64(*d_cat as u64);
                for c in codecs.values() {
                    fp.str(&c.fingerprint());
                }
            }
        }
        fp.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Cell, ColumnKind, Schema};
    use std::sync::Arc;

    fn records() -> Vec<RowRecord> {
        let s = Arc::new(
            Schema::from_pairs("t", &[("x", ColumnKind::Numerical), ("g", ColumnKind::Categorical)]).unwrap(),
        );
        (0..6)
            .map(|i| RowRecord::real("t", s.clone(), vec![Cell::Num(i as f64), Cell::Cat(format!("l{}", i % 2))], i))
            .collect()
    }

    #[test]
    fn every_encoder_fits_and_encodes() {
        let recs = records();
        let refs: Vec<&RowRecord> = recs.iter().collect();
        let cfg = EncodingConfig::default();
        for kind in EncoderKind::ALL {
            let enc = FittedEncoder::fit(kind, &refs, &cfg, 3).unwrap();
            assert_eq!(enc.kind(), kind);
            let a = enc.encode(&recs[0]).unwrap();
            assert_eq!(a, enc.encode(&recs[0]).unwrap());
            let b = FittedEncoder::fit(kind, &refs, &cfg, 3).unwrap();
            assert_eq!(enc.fingerprint(), b.fingerprint());
        }
    }

    #[test]
    fn epoch_permutations_vary() {
        let recs = records();
        let refs: Vec<&RowRecord> = recs.iter().collect();
        let enc = FittedEncoder::fit(EncoderKind::FlatText, &refs, &EncodingConfig::default(), 1).unwrap();
        let seqs: std::collections::HashSet<_> = (0..10)
            .map(|e| match enc.encode_epoch(&recs[2], e).unwrap() {
                EncodedRow::Tokens(t) => t.ids,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(seqs.len(), 2);
    }

    #[test]
    fn column_encoder_rejects_unknown_tables_until_fitted() {
        let recs = records();
        let refs: Vec<&RowRecord> = recs.iter().collect();
        let mut enc = FittedEncoder::fit(EncoderKind::Column, &refs, &EncodingConfig::default(), 0).unwrap();
        let mut other = recs.clone();
        for r in &mut other {
            r.table_id = "u".into();
        }
        assert!(enc.encode(&other[0]).is_err());
        let other_refs: Vec<&RowRecord> = other.iter().collect();
        assert_eq!(enc.fit_missing_codecs(&other_refs).unwrap(), vec!["u".to_string()]);
        assert!(enc.encode(&other[0]).is_ok());
    }
}
