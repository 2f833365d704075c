//! Table-agnostic row encodings.
//!
//! - flat text: `<column>:<value>` segments under a random column permutation,
//!   then split into characters ([`flat`]) or trigram bags ([`trigram`]);
//! - column-based: per-table empirical-quantile and ordinal codecs, padded or
//!   cropped to fixed numeric/categorical widths ([`codec`]).

pub mod cache;
pub mod codec;
pub mod flat;
pub mod linearize;
pub mod pipeline;
pub mod trigram;
pub mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use codec::{apply_column_codec, fit_column_codec, ColumnCodec, ColumnVec};
pub use flat::{tokenize_flat_text, TokenSeq};
pub use linearize::{linearize_row, linearize_with_permutation, LinearizedRow};
pub use pipeline::{EncodedRow, FittedEncoder};
pub use trigram::{char_trigram_bag, word_trigram_bag, SparseBag};
pub use vocab::{build_vocab, Vocab, CLS, PAD, UNK};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EncoderKind {
    #[serde(rename = "3gram-char")]
    CharTrigram,
    #[serde(rename = "3gram-word")]
    WordTrigram,
    #[serde(rename = "flat-text")]
    FlatText,
    #[serde(rename = "column")]
    Column,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 4] = [
        EncoderKind::CharTrigram,
        EncoderKind::WordTrigram,
        EncoderKind::FlatText,
        EncoderKind::Column,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::CharTrigram => "3gram-char",
            EncoderKind::WordTrigram => "3gram-word",
            EncoderKind::FlatText => "flat-text",
            EncoderKind::Column => "column",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("encoder", format!("unknown encoder `{s}`")))
    }
}

/// Sizes shared by the encoders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    /// Numeric slots of the column encoding (widest numeric block of the reference datasets).
    pub d_num: usize,
    /// Categorical slots of the column encoding.
    pub d_cat: usize,
    /// Character budget of a flat-text token sequence.
    pub max_len: usize,
    /// Trigram vocabulary cap.
    pub vocab_max: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            d_num: 50,
            d_cat: 10,
            max_len: 512,
            vocab_max: 1 << 18,
        }
    }
}
