use serde::{Deserialize, Serialize};

use super::linearize::LinearizedRow;
use super::vocab::Vocab;

/// Character ids of a linearised row. The CLS token is added by the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn chars_of(text: &str) -> Vec<String> {
    text.chars().map(String::from).collect()
}

/// Map characters to ids, keeping at most the first `max_len`.
pub fn tokenize_flat_text(l: &LinearizedRow, v: &Vocab, max_len: usize) -> TokenSeq {
    let mut buf = [0u8; 4];
    TokenSeq {
        ids: l
            .text
            .chars()
            .take(max_len)
            .map(|c| v.id(c.encode_utf8(&mut buf)))
            .collect(),
    }
}
