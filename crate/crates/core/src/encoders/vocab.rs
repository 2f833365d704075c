use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::Fingerprint;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
const SPECIALS: u32 = 3;

/// Token vocabulary with reserved PAD/UNK/CLS ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VocabRepr", from = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr { tokens: v.tokens }
    }
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        Vocab::from_tokens(r.tokens)
    }
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut fp = Fingerprint::new("vocab");
        for t in &tokens {
            fp.str(t);
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + SPECIALS))
            .collect();
        Vocab {
            tokens,
            index,
            fingerprint: fp.finish(),
        }
    }

    /// Total id range including the special ids.
    pub fn size(&self) -> usize {
        self.tokens.len() + SPECIALS as usize
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        id.checked_sub(SPECIALS)
            .and_then(|i| self.tokens.get(i as usize))
            .map(String::as_str)
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

/// Keep the `max_size` most frequent tokens; ties break lexicographically.
pub fn build_vocab<I, S>(corpus: I, max_size: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = String>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for stream in corpus {
        for tok in stream {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Vocab("empty corpus".into()));
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    Ok(Vocab::from_tokens(ranked.into_iter().map(|(t, _)| t).collect()))
}
