use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::linearize::LinearizedRow;
use super::vocab::Vocab;

/// Sparse count vector over a vocabulary's id space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseBag {
    /// `(feature id, count)` sorted by id; counts are >= 1.
    pub entries: Vec<(u32, u32)>,
    pub vocab_id: String,
}

impl SparseBag {
    fn from_ids(ids: impl Iterator<Item = u32>, vocab: &Vocab) -> Self {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for id in ids {
            *counts.entry(id).or_default() += 1;
        }
        SparseBag {
            entries: counts.into_iter().collect(),
            vocab_id: vocab.fingerprint().to_string(),
        }
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn count(&self, id: u32) -> u32 {
        self.entries
            .binary_search_by_key(&id, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// All contiguous 3-character windows of `s`.
pub fn char_trigrams(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Word tokens: the text split at the structural separators `:` and `,`.
pub fn word_tokens(text: &str) -> Vec<&str> {
    text.split([':', ','])
        .filter(|t| !t.is_empty())
        .collect()
}

/// Consecutive word triples joined by a single space.
pub fn word_trigrams(text: &str) -> Vec<String> {
    word_tokens(text).windows(3).map(|w| w.join(" ")).collect()
}

pub fn char_trigram_bag(s: &str, v: &Vocab) -> SparseBag {
    SparseBag::from_ids(char_trigrams(s).iter().map(|t| v.id(t)), v)
}

pub fn word_trigram_bag(l: &LinearizedRow, v: &Vocab) -> SparseBag {
    SparseBag::from_ids(word_trigrams(&l.text).iter().map(|t| v.id(t)), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::vocab::{build_vocab, UNK};
    use proptest::prelude::*;

    const ABALONE: &str = "Name:Abalone,Size:4177,#Num:7,#Cat:2";

    fn line(text: &str) -> LinearizedRow {
        LinearizedRow {
            text: text.to_string(),
            permutation: vec![],
        }
    }

    #[test]
    fn abalone_char_trigrams() {
        let v = build_vocab(vec![char_trigrams(ABALONE)], 1 << 18).unwrap();
        let bag = char_trigram_bag(ABALONE, &v);
        for t in ["Nam", "e:A", ":41", "t:2"] {
            assert!(bag.count(v.id(t)) >= 1, "{t}");
            assert_ne!(v.id(t), UNK);
        }
        assert_eq!(bag.total(), ABALONE.chars().count() as u64 - 2);
    }

    #[test]
    fn abalone_word_trigrams() {
        let v = build_vocab(vec![word_trigrams(ABALONE)], 1 << 18).unwrap();
        let bag = word_trigram_bag(&line(ABALONE), &v);
        for t in ["Name Abalone Size", "4177 #Num 7"] {
            assert!(bag.count(v.id(t)) >= 1, "{t}");
        }
        // 8 tokens -> 6 windows
        assert_eq!(word_tokens(ABALONE).len(), 8);
        assert_eq!(bag.total(), 6);
    }

    #[test]
    fn short_inputs_give_empty_bags() {
        let v = build_vocab(vec![vec!["abc".to_string()]], 10).unwrap();
        assert!(char_trigram_bag("ab", &v).is_empty());
        assert!(word_trigram_bag(&line("a:1"), &v).is_empty());
    }

    #[test]
    fn unseen_trigrams_map_to_unk() {
        let v = build_vocab(vec![vec!["abc".to_string()]], 10).unwrap();
        let bag = char_trigram_bag("xyzw", &v);
        assert_eq!(bag.entries, vec![(UNK, 2)]);
    }

    /// Overlapping occurrence count by direct scanning.
    fn occurrences(hay: &[char], needle: &[char]) -> u32 {
        (0..hay.len())
            .filter(|&i| hay[i..].starts_with(needle))
            .count() as u32
    }

    proptest! {
        #[test]
        fn char_bag_matches_window_enumeration(s in "[a-c:,0-9]{0,40}") {
            let chars: Vec<char> = s.chars().collect();
            let v = build_vocab(vec![char_trigrams(&s), vec!["pad".into()]], 1 << 18).unwrap();
            let bag = char_trigram_bag(&s, &v);
            prop_assert_eq!(bag.total() as usize, chars.len().saturating_sub(2));
            for &(id, count) in &bag.entries {
                let tri: Vec<char> = v.token(id).unwrap().chars().collect();
                prop_assert_eq!(count, occurrences(&chars, &tri));
            }
        }

        #[test]
        fn word_bag_has_n_minus_two_windows(words in proptest::collection::vec("[a-z0-9#]{1,5}", 0..12)) {
            let text = words.join(",");
            let v = build_vocab(vec![word_trigrams(&text), vec!["pad".into()]], 1 << 18).unwrap();
            let bag = word_trigram_bag(&line(&text), &v);
            prop_assert_eq!(bag.total() as usize, words.len().saturating_sub(2));
        }
    }
}
