use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::{sentinel, sentinel_index, NUM_SENTINELS};

pub type TokenId = u32;

/// Deterministic text-to-ids mapping with a fixed list of mask sentinels.
pub trait Tokenizer: Send + Sync {
    fn vocab_size(&self) -> usize;
    /// Sentinel ids; index `k` is the id of `<mask{k}>`.
    fn mask_ids(&self) -> &[TokenId];
    fn eos_id(&self) -> Option<TokenId>;
    fn encode(&self, text: &str) -> Vec<TokenId>;
    fn surface(&self, id: TokenId) -> String;
}

pub const PAD_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;
const FIRST_SENTINEL: TokenId = 3;
const FIRST_WORD: TokenId = FIRST_SENTINEL + NUM_SENTINELS as TokenId;

/// Splits on whitespace and looks words up in a sorted table. Ids 0..3 are
/// pad/eos/unk, the next 100 are `<mask0>`..`<mask99>`, words follow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct WhitespaceTokenizer {
    vocab_size: usize,
    words: Vec<String>,
    index: HashMap<String, TokenId>,
    sentinels: Vec<TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    vocab_size: usize,
    words: Vec<String>,
}

impl From<VocabFile> for WhitespaceTokenizer {
    fn from(f: VocabFile) -> Self {
        Self::from_words(f.words, f.vocab_size)
    }
}

impl From<WhitespaceTokenizer> for VocabFile {
    fn from(t: WhitespaceTokenizer) -> Self {
        Self {
            vocab_size: t.vocab_size,
            words: t.words,
        }
    }
}

impl WhitespaceTokenizer {
    /// Smallest vocabulary that still holds every reserved id.
    pub const RESERVED: usize = FIRST_WORD as usize;

    /// Collects every word in `texts`, sorted, keeping as many as fit in
    /// `vocab_size`.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, vocab_size: usize) -> Self {
        let words: BTreeSet<&str> = texts
            .into_iter()
            .flat_map(str::split_whitespace)
            .filter(|w| sentinel_index(w).is_none() && !matches!(*w, "<pad>" | "</s>" | "<unk>"))
            .collect();
        Self::from_words(words.into_iter().map(String::from).collect(), vocab_size)
    }

    fn from_words(mut words: Vec<String>, vocab_size: usize) -> Self {
        let vocab_size = vocab_size.max(Self::RESERVED);
        words.truncate(vocab_size - Self::RESERVED);
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), FIRST_WORD + i as TokenId))
            .collect();
        Self {
            vocab_size,
            words,
            index,
            sentinels: (0..NUM_SENTINELS as TokenId).map(|k| FIRST_SENTINEL + k).collect(),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> TokenId {
        if let Some(k) = sentinel_index(word) {
            return self.sentinels[k];
        }
        match word {
            "<pad>" => PAD_ID,
            "</s>" => EOS_ID,
            _ => self.index.get(word).copied().unwrap_or(UNK_ID),
        }
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn mask_ids(&self) -> &[TokenId] {
        &self.sentinels
    }

    fn eos_id(&self) -> Option<TokenId> {
        Some(EOS_ID)
    }

    fn encode(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    fn surface(&self, id: TokenId) -> String {
        match id {
            PAD_ID => "<pad>".into(),
            EOS_ID => "</s>".into(),
            UNK_ID => "<unk>".into(),
            id if id < FIRST_WORD => sentinel((id - FIRST_SENTINEL) as usize),
            id => self
                .words
                .get((id - FIRST_WORD) as usize)
                .cloned()
                .unwrap_or_else(|| "<unk>".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_ids_and_sentinels() {
        let a = WhitespaceTokenizer::fit(["dog is a animal", "cat is a animal"], 1000);
        let b = WhitespaceTokenizer::fit(["cat is a animal", "dog is a animal"], 1000);
        assert_eq!(a, b);
        assert_eq!(a.encode("dog is a"), a.encode("dog is a"));
        assert_eq!(a.encode("<mask0>"), vec![a.mask_ids()[0]]);
        assert_eq!(a.encode("<mask99>"), vec![a.mask_ids()[99]]);
        assert_eq!(a.surface(a.mask_ids()[7]), "<mask7>");
        assert_eq!(a.encode("zebra"), vec![UNK_ID]);
        let dog = a.encode("dog")[0];
        assert_eq!(a.surface(dog), "dog");
    }

    #[test]
    fn vocab_cap() {
        let t = WhitespaceTokenizer::fit(["a b c d"], WhitespaceTokenizer::RESERVED + 2);
        assert_eq!(t.words(), ["a", "b"]);
        assert_eq!(t.encode("c"), vec![UNK_ID]);
    }

    #[test]
    fn serde_round_trip() {
        let t = WhitespaceTokenizer::fit(["x y z"], 500);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<WhitespaceTokenizer>(&json).unwrap(), t);
    }
}
