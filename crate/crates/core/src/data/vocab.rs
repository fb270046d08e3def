use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
/// Longest token sequence fed to the encoder.
pub const MAX_SEQUENCE_LEN: usize = 512;
pub const DEFAULT_MIN_FREQUENCY: usize = 2;

/// Lowercases and splits on whitespace; every non-alphanumeric,
/// non-whitespace character becomes its own token.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Token ↔ id map. Id 0 is padding and id 1 is the unknown token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Keeps tokens seen at least `min_frequency` times, ordered by
    /// descending count and then lexicographically.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_frequency: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for tok in split_tokens(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_frequency.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens).expect("reserved ids are in place")
    }

    /// Rebuilds from an id-ordered token list (as stored in checkpoints).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD_ID] != PAD_TOKEN || tokens[UNK_ID] != UNK_TOKEN {
            return Err(Error::Contract(
                "vocabulary must start with the padding and unknown tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let ids: Vec<usize> = split_tokens(text)
            .iter()
            .take(MAX_SEQUENCE_LEN)
            .map(|t| self.id(t))
            .collect();
        TokenSequence::new(ids)
    }
}

/// Encoded essay: ids plus a mask that is `false` exactly at padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        let mask = ids.iter().map(|&i| i != PAD_ID).collect();
        Self { ids, mask }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Right-pads a batch into time-major id and mask arrays of
/// `steps × batch`, where `steps` is the longest sequence.
pub fn pad_batch(seqs: &[&TokenSequence]) -> (Vec<usize>, Vec<bool>, usize) {
    let steps = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    let batch = seqs.len();
    let mut ids = vec![PAD_ID; steps * batch];
    let mut mask = vec![false; steps * batch];
    for (b, s) in seqs.iter().enumerate() {
        for t in 0..s.len() {
            ids[t * batch + b] = s.ids[t];
            mask[t * batch + b] = s.mask[t];
        }
    }
    (ids, mask, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(split_tokens("The cat."), vec!["the", "cat", "."]);
        assert_eq!(split_tokens("  Hi,there!  "), vec!["hi", ",", "there", "!"]);
        assert_eq!(split_tokens("Ünïcode\u{00a0}words"), vec!["ünïcode", "words"]);
        assert!(split_tokens("").is_empty());
    }

    #[test]
    fn tokenize_known_and_unknown_words() {
        let vocab = Vocab::build(["the cat . the cat ."], 2);
        let seq = vocab.tokenize("The cat.");
        assert_eq!(seq.ids, vec![vocab.id("the"), vocab.id("cat"), vocab.id(".")]);
        assert!(seq.ids.iter().all(|&i| i > UNK_ID));
        assert_eq!(vocab.tokenize("dog").ids, vec![UNK_ID]);
    }

    #[test]
    fn min_frequency_filters_rare_tokens() {
        let vocab = Vocab::build(["a a b"], 2);
        assert_eq!(vocab.id("a"), 2);
        assert_eq!(vocab.id("b"), UNK_ID);
        assert_eq!(vocab.len(), 3);
    }

    #[test]
    fn ids_are_stable_for_identical_corpora() {
        let corpus = ["x y z z y y", "q q x"];
        assert_eq!(Vocab::build(corpus, 1), Vocab::build(corpus, 1));
        let v = Vocab::build(corpus, 1);
        // y:3, q/x/z: 2 → y first, then lexicographic
        assert_eq!(&v.tokens()[2..], &["y", "q", "x", "z"]);
    }

    #[test]
    fn long_texts_truncate_to_limit() {
        let text = vec!["word"; 600].join(" ");
        let vocab = Vocab::build([text.as_str()], 2);
        let seq = vocab.tokenize(&text);
        assert_eq!(seq.len(), MAX_SEQUENCE_LEN);
        assert!(seq.mask.iter().all(|&m| m));
    }

    #[test]
    fn mask_false_exactly_at_padding() {
        let a = TokenSequence::new(vec![3, 4, 5]);
        let b = TokenSequence::new(vec![6]);
        let (ids, mask, steps) = pad_batch(&[&a, &b]);
        assert_eq!(steps, 3);
        assert_eq!(ids, vec![3, 6, 4, 0, 5, 0]);
        for (i, m) in ids.iter().zip(&mask) {
            assert_eq!(*m, *i != PAD_ID);
        }
    }

    #[test]
    fn from_tokens_requires_reserved_prefix() {
        assert!(Vocab::from_tokens(vec!["a".into(), "b".into()]).is_err());
        assert!(Vocab::from_tokens(vec![PAD_TOKEN.into(), UNK_TOKEN.into(), "a".into(), "a".into()]).is_err());
    }
}
