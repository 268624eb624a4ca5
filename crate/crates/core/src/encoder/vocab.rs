use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EncoderError;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;

const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Whitespace-token vocabulary with the four special ids at `0..4`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from training texts, keeping at most `max_tokens` regular
    /// tokens ranked by frequency (ties broken lexicographically).
    pub fn build<'a, I>(texts: I, max_tokens: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for tok in text.split_whitespace() {
                if !SPECIALS.contains(&tok) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_tokens);
        let regular = ranked.into_iter().map(|(t, _)| t.to_string()).collect();
        Self::from_regular_tokens(regular).expect("counted tokens are distinct")
    }

    /// Rebuilds from the regular tokens in id order (ids start at 4).
    pub fn from_regular_tokens(regular: Vec<String>) -> Result<Self, EncoderError> {
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(regular)
            .collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id).is_some() {
                return Err(EncoderError::InvalidVocabulary(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Total size including special tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when no regular tokens exist.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() == SPECIALS.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn regular_tokens(&self) -> &[String] {
        &self.tokens[SPECIALS.len()..]
    }

    /// `[CLS] body [SEP]`, truncated to `max_len` (always ending in
    /// `[SEP]`) and padded with `[PAD]`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<Vec<usize>, EncoderError> {
        if self.is_empty() {
            return Err(EncoderError::EmptyVocabulary);
        }
        if max_len < 3 {
            return Err(EncoderError::InvalidConfig(format!(
                "max_len must be at least 3, got {max_len}"
            )));
        }
        let mut ids = Vec::with_capacity(max_len);
        ids.push(CLS);
        ids.extend(text.split_whitespace().take(max_len - 2).map(|t| self.id(t)));
        ids.push(SEP);
        ids.resize(max_len, PAD);
        Ok(ids)
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = EncoderError;

    fn try_from(all: Vec<String>) -> Result<Self, Self::Error> {
        if all.len() < SPECIALS.len() || all[..SPECIALS.len()] != SPECIALS {
            return Err(EncoderError::InvalidVocabulary(
                "special tokens missing from the head of the token list".into(),
            ));
        }
        Self::from_regular_tokens(all[SPECIALS.len()..].to_vec())
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}
