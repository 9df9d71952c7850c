use std::collections::{BTreeSet, HashMap};

use super::{DataError, SceneCatalog};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Word-level vocabulary: reserved ids first, then every catalog token in
/// lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn normalize_text(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

impl Vocab {
    pub fn build(catalog: &SceneCatalog) -> Result<Self, DataError> {
        if catalog.is_empty() {
            return Err(DataError::EmptyCatalog);
        }
        let words: BTreeSet<String> = catalog.descriptions().flat_map(normalize_text).collect();
        let tokens: Vec<String> = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()].into_iter().chain(words).collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Normalized ids truncated to `max_len`; empty text yields `[UNK_ID]`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = normalize_text(text).iter().take(max_len.max(1)).map(|w| self.id(w)).collect();
        if ids.is_empty() {
            ids.push(UNK_ID);
        }
        ids
    }

    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK_TOKEN)).collect::<Vec<_>>().join(" ")
    }
}
