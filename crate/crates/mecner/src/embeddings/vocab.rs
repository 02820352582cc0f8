//! Token-to-index vocabulary with reserved UNK and PAD slots.

use std::collections::HashMap;

pub const UNK_ID: usize = 0;
pub const PAD_ID: usize = 1;
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_TOKEN: &str = "<pad>";

/// Injective token map. Index 0 is always UNK, index 1 always PAD.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.insert_new(UNK_TOKEN).unwrap();
        v.insert_new(PAD_TOKEN).unwrap();
        v
    }

    /// Inserts a token that must not be present yet.
    pub fn insert_new(&mut self, token: &str) -> Result<usize, usize> {
        if let Some(&id) = self.index.get(token) {
            return Err(id);
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        Ok(id)
    }

    /// Returns the existing id or inserts the token at the next index.
    pub fn get_or_insert(&mut self, token: &str) -> usize {
        match self.insert_new(token) {
            Ok(id) | Err(id) => id,
        }
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, falling back to UNK.
    pub fn get_or_unk(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // UNK and PAD are always present
    }

    /// Tokens in index order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds a vocabulary from tokens in index order, as written by
    /// the model bundle. The reserved slots must be intact.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < 2 || tokens[UNK_ID] != UNK_TOKEN || tokens[PAD_ID] != PAD_TOKEN {
            return Err("vocabulary must start with the UNK and PAD rows".into());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate token {t:?}"));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}
