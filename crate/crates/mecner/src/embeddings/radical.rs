//! Character-to-radical lookup.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use std::collections::HashMap;

use super::error::EmbedError;
use super::vocab::Vocab;

/// Maps each character to a single radical symbol, with an UNK radical
/// for anything unmapped (digits, Latin letters, emoji, rare hanzi).
#[derive(Debug, Clone)]
pub struct RadicalTable {
    map: HashMap<char, char>,
    vocab: Vocab,
}

impl RadicalTable {
    pub fn from_pairs<I: IntoIterator<Item = (char, char)>>(pairs: I) -> Self {
        let mut map = HashMap::new();
        let mut vocab = Vocab::new();
        for (ch, radical) in pairs {
            vocab.get_or_insert(&radical.to_string());
            map.insert(ch, radical);
        }
        RadicalTable { map, vocab }
    }

    /// Loads a UTF-8 TSV of `character<TAB>radical` rows. Later
    /// duplicates override earlier ones.
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let p = path.display().to_string();
        let file = File::open(path).map_err(|source| EmbedError::Io {
            path: p.clone(),
            source,
        })?;
        let mut pairs = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| EmbedError::Io {
                path: p.clone(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let bad = || EmbedError::BadRadicalRow {
                path: p.clone(),
                line: idx + 1,
                got: line.clone(),
            };
            let (ch, radical) = line.split_once('\t').ok_or_else(bad)?;
            let mut chars = ch.chars();
            let c = chars.next().ok_or_else(bad)?;
            if chars.next().is_some() {
                return Err(bad());
            }
            let mut rads = radical.chars();
            let r = rads.next().ok_or_else(bad)?;
            if rads.next().is_some() {
                return Err(bad());
            }
            pairs.push((c, r));
        }
        Ok(Self::from_pairs(pairs))
    }

    /// Reassembles a table from a saved radical vocabulary and map, so
    /// that radical ids keep their trained indices.
    pub fn from_vocab_and_map(vocab: Vocab, map: HashMap<char, char>) -> Self {
        RadicalTable { map, vocab }
    }

    pub fn radical_of(&self, ch: char) -> Option<char> {
        self.map.get(&ch).copied()
    }

    /// One radical id per character; UNK for unmapped characters.
    pub fn radicals_of(&self, chars: &[char]) -> Vec<usize> {
        chars
            .iter()
            .map(|c| match self.map.get(c) {
                Some(r) => self.vocab.get_or_unk(&r.to_string()),
                None => super::vocab::UNK_ID,
            })
            .collect()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// The map in a deterministic order (sorted by character), for
    /// serialization.
    pub fn sorted_pairs(&self) -> Vec<(char, char)> {
        let mut v: Vec<(char, char)> = self.map.iter().map(|(&c, &r)| (c, r)).collect();
        v.sort_unstable();
        v
    }
}
