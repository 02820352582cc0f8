//! Word-to-character alignment and the per-character parallel view of
//! a sentence.

use rand::Rng;

use super::error::EmbedError;
use super::radical::RadicalTable;
use super::table::{EmbeddingTable, LookupMode};

/// Assigns each character the index of its containing word.
///
/// The concatenation of `words` must equal `chars` exactly; otherwise
/// the error names the first character offset where they diverge.
pub fn align_words(chars: &[char], words: &[String]) -> Result<Vec<usize>, EmbedError> {
    let mut assignment = Vec::with_capacity(chars.len());
    let mut offset = 0;
    for (w_idx, word) in words.iter().enumerate() {
        for wc in word.chars() {
            if offset >= chars.len() || chars[offset] != wc {
                return Err(EmbedError::Misaligned { offset });
            }
            assignment.push(w_idx);
            offset += 1;
        }
    }
    if offset != chars.len() {
        return Err(EmbedError::Misaligned { offset });
    }
    Ok(assignment)
}

/// Per-character parallel sequences for one sentence: character ids,
/// radical ids, duplicated word ids, and optional gold tag ids.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSentence {
    pub chars: Vec<char>,
    pub char_ids: Vec<usize>,
    pub radical_ids: Vec<usize>,
    pub word_ids: Vec<usize>,
    pub tags: Option<Vec<usize>>,
}

impl AlignedSentence {
    /// Looks up all three id streams, duplicating each word id onto its
    /// constituent characters. A model running without the word stream
    /// passes no word table and gets UNK-filled word ids.
    #[allow(clippy::too_many_arguments)]
    pub fn build<R: Rng>(
        chars: &[char],
        words: &[String],
        char_table: &mut EmbeddingTable,
        word_table: Option<&mut EmbeddingTable>,
        radical_table: &RadicalTable,
        mode: LookupMode,
        rng: &mut R,
        tags: Option<Vec<usize>>,
    ) -> Result<Self, EmbedError> {
        assert!(!chars.is_empty(), "sentence must have at least one character");
        let spans = align_words(chars, words)?;
        let word_ids: Vec<usize> = match word_table {
            Some(table) => {
                let word_vocab_ids: Vec<usize> = words
                    .iter()
                    .map(|w| table.lookup_id(w, mode, rng))
                    .collect();
                spans.iter().map(|&s| word_vocab_ids[s]).collect()
            }
            None => vec![super::vocab::UNK_ID; chars.len()],
        };
        let char_ids: Vec<usize> = chars
            .iter()
            .map(|c| char_table.lookup_id(&c.to_string(), mode, rng))
            .collect();
        let radical_ids = radical_table.radicals_of(chars);
        if let Some(t) = &tags {
            assert_eq!(t.len(), chars.len(), "tag sequence length mismatch");
        }
        Ok(AlignedSentence {
            chars: chars.to_vec(),
            char_ids,
            radical_ids,
            word_ids,
            tags,
        })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}
