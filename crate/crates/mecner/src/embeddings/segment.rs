//! Fallback greedy maximum-matching word segmenter.
//!
//! Used when no external segmentation file is supplied. Quality is not
//! the goal; producing a deterministic segmentation that concatenates
//! back to the input is.

use std::collections::HashSet;

pub const DEFAULT_MAX_WORD_LEN: usize = 4;

/// Greedy left-to-right longest match against `lexicon`. Characters
/// that start no lexicon word become single-character words. The output
/// always concatenates to the input.
pub fn segment_max_match(
    chars: &[char],
    lexicon: &HashSet<String>,
    max_word_len: usize,
) -> Vec<String> {
    assert!(max_word_len >= 1, "max_word_len must be >= 1");
    let mut words = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut taken = 1;
        let longest = max_word_len.min(chars.len() - i);
        for len in (2..=longest).rev() {
            let candidate: String = chars[i..i + len].iter().collect();
            if lexicon.contains(&candidate) {
                taken = len;
                break;
            }
        }
        words.push(chars[i..i + taken].iter().collect());
        i += taken;
    }
    words
}
