//! Vocabularies, pretrained-embedding loading, radical lookup,
//! word-segmentation alignment, and the fallback max-match segmenter.

mod align;
mod error;
mod radical;
mod segment;
mod table;
mod tags;
mod vocab;

pub use align::{align_words, AlignedSentence};
pub use error::EmbedError;
pub use radical::RadicalTable;
pub use segment::{segment_max_match, DEFAULT_MAX_WORD_LEN};
pub use table::{EmbeddingTable, LookupMode, RANDOM_INIT_RANGE};
pub use tags::{BioTag, TagVocab};
pub use vocab::{Vocab, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};
