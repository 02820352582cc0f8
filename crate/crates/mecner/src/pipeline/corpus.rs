//! Corpus and segmentation file loading.
//!
//! Corpus format: UTF-8 text, one `character<TAB>tag` per line, a
//! blank line terminates a sentence, `#`-prefixed lines are comments.
//! Segmentation format: one sentence per line, words separated by
//! single spaces, in corpus order.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::error::PipelineError;

/// One corpus sentence: characters plus optional gold tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub chars: Vec<char>,
    pub tags: Option<Vec<String>>,
}

impl Sentence {
    pub fn tagged(chars: Vec<char>, tags: Vec<String>) -> Self {
        assert_eq!(chars.len(), tags.len(), "tags must align with characters");
        Sentence {
            chars,
            tags: Some(tags),
        }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}

/// Sentences paired with their word segmentations.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    pub segmentations: Vec<Vec<String>>,
}

impl Dataset {
    pub fn new(sentences: Vec<Sentence>, segmentations: Vec<Vec<String>>) -> Self {
        assert_eq!(
            sentences.len(),
            segmentations.len(),
            "one segmentation per sentence"
        );
        Dataset {
            sentences,
            segmentations,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Parses corpus text. `origin` is used in error messages.
pub fn parse_corpus(text: &str, origin: &str) -> Result<Vec<Sentence>, PipelineError> {
    let mut sentences = Vec::new();
    let mut chars = Vec::new();
    let mut tags = Vec::new();
    let mut flush = |chars: &mut Vec<char>, tags: &mut Vec<String>| {
        if !chars.is_empty() {
            sentences.push(Sentence::tagged(std::mem::take(chars), std::mem::take(tags)));
        }
    };
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            flush(&mut chars, &mut tags);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let err = |msg: String| PipelineError::Corpus {
            path: origin.to_string(),
            line: lineno,
            msg,
        };
        let (ch, tag) = line
            .split_once('\t')
            .ok_or_else(|| err(format!("expected \"character<TAB>tag\", got {line:?}")))?;
        let mut it = ch.chars();
        let c = it
            .next()
            .ok_or_else(|| err("empty character column".into()))?;
        if it.next().is_some() {
            return Err(err(format!(
                "character column must hold exactly one character, got {ch:?}"
            )));
        }
        if tag.is_empty() {
            return Err(err("empty tag column".into()));
        }
        chars.push(c);
        tags.push(tag.to_string());
    }
    flush(&mut chars, &mut tags);
    Ok(sentences)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Sentence>, PipelineError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| PipelineError::io(path, e))?;
    parse_corpus(&text, &path.display().to_string())
}

/// Loads one space-separated word list per line.
pub fn load_segmentations(path: &Path) -> Result<Vec<Vec<String>>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        out.push(line.split(' ').filter(|w| !w.is_empty()).map(String::from).collect());
    }
    Ok(out)
}

/// Writes sentences back in corpus format (used by the synthetic
/// generator and tests).
pub fn format_corpus(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        let tags = s.tags.as_ref().expect("formatting needs gold tags");
        for (c, t) in s.chars.iter().zip(tags) {
            out.push(*c);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn format_segmentations(segs: &[Vec<String>]) -> String {
    let mut out = String::new();
    for words in segs {
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}
