//! BIO tag vocabulary with transition legality.

use std::collections::HashMap;

use super::error::EmbedError;

/// A parsed BIO tag: outside, begin-of-type, or inside-of-type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BioTag {
    Outside,
    Begin(String),
    Inside(String),
}

impl BioTag {
    pub fn parse(tag: &str) -> Result<Self, EmbedError> {
        if tag == "O" {
            return Ok(BioTag::Outside);
        }
        let bad = || EmbedError::BadTag {
            tag: tag.to_string(),
        };
        let (prefix, kind) = tag.split_once('-').ok_or_else(bad)?;
        if kind.is_empty() {
            return Err(bad());
        }
        match prefix {
            "B" => Ok(BioTag::Begin(kind.to_string())),
            "I" => Ok(BioTag::Inside(kind.to_string())),
            _ => Err(bad()),
        }
    }

    pub fn entity_type(&self) -> Option<&str> {
        match self {
            BioTag::Outside => None,
            BioTag::Begin(t) | BioTag::Inside(t) => Some(t),
        }
    }
}

/// Ordered tag set, entity types, and the BIO transition-legality
/// relation (I-X may only follow B-X or I-X).
#[derive(Debug, Clone)]
pub struct TagVocab {
    tags: Vec<String>,
    parsed: Vec<BioTag>,
    index: HashMap<String, usize>,
    entity_types: Vec<String>,
}

impl TagVocab {
    /// Builds the vocabulary from gold tags in order of first
    /// appearance. Every tag must be `O`, `B-X` or `I-X`.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(tags: I) -> Result<Self, EmbedError> {
        let mut v = TagVocab {
            tags: Vec::new(),
            parsed: Vec::new(),
            index: HashMap::new(),
            entity_types: Vec::new(),
        };
        for tag in tags {
            if v.index.contains_key(tag) {
                continue;
            }
            let parsed = BioTag::parse(tag)?;
            if let Some(t) = parsed.entity_type() {
                if !v.entity_types.iter().any(|e| e == t) {
                    v.entity_types.push(t.to_string());
                }
            }
            v.index.insert(tag.to_string(), v.tags.len());
            v.tags.push(tag.to_string());
            v.parsed.push(parsed);
        }
        Ok(v)
    }

    pub fn from_tag_list(tags: &[String]) -> Result<Self, EmbedError> {
        Self::build(tags.iter().map(|s| s.as_str()))
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn parsed(&self, id: usize) -> &BioTag {
        &self.parsed[id]
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    /// Whether `next` may follow `prev` under the BIO scheme. `None`
    /// stands for the sentence boundary (start or end), where only
    /// the inside continuation is restricted.
    pub fn legal_after(&self, prev: Option<usize>, next: usize) -> bool {
        match &self.parsed[next] {
            BioTag::Outside | BioTag::Begin(_) => true,
            BioTag::Inside(t) => match prev {
                None => false,
                Some(p) => match &self.parsed[p] {
                    BioTag::Begin(pt) | BioTag::Inside(pt) => pt == t,
                    BioTag::Outside => false,
                },
            },
        }
    }
}
