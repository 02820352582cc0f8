//! Bit-exact model bundles.
//!
//! A bundle is a directory holding `manifest.json` (format version,
//! config, training metadata, the tensor directory, vocabulary file
//! names, and a CRC-64 of the weights), `weights.bin` (every tensor
//! concatenated as little-endian IEEE-754 f64, row-major, in manifest
//! order), and one UTF-8 TSV per vocabulary.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::{RadicalTable, TagVocab, Vocab};
use crate::nd::{ParamStore, Tensor};

use super::config::ModelConfig;
use super::error::PipelineError;
use super::model::{ModelParams, TrainMeta, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest.json";
const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    meta: TrainMeta,
    tensors: Vec<TensorEntry>,
    vocab_files: VocabFiles,
    weights_crc64: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len_bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFiles {
    char: String,
    word: String,
    radical: String,
    tag: String,
    radical_map: String,
}

impl Default for VocabFiles {
    fn default() -> Self {
        VocabFiles {
            char: "char_vocab.tsv".into(),
            word: "word_vocab.tsv".into(),
            radical: "radical_vocab.tsv".into(),
            tag: "tag_vocab.tsv".into(),
            radical_map: "radical_map.tsv".into(),
        }
    }
}

// CRC-64/XZ (reflected, poly 0xC96C5795D7870F42, init and xorout all
// ones), table-driven.
const fn crc64_table() -> [u64; 256] {
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u64;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ 0xC96C_5795_D787_0F42
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC64_TABLE: [u64; 256] = crc64_table();

pub fn crc64(data: &[u8]) -> u64 {
    let mut crc = !0u64;
    for &b in data {
        crc = CRC64_TABLE[((crc ^ b as u64) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

fn write_vocab_tsv(path: &Path, vocab: &Vocab) -> Result<(), PipelineError> {
    let mut out = String::new();
    for (i, token) in vocab.tokens().iter().enumerate() {
        out.push_str(token);
        out.push('\t');
        out.push_str(&i.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| PipelineError::io(path, e))
}

fn read_vocab_tsv(path: &Path) -> Result<Vocab, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut tokens = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let (token, index) = line.split_once('\t').ok_or_else(|| {
            PipelineError::bundle(path, format!("line {}: expected token<TAB>index", idx + 1))
        })?;
        let parsed: usize = index.parse().map_err(|_| {
            PipelineError::bundle(path, format!("line {}: bad index {index:?}", idx + 1))
        })?;
        if parsed != idx {
            return Err(PipelineError::bundle(
                path,
                format!("line {}: indices must be contiguous", idx + 1),
            ));
        }
        tokens.push(token.to_string());
    }
    Vocab::from_tokens(tokens).map_err(|msg| PipelineError::bundle(path, msg))
}

fn write_tags_tsv(path: &Path, tags: &TagVocab) -> Result<(), PipelineError> {
    let mut out = String::new();
    for (i, tag) in tags.tags().iter().enumerate() {
        out.push_str(tag);
        out.push('\t');
        out.push_str(&i.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| PipelineError::io(path, e))
}

fn read_tags_tsv(path: &Path) -> Result<TagVocab, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut tags = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let (tag, _) = line.split_once('\t').ok_or_else(|| {
            PipelineError::bundle(path, format!("line {}: expected tag<TAB>index", idx + 1))
        })?;
        tags.push(tag.to_string());
    }
    Ok(TagVocab::from_tag_list(&tags)?)
}

fn write_radical_map(path: &Path, table: &RadicalTable) -> Result<(), PipelineError> {
    let mut out = String::new();
    for (c, r) in table.sorted_pairs() {
        out.push(c);
        out.push('\t');
        out.push(r);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| PipelineError::io(path, e))
}

fn read_radical_map(path: &Path) -> Result<HashMap<char, char>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut map = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let bad =
            || PipelineError::bundle(path, format!("line {}: expected char<TAB>radical", idx + 1));
        let (c, r) = line.split_once('\t').ok_or_else(bad)?;
        let mut cs = c.chars();
        let mut rs = r.chars();
        match (cs.next(), cs.next(), rs.next(), rs.next()) {
            (Some(c), None, Some(r), None) => {
                map.insert(c, r);
            }
            _ => return Err(bad()),
        }
    }
    Ok(map)
}

/// Writes the bundle directory, creating it if needed.
pub fn save_model(model: &TrainedModel, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;

    let mut weights: Vec<u8> = Vec::with_capacity(model.store.total_len() * 8);
    let mut tensors = Vec::with_capacity(model.store.len());
    for id in model.store.ids() {
        let t = model.store.get(id);
        let offset = weights.len() as u64;
        for v in t.values() {
            weights.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: model.store.name(id).to_string(),
            shape: t.shape().to_vec(),
            offset,
            len_bytes: (t.numel() * 8) as u64,
        });
    }
    let crc = crc64(&weights);
    let weights_path = dir.join(WEIGHTS_FILE);
    fs::write(&weights_path, &weights).map_err(|e| PipelineError::io(&weights_path, e))?;

    let files = VocabFiles::default();
    write_vocab_tsv(&dir.join(&files.char), &model.char_vocab)?;
    write_vocab_tsv(&dir.join(&files.word), &model.word_vocab)?;
    write_vocab_tsv(&dir.join(&files.radical), model.radical_table.vocab())?;
    write_tags_tsv(&dir.join(&files.tag), &model.tag_vocab)?;
    write_radical_map(&dir.join(&files.radical_map), &model.radical_table)?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        meta: model.meta.clone(),
        tensors,
        vocab_files: files,
        weights_crc64: format!("{crc:016x}"),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::bundle(&manifest_path, e.to_string()))?;
    fs::write(&manifest_path, json).map_err(|e| PipelineError::io(&manifest_path, e))
}

/// Reads a bundle back. The weights CRC and every tensor extent are
/// verified before the model is assembled.
pub fn load_model(dir: &Path) -> Result<TrainedModel, PipelineError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let json =
        fs::read_to_string(&manifest_path).map_err(|e| PipelineError::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&json)
        .map_err(|e| PipelineError::bundle(&manifest_path, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(PipelineError::bundle(
            dir,
            format!(
                "format version {} not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    manifest.config.validate()?;

    let weights_path = dir.join(WEIGHTS_FILE);
    let weights = fs::read(&weights_path).map_err(|e| PipelineError::io(&weights_path, e))?;
    let expected_len: u64 = manifest.tensors.iter().map(|t| t.len_bytes).sum();
    if weights.len() as u64 != expected_len {
        return Err(PipelineError::bundle(
            &weights_path,
            format!(
                "weights length {} does not match manifest total {expected_len} (truncated?)",
                weights.len()
            ),
        ));
    }
    let crc = format!("{:016x}", crc64(&weights));
    if crc != manifest.weights_crc64 {
        return Err(PipelineError::bundle(
            &weights_path,
            format!(
                "checksum mismatch: weights hash {crc}, manifest says {}",
                manifest.weights_crc64
            ),
        ));
    }

    let mut store = ParamStore::new();
    for entry in &manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        if entry.len_bytes as usize != numel * 8 {
            return Err(PipelineError::bundle(
                &weights_path,
                format!("tensor {} shape/bytes mismatch", entry.name),
            ));
        }
        let start = entry.offset as usize;
        let end = start + entry.len_bytes as usize;
        if end > weights.len() {
            return Err(PipelineError::bundle(
                &weights_path,
                format!("tensor {} extends past the weights blob", entry.name),
            ));
        }
        let values: Vec<f64> = weights[start..end]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        store.register(&entry.name, Tensor::new(&entry.shape, values));
    }

    let files = &manifest.vocab_files;
    let char_vocab = read_vocab_tsv(&dir.join(&files.char))?;
    let word_vocab = read_vocab_tsv(&dir.join(&files.word))?;
    let radical_vocab = read_vocab_tsv(&dir.join(&files.radical))?;
    let tag_vocab = read_tags_tsv(&dir.join(&files.tag))?;
    let radical_map = read_radical_map(&dir.join(&files.radical_map))?;
    let radical_table = RadicalTable::from_vocab_and_map(radical_vocab, radical_map);

    let params = ModelParams::resolve(&store, &manifest.config, tag_vocab.len())?;
    Ok(TrainedModel {
        config: manifest.config,
        store,
        params,
        char_vocab,
        word_vocab,
        radical_table,
        tag_vocab,
        meta: manifest.meta,
    })
}
