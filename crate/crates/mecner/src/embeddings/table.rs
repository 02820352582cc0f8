//! Trainable embedding tables and the pretrained text-format loader.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::nd::Tensor;

use super::error::EmbedError;
use super::vocab::{Vocab, PAD_ID, UNK_ID};

/// Range of the uniform init used for UNK and for rows grown at train
/// time. The generator is seeded by the caller, so runs reproduce.
pub const RANDOM_INIT_RANGE: f64 = 0.25;

/// Whether an unknown token grows the vocabulary or maps to UNK.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupMode {
    Grow,
    Frozen,
}

/// Token vocabulary plus a trainable `[V, d]` matrix.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vocab: Vocab,
    matrix: Tensor,
    dim: usize,
    trainable: bool,
    frozen: bool,
}

fn random_row<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.gen_range(-RANDOM_INIT_RANGE..RANDOM_INIT_RANGE))
        .collect()
}

impl EmbeddingTable {
    /// Empty table with only the UNK (random) and PAD (zero) rows.
    pub fn random<R: Rng>(dim: usize, rng: &mut R) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let mut values = random_row(dim, rng);
        values.extend(std::iter::repeat_n(0.0, dim)); // PAD row
        EmbeddingTable {
            vocab: Vocab::new(),
            matrix: Tensor::new(&[2, dim], values),
            dim,
            trainable: true,
            frozen: false,
        }
    }

    /// Table covering every token of `vocab`, all rows random.
    pub fn random_for_vocab<R: Rng>(vocab: Vocab, dim: usize, rng: &mut R) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let v = vocab.len();
        let mut values = Vec::with_capacity(v * dim);
        for i in 0..v {
            if i == PAD_ID {
                values.extend(std::iter::repeat_n(0.0, dim));
            } else {
                values.extend(random_row(dim, rng));
            }
        }
        EmbeddingTable {
            vocab,
            matrix: Tensor::new(&[v, dim], values),
            dim,
            trainable: true,
            frozen: false,
        }
    }

    /// Loads the text format: line 1 is `<count> <dim>`, every
    /// following line a token and `dim` space-separated floats.
    /// UNK and PAD rows are prepended; file tokens keep file order.
    pub fn load_pretrained<R: Rng>(
        path: &Path,
        expected_dim: usize,
        rng: &mut R,
    ) -> Result<Self, EmbedError> {
        let p = path.display().to_string();
        let io = |source| EmbedError::Io {
            path: p.clone(),
            source,
        };
        let file = File::open(path).map_err(io)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();

        let (_, header) = lines.next().ok_or_else(|| EmbedError::BadHeader {
            path: p.clone(),
            line: 1,
            got: String::new(),
        })?;
        let header = header.map_err(io)?;
        let mut parts = header.split_whitespace();
        let parse = |s: Option<&str>| s.and_then(|v| v.parse::<usize>().ok());
        let (count, dim) = match (parse(parts.next()), parse(parts.next()), parts.next()) {
            (Some(c), Some(d), None) => (c, d),
            _ => {
                return Err(EmbedError::BadHeader {
                    path: p.clone(),
                    line: 1,
                    got: header,
                })
            }
        };
        if dim != expected_dim {
            return Err(EmbedError::DimMismatch {
                path: p.clone(),
                expected: expected_dim,
                found: dim,
            });
        }

        let mut table = EmbeddingTable::random(dim, rng);
        let mut loaded = 0usize;
        for (idx, line) in lines {
            let line = line.map_err(io)?;
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let token = fields.next().unwrap_or_default().to_string();
            let mut row = Vec::with_capacity(dim);
            for field in fields {
                let v: f64 = field.parse().map_err(|_| EmbedError::MalformedFloat {
                    path: p.clone(),
                    line: lineno,
                    value: field.to_string(),
                })?;
                row.push(v);
            }
            if row.len() != dim {
                return Err(EmbedError::RowWidth {
                    path: p.clone(),
                    line: lineno,
                    token,
                    expected: dim,
                    found: row.len(),
                });
            }
            table
                .vocab
                .insert_new(&token)
                .map_err(|_| EmbedError::DuplicateToken {
                    path: p.clone(),
                    line: lineno,
                    token: token.clone(),
                })?;
            table.matrix.append_row(&row);
            loaded += 1;
        }
        // A short file is tolerated; a count header larger than the
        // body usually signals truncation, so flag it.
        if loaded != count {
            return Err(EmbedError::BadHeader {
                path: p.clone(),
                line: 1,
                got: format!("header announced {count} rows, file holds {loaded}"),
            });
        }
        Ok(table)
    }

    /// Rebuilds a table from already-final vocab and matrix (used when
    /// loading a model bundle).
    pub fn from_parts(vocab: Vocab, matrix: Tensor, trainable: bool) -> Self {
        assert_eq!(matrix.shape().len(), 2);
        assert_eq!(vocab.len(), matrix.shape()[0], "vocab/matrix row mismatch");
        let dim = matrix.shape()[1];
        EmbeddingTable {
            vocab,
            matrix,
            dim,
            trainable,
            frozen: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    /// Moves the matrix out for registration in a parameter store.
    pub fn into_parts(self) -> (Vocab, Tensor) {
        (self.vocab, self.matrix)
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    /// Marks the table immutable; growth lookups are no longer allowed.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Id of one token. In [`LookupMode::Grow`] an unknown token gets a
    /// fresh randomly-initialized row; in frozen mode it maps to UNK.
    pub fn lookup_id<R: Rng>(&mut self, token: &str, mode: LookupMode, rng: &mut R) -> usize {
        match self.vocab.get(token) {
            Some(id) => id,
            None => match mode {
                LookupMode::Frozen => UNK_ID,
                LookupMode::Grow => {
                    assert!(!self.frozen, "growth lookup on a frozen table");
                    let id = self.vocab.get_or_insert(token);
                    self.matrix.append_row(&random_row(self.dim, rng));
                    id
                }
            },
        }
    }

    pub fn lookup_ids<R: Rng>(
        &mut self,
        tokens: &[String],
        mode: LookupMode,
        rng: &mut R,
    ) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.lookup_id(t, mode, rng))
            .collect()
    }
}
