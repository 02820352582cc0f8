//! The trained model: parameter layout, the end-to-end forward pass,
//! prediction, and corpus evaluation.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{
    align_words, segment_max_match, AlignedSentence, EmbeddingTable, RadicalTable, TagVocab,
    Vocab, DEFAULT_MAX_WORD_LEN, UNK_ID,
};
use crate::encoders::{
    char_encode_ablation, compose_repr, radical_encode, CharEncoderParams, CharMode,
    Conv1dParams, GruParams,
};
use crate::nd::{Graph, Mode, NodeId, ParamId, ParamStore};
use crate::tagger::{bigru_forward, crf_nll, emissions, CrfParams, LatticeScores, TransitionMask};

use super::config::ModelConfig;
use super::corpus::Dataset;
use super::error::PipelineError;
use super::eval::{extract_entities, score_predictions, Entity, EvalReport};

/// Handles to every parameter group, resolvable by name from a store.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub char_emb: ParamId,
    pub word_emb: Option<ParamId>,
    pub radical_emb: Option<ParamId>,
    pub char_encoder: CharEncoderParams,
    pub radical_conv: Option<Conv1dParams>,
    pub bigru_fwd: GruParams,
    pub bigru_bwd: GruParams,
    pub crf: CrfParams,
}

fn resolve(store: &ParamStore, name: &str) -> Result<ParamId, PipelineError> {
    store.by_name(name).ok_or_else(|| {
        PipelineError::Config(format!("parameter {name:?} missing from the store"))
    })
}

fn resolve_gru(
    store: &ParamStore,
    prefix: &str,
    hidden: usize,
) -> Result<GruParams, PipelineError> {
    Ok(GruParams {
        wz: resolve(store, &format!("{prefix}.wz"))?,
        wr: resolve(store, &format!("{prefix}.wr"))?,
        wh: resolve(store, &format!("{prefix}.wh"))?,
        uz: resolve(store, &format!("{prefix}.uz"))?,
        ur: resolve(store, &format!("{prefix}.ur"))?,
        uh: resolve(store, &format!("{prefix}.uh"))?,
        bz: resolve(store, &format!("{prefix}.bz"))?,
        br: resolve(store, &format!("{prefix}.br"))?,
        bh: resolve(store, &format!("{prefix}.bh"))?,
        hidden,
    })
}

fn resolve_lstm(
    store: &ParamStore,
    prefix: &str,
    hidden: usize,
) -> Result<crate::encoders::LstmParams, PipelineError> {
    Ok(crate::encoders::LstmParams {
        wi: resolve(store, &format!("{prefix}.wi"))?,
        wf: resolve(store, &format!("{prefix}.wf"))?,
        wo: resolve(store, &format!("{prefix}.wo"))?,
        wg: resolve(store, &format!("{prefix}.wg"))?,
        ui: resolve(store, &format!("{prefix}.ui"))?,
        uf: resolve(store, &format!("{prefix}.uf"))?,
        uo: resolve(store, &format!("{prefix}.uo"))?,
        ug: resolve(store, &format!("{prefix}.ug"))?,
        bi: resolve(store, &format!("{prefix}.bi"))?,
        bf: resolve(store, &format!("{prefix}.bf"))?,
        bo: resolve(store, &format!("{prefix}.bo"))?,
        bg: resolve(store, &format!("{prefix}.bg"))?,
        hidden,
    })
}

fn resolve_conv(store: &ParamStore, prefix: &str) -> Result<Conv1dParams, PipelineError> {
    Ok(Conv1dParams {
        kernels: resolve(store, &format!("{prefix}.kernels"))?,
        bias: resolve(store, &format!("{prefix}.bias"))?,
    })
}

impl ModelParams {
    /// Looks every parameter group up by name, given the config that
    /// determines which groups exist.
    pub fn resolve(
        store: &ParamStore,
        config: &ModelConfig,
        num_tags: usize,
    ) -> Result<Self, PipelineError> {
        let enc = &config.encoder;
        let char_encoder = match enc.char_mode {
            CharMode::ConvGru => CharEncoderParams::ConvGru(crate::encoders::ConvGruParams {
                gru: resolve_gru(store, "char.gru", enc.gru_dim)?,
                conv: resolve_conv(store, "char.conv")?,
            }),
            CharMode::CnnOnly => CharEncoderParams::CnnOnly(resolve_conv(store, "char.cnn")?),
            CharMode::BilstmOnly => CharEncoderParams::Bilstm {
                fwd: resolve_lstm(store, "char.lstm_fwd", enc.gru_dim)?,
                bwd: resolve_lstm(store, "char.lstm_bwd", enc.gru_dim)?,
            },
        };
        Ok(ModelParams {
            char_emb: resolve(store, "emb.char")?,
            word_emb: if enc.use_word {
                Some(resolve(store, "emb.word")?)
            } else {
                None
            },
            radical_emb: if enc.use_radical {
                Some(resolve(store, "emb.radical")?)
            } else {
                None
            },
            char_encoder,
            radical_conv: if enc.use_radical {
                Some(resolve_conv(store, "rad_conv")?)
            } else {
                None
            },
            bigru_fwd: resolve_gru(store, "bigru.fwd", enc.gru_dim)?,
            bigru_bwd: resolve_gru(store, "bigru.bwd", enc.gru_dim)?,
            crf: CrfParams {
                transitions: resolve(store, "crf.transitions")?,
                emit_w: resolve(store, "crf.emit_w")?,
                emit_b: resolve(store, "crf.emit_b")?,
                num_tags,
            },
        })
    }
}

/// Width of the composed per-character representation.
pub fn repr_dim(config: &ModelConfig) -> usize {
    let enc = &config.encoder;
    let mut d = enc.char_stream_dim();
    if enc.use_radical {
        d += enc.radical_filters;
    }
    if enc.use_word {
        d += config.word_emb_dim;
    }
    d
}

/// Training metadata kept with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_dev_f1: Option<f64>,
}

/// Full parameter set, vocabularies, and config; everything prediction
/// needs, serializable as a bit-exact bundle.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub params: ModelParams,
    pub char_vocab: Vocab,
    pub word_vocab: Vocab,
    pub radical_table: RadicalTable,
    pub tag_vocab: TagVocab,
    pub meta: TrainMeta,
}

/// Graph plus the nodes the caller needs after the forward pass.
pub struct SentenceGraph {
    pub graph: Graph,
    pub emissions: NodeId,
    pub loss: Option<NodeId>,
}

/// Forward pass over an explicit store, so callers such as the
/// gradient checker can rebuild the same graph against perturbed
/// parameter values.
pub fn build_sentence_graph<R: Rng>(
    g: &mut Graph,
    store: &ParamStore,
    config: &ModelConfig,
    params: &ModelParams,
    sentence: &AlignedSentence,
    mode: Mode,
    rng: &mut R,
) -> (NodeId, Option<NodeId>) {
    let enc = &config.encoder;

    let char_embs = g.param_rows(store, params.char_emb, &sentence.char_ids);
    let char_stream = char_encode_ablation(g, store, &params.char_encoder, char_embs);
    let radical = params.radical_emb.map(|pid| {
        let rad_embs = g.param_rows(store, pid, &sentence.radical_ids);
        let conv = params
            .radical_conv
            .as_ref()
            .expect("radical conv present when radical stream is");
        radical_encode(g, store, conv, rad_embs)
    });
    let word = params
        .word_emb
        .map(|pid| g.param_rows(store, pid, &sentence.word_ids));

    let repr = compose_repr(g, radical, char_stream, word, enc);
    let repr = g.dropout(repr, config.keep_prob, mode, rng);
    let hidden = bigru_forward(g, store, &params.bigru_fwd, &params.bigru_bwd, repr);
    let hidden = g.dropout(hidden, config.keep_prob, mode, rng);
    let em = emissions(g, store, &params.crf, hidden);

    let loss = sentence.tags.as_ref().map(|tags| {
        let trans = g.param(store, params.crf.transitions);
        crf_nll(g, em, trans, tags)
    });
    (em, loss)
}

/// Tags plus extracted spans for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tags: Vec<String>,
    pub entities: Vec<Entity>,
}

impl TrainedModel {
    /// Assembles a freshly initialized model. The embedding tables
    /// must be final (frozen vocabularies); their matrices move into
    /// the parameter store.
    pub fn new<R: Rng>(
        config: ModelConfig,
        char_table: EmbeddingTable,
        word_table: Option<EmbeddingTable>,
        radical_table: RadicalTable,
        tag_vocab: TagVocab,
        rng: &mut R,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let enc = &config.encoder;
        if char_table.dim() != config.char_emb_dim {
            return Err(PipelineError::Config(format!(
                "character embedding dim {} does not match config char_emb_dim {}",
                char_table.dim(),
                config.char_emb_dim
            )));
        }
        if enc.use_word != word_table.is_some() {
            return Err(PipelineError::Config(
                "word table must be present exactly when use_word is set".into(),
            ));
        }
        if tag_vocab.is_empty() {
            return Err(PipelineError::Config("empty tag vocabulary".into()));
        }

        let mut store = ParamStore::new();
        let (char_vocab, char_matrix) = char_table.into_parts();
        store.register("emb.char", char_matrix);
        let word_vocab = match word_table {
            Some(t) => {
                if t.dim() != config.word_emb_dim {
                    return Err(PipelineError::Config(format!(
                        "word embedding dim {} does not match config word_emb_dim {}",
                        t.dim(),
                        config.word_emb_dim
                    )));
                }
                let (v, m) = t.into_parts();
                store.register("emb.word", m);
                v
            }
            None => Vocab::new(),
        };
        if enc.use_radical {
            let table = EmbeddingTable::random_for_vocab(
                radical_table.vocab().clone(),
                config.radical_emb_dim,
                rng,
            );
            let (_, m) = table.into_parts();
            store.register("emb.radical", m);
        }

        CharEncoderParams::init(&mut store, "char", config.char_emb_dim, enc, rng);
        if enc.use_radical {
            Conv1dParams::init(
                &mut store,
                "rad_conv",
                enc.conv_kernel,
                config.radical_emb_dim,
                enc.radical_filters,
                rng,
            );
        }
        let d = repr_dim(&config);
        GruParams::init(&mut store, "bigru.fwd", d, enc.gru_dim, rng);
        GruParams::init(&mut store, "bigru.bwd", d, enc.gru_dim, rng);
        CrfParams::init(&mut store, "crf", 2 * enc.gru_dim, tag_vocab.len(), rng);

        let params = ModelParams::resolve(&store, &config, tag_vocab.len())?;
        let seed = config.seed;
        Ok(TrainedModel {
            config,
            store,
            params,
            char_vocab,
            word_vocab,
            radical_table,
            tag_vocab,
            meta: TrainMeta {
                seed,
                epochs_run: 0,
                best_dev_f1: None,
            },
        })
    }

    /// Builds the whole forward graph for one sentence: embeddings,
    /// encoders, composed representation, dropout, BiGRU, dropout,
    /// emissions, and (when gold tags are present) the CRF loss.
    pub fn build_graph<R: Rng>(
        &self,
        sentence: &AlignedSentence,
        mode: Mode,
        rng: &mut R,
    ) -> SentenceGraph {
        let mut g = Graph::new();
        let (emissions, loss) = build_sentence_graph(
            &mut g,
            &self.store,
            &self.config,
            &self.params,
            sentence,
            mode,
            rng,
        );
        SentenceGraph {
            graph: g,
            emissions,
            loss,
        }
    }

    /// CRF negative log-likelihood of one gold-tagged sentence.
    pub fn forward_loss<R: Rng>(&self, sentence: &AlignedSentence, mode: Mode, rng: &mut R) -> f64 {
        let sg = self.build_graph(sentence, mode, rng);
        sg.graph
            .scalar(sg.loss.expect("forward_loss needs gold tags"))
    }

    /// Eval-mode forward plus BIO-constrained Viterbi; returns tag ids.
    pub fn predict_aligned(&self, sentence: &AlignedSentence) -> Vec<usize> {
        // Eval mode never samples, so the rng is inert.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sg = self.build_graph(sentence, Mode::Eval, &mut rng);
        let em = sg.graph.value(sg.emissions);
        let trans = self.store.get(self.params.crf.transitions).values();
        let lattice = LatticeScores::new(em, trans, sentence.len(), self.tag_vocab.len());
        let mask = TransitionMask::bio(&self.tag_vocab);
        lattice.viterbi(Some(&mask))
    }

    /// Frozen-vocabulary alignment of a raw sentence: unseen characters
    /// and words map to UNK.
    pub fn align_frozen(
        &self,
        chars: &[char],
        words: &[String],
    ) -> Result<AlignedSentence, PipelineError> {
        if chars.is_empty() {
            return Err(PipelineError::Train("empty sentence".into()));
        }
        let spans = align_words(chars, words)?;
        let word_ids: Vec<usize> = if self.params.word_emb.is_some() {
            spans
                .iter()
                .map(|&s| self.word_vocab.get_or_unk(&words[s]))
                .collect()
        } else {
            vec![UNK_ID; chars.len()]
        };
        let char_ids: Vec<usize> = chars
            .iter()
            .map(|c| self.char_vocab.get_or_unk(&c.to_string()))
            .collect();
        let radical_ids = self.radical_table.radicals_of(chars);
        Ok(AlignedSentence {
            chars: chars.to_vec(),
            char_ids,
            radical_ids,
            word_ids,
            tags: None,
        })
    }

    /// Lexicon for the fallback segmenter: every real word in the word
    /// vocabulary.
    pub fn word_lexicon(&self) -> HashSet<String> {
        self.word_vocab
            .tokens()
            .iter()
            .skip(2) // UNK, PAD
            .cloned()
            .collect()
    }

    /// Tags a raw sentence. Without an explicit segmentation the
    /// built-in max-match segmenter runs over `lexicon`.
    pub fn predict(
        &self,
        chars: &[char],
        segmentation: Option<&[String]>,
        lexicon: &HashSet<String>,
    ) -> Result<Prediction, PipelineError> {
        if chars.is_empty() {
            return Err(PipelineError::Train("empty sentence".into()));
        }
        let words: Vec<String> = match segmentation {
            Some(w) => w.to_vec(),
            None => segment_max_match(chars, lexicon, DEFAULT_MAX_WORD_LEN),
        };
        let aligned = self.align_frozen(chars, &words)?;
        let ids = self.predict_aligned(&aligned);
        let tags: Vec<String> = ids
            .iter()
            .map(|&i| self.tag_vocab.tag(i).to_string())
            .collect();
        let entities = extract_entities(&tags)?;
        Ok(Prediction { tags, entities })
    }
}

/// Predicts every sentence of a dataset, optionally splitting the work
/// over `threads` OS threads. Results are ordered by sentence index,
/// so the outcome does not depend on the thread count.
pub fn predict_dataset(
    model: &TrainedModel,
    data: &Dataset,
    threads: usize,
) -> Result<Vec<Vec<String>>, PipelineError> {
    let n = data.sentences.len();
    let aligned: Vec<AlignedSentence> = data
        .sentences
        .iter()
        .zip(&data.segmentations)
        .map(|(s, words)| model.align_frozen(&s.chars, words))
        .collect::<Result<_, _>>()?;

    let decode = |a: &AlignedSentence| -> Vec<String> {
        model
            .predict_aligned(a)
            .into_iter()
            .map(|i| model.tag_vocab.tag(i).to_string())
            .collect()
    };

    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return Ok(aligned.iter().map(decode).collect());
    }
    let chunk = n.div_ceil(threads);
    let mut results: Vec<Vec<Vec<String>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = aligned
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(decode).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            results.push(h.join().expect("prediction thread panicked"));
        }
    });
    Ok(results.into_iter().flatten().collect())
}

/// Entity-level evaluation of a gold-tagged dataset.
pub fn evaluate(
    model: &TrainedModel,
    data: &Dataset,
    threads: usize,
) -> Result<EvalReport, PipelineError> {
    let gold: Vec<Vec<String>> = data
        .sentences
        .iter()
        .map(|s| {
            s.tags
                .clone()
                .ok_or_else(|| PipelineError::Train("evaluation corpus lacks gold tags".into()))
        })
        .collect::<Result<_, _>>()?;
    let predicted = predict_dataset(model, data, threads)?;
    Ok(score_predictions(&gold, &predicted)?)
}

/// Evaluation over pre-aligned sentences, used between training epochs.
pub fn evaluate_aligned(
    model: &TrainedModel,
    aligned: &[AlignedSentence],
) -> Result<EvalReport, PipelineError> {
    let mut gold = Vec::with_capacity(aligned.len());
    let mut predicted = Vec::with_capacity(aligned.len());
    for s in aligned {
        let tags = s
            .tags
            .as_ref()
            .ok_or_else(|| PipelineError::Train("evaluation sentence lacks gold tags".into()))?;
        gold.push(
            tags.iter()
                .map(|&i| model.tag_vocab.tag(i).to_string())
                .collect::<Vec<_>>(),
        );
        predicted.push(
            model
                .predict_aligned(s)
                .into_iter()
                .map(|i| model.tag_vocab.tag(i).to_string())
                .collect::<Vec<_>>(),
        );
    }
    Ok(score_predictions(&gold, &predicted)?)
}

/// Creates a tiny randomly-initialized model, for tests that need a
/// full model without training.
pub fn tiny_model_for_tests(seed: u64) -> TrainedModel {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        char_emb_dim: 7,
        word_emb_dim: 7,
        radical_emb_dim: 7,
        encoder: crate::encoders::EncoderConfig {
            gru_dim: 5,
            convgru_filters: 4,
            radical_filters: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut char_table = EmbeddingTable::random(7, &mut rng);
    let mut word_table = EmbeddingTable::random(7, &mut rng);
    use crate::embeddings::LookupMode;
    for c in ["妈", "江", "钢", "吃", "这"] {
        char_table.lookup_id(c, LookupMode::Grow, &mut rng);
    }
    for w in ["妈妈", "江河", "吃"] {
        word_table.lookup_id(w, LookupMode::Grow, &mut rng);
    }
    let radical_table = RadicalTable::from_pairs([
        ('妈', '女'),
        ('江', '氵'),
        ('钢', '钅'),
        ('吃', '口'),
        ('这', '辶'),
    ]);
    let tag_vocab = TagVocab::build(["O", "B-PER", "I-PER", "B-LOC", "I-LOC"]).unwrap();
    TrainedModel::new(
        config,
        char_table,
        Some(word_table),
        radical_table,
        tag_vocab,
        &mut rng,
    )
    .unwrap()
}
