//! Full-model gradient check at shrunk dimensions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::{EmbeddingTable, LookupMode, RadicalTable, TagVocab};
use crate::encoders::EncoderConfig;
use crate::nd::{grad_check, CoordSampling, GradCheckReport, Mode};

use super::config::ModelConfig;
use super::model::{build_sentence_graph, TrainedModel};

/// Builds the whole model at shrunk dimensions (gru 5, embeddings 7,
/// filters 4, all multiplied by `dims_scale`), runs one 3-character
/// training-mode forward over 3 tags, and checks every parameter
/// gradient against central finite differences. Embedding matrices
/// are probed on sampled coordinates; every other parameter is
/// checked in full.
pub fn full_model_gradcheck(dims_scale: usize, seed: u64) -> GradCheckReport {
    let scale = dims_scale.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        char_emb_dim: 7 * scale,
        word_emb_dim: 7 * scale,
        radical_emb_dim: 7 * scale,
        keep_prob: 0.8,
        encoder: EncoderConfig {
            gru_dim: 5 * scale,
            convgru_filters: 4 * scale,
            radical_filters: 4 * scale,
            ..EncoderConfig::default()
        },
        ..ModelConfig::default()
    };

    let mut char_table = EmbeddingTable::random(config.char_emb_dim, &mut rng);
    let mut word_table = EmbeddingTable::random(config.word_emb_dim, &mut rng);
    for c in ["妹", "吃", "江", "这"] {
        char_table.lookup_id(c, LookupMode::Grow, &mut rng);
    }
    for w in ["妹妹", "吃", "江"] {
        word_table.lookup_id(w, LookupMode::Grow, &mut rng);
    }
    let radical_table = RadicalTable::from_pairs([
        ('妹', '女'),
        ('吃', '口'),
        ('江', '氵'),
        ('这', '辶'),
    ]);
    let tag_vocab = TagVocab::build(["O", "B-PER", "I-PER"]).unwrap();

    let model = TrainedModel::new(
        config,
        char_table,
        Some(word_table),
        radical_table,
        tag_vocab,
        &mut rng,
    )
    .expect("gradcheck model construction");

    let chars: Vec<char> = "妹妹吃".chars().collect();
    let words = vec!["妹妹".to_string(), "吃".to_string()];
    let mut sentence = model.align_frozen(&chars, &words).unwrap();
    sentence.tags = Some(vec![1, 2, 0]);

    let config = model.config.clone();
    let params = model.params.clone();
    let mut store = model.store.clone();
    grad_check(
        &mut store,
        |g, st| {
            // Reseed per evaluation so dropout masks are identical
            // across the perturbed forward passes.
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9);
            let (_, loss) = build_sentence_graph(
                g,
                st,
                &config,
                &params,
                &sentence,
                Mode::Train,
                &mut dropout_rng,
            );
            loss.expect("loss node present")
        },
        1e-5,
        |name: &str, _numel: usize| {
            if name.starts_with("emb.") {
                CoordSampling::AtMost(48)
            } else {
                CoordSampling::All
            }
        },
        seed,
    )
}
