//! Per-sentence Adam training with dev-F1 early stopping, plus the
//! multi-seed experiment protocol.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{
    AlignedSentence, EmbeddingTable, LookupMode, RadicalTable, TagVocab,
};
use crate::nd::{AdamState, Mode};

use super::config::ModelConfig;
use super::corpus::Dataset;
use super::error::PipelineError;
use super::eval::EvalReport;
use super::model::{evaluate_aligned, TrainedModel};

/// External inputs to training. The tables are optional; absent ones
/// are replaced by randomly initialized tables that grow over the
/// training corpus.
#[derive(Debug, Clone)]
pub struct Resources {
    pub pretrained_char: Option<EmbeddingTable>,
    pub pretrained_word: Option<EmbeddingTable>,
    pub radical_table: RadicalTable,
}

fn tag_ids(
    tags: &[String],
    vocab: &TagVocab,
    frozen: bool,
) -> Result<Vec<usize>, PipelineError> {
    tags.iter()
        .map(|t| {
            vocab.id(t).ok_or_else(|| {
                if frozen {
                    PipelineError::Train(format!(
                        "tag {t:?} does not occur in the training corpus"
                    ))
                } else {
                    PipelineError::Train(format!("tag {t:?} missing from vocabulary"))
                }
            })
        })
        .collect()
}

fn align_dataset<R: rand::Rng>(
    data: &Dataset,
    char_table: &mut EmbeddingTable,
    mut word_table: Option<&mut EmbeddingTable>,
    radical_table: &RadicalTable,
    tag_vocab: &TagVocab,
    mode: LookupMode,
    rng: &mut R,
) -> Result<Vec<AlignedSentence>, PipelineError> {
    let frozen = mode == LookupMode::Frozen;
    data.sentences
        .iter()
        .zip(&data.segmentations)
        .map(|(s, words)| {
            let tags = match &s.tags {
                Some(t) => Some(tag_ids(t, tag_vocab, frozen)?),
                None => None,
            };
            Ok(AlignedSentence::build(
                &s.chars,
                words,
                char_table,
                word_table.as_deref_mut(),
                radical_table,
                mode,
                rng,
                tags,
            )?)
        })
        .collect()
}

/// Trains one model: grows vocabularies over the training corpus,
/// runs shuffled per-sentence Adam epochs, evaluates dev entity F1
/// after each epoch when a dev set is given, keeps the best snapshot,
/// and stops once `patience` epochs pass without improvement.
/// Deterministic for a fixed config (including the seed).
pub fn train(
    config: &ModelConfig,
    train_data: &Dataset,
    dev_data: Option<&Dataset>,
    resources: Resources,
) -> Result<TrainedModel, PipelineError> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(PipelineError::Train("empty training corpus".into()));
    }
    let enc = &config.encoder;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut char_table = resources
        .pretrained_char
        .unwrap_or_else(|| EmbeddingTable::random(config.char_emb_dim, &mut rng));
    let mut word_table = if enc.use_word {
        Some(
            resources
                .pretrained_word
                .unwrap_or_else(|| EmbeddingTable::random(config.word_emb_dim, &mut rng)),
        )
    } else {
        None
    };

    let tag_vocab = TagVocab::build(
        train_data
            .sentences
            .iter()
            .flat_map(|s| s.tags.as_deref().unwrap_or_default())
            .map(|t| t.as_str()),
    )?;
    if tag_vocab.is_empty() {
        return Err(PipelineError::Train(
            "training corpus has no gold tags".into(),
        ));
    }

    let train_aligned = align_dataset(
        train_data,
        &mut char_table,
        word_table.as_mut(),
        &resources.radical_table,
        &tag_vocab,
        LookupMode::Grow,
        &mut rng,
    )?;
    let dev_aligned = match dev_data {
        Some(dev) => Some(align_dataset(
            dev,
            &mut char_table,
            word_table.as_mut(),
            &resources.radical_table,
            &tag_vocab,
            LookupMode::Frozen,
            &mut rng,
        )?),
        None => None,
    };

    char_table.freeze();
    if let Some(t) = &mut word_table {
        t.freeze();
    }
    let mut model = TrainedModel::new(
        config.clone(),
        char_table,
        word_table,
        resources.radical_table,
        tag_vocab,
        &mut rng,
    )?;

    let mut adam = AdamState::new(config.optimizer, &model.store);
    let mut order: Vec<usize> = (0..train_aligned.len()).collect();
    let mut best: Option<(f64, crate::nd::ParamStore)> = None;
    let mut epochs_without_improvement = 0usize;
    let mut epochs_run = 0usize;

    for _epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            model.store.zero_grads();
            let mut sg = model.build_graph(&train_aligned[i], Mode::Train, &mut rng);
            let loss = sg.loss.expect("training sentence has gold tags");
            sg.graph.backward(loss, &mut model.store);
            adam.step(&mut model.store);
        }
        epochs_run += 1;

        if let Some(dev) = &dev_aligned {
            let report = evaluate_aligned(&model, dev)?;
            let improved = match &best {
                None => true,
                Some((f1, _)) => report.f1 > *f1,
            };
            if improved {
                best = Some((report.f1, model.store.clone()));
                epochs_without_improvement = 0;
            } else {
                epochs_without_improvement += 1;
            }
            if epochs_without_improvement >= config.patience {
                break;
            }
        }
    }

    if let Some((f1, snapshot)) = best {
        model.store = snapshot;
        model.meta.best_dev_f1 = Some(f1);
    }
    model.meta.seed = config.seed;
    model.meta.epochs_run = epochs_run;
    Ok(model)
}

/// Per-metric mean or spread over experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub runs: Vec<EvalReport>,
    pub mean: MetricSummary,
    pub stddev: MetricSummary,
}

/// Mean and sample standard deviation (n-1 denominator; 0 for a single
/// run) over per-run reports.
pub fn summarize_runs(runs: Vec<EvalReport>) -> ExperimentReport {
    assert!(!runs.is_empty(), "summarize_runs needs at least one run");
    let n = runs.len() as f64;
    let mean_of = |f: &dyn Fn(&EvalReport) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let mean = MetricSummary {
        precision: mean_of(&|r| r.precision),
        recall: mean_of(&|r| r.recall),
        f1: mean_of(&|r| r.f1),
    };
    let sd_of = |f: &dyn Fn(&EvalReport) -> f64, m: f64| {
        if runs.len() < 2 {
            0.0
        } else {
            (runs.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        }
    };
    let stddev = MetricSummary {
        precision: sd_of(&|r| r.precision, mean.precision),
        recall: sd_of(&|r| r.recall, mean.recall),
        f1: sd_of(&|r| r.f1, mean.f1),
    };
    ExperimentReport {
        runs,
        mean,
        stddev,
    }
}

/// Runs `n_runs` experiments with seeds `base_seed + 0 ..
/// base_seed + n_runs - 1`, delegating each run to `run_one`.
pub fn run_experiment_with<F>(
    base_seed: u64,
    n_runs: usize,
    mut run_one: F,
) -> Result<ExperimentReport, PipelineError>
where
    F: FnMut(u64) -> Result<EvalReport, PipelineError>,
{
    if n_runs == 0 {
        return Err(PipelineError::Config("n_runs must be >= 1".into()));
    }
    let mut runs = Vec::with_capacity(n_runs);
    for i in 0..n_runs {
        runs.push(run_one(base_seed + i as u64)?);
    }
    Ok(summarize_runs(runs))
}

/// Number of runs in the standard experiment protocol.
pub const DEFAULT_N_RUNS: usize = 5;

/// Trains `n_runs` models and reports mean and sample stddev of the
/// evaluation metrics on `eval_data`. The standard protocol is
/// [`DEFAULT_N_RUNS`] runs.
pub fn run_experiment(
    config: &ModelConfig,
    train_data: &Dataset,
    dev_data: Option<&Dataset>,
    eval_data: &Dataset,
    resources: &Resources,
    n_runs: usize,
) -> Result<ExperimentReport, PipelineError> {
    run_experiment_with(config.seed, n_runs, |seed| {
        let mut cfg = config.clone();
        cfg.seed = seed;
        let model = train(&cfg, train_data, dev_data, resources.clone())?;
        super::model::evaluate(&model, eval_data, 1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::eval::Counts;

    fn report(p: f64, r: f64) -> EvalReport {
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        EvalReport {
            precision: p,
            recall: r,
            f1,
            counts: Counts {
                gold: 0,
                predicted: 0,
                correct: 0,
            },
            per_type: vec![],
        }
    }

    #[test]
    fn single_run_summary_has_zero_stddev() {
        let summary = summarize_runs(vec![report(0.5, 0.25)]);
        assert_eq!(summary.mean.precision, 0.5);
        assert_eq!(summary.stddev.precision, 0.0);
        assert_eq!(summary.stddev.f1, 0.0);
    }

    #[test]
    fn identical_runs_have_exactly_zero_stddev() {
        let runs: Vec<EvalReport> = (0..5).map(|_| report(0.8, 0.6)).collect();
        let summary = summarize_runs(runs);
        assert_eq!(summary.stddev.precision, 0.0);
        assert_eq!(summary.stddev.recall, 0.0);
        assert_eq!(summary.stddev.f1, 0.0);
        assert_eq!(summary.mean.precision, 0.8);
    }

    #[test]
    fn injected_runs_receive_sequential_seeds() {
        let mut seeds = Vec::new();
        let summary = run_experiment_with(7, 3, |seed| {
            seeds.push(seed);
            Ok(report(1.0, 1.0))
        })
        .unwrap();
        assert_eq!(seeds, vec![7, 8, 9]);
        assert_eq!(summary.runs.len(), 3);
    }

    #[test]
    fn zero_runs_is_a_config_error() {
        let err = run_experiment_with(0, 0, |_| Ok(report(1.0, 1.0))).unwrap_err();
        assert!(matches!(err, PipelineError::Config(_)));
    }

    #[test]
    fn known_spread_matches_sample_stddev() {
        let runs = vec![report(0.2, 0.2), report(0.4, 0.4), report(0.6, 0.6)];
        let summary = summarize_runs(runs);
        assert!((summary.mean.precision - 0.4).abs() < 1e-12);
        assert!((summary.stddev.precision - 0.2).abs() < 1e-12);
    }
}
