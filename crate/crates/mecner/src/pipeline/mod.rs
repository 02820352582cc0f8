//! End-to-end training, evaluation, prediction, and model bundles.

mod bundle;
mod check;
mod config;
mod corpus;
mod error;
mod eval;
mod model;
mod train;

pub use bundle::{crc64, load_model, save_model, FORMAT_VERSION};
pub use check::full_model_gradcheck;
pub use config::ModelConfig;
pub use corpus::{
    format_corpus, format_segmentations, load_corpus, load_segmentations, parse_corpus, Dataset,
    Sentence,
};
pub use error::PipelineError;
pub use eval::{extract_entities, score_predictions, token_accuracy, Counts, Entity, EvalReport};
pub use model::{
    build_sentence_graph, evaluate, evaluate_aligned, predict_dataset, repr_dim, ModelParams,
    Prediction, SentenceGraph, TrainMeta, TrainedModel,
};
pub use train::{
    run_experiment, run_experiment_with, summarize_runs, train, ExperimentReport, MetricSummary,
    Resources, DEFAULT_N_RUNS,
};

#[doc(hidden)]
pub use model::tiny_model_for_tests;
