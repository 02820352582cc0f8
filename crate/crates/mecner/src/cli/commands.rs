//! The five subcommands.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::{segment_max_match, EmbeddingTable, RadicalTable, DEFAULT_MAX_WORD_LEN};
use crate::nd::GradCheckReport;
use crate::pipeline::{
    evaluate, full_model_gradcheck, load_corpus, load_model, load_segmentations, save_model,
    score_predictions, summarize_runs, train, Dataset, Resources, Sentence, TrainedModel,
};

use super::config::{CliConfig, OutputFormat};
use super::report;
use super::selftest;
use super::{CliError, EvalArgs, GradcheckArgs, PredictArgs, TrainArgs};

fn eval_threads() -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("MECNER_THREADS") {
        Ok(v) => v.parse::<usize>().map(|n| n.clamp(1, available)).unwrap_or(1),
        Err(_) => available,
    }
}

fn word_lexicon_of(table: &Option<EmbeddingTable>) -> HashSet<String> {
    match table {
        Some(t) => t.vocab().tokens().iter().skip(2).cloned().collect(),
        None => HashSet::new(),
    }
}

/// Attaches segmentations to sentences: from a file when given, from
/// the max-match segmenter over `lexicon` otherwise.
fn build_dataset(
    sentences: Vec<Sentence>,
    seg_file: Option<&Path>,
    lexicon: &HashSet<String>,
) -> Result<Dataset, CliError> {
    let segmentations = match seg_file {
        Some(path) => {
            let segs = load_segmentations(path)?;
            if segs.len() != sentences.len() {
                return Err(CliError::Data(format!(
                    "{}: {} segmentation lines for {} sentences",
                    path.display(),
                    segs.len(),
                    sentences.len()
                )));
            }
            segs
        }
        None => sentences
            .iter()
            .map(|s| segment_max_match(&s.chars, lexicon, DEFAULT_MAX_WORD_LEN))
            .collect(),
    };
    for (i, (s, words)) in sentences.iter().zip(&segmentations).enumerate() {
        crate::embeddings::align_words(&s.chars, words).map_err(|e| {
            CliError::Data(format!("segmentation mismatch at sentence {}: {e}", i + 1))
        })?;
    }
    Ok(Dataset::new(sentences, segmentations))
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut config = CliConfig::load(&args.config, &args.set)?;
    if let Some(seed) = args.seed {
        config.model.seed = seed;
    }
    if let Some(runs) = args.runs {
        config.n_runs = runs;
    }
    if let Some(format) = args.format {
        config.format = Some(format);
    }
    if args.out.is_some() {
        config.model_out = args.out.clone();
    }
    let n_runs = config.n_runs.max(1);
    let format = config.format.unwrap_or(OutputFormat::Text);

    let train_path = config.require("train_corpus", &config.train_corpus)?.to_path_buf();
    if config.model.encoder.use_radical && config.radical_table.is_none() {
        return Err(CliError::Config(
            "missing required config key \"radical_table\" (set model.encoder.use_radical=false to train without radicals)"
                .into(),
        ));
    }
    let out = config.require("model_out", &config.model_out)?.to_path_buf();
    config.check_paths_exist()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.model.seed);
    let pretrained_char = match &config.char_embeddings {
        Some(p) => Some(
            EmbeddingTable::load_pretrained(p, config.model.char_emb_dim, &mut rng)
                .map_err(|e| CliError::Data(e.to_string()))?,
        ),
        None => None,
    };
    let pretrained_word = match &config.word_embeddings {
        Some(p) => Some(
            EmbeddingTable::load_pretrained(p, config.model.word_emb_dim, &mut rng)
                .map_err(|e| CliError::Data(e.to_string()))?,
        ),
        None => None,
    };
    let radical_table = match &config.radical_table {
        Some(p) => RadicalTable::load(p).map_err(|e| CliError::Data(e.to_string()))?,
        None => RadicalTable::from_pairs([]),
    };
    let lexicon = word_lexicon_of(&pretrained_word);

    let train_data = build_dataset(
        load_corpus(&train_path)?,
        config.train_segmentation.as_deref(),
        &lexicon,
    )?;
    let dev_data = match &config.dev_corpus {
        Some(p) => Some(build_dataset(
            load_corpus(p)?,
            config.dev_segmentation.as_deref(),
            &lexicon,
        )?),
        None => None,
    };
    let test_data = match &config.test_corpus {
        Some(p) => Some(build_dataset(
            load_corpus(p)?,
            config.test_segmentation.as_deref(),
            &lexicon,
        )?),
        None => None,
    };

    let resources = Resources {
        pretrained_char,
        pretrained_word,
        radical_table,
    };
    let eval_data = test_data.as_ref().or(dev_data.as_ref()).unwrap_or(&train_data);
    let threads = eval_threads();

    let mut runs = Vec::with_capacity(n_runs);
    for i in 0..n_runs {
        let mut cfg = config.model.clone();
        cfg.seed = config.model.seed + i as u64;
        let model: TrainedModel =
            train(&cfg, &train_data, dev_data.as_ref(), resources.clone())?;
        let bundle_dir = if n_runs == 1 {
            out.clone()
        } else {
            suffixed(&out, &format!(".run{i}"))
        };
        save_model(&model, &bundle_dir)?;
        eprintln!(
            "run {i}: seed {} trained for {} epochs, bundle at {}",
            cfg.seed,
            model.meta.epochs_run,
            bundle_dir.display()
        );
        runs.push(evaluate(&model, eval_data, threads)?);
    }

    let (stdout_text, metrics_json) = if n_runs == 1 {
        (
            match format {
                OutputFormat::Text => report::eval_report_text(&runs[0]),
                OutputFormat::Json => report::eval_report_json(&runs[0]),
            },
            report::eval_report_json(&runs[0]),
        )
    } else {
        let summary = summarize_runs(runs);
        (
            match format {
                OutputFormat::Text => report::experiment_report_text(&summary),
                OutputFormat::Json => report::experiment_report_json(&summary),
            },
            report::experiment_report_json(&summary),
        )
    };
    let metrics_path = suffixed(&out, ".metrics.json");
    std::fs::write(&metrics_path, metrics_json)
        .map_err(|e| CliError::Data(format!("{}: {e}", metrics_path.display())))?;
    print!("{stdout_text}");
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let sentences = load_corpus(&args.corpus)?;
    let lexicon = model.word_lexicon();
    let data = build_dataset(sentences, args.segmentation.as_deref(), &lexicon)?;

    let report_data = if args.oracle {
        // Score gold against itself: a plumbing sanity check that must
        // print 100/100/100.
        let gold: Vec<Vec<String>> = data
            .sentences
            .iter()
            .map(|s| {
                s.tags
                    .clone()
                    .ok_or_else(|| CliError::Data("corpus lacks gold tags".into()))
            })
            .collect::<Result<_, _>>()?;
        score_predictions(&gold, &gold).map_err(|e| CliError::Data(e.to_string()))?
    } else {
        evaluate(&model, &data, eval_threads())?
    };

    match args.format {
        OutputFormat::Text => print!("{}", report::eval_report_text(&report_data)),
        OutputFormat::Json => println!("{}", report::eval_report_json(&report_data)),
    }
    Ok(())
}

fn predict_line(
    model: &TrainedModel,
    line: &str,
    segmentation: Option<&[String]>,
    lexicon: &HashSet<String>,
    format: OutputFormat,
) -> Result<String, CliError> {
    if line.is_empty() {
        return Ok(String::new());
    }
    let chars: Vec<char> = line.chars().collect();
    let prediction = model.predict(&chars, segmentation, lexicon)?;
    Ok(match format {
        OutputFormat::Text => chars
            .iter()
            .zip(&prediction.tags)
            .map(|(c, t)| format!("{c} {t}"))
            .collect::<Vec<_>>()
            .join("\t"),
        OutputFormat::Json => {
            let spans: Vec<serde_json::Value> = prediction
                .entities
                .iter()
                .map(|e| {
                    serde_json::json!({
                        "start": e.start,
                        "end": e.end,
                        "label": e.label,
                        "text": chars[e.start..e.end].iter().collect::<String>(),
                    })
                })
                .collect();
            serde_json::json!({ "tags": prediction.tags, "spans": spans }).to_string()
        }
    })
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let lexicon = model.word_lexicon();

    let lines: Vec<String> = match &args.input {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .lines()
            .map(String::from)
            .collect(),
        None => {
            let stdin = std::io::stdin();
            let mut lines = Vec::new();
            for line in stdin.lock().lines() {
                lines.push(line.map_err(|e| CliError::Data(format!("stdin: {e}")))?);
            }
            lines
        }
    };
    let segmentations: Option<Vec<Vec<String>>> = match &args.segmentation {
        Some(p) => {
            let segs = load_segmentations(p)?;
            if segs.len() != lines.len() {
                return Err(CliError::Data(format!(
                    "{}: {} segmentation lines for {} input lines",
                    p.display(),
                    segs.len(),
                    lines.len()
                )));
            }
            Some(segs)
        }
        None => None,
    };

    let stdout = std::io::stdout();
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        ),
        None => Box::new(stdout.lock()),
    };
    for (i, line) in lines.iter().enumerate() {
        let seg = segmentations.as_ref().map(|s| s[i].as_slice());
        let rendered = predict_line(&model, line, seg, &lexicon, args.format)?;
        writeln!(out, "{rendered}").map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let report: GradCheckReport = full_model_gradcheck(args.scale, args.seed);
    println!(
        "checked {} coordinates, max rel err {:.3e} (worst: {}[{}])",
        report.coords_checked, report.max_rel_err, report.worst_param, report.worst_coord
    );
    if report.max_rel_err < 1e-4 {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradient check failed: rel err {:.3e} at {}[{}]",
            report.max_rel_err, report.worst_param, report.worst_coord
        )))
    }
}

pub fn cmd_selftest() -> Result<(), CliError> {
    let results = selftest::run_all();
    let mut failed = 0;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:<24} {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Check(format!("{failed} suite(s) failed")))
    }
}
