//! Writes a generated toy dataset (corpora, segmentations, radical
//! table, and a ready-to-run config) into a directory, so the CLI can
//! be tried without any external data.
//!
//! Usage: cargo run --example make_toy_data -- <output-dir> [seed]

use std::path::Path;

use mecner::pipeline::{format_corpus, format_segmentations};
use mecner::synthetic;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "toy_data".to_string());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let dir = Path::new(&dir);
    std::fs::create_dir_all(dir).expect("create output directory");

    let data = synthetic::generate(200, 60, 60, seed);
    let write = |name: &str, content: String| {
        std::fs::write(dir.join(name), content).expect("write file");
    };
    write("train.tsv", format_corpus(&data.train.sentences));
    write("train.seg", format_segmentations(&data.train.segmentations));
    write("dev.tsv", format_corpus(&data.dev.sentences));
    write("dev.seg", format_segmentations(&data.dev.segmentations));
    write("test.tsv", format_corpus(&data.test.sentences));
    write("test.seg", format_segmentations(&data.test.segmentations));

    let mut radicals = String::new();
    for (c, r) in data.radical_table.sorted_pairs() {
        radicals.push(c);
        radicals.push('\t');
        radicals.push(r);
        radicals.push('\n');
    }
    write("radicals.tsv", radicals);

    let config = serde_json::json!({
        "train_corpus": dir.join("train.tsv"),
        "train_segmentation": dir.join("train.seg"),
        "dev_corpus": dir.join("dev.tsv"),
        "dev_segmentation": dir.join("dev.seg"),
        "test_corpus": dir.join("test.tsv"),
        "test_segmentation": dir.join("test.seg"),
        "radical_table": dir.join("radicals.tsv"),
        "model_out": dir.join("bundle"),
        "model": {
            "char_emb_dim": 24, "word_emb_dim": 24, "radical_emb_dim": 24,
            "encoder": {"gru_dim": 20, "convgru_filters": 20, "radical_filters": 12},
            "max_epochs": 15, "patience": 5, "seed": 3
        }
    });
    write("config.json", serde_json::to_string_pretty(&config).unwrap());
    println!("toy dataset written to {}", dir.display());
    println!("train with: mecner train --config {}", dir.join("config.json").display());
}
