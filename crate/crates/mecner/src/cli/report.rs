//! Report rendering, text and JSON.
//!
//! Percentages print with two decimals in both modes so the two
//! formats always show the same numbers.

use serde::Serialize;

use crate::pipeline::{EvalReport, ExperimentReport};

fn pct(v: f64) -> f64 {
    (v * 10000.0).round() / 100.0
}

#[derive(Serialize)]
struct JsonMetrics {
    precision: f64,
    recall: f64,
    f1: f64,
}

impl JsonMetrics {
    fn from_ratios(p: f64, r: f64, f1: f64) -> Self {
        JsonMetrics {
            precision: pct(p),
            recall: pct(r),
            f1: pct(f1),
        }
    }
}

#[derive(Serialize)]
struct JsonEval {
    micro: JsonMetrics,
    counts: crate::pipeline::Counts,
    per_type: Vec<JsonTypeRow>,
}

#[derive(Serialize)]
struct JsonTypeRow {
    label: String,
    precision: f64,
    recall: f64,
    f1: f64,
    gold: usize,
    predicted: usize,
    correct: usize,
}

fn json_eval(report: &EvalReport) -> JsonEval {
    JsonEval {
        micro: JsonMetrics::from_ratios(report.precision, report.recall, report.f1),
        counts: report.counts,
        per_type: report
            .per_type
            .iter()
            .map(|(label, c)| JsonTypeRow {
                label: label.clone(),
                precision: pct(c.precision()),
                recall: pct(c.recall()),
                f1: pct(c.f1()),
                gold: c.gold,
                predicted: c.predicted,
                correct: c.correct,
            })
            .collect(),
    }
}

pub fn eval_report_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(&json_eval(report)).expect("report serializes")
}

pub fn eval_report_text(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7}\n",
        "", "Pr", "Re", "F1", "gold", "pred", "corr"
    ));
    out.push_str(&format!(
        "{:<12} {:>8.2} {:>8.2} {:>8.2} {:>7} {:>7} {:>7}\n",
        "micro",
        pct(report.precision),
        pct(report.recall),
        pct(report.f1),
        report.counts.gold,
        report.counts.predicted,
        report.counts.correct
    ));
    for (label, c) in &report.per_type {
        out.push_str(&format!(
            "{:<12} {:>8.2} {:>8.2} {:>8.2} {:>7} {:>7} {:>7}\n",
            label,
            pct(c.precision()),
            pct(c.recall()),
            pct(c.f1()),
            c.gold,
            c.predicted,
            c.correct
        ));
    }
    out
}

#[derive(Serialize)]
struct JsonExperiment {
    runs: Vec<JsonEval>,
    mean: JsonMetrics,
    stddev: JsonMetrics,
}

pub fn experiment_report_json(report: &ExperimentReport) -> String {
    let payload = JsonExperiment {
        runs: report.runs.iter().map(json_eval).collect(),
        mean: JsonMetrics::from_ratios(report.mean.precision, report.mean.recall, report.mean.f1),
        stddev: JsonMetrics::from_ratios(
            report.stddev.precision,
            report.stddev.recall,
            report.stddev.f1,
        ),
    };
    serde_json::to_string_pretty(&payload).expect("report serializes")
}

pub fn experiment_report_text(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for (i, run) in report.runs.iter().enumerate() {
        out.push_str(&format!("run {i}\n"));
        out.push_str(&eval_report_text(run));
    }
    out.push_str(&format!(
        "mean      Pr {:.2}  Re {:.2}  F1 {:.2}\n",
        pct(report.mean.precision),
        pct(report.mean.recall),
        pct(report.mean.f1)
    ));
    out.push_str(&format!(
        "stddev    Pr {:.2}  Re {:.2}  F1 {:.2}\n",
        pct(report.stddev.precision),
        pct(report.stddev.recall),
        pct(report.stddev.f1)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Counts;

    fn sample() -> EvalReport {
        EvalReport::from_counts(
            Counts {
                gold: 4,
                predicted: 3,
                correct: 2,
            },
            vec![(
                "PER".to_string(),
                Counts {
                    gold: 4,
                    predicted: 3,
                    correct: 2,
                },
            )],
        )
    }

    #[test]
    fn text_and_json_agree_at_printed_precision() {
        let report = sample();
        let text = eval_report_text(&report);
        let json: serde_json::Value = serde_json::from_str(&eval_report_json(&report)).unwrap();
        let micro = &json["micro"];
        for (key, value) in [
            ("precision", micro["precision"].as_f64().unwrap()),
            ("recall", micro["recall"].as_f64().unwrap()),
            ("f1", micro["f1"].as_f64().unwrap()),
        ] {
            let rendered = format!("{value:.2}");
            assert!(
                text.contains(&rendered),
                "{key} = {rendered} missing from text:\n{text}"
            );
        }
    }

    #[test]
    fn json_round_trips_through_a_generic_parser() {
        let report = sample();
        let parsed: serde_json::Value =
            serde_json::from_str(&eval_report_json(&report)).unwrap();
        assert_eq!(parsed["counts"]["gold"], 4);
        assert_eq!(parsed["per_type"][0]["label"], "PER");
    }

    #[test]
    fn percent_rounding_keeps_two_decimals() {
        assert_eq!(pct(0.689312), 68.93);
        assert_eq!(pct(1.0), 100.0);
        assert_eq!(pct(0.0), 0.0);
        assert_eq!(pct(2.0 / 3.0), 66.67);
    }
}
