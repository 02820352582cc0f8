//! Self-contained diagnostic suites: every fixture is generated, no
//! external files are touched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::{align_words, segment_max_match};
use crate::encoders::{conv_gru_encode, ConvGruParams, EncoderConfig};
use crate::nd::{log_sum_exp_kernel, Graph, ParamStore};
use crate::pipeline::{
    evaluate, predict_dataset, token_accuracy, train, ModelConfig, Resources,
};
use crate::synthetic;
use crate::tagger::LatticeScores;

pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn run_suite(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> SuiteResult {
    match f() {
        Ok(detail) => SuiteResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => SuiteResult {
            name,
            passed: false,
            detail,
        },
    }
}

/// Exhaustive path scoring, written directly from the score
/// definition so it stays independent of the lattice code.
fn enumerated_scores(
    emissions: &[f64],
    transitions: &[f64],
    l: usize,
    t: usize,
) -> Vec<(Vec<usize>, f64)> {
    let t2 = t + 2;
    let (start, stop) = (t, t + 1);
    let mut all = Vec::new();
    for mut code in 0..(t as u64).pow(l as u32) {
        let mut path = Vec::with_capacity(l);
        for _ in 0..l {
            path.push((code % t as u64) as usize);
            code /= t as u64;
        }
        let mut s = transitions[start * t2 + path[0]];
        for pos in 0..l {
            s += emissions[pos * t + path[pos]];
            if pos > 0 {
                s += transitions[path[pos - 1] * t2 + path[pos]];
            }
        }
        s += transitions[path[l - 1] * t2 + stop];
        all.push((path, s));
    }
    all
}

fn crf_enumeration_suite() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut checked = 0;
    for _ in 0..60 {
        let l = rng.gen_range(1..=5);
        let t = rng.gen_range(1..=4);
        let emissions: Vec<f64> = (0..l * t).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let transitions: Vec<f64> = (0..(t + 2) * (t + 2))
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let lattice = LatticeScores::new(&emissions, &transitions, l, t);
        let oracle = enumerated_scores(&emissions, &transitions, l, t);

        let scores: Vec<f64> = oracle.iter().map(|(_, s)| *s).collect();
        let expected_log_z = log_sum_exp_kernel(&scores);
        let log_z = lattice.log_partition();
        if (log_z - expected_log_z).abs() / expected_log_z.abs().max(1.0) > 1e-10 {
            return Err(format!("logZ {log_z} != enumeration {expected_log_z}"));
        }

        let best = oracle
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if lattice.viterbi(None) != best.0 {
            return Err(format!("viterbi disagrees with enumeration argmax on l={l} t={t}"));
        }

        let marginals = lattice.marginals();
        for pos in 0..l {
            let mut expected = vec![0.0; t];
            for (path, s) in &oracle {
                expected[path[pos]] += (s - log_z).exp();
            }
            for j in 0..t {
                if (marginals[pos * t + j] - expected[j]).abs() > 1e-10 {
                    return Err(format!("marginal mismatch at ({pos}, {j})"));
                }
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} random instances match enumeration"))
}

fn conv_gru_suite() -> Result<String, String> {
    let cfg = EncoderConfig {
        gru_dim: 6,
        convgru_filters: 5,
        ..EncoderConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF);
    let mut store = ParamStore::new();
    let p = ConvGruParams::init(&mut store, "char", 4, &cfg, &mut rng);
    for l in 1..=8 {
        let mut g = Graph::new();
        let values: Vec<f64> = (0..l * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = g.constant(&[l, 4], values);
        let trace = conv_gru_encode(&mut g, &store, &p, c);
        if g.shape(trace.z) != [l, 11] {
            return Err(format!("z shape {:?} at l={l}", g.shape(trace.z)));
        }
        for t in 0..l {
            let xv = &g.value(trace.x)[t * 6..(t + 1) * 6];
            let yv = &g.value(trace.y)[t * 5..(t + 1) * 5];
            let zv = &g.value(trace.z)[t * 11..(t + 1) * 11];
            if &zv[..6] != xv || &zv[6..] != yv {
                return Err(format!("z is not concat(x, y) at position {t}"));
            }
        }
    }

    // Window locality of the convolution over x.
    let l = 7;
    let base: Vec<f64> = (0..l * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let conv_of = |values: Vec<f64>, store: &ParamStore| {
        let mut g = Graph::new();
        let x = g.constant(&[l, 6], values);
        let k = g.param(store, p.conv.kernels);
        let b = g.param(store, p.conv.bias);
        let y = g.conv1d_same(x, k, b);
        g.value(y).to_vec()
    };
    let y0 = conv_of(base.clone(), &store);
    for pos in 0..l {
        let mut perturbed = base.clone();
        for d in 0..6 {
            perturbed[pos * 6 + d] += 0.5;
        }
        let y1 = conv_of(perturbed, &store);
        for t in 0..l {
            let same = y0[t * 5..(t + 1) * 5] == y1[t * 5..(t + 1) * 5];
            if t.abs_diff(pos) <= 1 && same {
                return Err(format!("y_{t} ignored a perturbation at {pos}"));
            }
            if t.abs_diff(pos) > 1 && !same {
                return Err(format!("y_{t} leaked a perturbation at {pos}"));
            }
        }
    }
    Ok("shapes, concat consistency, and window locality hold for l in 1..=8".into())
}

fn alignment_suite() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11C);
    let alphabet: Vec<char> = "abcdefgh".chars().collect();
    for round in 0..500 {
        let len = rng.gen_range(1..=12);
        let chars: Vec<char> = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        let mut lexicon = std::collections::HashSet::new();
        for _ in 0..rng.gen_range(0..6) {
            let wl = rng.gen_range(2..=4).min(len);
            let start = rng.gen_range(0..=len - wl);
            lexicon.insert(chars[start..start + wl].iter().collect::<String>());
        }
        let words = segment_max_match(&chars, &lexicon, 4);
        let joined: String = words.concat();
        let input: String = chars.iter().collect();
        if joined != input {
            return Err(format!("round {round}: segmentation does not concatenate back"));
        }
        let spans = align_words(&chars, &words)
            .map_err(|e| format!("round {round}: alignment failed: {e}"))?;
        // Piecewise constant and one run per word.
        let mut runs = 1;
        for w in spans.windows(2) {
            if w[1] != w[0] {
                if w[1] != w[0] + 1 {
                    return Err(format!("round {round}: non-contiguous span ids"));
                }
                runs += 1;
            }
        }
        if runs != words.len() {
            return Err(format!(
                "round {round}: {runs} runs for {} words",
                words.len()
            ));
        }
    }
    Ok("500 random segmentation round-trips hold".into())
}

fn overfit_suite() -> Result<String, String> {
    let (data, radicals) = synthetic::overfit_corpus(40);
    let mut config = ModelConfig {
        char_emb_dim: 24,
        word_emb_dim: 24,
        radical_emb_dim: 24,
        max_epochs: 40,
        patience: 40,
        ..ModelConfig::default()
    };
    config.encoder.gru_dim = 20;
    config.encoder.convgru_filters = 20;
    config.encoder.radical_filters = 12;
    let resources = Resources {
        pretrained_char: None,
        pretrained_word: None,
        radical_table: radicals,
    };
    let model = train(&config, &data, None, resources).map_err(|e| e.to_string())?;
    let gold: Vec<Vec<String>> = data
        .sentences
        .iter()
        .map(|s| s.tags.clone().unwrap())
        .collect();
    let predicted = predict_dataset(&model, &data, 1).map_err(|e| e.to_string())?;
    let acc = token_accuracy(&gold, &predicted);
    let report = evaluate(&model, &data, 1).map_err(|e| e.to_string())?;
    if acc < 0.99 {
        return Err(format!("token accuracy {acc:.4} below 0.99"));
    }
    if report.f1 < 0.95 {
        return Err(format!("entity F1 {:.4} below 0.95", report.f1));
    }
    Ok(format!(
        "token accuracy {acc:.4}, entity F1 {:.4} after {} epochs",
        report.f1, model.meta.epochs_run
    ))
}

/// Runs every suite and returns the results; all fixtures generated.
pub fn run_all() -> Vec<SuiteResult> {
    vec![
        run_suite("crf-enumeration", crf_enumeration_suite),
        run_suite("conv-gru-consistency", conv_gru_suite),
        run_suite("alignment-round-trip", alignment_suite),
        run_suite("synthetic-overfit", overfit_suite),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for result in run_all() {
            assert!(result.passed, "{}: {}", result.name, result.detail);
        }
    }
}
