//! Generated toy corpora, used by the self test and the test suites.
//!
//! The toy language ties entity types to radical classes and to word
//! boundaries: person names are built from 女-radical characters,
//! locations from 氵, organizations from 钅, and filler text from 口
//! and 辶 characters. Entities are multi-character words; fillers are
//! one- or two-character words. Evaluation splits can draw entity
//! characters from a held-out pool that never occurs in training, so
//! a model has to lean on radicals to label them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::RadicalTable;
use crate::pipeline::{Dataset, Sentence};

struct EntityClass {
    label: &'static str,
    radical: char,
    train_chars: &'static [char],
    held_out_chars: &'static [char],
}

const CLASSES: &[EntityClass] = &[
    EntityClass {
        label: "PER",
        radical: '女',
        train_chars: &['姐', '妹', '娜', '婷', '妮'],
        held_out_chars: &['媛', '姑', '娟'],
    },
    EntityClass {
        label: "LOC",
        radical: '氵',
        train_chars: &['江', '河', '湖', '海', '波'],
        held_out_chars: &['洋', '港', '涛'],
    },
    EntityClass {
        label: "ORG",
        radical: '钅',
        train_chars: &['钢', '铁', '银', '铜', '锦'],
        held_out_chars: &['钟', '铭', '钧'],
    },
];

const FILLER_MOUTH: &[char] = &['吃', '喝', '叫', '吗', '呢', '啊', '哦', '唱'];
const FILLER_WALK: &[char] = &['这', '过', '还', '进', '远', '近', '迎', '送'];

/// Radical table covering every character the generator can emit,
/// held-out characters included.
pub fn radical_table() -> RadicalTable {
    let mut pairs = Vec::new();
    for class in CLASSES {
        for &c in class.train_chars.iter().chain(class.held_out_chars) {
            pairs.push((c, class.radical));
        }
    }
    for &c in FILLER_MOUTH {
        pairs.push((c, '口'));
    }
    for &c in FILLER_WALK {
        pairs.push((c, '辶'));
    }
    RadicalTable::from_pairs(pairs)
}

fn pick<R: Rng>(rng: &mut R, pool: &[char]) -> char {
    pool[rng.gen_range(0..pool.len())]
}

fn entity<R: Rng>(rng: &mut R, class: &EntityClass, allow_held_out: bool) -> Vec<char> {
    let len = rng.gen_range(2..=3);
    (0..len)
        .map(|_| {
            if allow_held_out && rng.gen_bool(0.5) {
                pick(rng, class.held_out_chars)
            } else {
                pick(rng, class.train_chars)
            }
        })
        .collect()
}

fn filler_word<R: Rng>(rng: &mut R) -> Vec<char> {
    let pool = if rng.gen_bool(0.5) {
        FILLER_MOUTH
    } else {
        FILLER_WALK
    };
    let len = if rng.gen_bool(0.3) { 2 } else { 1 };
    (0..len).map(|_| pick(rng, pool)).collect()
}

fn sentence<R: Rng>(rng: &mut R, allow_held_out: bool) -> (Sentence, Vec<String>) {
    let mut chars = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    let mut words: Vec<String> = Vec::new();

    fn push_fillers<R: Rng>(
        rng: &mut R,
        chars: &mut Vec<char>,
        tags: &mut Vec<String>,
        words: &mut Vec<String>,
    ) {
        for _ in 0..rng.gen_range(1..=2) {
            let w = filler_word(rng);
            for &c in &w {
                chars.push(c);
                tags.push("O".to_string());
            }
            words.push(w.iter().collect());
        }
    }

    let n_entities = rng.gen_range(1..=3);
    push_fillers(rng, &mut chars, &mut tags, &mut words);
    for _ in 0..n_entities {
        let class = &CLASSES[rng.gen_range(0..CLASSES.len())];
        let e = entity(rng, class, allow_held_out);
        for (i, &c) in e.iter().enumerate() {
            chars.push(c);
            tags.push(if i == 0 {
                format!("B-{}", class.label)
            } else {
                format!("I-{}", class.label)
            });
        }
        words.push(e.iter().collect());
        push_fillers(rng, &mut chars, &mut tags, &mut words);
    }

    (Sentence::tagged(chars, tags), words)
}

fn dataset<R: Rng>(rng: &mut R, n: usize, allow_held_out: bool) -> Dataset {
    let mut sentences = Vec::with_capacity(n);
    let mut segmentations = Vec::with_capacity(n);
    for _ in 0..n {
        let (s, words) = sentence(rng, allow_held_out);
        sentences.push(s);
        segmentations.push(words);
    }
    Dataset::new(sentences, segmentations)
}

/// Train/dev/test splits plus the radical table. Train sentences use
/// only training characters; dev and test mix in held-out characters.
pub struct SyntheticData {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub radical_table: RadicalTable,
}

pub fn generate(n_train: usize, n_dev: usize, n_test: usize, seed: u64) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SyntheticData {
        train: dataset(&mut rng, n_train, false),
        dev: dataset(&mut rng, n_dev, true),
        test: dataset(&mut rng, n_test, true),
        radical_table: radical_table(),
    }
}

/// The 20-sentence overfit corpus: three entity types, no held-out
/// characters.
pub fn overfit_corpus(seed: u64) -> (Dataset, RadicalTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (dataset(&mut rng, 20, false), radical_table())
}
