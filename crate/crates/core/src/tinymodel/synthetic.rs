//! Small synthetic tasks with a known answer, used to check that the models
//! can fit their objectives.
//!
//! Span task: the question names one of four keys; the context holds four
//! delimited spans `s<j> ... e<j>` in random order and the answer is the
//! span for the named key. Generation task: the context holds one keyed
//! token per key whose suffix encodes the label (`a<j>l` low, `a<j>h`
//! high); the answer is that token followed by `z<j>`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotate::{Instance, Label, Provenance};
use crate::reviews::BiasType;

pub const KEYS: usize = 4;
const FILLER: usize = 12;

fn filler(rng: &mut ChaCha8Rng, out: &mut Vec<String>, max: usize) {
    for _ in 0..rng.random_range(0..=max) {
        out.push(format!("f{}", rng.random_range(0..FILLER)));
    }
}

fn instance(i: usize, key: usize, words: &[String], answer: (usize, usize), label: Label) -> Instance {
    // words are joined by single spaces, so char offsets follow from lengths
    let context = words.join(" ");
    let start: usize = words[..answer.0].iter().map(|w| w.chars().count() + 1).sum();
    let answer_text = words[answer.0..=answer.1].join(" ");
    Instance {
        id: format!("synthetic:{i}"),
        bias_type: BiasType::ALL[i % BiasType::ALL.len()],
        question: format!("which span is q{key}"),
        context,
        answer_text,
        answer_start: start,
        label,
        provenance: Provenance {
            review_id: "synthetic".into(),
            study_id: format!("s{i}"),
            pubmed_id: format!("{i}"),
            sentence_index: 0,
            similarity: 1.0,
        },
    }
}

pub fn span_task(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let key = rng.random_range(0..KEYS);
            let mut order: Vec<usize> = (0..KEYS).collect();
            order.shuffle(&mut rng);
            let mut words = Vec::new();
            let mut answer = (0, 0);
            for j in order {
                filler(&mut rng, &mut words, 2);
                let s = words.len();
                words.push(format!("s{j}"));
                filler(&mut rng, &mut words, 3);
                words.push(format!("e{j}"));
                if j == key {
                    answer = (s, words.len() - 1);
                }
            }
            filler(&mut rng, &mut words, 2);
            instance(i, key, &words, answer, Label::from_positive(key % 2 == 0))
        })
        .collect()
}

pub fn generation_task(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let key = rng.random_range(0..KEYS);
            let mut order: Vec<usize> = (0..KEYS).collect();
            order.shuffle(&mut rng);
            let mut words = Vec::new();
            let mut answer = (0, 0);
            let mut label = Label::HighUnclear;
            for j in order {
                filler(&mut rng, &mut words, 2);
                let low = rng.random_bool(0.5);
                let s = words.len();
                words.push(format!("a{j}{}", if low { 'l' } else { 'h' }));
                words.push(format!("z{j}"));
                if j == key {
                    answer = (s, s + 1);
                    label = Label::from_positive(low);
                }
            }
            filler(&mut rng, &mut words, 2);
            instance(i, key, &words, answer, label)
        })
        .collect()
}
