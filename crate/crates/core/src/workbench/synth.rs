//! Synthetic topic corpora with controllable class overlap.
//!
//! Each class owns a small set of topic words; all classes share a pool
//! of filler words. Every token of a sentence is drawn from the sentence's
//! class topic with probability `1 - difficulty` and from the shared pool
//! otherwise. Difficulty 0 gives disjoint vocabularies, difficulty 1 gives
//! identical distributions for every class.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{CorpusError, Dataset, Example, LabeledCorpus, Split};

/// Topic words per class.
pub const TOPIC_WORDS: usize = 12;
/// Shared filler words.
pub const SHARED_WORDS: usize = 24;
pub const MIN_TOKENS: usize = 3;
pub const MAX_TOKENS: usize = 8;

fn topic_word(class: usize, k: usize) -> String {
    format!("c{class}w{k}")
}

fn shared_word(k: usize) -> String {
    format!("s{k}")
}

pub fn class_name(class: usize) -> String {
    format!("class{class}")
}

fn sentence(class: usize, difficulty: f64, rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(MIN_TOKENS..=MAX_TOKENS);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < difficulty {
                shared_word(rng.random_range(0..SHARED_WORDS))
            } else {
                topic_word(class, rng.random_range(0..TOPIC_WORDS))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `size` examples spread evenly over `classes`, split 80/10/10 within
/// each class. Deterministic per seed.
pub fn synth_corpus(classes: usize, size: usize, seed: u64, difficulty: f64) -> Result<Dataset, CorpusError> {
    if classes < 2 {
        return Err(CorpusError::Invalid(format!("need at least 2 classes, got {classes}")));
    }
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(CorpusError::Invalid(format!("difficulty must lie in [0, 1], got {difficulty}")));
    }
    // every class needs at least one dev and one test example
    if size < classes * 10 {
        return Err(CorpusError::Invalid(format!(
            "size {size} too small to stratify {classes} classes 80/10/10 (need at least {})",
            classes * 10
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog: Vec<String> = (0..classes).map(class_name).collect();
    let mut splits: [Vec<Example>; 3] = Default::default();
    for class in 0..classes {
        let n = size / classes + usize::from(class < size % classes);
        let dev = (n as f64 * 0.1).round() as usize;
        let test = dev;
        for i in 0..n {
            let ex = Example {
                text: sentence(class, difficulty, &mut rng),
                label: class,
            };
            let slot = if i < n - dev - test {
                0
            } else if i < n - test {
                1
            } else {
                2
            };
            splits[slot].push(ex);
        }
    }
    let [mut train, mut dev, mut test] = splits;
    train.shuffle(&mut rng);
    dev.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(Dataset {
        train: LabeledCorpus::new(Split::Train, catalog.clone(), train)?,
        dev: LabeledCorpus::new(Split::Dev, catalog.clone(), dev)?,
        test: LabeledCorpus::new(Split::Test, catalog, test)?,
    })
}
