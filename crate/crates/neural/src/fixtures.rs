//! Small synthetic datasets for sanity checks at desk scale: a miniature
//! encoder must be able to fit them perfectly.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::finetune::{LabeledText, TaskHead, Target};
use crate::registry::{Checkpoint, MiniSpec, VariantKey};
use crate::Result;
use pharmvig_core::rng::seeded;
use pharmvig_core::textprep::{PaddedEmbeddingMatrix, Vocab};
use pharmvig_core::BioTag;

const FILLER: &[&str] = &["this", "drug", "the", "was", "for", "me", "my", "today", "and", "it"];
const SENTIMENT: [&[&str]; 3] = [
    &["great", "helped", "amazing", "relief", "wonderful", "better"],
    &["okay", "average", "unsure", "moderate", "mixed", "fine"],
    &["terrible", "worse", "useless", "awful", "horrible", "waste"],
];
const ADR_WORDS: &[&str] = &["nausea", "dizzy", "headache", "rash", "insomnia", "cramps"];
const NO_ADR_WORDS: &[&str] = &["refill", "pharmacy", "bought", "prescription", "pickup", "insurance"];
const ADR_PHRASES: &[&[&str]] = &[
    &["nausea"],
    &["bad", "headache"],
    &["dizzy", "spells"],
    &["rash"],
    &["no", "sleep"],
    &["stomach", "cramps"],
];

fn sentence(rng: &mut impl Rng, key_words: &[&str], len: usize) -> Vec<String> {
    let mut words: Vec<String> = (0..len).map(|_| FILLER.choose(rng).expect("non-empty").to_string()).collect();
    for k in key_words {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, k.to_string());
    }
    words
}

/// `n` examples for a classification head, classes assigned round-robin.
pub fn classification(head: TaskHead, n: usize, seed: u64) -> Vec<LabeledText> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|i| {
            let class = i % head.num_labels();
            let pool: &[&str] = match head {
                TaskHead::Classify3 => SENTIMENT[class],
                _ if class == 0 => ADR_WORDS,
                _ => NO_ADR_WORDS,
            };
            let keys: Vec<&str> = pool.choose_multiple(&mut rng, 2).copied().collect();
            let len = rng.gen_range(2..6);
            LabeledText { words: sentence(&mut rng, &keys, len), target: Target::Class(class) }
        })
        .collect()
}

/// `n` tagged sentences; two in three contain one ADR phrase.
pub fn tagging(n: usize, seed: u64) -> Vec<LabeledText> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(3..7);
            let mut words = sentence(&mut rng, &[], len);
            let mut tags = vec![BioTag::O; words.len()];
            if i % 3 != 2 {
                let phrase = ADR_PHRASES.choose(&mut rng).expect("non-empty");
                let at = rng.gen_range(0..=words.len());
                for (k, w) in phrase.iter().enumerate() {
                    words.insert(at + k, w.to_string());
                    tags.insert(at + k, if k == 0 { BioTag::B } else { BioTag::I });
                }
            }
            LabeledText::tagged(words, tags)
        })
        .collect()
}

/// Word-level vocabulary covering every fixture word.
pub fn vocab() -> Vocab {
    let mut words: Vec<&str> = FILLER.to_vec();
    SENTIMENT.iter().for_each(|p| words.extend_from_slice(p));
    words.extend_from_slice(ADR_WORDS);
    words.extend_from_slice(NO_ADR_WORDS);
    ADR_PHRASES.iter().for_each(|p| words.extend_from_slice(p));
    Vocab::char_level(&words)
}

pub fn mini_spec(seed: u64) -> MiniSpec {
    MiniSpec { hidden: 32, layers: 2, heads: 2, intermediate: 64, max_position: 64, dropout: 0.1, seed, vocab: None }
}

pub fn mini_checkpoint(key: VariantKey, seed: u64) -> Result<Checkpoint> {
    Checkpoint::mini(key, &mini_spec(seed), vocab())
}

/// Two-class front-padded token matrices. One random real row gets +1
/// (class 0) or -1 (class 1) added to the first half of its features;
/// every other real value is small noise.
pub fn token_matrices(n: usize, max_len: usize, dim: usize, seed: u64) -> (Vec<PaddedEmbeddingMatrix>, Vec<usize>) {
    let mut rng = seeded(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let len = rng.gen_range(max_len / 2..=max_len);
        let mut data = vec![0.0f32; max_len * dim];
        for v in data[(max_len - len) * dim..].iter_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
        let sign = if y == 0 { 1.0 } else { -1.0 };
        let r = rng.gen_range(max_len - len..max_len);
        for c in 0..dim / 2 {
            data[r * dim + c] += sign;
        }
        xs.push(PaddedEmbeddingMatrix {
            matrix: pharmvig_core::textprep::Matrix { rows: max_len, dim, data },
            valid_from: max_len - len,
        });
        ys.push(y);
    }
    (xs, ys)
}
