//! Train/dev/test bundles and their deterministic construction.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ner::NerRecord;
use super::rebalance::{rebalance, RebalanceMode, RebalanceSpec};
use super::reviews::{RawReview, SentimentExample};
use super::tweets::TweetRecord;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sentiment,
    Presence,
    Ner,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Sentiment, Task::Presence, Task::Ner];

    pub fn name(self) -> &'static str {
        match self {
            Task::Sentiment => "sentiment",
            Task::Presence => "presence",
            Task::Ner => "ner",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task `{s}` (expected sentiment, presence or ner)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainVariant {
    Natural,
    Oversampled,
    Undersampled,
}

impl TrainVariant {
    pub const ALL: [TrainVariant; 3] = [TrainVariant::Natural, TrainVariant::Oversampled, TrainVariant::Undersampled];

    pub fn name(self) -> &'static str {
        match self {
            TrainVariant::Natural => "natural",
            TrainVariant::Oversampled => "oversampled",
            TrainVariant::Undersampled => "undersampled",
        }
    }
}

impl std::fmt::Display for TrainVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TrainVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainVariant::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown training set `{s}`")))
    }
}

/// Anything with a stable example id.
pub trait Example {
    fn example_id(&self) -> &str;
}

impl Example for SentimentExample {
    fn example_id(&self) -> &str {
        &self.id
    }
}

impl Example for TweetRecord {
    fn example_id(&self) -> &str {
        &self.tweet_id
    }
}

impl Example for NerRecord {
    fn example_id(&self) -> &str {
        &self.tweet_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle<T> {
    pub task: Task,
    pub variant: TrainVariant,
    pub seed: u64,
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

impl<T: Example> DatasetBundle<T> {
    /// Splits are pairwise disjoint by id. Oversampled duplicates within
    /// train are allowed.
    pub fn check_disjoint(&self) -> Result<()> {
        let ids = |xs: &[T]| xs.iter().map(|x| x.example_id().to_string()).collect::<HashSet<_>>();
        let (train, dev, test) = (ids(&self.train), ids(&self.dev), ids(&self.test));
        for (a, b, what) in [(&train, &dev, "train/dev"), (&train, &test, "train/test"), (&dev, &test, "dev/test")] {
            if let Some(id) = a.intersection(b).next() {
                return Err(Error::invalid(format!("{what} splits share example {id}")));
            }
        }
        Ok(())
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("split fraction {fraction} not in [0, 1)")));
    }
    Ok(())
}

/// Assigns each index a split through one seeded shuffle: the first
/// `round(test_fraction * n)` shuffled positions go to test, the next
/// `round(dev_fraction * n)` to dev. Each split keeps source order.
fn assign(n: usize, dev_fraction: f64, test_fraction: f64, seed: u64) -> Result<Vec<u8>> {
    check_fraction(dev_fraction)?;
    check_fraction(test_fraction)?;
    if dev_fraction + test_fraction >= 1.0 && n > 0 {
        return Err(Error::invalid("dev and test fractions leave no training data"));
    }
    let test_k = (test_fraction * n as f64).round() as usize;
    let dev_k = (dev_fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    let mut split = vec![TRAIN; n];
    for (rank, &i) in idx.iter().enumerate() {
        if rank < test_k {
            split[i] = TEST;
        } else if rank < test_k + dev_k {
            split[i] = DEV;
        }
    }
    Ok(split)
}

const TRAIN: u8 = 0;
const DEV: u8 = 1;
const TEST: u8 = 2;

/// Seeded three-way split; see [`assign`].
pub fn split_three<T: Clone>(items: &[T], dev_fraction: f64, test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let split = assign(items.len(), dev_fraction, test_fraction, seed)?;
    let pick = |which: u8| {
        items
            .iter()
            .zip(&split)
            .filter(|(_, &s)| s == which)
            .map(|(x, _)| x.clone())
            .collect::<Vec<T>>()
    };
    Ok((pick(TRAIN), pick(DEV), pick(TEST)))
}

pub const DEFAULT_DEV_FRACTION: f64 = 0.2;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Test is the published test file; dev is a seeded carve-out of the
/// published train file.
pub fn make_sentiment_bundle(
    train_reviews: &[RawReview],
    test_reviews: &[RawReview],
    dev_fraction: f64,
    seed: u64,
) -> Result<DatasetBundle<SentimentExample>> {
    if train_reviews.is_empty() {
        return Err(Error::invalid("no training reviews"));
    }
    let to_examples =
        |rs: &[RawReview]| rs.iter().map(SentimentExample::from_review).collect::<Result<Vec<_>>>();
    let pool = to_examples(train_reviews)?;
    let test = to_examples(test_reviews)?;
    let (train, dev, _) = split_three(&pool, dev_fraction, 0.0, seed)?;
    let bundle = DatasetBundle {
        task: Task::Sentiment,
        variant: TrainVariant::Natural,
        seed,
        train,
        dev,
        test,
    };
    bundle.check_disjoint()?;
    Ok(bundle)
}

/// Natural split over the records that have text.
pub fn make_presence_bundle(
    records: &[TweetRecord],
    dev_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetBundle<TweetRecord>> {
    let usable: Vec<TweetRecord> = records.iter().filter(|r| r.text.is_some()).cloned().collect();
    if usable.is_empty() {
        return Err(Error::invalid("no tweets with resolved text"));
    }
    let (train, dev, test) = split_three(&usable, dev_fraction, test_fraction, seed)?;
    let bundle = DatasetBundle {
        task: Task::Presence,
        variant: TrainVariant::Natural,
        seed,
        train,
        dev,
        test,
    };
    bundle.check_disjoint()?;
    Ok(bundle)
}

impl DatasetBundle<TweetRecord> {
    /// Same dev and test, training split rebalanced per `spec`.
    pub fn rebalanced(&self, spec: &RebalanceSpec) -> Result<Self> {
        if self.variant != TrainVariant::Natural {
            return Err(Error::invalid("rebalance the natural bundle, not a derived variant"));
        }
        let variant = match spec.mode {
            RebalanceMode::OversampleMinorityToBalance => TrainVariant::Oversampled,
            RebalanceMode::UndersampleMajorityToRatio => TrainVariant::Undersampled,
        };
        Ok(DatasetBundle {
            task: self.task,
            variant,
            seed: self.seed,
            train: rebalance(&self.train, spec)?,
            dev: self.dev.clone(),
            test: self.test.clone(),
        })
    }

    /// Natural, oversampled and undersampled bundles. Both rebalancers are
    /// seeded from the bundle seed.
    pub fn all_variants(&self) -> Result<[Self; 3]> {
        Ok([
            self.clone(),
            self.rebalanced(&RebalanceSpec::oversample(self.seed))?,
            self.rebalanced(&RebalanceSpec::undersample(self.seed))?,
        ])
    }
}

pub fn make_ner_bundle(records: &[NerRecord], dev_fraction: f64, test_fraction: f64, seed: u64) -> Result<DatasetBundle<NerRecord>> {
    if records.is_empty() {
        return Err(Error::invalid("empty NER corpus"));
    }
    let (train, dev, test) = split_three(records, dev_fraction, test_fraction, seed)?;
    let bundle = DatasetBundle {
        task: Task::Ner,
        variant: TrainVariant::Natural,
        seed,
        train,
        dev,
        test,
    };
    bundle.check_disjoint()?;
    Ok(bundle)
}
