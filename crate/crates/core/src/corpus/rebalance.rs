//! Oversampled and undersampled training variants for the binary task.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tweets::TweetRecord;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceMode {
    OversampleMinorityToBalance,
    UndersampleMajorityToRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RebalanceSpec {
    pub mode: RebalanceMode,
    pub target_minority_fraction: f64,
    pub seed: u64,
}

impl RebalanceSpec {
    /// Duplicate the minority class until both classes are equally frequent.
    pub fn oversample(seed: u64) -> Self {
        RebalanceSpec {
            mode: RebalanceMode::OversampleMinorityToBalance,
            target_minority_fraction: 0.5,
            seed,
        }
    }

    /// Drop majority examples until the minority makes up one third.
    pub fn undersample(seed: u64) -> Self {
        RebalanceSpec {
            mode: RebalanceMode::UndersampleMajorityToRatio,
            target_minority_fraction: 1.0 / 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.target_minority_fraction;
        if !(f > 0.0 && f <= 0.5) {
            return Err(Error::invalid(format!("target minority fraction {f} not in (0, 0.5]")));
        }
        Ok(())
    }
}

pub fn rebalance(train: &[TweetRecord], spec: &RebalanceSpec) -> Result<Vec<TweetRecord>> {
    rebalance_by(train, |r| r.has_adr, spec)
}

/// Rebalances any binary-labeled collection. The minority is whichever class
/// is rarer (positive on ties).
pub fn rebalance_by<T: Clone>(train: &[T], is_positive: impl Fn(&T) -> bool, spec: &RebalanceSpec) -> Result<Vec<T>> {
    spec.validate()?;
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| is_positive(&train[i]));
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("rebalancing needs examples of both classes"));
    }
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let r = spec.target_minority_fraction;
    let mut rng = seeded(spec.seed);

    let mut out: Vec<T> = match spec.mode {
        RebalanceMode::OversampleMinorityToBalance => {
            let target = (majority.len() as f64 * r / (1.0 - r)).round() as usize;
            let needed = target.saturating_sub(minority.len());
            let mut order = minority.clone();
            order.shuffle(&mut rng);
            let mut out = train.to_vec();
            out.extend((0..needed).map(|k| train[order[k % order.len()]].clone()));
            out
        }
        RebalanceMode::UndersampleMajorityToRatio => {
            let keep = ((minority.len() as f64 * (1.0 - r) / r).round() as usize).min(majority.len());
            let mut chosen = majority.clone();
            chosen.shuffle(&mut rng);
            chosen.truncate(keep);
            let mut kept: Vec<usize> = minority.iter().copied().chain(chosen).collect();
            kept.sort_unstable();
            kept.into_iter().map(|i| train[i].clone()).collect()
        }
    };
    out.shuffle(&mut rng);
    Ok(out)
}
