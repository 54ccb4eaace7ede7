//! Model keys accepted by `train` and `extract`.

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};

use pharmvig_core::corpus::Task;
use pharmvig_neural::VariantKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Downstream {
    Lr,
    Cnn,
    Lstm,
}

impl Downstream {
    pub const ALL: [Downstream; 3] = [Downstream::Lr, Downstream::Cnn, Downstream::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            Downstream::Lr => "lr",
            Downstream::Cnn => "cnn",
            Downstream::Lstm => "lstm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKey {
    MostCommon,
    NaiveBayes,
    Crf,
    Finetune(VariantKey),
    Features(VariantKey, Downstream),
}

const FEATURES: &str = "-features-";

impl ModelKey {
    pub fn all() -> Vec<ModelKey> {
        let mut out = vec![ModelKey::MostCommon, ModelKey::NaiveBayes, ModelKey::Crf];
        out.extend(VariantKey::ALL.iter().map(|&k| ModelKey::Finetune(k)));
        for &k in VariantKey::ALL.iter() {
            out.extend(Downstream::ALL.iter().map(|&d| ModelKey::Features(k, d)));
        }
        out
    }

    pub fn supports(self, task: Task) -> bool {
        match self {
            ModelKey::MostCommon | ModelKey::Finetune(_) => true,
            ModelKey::NaiveBayes | ModelKey::Features(..) => task != Task::Ner,
            ModelKey::Crf => task == Task::Ner,
        }
    }

    pub fn check_task(self, task: Task) -> Result<()> {
        if !self.supports(task) {
            let valid: Vec<String> = Self::all().into_iter().filter(|k| k.supports(task)).map(|k| k.to_string()).collect();
            bail!("model `{self}` does not apply to the {task} task; valid keys: {}", valid.join(", "));
        }
        Ok(())
    }

    pub fn uses_epochs(self) -> bool {
        !matches!(self, ModelKey::MostCommon | ModelKey::NaiveBayes)
    }

    pub fn variant(self) -> Option<VariantKey> {
        match self {
            ModelKey::Finetune(k) | ModelKey::Features(k, _) => Some(k),
            _ => None,
        }
    }

    /// Row label used in report tables.
    pub fn display(self, from_finetuned: bool) -> String {
        match self {
            ModelKey::MostCommon => "Most Common Class".into(),
            ModelKey::NaiveBayes => "N-Gram + NB".into(),
            ModelKey::Crf => "CRF".into(),
            ModelKey::Finetune(k) => k.name().into(),
            ModelKey::Features(k, d) => {
                let source = if from_finetuned { "Fine-tuned" } else { "Pretrained" };
                format!("{source} {} + {}", k.name(), d.name().to_uppercase())
            }
        }
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKey::MostCommon => f.write_str("most-common"),
            ModelKey::NaiveBayes => f.write_str("nb"),
            ModelKey::Crf => f.write_str("crf"),
            ModelKey::Finetune(k) => f.write_str(&k.name().to_lowercase()),
            ModelKey::Features(k, d) => write!(f, "{}{FEATURES}{}", k.name().to_lowercase(), d.name()),
        }
    }
}

impl FromStr for ModelKey {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_lowercase();
        let parsed = match key.as_str() {
            "most-common" => Some(ModelKey::MostCommon),
            "nb" => Some(ModelKey::NaiveBayes),
            "crf" => Some(ModelKey::Crf),
            _ => match key.split_once(FEATURES) {
                Some((v, d)) => {
                    let d = Downstream::ALL.into_iter().find(|x| x.name() == d);
                    match (v.parse::<VariantKey>(), d) {
                        (Ok(v), Some(d)) => Some(ModelKey::Features(v, d)),
                        _ => None,
                    }
                }
                None => key.parse::<VariantKey>().ok().map(ModelKey::Finetune),
            },
        };
        parsed.ok_or_else(|| {
            let valid: Vec<String> = ModelKey::all().iter().map(ToString::to_string).collect();
            anyhow!("unknown model key `{s}`; valid keys: {}", valid.join(", "))
        })
    }
}

impl Serialize for ModelKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModelKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        for k in ModelKey::all() {
            assert_eq!(k.to_string().parse::<ModelKey>().unwrap(), k);
        }
        assert_eq!(ModelKey::all().len(), 3 + 8 + 24);
    }

    #[test]
    fn unknown_key_lists_valid_ones() {
        let err = "gpt".parse::<ModelKey>().unwrap_err().to_string();
        assert!(err.contains("most-common") && err.contains("cbb-d") && err.contains("b-u-features-lstm"));
    }

    #[test]
    fn task_restrictions() {
        assert!(ModelKey::Crf.check_task(Task::Sentiment).is_err());
        assert!(ModelKey::NaiveBayes.check_task(Task::Ner).is_err());
        assert!("bb-1.1".parse::<ModelKey>().unwrap().supports(Task::Ner));
    }
}
