//! Closed label sets for the three tasks.

use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A finite, ordered label set. `ALL` fixes the class index of every label,
/// which is the order used by models, confusion matrices and tie-breaking.
pub trait Label: Copy + Eq + Hash + Ord + fmt::Debug + Send + Sync + 'static {
    const ALL: &'static [Self];

    fn name(&self) -> &'static str;

    fn index(&self) -> usize {
        Self::ALL
            .iter()
            .position(|l| l == self)
            .expect("label missing from its own ALL table")
    }

    fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.name() == name)
    }

    fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|l| l.name()).collect()
    }
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl Label for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];

            fn name(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                <$name as Label>::from_name(s).ok_or_else(|| Error::UnknownLabel(s.to_string()))
            }
        }
    };
}

label_enum!(
    /// Three-way review sentiment derived from the 1-10 rating.
    SentimentLabel {
        Positive => "positive",
        Neutral => "neutral",
        Negative => "negative",
    }
);

label_enum!(
    /// Tweet-level ADR presence. `Adr` is the positive class.
    PresenceLabel {
        Adr => "adr",
        NoAdr => "no_adr",
    }
);

label_enum!(
    /// Word-level BIO tag. Declaration order B < I < O is also the Viterbi
    /// tie-break order.
    BioTag {
        B => "B",
        I => "I",
        O => "O",
    }
);

impl PresenceLabel {
    pub fn from_bool(has_adr: bool) -> Self {
        if has_adr {
            PresenceLabel::Adr
        } else {
            PresenceLabel::NoAdr
        }
    }
}

impl BioTag {
    pub fn is_entity(self) -> bool {
        self != BioTag::O
    }
}

/// True when no `I` directly follows an `O` or starts the sequence.
pub fn is_valid_bio(tags: &[BioTag]) -> bool {
    let mut prev = BioTag::O;
    for &tag in tags {
        if tag == BioTag::I && prev == BioTag::O {
            return false;
        }
        prev = tag;
    }
    true
}
