//! Real-time monitoring of social media and press mentions.
//!
//! Messages flow through a fixed chain of stages: ingestion and
//! deduplication ([`ingest`]), language identification ([`langid`]),
//! keyword-taxonomy matching ([`taxonomy`]), microtext normalization
//! ([`normalize`]), morphological analysis ([`nlp`]) and polarity
//! classification ([`polarity`]). Accepted mentions land in the [`store`],
//! whose periodically rebuilt aggregate view answers dashboard queries.
//! The [`census`] module builds a regional census of social users from a
//! follower graph and resolves free-text profile locations.

pub mod census;
pub mod config;
pub mod context;
pub mod ingest;
pub mod langid;
pub mod linear;
pub mod nlp;
pub mod normalize;
pub mod pipeline;
pub mod polarity;
pub mod resources;
pub mod store;
pub mod synthetic;
pub mod taxonomy;

mod records;

use serde::{Deserialize, Serialize};

/// Language code used for messages whose language could not be identified.
pub const UNDETERMINED_LANG: &str = "und";

/// Coarse origin of a text: short social messages or press/feed articles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Social,
    Feed,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Social => "social",
            SourceKind::Feed => "feed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "social" => Some(SourceKind::Social),
            "feed" => Some(SourceKind::Feed),
            _ => None,
        }
    }
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Three-way sentiment label.
///
/// The declaration order (negative, neutral, positive) is the fixed class
/// order used for tie-breaking and for confusion-matrix layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
            Polarity::Positive => "positive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "negative" | "neg" | "n" => Some(Polarity::Negative),
            "neutral" | "neu" => Some(Polarity::Neutral),
            "positive" | "pos" | "p" => Some(Polarity::Positive),
            _ => None,
        }
    }
}

impl std::fmt::Display for Polarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
