//! Cross-lingual document alignment.
//!
//! Two language sides of a set of web domains are aligned in two stages:
//!
//! 1. **Candidate generation.** Every document is collapsed into a single
//!    feature vector ([`docvec`]: Mean-Pool or TK-PERT) and the top-K targets
//!    per source are found by exact cosine search ([`retrieval`]).
//! 2. **Re-ranking.** Each source/candidate pair is re-scored from its segment
//!    embeddings ([`scoring`]): BiMax (symmetrised MaxSim), entropic optimal
//!    transport, or greedy movers' distance. The [`assignment`] module then
//!    keeps a one-to-one alignment.
//!
//! [`evaluation`] holds recall, soft recall, source-side F1, length-binned
//! recall and a paired randomization test. [`pipeline`] wires the stages to
//! on-disk artifacts for the `docalign` command-line tool.

pub mod assignment;
pub mod corpus;
pub mod docvec;
pub mod embedding_io;
mod error;
pub mod evaluation;
pub mod pipeline;
pub mod provider;
pub mod retrieval;
pub mod scoring;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Which side of the bilingual collection a document belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Source => "source",
            Side::Target => "target",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
