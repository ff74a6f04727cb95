use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::segmentation::Segment;
use crate::Error;

/// How a document's mass is spread over its segments for transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Uniform,
    /// Proportional to how often a segment's exact text occurs in the document;
    /// duplicates merge into one atom.
    SegmentFrequency,
    /// Proportional to segment token length.
    SegmentLength,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::SegmentFrequency => "segment_frequency",
            WeightScheme::SegmentLength => "segment_length",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "uniform" => Ok(WeightScheme::Uniform),
            "segment_frequency" | "sf" => Ok(WeightScheme::SegmentFrequency),
            "segment_length" | "sl" => Ok(WeightScheme::SegmentLength),
            other => Err(Error::Parameter(format!("unknown weight scheme {other:?}"))),
        }
    }
}

/// A unit of transport mass located at embedding row `row` of its document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub row: usize,
    pub weight: f64,
}

/// Probability vector over a document's segments (or merged atoms for SF).
pub fn seg_weights(segments: &[Segment], scheme: WeightScheme) -> Vec<Atom> {
    let n = segments.len();
    let raw: Vec<(usize, f64)> = match scheme {
        WeightScheme::Uniform => (0..n).map(|i| (i, 1.0)).collect(),
        WeightScheme::SegmentLength => segments
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.token_len as f64))
            .collect(),
        WeightScheme::SegmentFrequency => {
            let mut first: HashMap<&str, usize> = HashMap::new();
            let mut atoms: Vec<(usize, f64)> = Vec::new();
            for (i, s) in segments.iter().enumerate() {
                match first.get(s.text.as_str()) {
                    Some(&k) => atoms[k].1 += 1.0,
                    None => {
                        first.insert(&s.text, atoms.len());
                        atoms.push((i, 1.0));
                    }
                }
            }
            atoms
        }
    };
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        // all-zero token lengths cannot occur for valid segments; fall back to uniform
        return (0..n)
            .map(|row| Atom {
                row,
                weight: 1.0 / n as f64,
            })
            .collect();
    }
    raw.into_iter()
        .map(|(row, w)| Atom { row, weight: w / total })
        .collect()
}
