//! In-distribution / out-of-distribution partitions: a seeded uniform
//! baseline and the score-based split that holds out the top-scoring scenes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Partition::Train),
            "val" => Some(Partition::Val),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    Uniform,
    Scoring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHeader {
    pub method: SplitMethod,
    pub seed: u64,
    /// Held-out fraction (test ratio for the uniform split).
    pub ood_fraction: f64,
    pub val_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub header: SplitHeader,
    pub assignment: BTreeMap<String, Partition>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplitError {
    #[error("no scenario ids to split")]
    Empty,
    #[error("ratios must be non-negative and sum to 1 (got {0})")]
    BadRatios(f64),
    #[error("duplicate scenario id `{0}`")]
    DuplicateId(String),
    #[error("fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("split manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

/// floor(n·r) tolerant of representation error in r (0.16·100 = 16).
fn floor_count(n: usize, r: f64) -> usize {
    ((n as f64 * r) + 1e-9).floor() as usize
}

fn ceil_count(n: usize, r: f64) -> usize {
    ((n as f64 * r) - 1e-9).ceil().max(0.0) as usize
}

fn check_unique(ids: &[String]) -> Result<(), SplitError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(SplitError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

impl SplitAssignment {
    pub fn ids_in(&self, p: Partition) -> Vec<&str> {
        self.assignment.iter().filter(|(_, q)| **q == p).map(|(id, _)| id.as_str()).collect()
    }

    pub fn count(&self, p: Partition) -> usize {
        self.assignment.values().filter(|q| **q == p).count()
    }

    /// Header line (JSON) followed by `<id>\t<partition>` lines in id order.
    pub fn to_manifest(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for (id, p) in &self.assignment {
            out.push_str(id);
            out.push('\t');
            out.push_str(p.as_str());
            out.push('\n');
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self, SplitError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or(SplitError::Manifest {
            line: 1,
            message: "empty manifest".into(),
        })?;
        let header: SplitHeader = serde_json::from_str(first).map_err(|e| SplitError::Manifest {
            line: 1,
            message: e.to_string(),
        })?;
        let mut assignment = BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| SplitError::Manifest {
                line: i + 1,
                message: m.to_string(),
            };
            let (id, p) = line.split_once('\t').ok_or_else(|| bad("expected <id>\\t<partition>"))?;
            let p = Partition::parse(p.trim()).ok_or_else(|| bad("unknown partition"))?;
            if assignment.insert(id.to_string(), p).is_some() {
                return Err(SplitError::DuplicateId(id.to_string()));
            }
        }
        Ok(Self { header, assignment })
    }
}

/// Seeded shuffle of the sorted ids, sliced into train / val / test.
/// Val and test sizes are floored; the remainder goes to train.
pub fn uniform_split(ids: &[String], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment, SplitError> {
    if ids.is_empty() {
        return Err(SplitError::Empty);
    }
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadRatios(sum));
    }
    check_unique(ids)?;
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = sorted.len();
    let n_val = floor_count(n, ratios[1]);
    let n_test = floor_count(n, ratios[2]);
    let n_train = n - n_val - n_test;
    let assignment = sorted
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let p = if k < n_train {
                Partition::Train
            } else if k < n_train + n_val {
                Partition::Val
            } else {
                Partition::Test
            };
            ((*id).clone(), p)
        })
        .collect();
    Ok(SplitAssignment {
        header: SplitHeader {
            method: SplitMethod::Uniform,
            seed,
            ood_fraction: ratios[2],
            val_fraction: ratios[1],
        },
        assignment,
    })
}

/// Holds out the ⌈ood_fraction·n⌉ highest-scoring scenes (ties by id
/// ascending) and splits the rest into val / train by seed.
pub fn scoring_split(
    scores: &[(String, f64)],
    ood_fraction: f64,
    val_fraction_of_id: f64,
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    if scores.is_empty() {
        return Err(SplitError::Empty);
    }
    for f in [ood_fraction, val_fraction_of_id] {
        if !(0.0..=1.0).contains(&f) {
            return Err(SplitError::BadFraction(f));
        }
    }
    let ids: Vec<String> = scores.iter().map(|(id, _)| id.clone()).collect();
    check_unique(&ids)?;
    let mut ranked: Vec<&(String, f64)> = scores.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let n_test = ceil_count(ranked.len(), ood_fraction).min(ranked.len());
    let mut assignment: BTreeMap<String, Partition> = ranked[..n_test].iter().map(|(id, _)| (id.clone(), Partition::Test)).collect();
    let mut rest: Vec<&String> = ranked[n_test..].iter().map(|(id, _)| id).collect();
    rest.sort();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = floor_count(rest.len(), val_fraction_of_id);
    for (k, id) in rest.iter().enumerate() {
        assignment.insert((*id).clone(), if k < n_val { Partition::Val } else { Partition::Train });
    }
    Ok(SplitAssignment {
        header: SplitHeader {
            method: SplitMethod::Scoring,
            seed,
            ood_fraction,
            val_fraction: val_fraction_of_id,
        },
        assignment,
    })
}
