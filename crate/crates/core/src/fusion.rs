//! Score normalization and weighted linear combination of rank lists, both
//! per topic and across whole runs.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::float::FloatCore;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::run::{Run, ScoredList};

/// Constant of the reciprocal-rank transform `1 / (RRF_CONSTANT + rank)`.
pub const RRF_CONSTANT: f64 = 60.0;
/// TREC submission depth.
pub const DEFAULT_CUTOFF: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("cannot normalize an empty list")]
    EmptyList,
    #[error("no lists to fuse")]
    NoLists,
    #[error("no runs to fuse")]
    NoRuns,
    #[error("topic mismatch: expected {expected}, got {got}")]
    TopicMismatch { expected: u32, got: u32 },
    #[error("{weights} weights given for {lists} lists")]
    WeightCount { weights: usize, lists: usize },
    #[error("weights must be finite, non-negative and not all zero")]
    InvalidWeights,
    #[error("unknown normalization {0:?} (expected minmax, none or rank)")]
    UnknownNormalization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    MinMax,
    None,
    Rank,
}

impl FromStr for Normalization {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "minmax" => Ok(Self::MinMax),
            "none" => Ok(Self::None),
            "rank" => Ok(Self::Rank),
            _ => Err(FusionError::UnknownNormalization(s.to_string())),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MinMax => "minmax",
            Self::None => "none",
            Self::Rank => "rank",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    weights: Vec<f64>,
    pub normalization: Normalization,
    pub cutoff: usize,
    pub missing_score: f64,
}

impl FusionSpec {
    pub fn new(weights: Vec<f64>, normalization: Normalization) -> Result<Self, FusionError> {
        check_weights(&weights)?;
        Ok(Self {
            weights,
            normalization,
            cutoff: DEFAULT_CUTOFF,
            missing_score: 0.0,
        })
    }

    /// `n` identical weights with minmax normalization.
    pub fn equal(n: usize) -> Self {
        Self {
            weights: vec![1.0; n.max(1)],
            normalization: Normalization::MinMax,
            cutoff: DEFAULT_CUTOFF,
            missing_score: 0.0,
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_missing_score(mut self, missing_score: f64) -> Self {
        self.missing_score = missing_score;
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn with_weights(&self, weights: Vec<f64>) -> Self {
        Self {
            weights,
            ..self.clone()
        }
    }
}

fn check_weights(weights: &[f64]) -> Result<(), FusionError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !weights.iter().any(|w| *w > 0.0) {
        return Err(FusionError::InvalidWeights);
    }
    Ok(())
}

/// Rescales scores without changing document order.
///
/// * `minmax`: max maps to 1, min to 0; a constant list maps to all 1.
/// * `rank`: 1-based position `p` maps to `1 / (60 + p)`.
/// * `none`: identity.
pub fn normalize_scores(list: &ScoredList, method: Normalization) -> Result<ScoredList, FusionError> {
    match method {
        Normalization::None => Ok(list.clone()),
        _ if list.is_empty() => Err(FusionError::EmptyList),
        Normalization::MinMax => {
            let (lo, hi) = list
                .entries()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                    (lo.min(d.score), hi.max(d.score))
                });
            let range = hi - lo;
            Ok(list.map_scores(
                list.entries()
                    .iter()
                    .map(|d| if range > 0.0 { (d.score - lo) / range } else { 1.0 }),
            ))
        }
        Normalization::Rank => Ok(list.map_scores((1..=list.len()).map(|p| 1.0 / (RRF_CONSTANT + p as f64)))),
    }
}

/// An exact binary fraction `mant · 2^exp`.
#[derive(Debug, Clone)]
struct Dyadic {
    mant: BigInt,
    exp: i32,
}

impl Dyadic {
    fn from_f64(x: f64) -> Self {
        let (m, e, sign) = FloatCore::integer_decode(x);
        Self {
            mant: BigInt::from(m) * i32::from(sign),
            exp: i32::from(e),
        }
    }

    fn mul(&self, other: &Dyadic) -> Dyadic {
        Dyadic {
            mant: &self.mant * &other.mant,
            exp: self.exp + other.exp,
        }
    }

    fn sum(terms: &[Dyadic]) -> Dyadic {
        let exp = terms.iter().map(|t| t.exp).min().unwrap_or(0);
        let mant = terms.iter().map(|t| &t.mant << ((t.exp - exp) as usize)).sum();
        Dyadic { mant, exp }
    }

    /// `self / other` rounded once to the nearest f64.
    fn div_to_f64(&self, other: &Dyadic) -> f64 {
        let shift = self.exp - other.exp;
        let (num, den) = if shift >= 0 {
            (&self.mant << (shift as usize), other.mant.clone())
        } else {
            (self.mant.clone(), &other.mant << ((-shift) as usize))
        };
        BigRational::new_raw(num, den)
            .to_f64()
            .expect("ratio of finite values converts")
    }
}

/// Weighted linear combination: `Σ wᵢ·sᵢ(d) / Σ wᵢ` over normalized lists,
/// with `missing_score` for documents a list did not retrieve.
pub fn fuse(lists: &[ScoredList], spec: &FusionSpec) -> Result<ScoredList, FusionError> {
    let first = lists.first().ok_or(FusionError::NoLists)?;
    if spec.weights.len() != lists.len() {
        return Err(FusionError::WeightCount {
            weights: spec.weights.len(),
            lists: lists.len(),
        });
    }
    check_weights(&spec.weights)?;
    let topic_id = first.topic_id;
    if let Some(other) = lists.iter().find(|l| l.topic_id != topic_id) {
        return Err(FusionError::TopicMismatch {
            expected: topic_id,
            got: other.topic_id,
        });
    }

    let normalized = lists
        .iter()
        .map(|l| {
            if l.is_empty() {
                Ok(l.clone())
            } else {
                normalize_scores(l, spec.normalization)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lookups: Vec<HashMap<&str, f64>> = normalized
        .iter()
        .map(|l| l.entries().iter().map(|d| (d.doc_id.as_str(), d.score)).collect())
        .collect();
    let union: BTreeSet<&str> = normalized.iter().flat_map(|l| l.doc_ids()).collect();
    let weights: Vec<Dyadic> = spec.weights.iter().map(|w| Dyadic::from_f64(*w)).collect();
    let weight_sum = Dyadic::sum(&weights);
    let missing = Dyadic::from_f64(spec.missing_score);

    let fused = union.into_iter().map(|doc| {
        let terms: Vec<Dyadic> = lookups
            .iter()
            .zip(&weights)
            .map(|(scores, w)| match scores.get(doc) {
                Some(s) => w.mul(&Dyadic::from_f64(*s)),
                None => w.mul(&missing),
            })
            .collect();
        (doc.to_string(), Dyadic::sum(&terms).div_to_f64(&weight_sum))
    });
    let mut out = ScoredList::from_unsorted(topic_id, fused, "fused").expect("union ids are unique and scores finite");
    out.truncate(spec.cutoff);
    Ok(out)
}

/// Per-topic fusion across runs. `spec.weights` holds one weight per run;
/// for each topic the weights of the runs that contain it are used, which
/// renormalizes over the present lists.
pub fn fuse_runs(runs: &[Run], spec: &FusionSpec, tag: &str) -> Result<Run, FusionError> {
    if runs.is_empty() {
        return Err(FusionError::NoRuns);
    }
    if spec.weights.len() != runs.len() {
        return Err(FusionError::WeightCount {
            weights: spec.weights.len(),
            lists: runs.len(),
        });
    }
    check_weights(&spec.weights)?;
    let mut out = Run::new(tag).map_err(|_| FusionError::NoRuns)?;
    let topics: BTreeSet<u32> = runs.iter().flat_map(|r| r.topics()).collect();
    for topic in topics {
        let (lists, mut weights): (Vec<ScoredList>, Vec<f64>) = runs
            .iter()
            .zip(&spec.weights)
            .filter_map(|(r, w)| r.get(topic).map(|l| (l.clone(), *w)))
            .unzip();
        // Only zero-weight runs cover this topic: fall back to equal weights.
        if !weights.iter().any(|w| *w > 0.0) {
            weights = vec![1.0; weights.len()];
        }
        let fused = fuse(&lists, &spec.with_weights(weights))?;
        out.insert(fused.with_tag(tag));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub value: f64,
    /// `min(depth, max(|a|, |b|))`: the denominator actually used.
    pub effective_depth: usize,
}

/// Fraction of shared documents among the top `depth` of two lists.
///
/// Lists shorter than `depth` shrink the denominator to the longer list's
/// length; two empty lists count as identical.
pub fn rank_overlap(a: &ScoredList, b: &ScoredList, depth: usize) -> Overlap {
    let depth = depth.max(1);
    let effective_depth = depth.min(a.len().max(b.len()));
    if effective_depth == 0 {
        return Overlap {
            value: 1.0,
            effective_depth,
        };
    }
    let top_a: HashSet<&str> = a.doc_ids().take(depth).collect();
    let shared = b.doc_ids().take(depth).filter(|d| top_a.contains(d)).count();
    Overlap {
        value: shared as f64 / effective_depth as f64,
        effective_depth,
    }
}
