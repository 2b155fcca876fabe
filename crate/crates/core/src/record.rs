//! Per-sample data: probability vectors, feature records and domain tags.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Tolerance on `|Σp − 1|` for a vector to count as a point of the simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Wider tolerance accepted at ingestion, where values are renormalized.
pub const INGEST_TOLERANCE: f64 = 1e-4;

/// Imaging domain: low-information (fast, degraded) or high-information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Li,
    Hi,
}

impl Domain {
    pub fn as_u8(self) -> u8 {
        match self {
            Domain::Li => 0,
            Domain::Hi => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Domain::Li),
            1 => Ok(Domain::Hi),
            other => Err(Error::validation(format!("unknown domain byte {other}"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Li => "LI",
            Domain::Hi => "HI",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LI" | "li" => Ok(Domain::Li),
            "HI" | "hi" => Ok(Domain::Hi),
            other => Err(Error::Parse(format!("unknown domain {other:?}"))),
        }
    }
}

/// A categorical distribution over `C ≥ 2` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Strict constructor used everywhere scoring happens: no renormalization.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_entries(&probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::validation(format!(
                "probabilities sum to {sum}, not 1 within {SIMPLEX_TOLERANCE}"
            )));
        }
        Ok(Self(probs))
    }

    /// Ingestion constructor: accepts a sum within [`INGEST_TOLERANCE`] and
    /// renormalizes when it is off by more than [`SIMPLEX_TOLERANCE`].
    /// Vectors already on the simplex are kept bit-for-bit.
    pub fn from_ingest(mut probs: Vec<f64>) -> Result<Self> {
        check_entries(&probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > INGEST_TOLERANCE {
            return Err(Error::validation(format!(
                "probabilities sum to {sum}, outside ingestion tolerance {INGEST_TOLERANCE}"
            )));
        }
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            log::warn!("renormalizing probability vector with sum {sum}");
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self(probs))
    }

    /// Renormalizes any non-negative, non-zero vector onto the simplex.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::validation("probability vector needs at least 2 classes"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::validation("weights sum to zero"));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self(weights))
    }

    pub fn one_hot(class: usize, n_classes: usize) -> Result<Self> {
        if class >= n_classes {
            return Err(Error::validation(format!("class {class} out of range {n_classes}")));
        }
        let mut v = vec![0.0; n_classes];
        v[class] = 1.0;
        Self::new(v)
    }

    pub fn uniform(n_classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / n_classes as f64; n_classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_entries(probs: &[f64]) -> Result<()> {
    if probs.len() < 2 {
        return Err(Error::validation("probability vector needs at least 2 classes"));
    }
    for &p in probs {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("probability entry {p} outside [0, 1]")));
        }
    }
    Ok(())
}

/// One sample: latent feature vector plus the model's predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub features: Vec<f64>,
    pub probs: ProbabilityVector,
    pub label: Option<usize>,
    pub coord: Option<(u32, u32)>,
    pub domain: Domain,
}

impl FeatureRecord {
    pub fn new(features: Vec<f64>, probs: ProbabilityVector, domain: Domain) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::validation("feature vector must be non-empty"));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::validation("feature vector contains non-finite values"));
        }
        Ok(Self { features, probs, label: None, coord: None, domain })
    }

    pub fn with_label(mut self, label: usize) -> Result<Self> {
        if label >= self.probs.n_classes() {
            return Err(Error::validation(format!(
                "label {label} out of range for {} classes",
                self.probs.n_classes()
            )));
        }
        self.label = Some(label);
        Ok(self)
    }

    pub fn with_coord(mut self, row: u32, col: u32) -> Self {
        self.coord = Some((row, col));
        self
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.n_classes()
    }

    pub fn predicted(&self) -> usize {
        self.probs.argmax()
    }

    /// `Some(true)` when the argmax prediction matches the label.
    pub fn is_accurate(&self) -> Option<bool> {
        self.label.map(|y| y == self.predicted())
    }
}

/// Checks that all records share one feature dimension and class count,
/// returning `(d, C)`.
pub fn check_consistent(records: &[FeatureRecord]) -> Result<(usize, usize)> {
    let first = records
        .first()
        .ok_or_else(|| Error::validation("record list is empty"))?;
    let (d, c) = (first.dim(), first.n_classes());
    for (i, r) in records.iter().enumerate() {
        if r.dim() != d {
            return Err(Error::validation(format!(
                "record {i} has dimension {}, expected {d}",
                r.dim()
            )));
        }
        if r.n_classes() != c {
            return Err(Error::validation(format!(
                "record {i} has {} classes, expected {c}",
                r.n_classes()
            )));
        }
    }
    Ok((d, c))
}
