//! Dynamic four-way taxonomy over paired low/high-information samples.
//!
//! With both views of a sample available, a static-UA sample at LI is
//! *resolvable* (UAR) when the HI view is certain and *irresolvable* (UAI)
//! otherwise. At test time only the LI view exists, so the split is
//! approximated by proximity to LI prototypes of each resolvability class,
//! built from calibration pairs where the oracle could be evaluated.

use std::fmt;
use std::str::FromStr;

use crate::distance::{Backend, DistanceBank, GaussianBank, NeighborBank, PcaProjector};
use crate::error::{Error, Result};
use crate::pipeline::DomainModel;
use crate::record::{check_consistent, Domain, FeatureRecord};
use crate::taxonomy::{StaticLabel, StaticTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DynamicTag {
    C,
    Uar,
    Uai,
    Ue,
}

impl DynamicTag {
    pub const ALL: [DynamicTag; 4] = [DynamicTag::C, DynamicTag::Uar, DynamicTag::Uai, DynamicTag::Ue];

    pub fn as_str(self) -> &'static str {
        match self {
            DynamicTag::C => "C",
            DynamicTag::Uar => "UAR",
            DynamicTag::Uai => "UAI",
            DynamicTag::Ue => "UE",
        }
    }
}

impl fmt::Display for DynamicTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DynamicTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C" => Ok(DynamicTag::C),
            "UAR" => Ok(DynamicTag::Uar),
            "UAI" => Ok(DynamicTag::Uai),
            "UE" => Ok(DynamicTag::Ue),
            other => Err(Error::Parse(format!("unknown dynamic tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Oracle,
    Surrogate,
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::Oracle => "oracle",
            LabelSource::Surrogate => "surrogate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DynamicLabel {
    pub tag: DynamicTag,
    pub source: LabelSource,
}

/// Oracle taxonomy from the static labels of both views. The HI label only
/// matters when the LI label is UA.
pub fn classify_dynamic_oracle(li_label: &StaticLabel, hi_label: &StaticLabel) -> DynamicLabel {
    let tag = match (li_label.tag, hi_label.tag) {
        (StaticTag::C, _) => DynamicTag::C,
        (StaticTag::Ue, _) => DynamicTag::Ue,
        (StaticTag::Ua, StaticTag::C) => DynamicTag::Uar,
        (StaticTag::Ua, _) => DynamicTag::Uai,
    };
    DynamicLabel { tag, source: LabelSource::Oracle }
}

/// How the resolvability prototypes are fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvabilityConfig {
    pub backend: Backend,
    pub shrinkage: f64,
    pub k: usize,
    pub unit_norm: bool,
    /// Number of principal components kept before distances; 0 disables.
    pub pca_dims: usize,
}

impl Default for ResolvabilityConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Mahalanobis,
            shrinkage: crate::distance::DEFAULT_SHRINKAGE,
            k: crate::distance::DEFAULT_K,
            unit_norm: false,
            pca_dims: 0,
        }
    }
}

/// LI-domain prototypes of the resolvable and irresolvable partitions.
#[derive(Debug, Clone)]
pub struct ResolvabilityBanks {
    pub uar: DistanceBank,
    pub uai: DistanceBank,
    pub projector: Option<PcaProjector>,
}

impl ResolvabilityBanks {
    pub fn new(uar: DistanceBank, uai: DistanceBank, projector: Option<PcaProjector>) -> Result<Self> {
        if uar.backend() != uai.backend() {
            return Err(Error::validation("resolvability banks must share a backend"));
        }
        if uar.dim() != uai.dim() {
            return Err(Error::validation("resolvability banks must share a dimension"));
        }
        if let Some(p) = &projector {
            if p.output_dim() != uar.dim() {
                return Err(Error::validation("projector output does not match bank dimension"));
            }
        }
        Ok(Self { uar, uai, projector })
    }

    pub fn backend(&self) -> Backend {
        self.uar.backend()
    }

    /// Feature dimension expected from LI records.
    pub fn input_dim(&self) -> usize {
        self.projector.as_ref().map_or(self.uar.dim(), PcaProjector::input_dim)
    }

    /// `(d(z; UAR), d(z; UAI))`.
    pub fn distances(&self, z: &[f64]) -> Result<(f64, f64)> {
        let projected;
        let z = match &self.projector {
            Some(p) => {
                projected = p.project(z)?;
                &projected[..]
            }
            None => z,
        };
        Ok((self.uar.score(z)?, self.uai.score(z)?))
    }
}

/// Oracle tags and partition sizes observed while building the banks.
#[derive(Debug, Clone)]
pub struct ResolvabilityFit {
    pub banks: ResolvabilityBanks,
    pub oracle_tags: Vec<DynamicTag>,
    pub n_uar: usize,
    pub n_uai: usize,
}

/// Runs the static taxonomy on both views of each calibration pair, the
/// oracle on the result, and fits one prototype bank per resolvability class
/// on the LI features.
///
/// Mahalanobis banks get one centroid per partition with a covariance pooled
/// over both partitions; KNN banks store the raw points with `k` clamped to
/// the partition size.
pub fn build_resolvability_banks(
    li: &[FeatureRecord],
    hi: &[FeatureRecord],
    li_model: &DomainModel,
    hi_model: &DomainModel,
    cfg: &ResolvabilityConfig,
) -> Result<ResolvabilityFit> {
    if li.len() != hi.len() {
        return Err(Error::validation(format!("{} LI records but {} HI records", li.len(), hi.len())));
    }
    check_consistent(li)?;
    check_consistent(hi)?;
    if li.iter().any(|r| r.domain != Domain::Li) || hi.iter().any(|r| r.domain != Domain::Hi) {
        return Err(Error::validation("calibration pairs must be (LI, HI) records"));
    }

    let mut oracle_tags = Vec::with_capacity(li.len());
    for (l, h) in li.iter().zip(hi) {
        let ls = li_model.static_label(l)?;
        let hs = hi_model.static_label(h)?;
        oracle_tags.push(classify_dynamic_oracle(&ls, &hs).tag);
    }

    let projector = match cfg.pca_dims {
        0 => None,
        m => Some(PcaProjector::fit(li, m)?),
    };
    let feats = |r: &FeatureRecord| -> Result<Vec<f64>> {
        match &projector {
            Some(p) => p.project(&r.features),
            None => Ok(r.features.clone()),
        }
    };

    let mut uar_rows = Vec::new();
    let mut uai_rows = Vec::new();
    for (r, tag) in li.iter().zip(&oracle_tags) {
        match tag {
            DynamicTag::Uar => uar_rows.push(feats(r)?),
            DynamicTag::Uai => uai_rows.push(feats(r)?),
            _ => {}
        }
    }
    let (n_uar, n_uai) = (uar_rows.len(), uai_rows.len());
    if n_uar < 2 || n_uai < 2 {
        return Err(Error::DegenerateTaxonomy(format!(
            "calibration pairs yield {n_uar} UAR and {n_uai} UAI samples; at least 2 of each are needed"
        )));
    }

    let (uar, uai) = match cfg.backend {
        Backend::Mahalanobis => {
            let groups: Vec<u32> = std::iter::repeat_n(0, n_uar).chain(std::iter::repeat_n(1, n_uai)).collect();
            let rows: Vec<Vec<f64>> = uar_rows.into_iter().chain(uai_rows).collect();
            let both = GaussianBank::fit(&rows, &groups, cfg.shrinkage)?;
            (
                DistanceBank::Gaussian(both.restrict_to(0)?),
                DistanceBank::Gaussian(both.restrict_to(1)?),
            )
        }
        Backend::Knn => (
            DistanceBank::Neighbor(NeighborBank::new_clamped(&uar_rows, cfg.k, cfg.unit_norm)?),
            DistanceBank::Neighbor(NeighborBank::new_clamped(&uai_rows, cfg.k, cfg.unit_norm)?),
        ),
    };

    Ok(ResolvabilityFit {
        banks: ResolvabilityBanks::new(uar, uai, projector)?,
        oracle_tags,
        n_uar,
        n_uai,
    })
}

/// Surrogate label plus the distances used to reach it. `d_uar` is the
/// ranking score for budgeted querying; both are absent unless the LI
/// label is UA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateOutcome {
    pub label: DynamicLabel,
    pub d_uar: Option<f64>,
    pub d_uai: Option<f64>,
}

/// Blind LI-only approximation of the oracle. UA samples go to UAR only when
/// strictly closer to the UAR prototypes; ties stay UAI and are not queried.
pub fn classify_dynamic_surrogate(
    li_record: &FeatureRecord,
    li_label: &StaticLabel,
    banks: &ResolvabilityBanks,
) -> Result<SurrogateOutcome> {
    if li_record.domain != Domain::Li {
        return Err(Error::validation("surrogate classification requires an LI record"));
    }
    let fixed = |tag| SurrogateOutcome {
        label: DynamicLabel { tag, source: LabelSource::Surrogate },
        d_uar: None,
        d_uai: None,
    };
    match li_label.tag {
        StaticTag::C => Ok(fixed(DynamicTag::C)),
        StaticTag::Ue => Ok(fixed(DynamicTag::Ue)),
        StaticTag::Ua => {
            let (d_uar, d_uai) = banks.distances(&li_record.features)?;
            let tag = if d_uar < d_uai { DynamicTag::Uar } else { DynamicTag::Uai };
            Ok(SurrogateOutcome {
                label: DynamicLabel { tag, source: LabelSource::Surrogate },
                d_uar: Some(d_uar),
                d_uai: Some(d_uai),
            })
        }
    }
}

/// Per-tag F1 between oracle and surrogate over samples the oracle tags
/// UAR or UAI. A tag with neither support nor predictions has no F1 and is
/// left out of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub f1_uar: Option<f64>,
    pub f1_uai: Option<f64>,
    pub mean_f1: Option<f64>,
    pub n_evaluated: usize,
}

pub fn surrogate_agreement(oracle: &[DynamicTag], surrogate: &[DynamicTag]) -> Result<Agreement> {
    if oracle.len() != surrogate.len() {
        return Err(Error::validation(format!(
            "{} oracle labels vs {} surrogate labels",
            oracle.len(),
            surrogate.len()
        )));
    }
    let kept: Vec<(DynamicTag, DynamicTag)> = oracle
        .iter()
        .zip(surrogate)
        .filter(|(o, _)| matches!(o, DynamicTag::Uar | DynamicTag::Uai))
        .map(|(&o, &s)| (o, s))
        .collect();
    let f1 = |tag: DynamicTag| -> Option<f64> {
        let tp = kept.iter().filter(|(o, s)| *o == tag && *s == tag).count();
        let fp = kept.iter().filter(|(o, s)| *o != tag && *s == tag).count();
        let fn_ = kept.iter().filter(|(o, s)| *o == tag && *s != tag).count();
        let denom = 2 * tp + fp + fn_;
        (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
    };
    let (f1_uar, f1_uai) = (f1(DynamicTag::Uar), f1(DynamicTag::Uai));
    let defined: Vec<f64> = [f1_uar, f1_uai].into_iter().flatten().collect();
    let mean_f1 = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(Agreement { f1_uar, f1_uai, mean_f1, n_evaluated: kept.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::GaussianBank;
    use crate::record::ProbabilityVector;
    use nalgebra::DMatrix;

    fn sl(tag: StaticTag) -> StaticLabel {
        StaticLabel { tag, eu_score: 0.0, au_score: (tag != StaticTag::Ue).then_some(0.0) }
    }

    #[test]
    fn oracle_truth_table() {
        use StaticTag::*;
        for hi in [C, Ua, Ue] {
            assert_eq!(classify_dynamic_oracle(&sl(C), &sl(hi)).tag, DynamicTag::C);
            assert_eq!(classify_dynamic_oracle(&sl(Ue), &sl(hi)).tag, DynamicTag::Ue);
        }
        assert_eq!(classify_dynamic_oracle(&sl(Ua), &sl(C)).tag, DynamicTag::Uar);
        assert_eq!(classify_dynamic_oracle(&sl(Ua), &sl(Ua)).tag, DynamicTag::Uai);
        assert_eq!(classify_dynamic_oracle(&sl(Ua), &sl(Ue)).tag, DynamicTag::Uai);
    }

    fn point_banks() -> ResolvabilityBanks {
        let g = GaussianBank::from_covariance(vec![0, 1], vec![vec![0.0, 0.0], vec![4.0, 0.0]], &DMatrix::identity(2, 2))
            .unwrap();
        ResolvabilityBanks::new(
            DistanceBank::Gaussian(g.restrict_to(0).unwrap()),
            DistanceBank::Gaussian(g.restrict_to(1).unwrap()),
            None,
        )
        .unwrap()
    }

    fn li(z: Vec<f64>) -> FeatureRecord {
        FeatureRecord::new(z, ProbabilityVector::uniform(2).unwrap(), Domain::Li).unwrap()
    }

    #[test]
    fn surrogate_passes_through_c_and_ue() {
        let banks = point_banks();
        // wrong-dimension features prove the banks are never consulted
        let r = li(vec![1.0]);
        let c = classify_dynamic_surrogate(&r, &sl(StaticTag::C), &banks).unwrap();
        assert_eq!(c.label.tag, DynamicTag::C);
        assert_eq!(c.d_uar, None);
        let ue = classify_dynamic_surrogate(&r, &sl(StaticTag::Ue), &banks).unwrap();
        assert_eq!(ue.label.tag, DynamicTag::Ue);
    }

    #[test]
    fn surrogate_distances_and_ties() {
        let banks = point_banks();
        let at_uar = classify_dynamic_surrogate(&li(vec![0.0, 0.0]), &sl(StaticTag::Ua), &banks).unwrap();
        assert_eq!(at_uar.label.tag, DynamicTag::Uar);
        assert_eq!(at_uar.d_uar, Some(0.0));
        let tie = classify_dynamic_surrogate(&li(vec![2.0, 1.0]), &sl(StaticTag::Ua), &banks).unwrap();
        assert_eq!(tie.label.tag, DynamicTag::Uai);
    }

    #[test]
    fn surrogate_rejects_hi_records() {
        let mut r = li(vec![0.0, 0.0]);
        r.domain = Domain::Hi;
        assert!(classify_dynamic_surrogate(&r, &sl(StaticTag::Ua), &point_banks()).is_err());
    }

    #[test]
    fn agreement_extremes() {
        use DynamicTag::*;
        let tags = vec![Uar, Uai, C, Ue, Uar];
        let a = surrogate_agreement(&tags, &tags).unwrap();
        assert_eq!(a.mean_f1, Some(1.0));
        assert_eq!(a.n_evaluated, 3);

        let all_uar = vec![Uar; 6];
        let all_uai = vec![Uai; 6];
        let b = surrogate_agreement(&all_uar, &all_uai).unwrap();
        assert_eq!(b.f1_uar, Some(0.0));
        assert_eq!(b.f1_uai, Some(0.0));
        assert_eq!(b.mean_f1, Some(0.0));

        assert!(surrogate_agreement(&all_uar, &all_uai[..5]).is_err());
    }
}
