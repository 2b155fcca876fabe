//! End-to-end fitting and evaluation: per-domain EU banks and thresholds,
//! resolvability banks, per-sample analysis and policy evaluation.

use crate::adaptive::{fuse_predictions, plan_for_policy, CostModel, Policy, QueryCandidate, QueryPlan, RandomPool};
use crate::calibrate::{
    calibrate_tau_au, calibrate_tau_eu, sample_calibration_set, AuSample, TauAuFit, TauAuObjective, DEFAULT_TPR,
};
use crate::distance::{Backend, DistanceBank, GaussianBank, NeighborBank, DEFAULT_K, DEFAULT_SHRINKAGE};
use crate::dynamic::{
    build_resolvability_banks, classify_dynamic_oracle, classify_dynamic_surrogate, surrogate_agreement, Agreement,
    DynamicTag, ResolvabilityBanks, ResolvabilityConfig, SurrogateOutcome,
};
use crate::error::{Error, Result};
use crate::metrics::{aucc, default_coverage_grid, ece, kendall_tau, macro_f1, p_accurate_certain, DEFAULT_BINS};
use crate::record::{check_consistent, Domain, FeatureRecord, ProbabilityVector};
use crate::taxonomy::{classify_static, entropy, StaticLabel, StaticTag, Thresholds};

/// Everything `fit` needs to know.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub backend: Backend,
    pub shrinkage: f64,
    pub k: usize,
    pub unit_norm: bool,
    pub tpr: f64,
    /// Size of the stratified calibration subset; `None` uses every pair.
    pub calibration_size: Option<usize>,
    pub seed: u64,
    pub pca_dims: usize,
    pub tau_au_objective: TauAuObjective,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Mahalanobis,
            shrinkage: DEFAULT_SHRINKAGE,
            k: DEFAULT_K,
            unit_norm: false,
            tpr: DEFAULT_TPR,
            calibration_size: None,
            seed: 0,
            pca_dims: 0,
            tau_au_objective: TauAuObjective::default(),
        }
    }
}

impl FitConfig {
    fn resolvability(&self) -> ResolvabilityConfig {
        ResolvabilityConfig {
            backend: self.backend,
            shrinkage: self.shrinkage,
            k: self.k,
            unit_norm: self.unit_norm,
            pca_dims: self.pca_dims,
        }
    }
}

/// EU bank plus thresholds for one imaging domain.
#[derive(Debug, Clone)]
pub struct DomainModel {
    pub eu_bank: DistanceBank,
    pub thresholds: Thresholds,
}

impl DomainModel {
    pub fn eu_score(&self, record: &FeatureRecord) -> Result<f64> {
        self.eu_bank.score(&record.features)
    }

    pub fn static_label(&self, record: &FeatureRecord) -> Result<StaticLabel> {
        if record.domain != self.thresholds.domain() {
            return Err(Error::validation(format!(
                "{} record scored by the {} model",
                record.domain,
                self.thresholds.domain()
            )));
        }
        classify_static(self.eu_score(record)?, &record.probs, &self.thresholds)
    }
}

/// Diagnostics of one domain's threshold calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainFitSummary {
    pub tau_eu: f64,
    pub tau_au: TauAuFit,
}

/// Fits an EU bank on `records` (per-class centroids, or a neighbor store)
/// and calibrates both thresholds on member scores.
pub fn fit_domain_model(records: &[FeatureRecord], cfg: &FitConfig) -> Result<(DomainModel, DomainFitSummary)> {
    let (_, n_classes) = check_consistent(records)?;
    let domain = records[0].domain;
    if records.iter().any(|r| r.domain != domain) {
        return Err(Error::validation("calibration records mix domains"));
    }
    let labels: Vec<usize> = records.iter().map(|r| r.label.ok_or(Error::LabelsAbsent)).collect::<Result<_>>()?;

    let eu_bank = match cfg.backend {
        Backend::Mahalanobis => {
            let groups: Vec<u32> = labels.iter().map(|&y| y as u32).collect();
            DistanceBank::Gaussian(GaussianBank::fit(records, &groups, cfg.shrinkage)?)
        }
        Backend::Knn => DistanceBank::Neighbor(NeighborBank::new_clamped(records, cfg.k, cfg.unit_norm)?),
    };
    let eu: Vec<f64> = records.iter().map(|r| eu_bank.score_member(&r.features)).collect::<Result<_>>()?;
    let tau_eu = calibrate_tau_eu(&eu, cfg.tpr)?;
    if tau_eu <= 0.0 {
        return Err(Error::UnusableCalibration("calibrated tau_eu is zero".into()));
    }
    let samples: Vec<AuSample> = records
        .iter()
        .zip(&eu)
        .zip(&labels)
        .map(|((r, &e), &y)| AuSample { entropy: entropy(&r.probs), eu: e, accurate: r.predicted() == y })
        .collect();
    let tau_au = calibrate_tau_au(&samples, tau_eu, n_classes, cfg.tau_au_objective)?;
    let thresholds = Thresholds::new(tau_eu, tau_au.tau_au, domain, n_classes)?;
    Ok((DomainModel { eu_bank, thresholds }, DomainFitSummary { tau_eu, tau_au }))
}

/// LI and HI domain models plus the LI resolvability banks.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub n_classes: usize,
    pub li: DomainModel,
    pub hi: DomainModel,
    pub resolvability: ResolvabilityBanks,
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub n_calibration: usize,
    pub li: DomainFitSummary,
    pub hi: DomainFitSummary,
    pub n_uar: usize,
    pub n_uai: usize,
    /// Surrogate vs oracle on the calibration pairs themselves.
    pub calibration_agreement: Agreement,
}

/// Draws a stratified calibration subset from the labeled pairs (the same
/// indices in both domains), fits per-domain models on it and builds the
/// resolvability banks.
pub fn fit_model(li: &[FeatureRecord], hi: &[FeatureRecord], cfg: &FitConfig) -> Result<(FittedModel, FitSummary)> {
    if li.len() != hi.len() {
        return Err(Error::validation(format!("{} LI records but {} HI records", li.len(), hi.len())));
    }
    let (_, c_li) = check_consistent(li)?;
    let (_, c_hi) = check_consistent(hi)?;
    if c_li != c_hi {
        return Err(Error::validation(format!("LI has {c_li} classes, HI has {c_hi}")));
    }
    let target = cfg.calibration_size.unwrap_or(li.len());
    let groups = vec![0u32; li.len()];
    let calib = sample_calibration_set(li, &groups, target, cfg.seed)?;
    let li_cal = calib.records;
    let hi_cal: Vec<FeatureRecord> = calib.source_indices.iter().map(|&i| hi[i].clone()).collect();

    let (li_model, li_sum) = fit_domain_model(&li_cal, cfg)?;
    let (hi_model, hi_sum) = fit_domain_model(&hi_cal, cfg)?;
    let fit = build_resolvability_banks(&li_cal, &hi_cal, &li_model, &hi_model, &cfg.resolvability())?;

    let mut surrogate = Vec::with_capacity(li_cal.len());
    for r in &li_cal {
        let label = li_model.static_label(r)?;
        surrogate.push(classify_dynamic_surrogate(r, &label, &fit.banks)?.label.tag);
    }
    let calibration_agreement = surrogate_agreement(&fit.oracle_tags, &surrogate)?;

    let model = FittedModel { n_classes: c_li, li: li_model, hi: hi_model, resolvability: fit.banks };
    let summary = FitSummary {
        n_calibration: li_cal.len(),
        li: li_sum,
        hi: hi_sum,
        n_uar: fit.n_uar,
        n_uai: fit.n_uai,
        calibration_agreement,
    };
    Ok((model, summary))
}

/// Per-sample view produced by [`analyze`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleAnalysis {
    pub static_li: StaticLabel,
    pub surrogate: SurrogateOutcome,
    /// Raw predictive entropy, defined even for UE samples.
    pub entropy: f64,
    pub static_hi: Option<StaticLabel>,
    pub oracle: Option<DynamicTag>,
}

impl SampleAnalysis {
    pub fn candidate(&self) -> QueryCandidate {
        QueryCandidate {
            tag: self.surrogate.label.tag,
            static_li: self.static_li.tag,
            ranking: self.surrogate.d_uar,
            entropy: self.entropy,
        }
    }
}

/// Static LI labels and surrogate tags for every LI record; with paired HI
/// records, also the HI static labels and oracle tags.
pub fn analyze(model: &FittedModel, li: &[FeatureRecord], hi: Option<&[FeatureRecord]>) -> Result<Vec<SampleAnalysis>> {
    if let Some(hi) = hi {
        if hi.len() != li.len() {
            return Err(Error::validation(format!("{} LI records but {} HI records", li.len(), hi.len())));
        }
    }
    let mut out = Vec::with_capacity(li.len());
    for (i, r) in li.iter().enumerate() {
        if r.n_classes() != model.n_classes {
            return Err(Error::validation(format!("record {i} has {} classes", r.n_classes())));
        }
        let static_li = model.li.static_label(r)?;
        let surrogate = classify_dynamic_surrogate(r, &static_li, &model.resolvability)?;
        let (static_hi, oracle) = match hi {
            Some(hi) => {
                let h = model.hi.static_label(&hi[i])?;
                (Some(h), Some(classify_dynamic_oracle(&static_li, &h).tag))
            }
            None => (None, None),
        };
        out.push(SampleAnalysis { static_li, surrogate, entropy: entropy(&r.probs), static_hi, oracle });
    }
    Ok(out)
}

/// Metrics of one fused prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub plan: QueryPlan,
    pub macro_f1: f64,
    pub ece: f64,
    pub p_accurate_certain: f64,
}

/// Certainty flag of each fused sample: a queried sample is certain iff its
/// HI static tag is C, any other sample iff its LI static tag is C.
pub fn fused_certainty(analyses: &[SampleAnalysis], plan: &QueryPlan) -> Result<Vec<bool>> {
    let mask = plan.mask();
    analyses
        .iter()
        .zip(&mask)
        .enumerate()
        .map(|(i, (a, &queried))| {
            if queried {
                a.static_hi
                    .map(|h| h.is_certain())
                    .ok_or_else(|| Error::validation(format!("no HI analysis for queried sample {i}")))
            } else {
                Ok(a.static_li.is_certain())
            }
        })
        .collect()
}

fn truth_labels(records: &[FeatureRecord]) -> Result<Vec<usize>> {
    records.iter().map(|r| r.label.ok_or(Error::LabelsAbsent)).collect()
}

/// Plans with `policy` at `budget`, fuses LI/HI predictions and scores the
/// result against the LI labels.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    li: &[FeatureRecord],
    hi: &[FeatureRecord],
    analyses: &[SampleAnalysis],
    policy: Policy,
    cost: &CostModel,
    budget: Option<f64>,
    seed: u64,
    pool: RandomPool,
    n_bins: usize,
) -> Result<PolicyOutcome> {
    if li.len() != hi.len() || li.len() != analyses.len() {
        return Err(Error::validation("LI, HI and analyses must have equal lengths"));
    }
    let candidates: Vec<QueryCandidate> = analyses.iter().map(SampleAnalysis::candidate).collect();
    let plan = plan_for_policy(policy, &candidates, cost, budget, seed, pool)?;
    let li_probs: Vec<ProbabilityVector> = li.iter().map(|r| r.probs.clone()).collect();
    let hi_probs: Vec<Option<ProbabilityVector>> = hi.iter().map(|r| Some(r.probs.clone())).collect();
    let fused = fuse_predictions(&li_probs, &hi_probs, &plan)?;
    let truth = truth_labels(li)?;
    let pred: Vec<usize> = fused.probs.iter().map(ProbabilityVector::argmax).collect();
    let certain = fused_certainty(analyses, &plan)?;
    let n_classes = li_probs[0].n_classes();
    Ok(PolicyOutcome {
        macro_f1: macro_f1(&pred, &truth, n_classes)?.macro_f1,
        ece: ece(&fused.probs, &truth, n_bins)?,
        p_accurate_certain: p_accurate_certain(&pred, &truth, &certain)?,
        plan,
    })
}

/// Kendall τ-b between EU scores and raw entropies of one domain.
pub fn eu_au_correlation(model: &DomainModel, records: &[FeatureRecord]) -> Result<f64> {
    let eu: Vec<f64> = records.iter().map(|r| model.eu_score(r)).collect::<Result<_>>()?;
    let au: Vec<f64> = records.iter().map(|r| entropy(&r.probs)).collect();
    kendall_tau(&eu, &au)
}

/// AUCC of one domain's predictions ranked by its EU scores.
pub fn domain_aucc(model: &DomainModel, records: &[FeatureRecord]) -> Result<f64> {
    let eu: Vec<f64> = records.iter().map(|r| model.eu_score(r)).collect::<Result<_>>()?;
    let probs: Vec<ProbabilityVector> = records.iter().map(|r| r.probs.clone()).collect();
    let truth = truth_labels(records)?;
    aucc(&probs, &truth, &eu, &default_coverage_grid(), DEFAULT_BINS)
}

/// Fraction of records per static tag, in `C, UA, UE` order.
pub fn static_tag_fractions(labels: &[StaticLabel]) -> [f64; 3] {
    let n = labels.len().max(1) as f64;
    let count = |t: StaticTag| labels.iter().filter(|l| l.tag == t).count() as f64 / n;
    [count(StaticTag::C), count(StaticTag::Ua), count(StaticTag::Ue)]
}

/// Checks that `hi` pairs with `li` by position and, where both carry
/// coordinates, by coordinate.
pub fn check_pairing(li: &[FeatureRecord], hi: &[FeatureRecord]) -> Result<()> {
    if li.len() != hi.len() {
        return Err(Error::validation(format!("{} LI records but {} HI records", li.len(), hi.len())));
    }
    for (i, (l, h)) in li.iter().zip(hi).enumerate() {
        if l.domain != Domain::Li || h.domain != Domain::Hi {
            return Err(Error::validation(format!("pair {i} is not (LI, HI)")));
        }
        if let (Some(a), Some(b)) = (l.coord, h.coord) {
            if a != b {
                return Err(Error::validation(format!("pair {i} has coords {a:?} vs {b:?}")));
            }
        }
    }
    Ok(())
}
