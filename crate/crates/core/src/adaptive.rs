//! Budgeted selection of samples for high-information re-imaging and fusion
//! of the two prediction streams.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamic::DynamicTag;
use crate::error::{Error, Result};
use crate::record::{Domain, ProbabilityVector};
use crate::taxonomy::StaticTag;

/// Imaging cost of a full LI pass and of a full HI pass, in arbitrary units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    t_li: f64,
    t_hi: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { t_li: 1.0, t_hi: 250.0 }
    }
}

impl CostModel {
    pub fn new(t_li: f64, t_hi: f64) -> Result<Self> {
        if !(t_li.is_finite() && t_li > 0.0 && t_hi.is_finite() && t_hi > 0.0) {
            return Err(Error::validation("imaging costs must be positive and finite"));
        }
        if t_hi < t_li {
            return Err(Error::validation(format!("t_hi = {t_hi} is below t_li = {t_li}")));
        }
        Ok(Self { t_li, t_hi })
    }

    pub fn t_li(&self) -> f64 {
        self.t_li
    }

    pub fn t_hi(&self) -> f64 {
        self.t_hi
    }

    /// `T^A = T^L + ρ·T^H` for a queried fraction `ρ`.
    pub fn adaptive_cost(&self, rho: f64) -> f64 {
        self.t_li + rho * self.t_hi
    }

    /// Cost of querying `n_selected` out of `n_total` samples.
    pub fn realized(&self, n_selected: usize, n_total: usize) -> f64 {
        self.t_li + (n_selected as f64 * self.t_hi) / n_total as f64
    }

    /// Largest query count whose realized cost stays within `budget`.
    pub fn max_queries(&self, budget: f64, n_total: usize) -> usize {
        if budget < self.t_li || n_total == 0 {
            return 0;
        }
        let approx = ((budget - self.t_li) * n_total as f64 / self.t_hi).floor();
        let mut k = approx.clamp(0.0, n_total as f64) as usize;
        while k > 0 && self.realized(k, n_total) > budget {
            k -= 1;
        }
        while k < n_total && self.realized(k + 1, n_total) <= budget {
            k += 1;
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    Ok,
    /// The budget does not even cover the LI pass; nothing is queried.
    BudgetBelowLiCost,
}

/// Samples chosen for HI re-imaging, in query order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub selected: Vec<usize>,
    pub ranking_scores: Vec<f64>,
    pub realized_cost: f64,
    pub budget: Option<f64>,
    pub n_total: usize,
    pub status: PlanStatus,
}

impl QueryPlan {
    pub fn queried_fraction(&self) -> f64 {
        self.selected.len() as f64 / self.n_total as f64
    }

    /// Membership mask over all `n_total` samples.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_total];
        for &i in &self.selected {
            m[i] = true;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    #[default]
    FineGrained,
    Random,
    MaxAu,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::FineGrained, Policy::MaxAu, Policy::Random];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::FineGrained => "finegrained",
            Policy::Random => "random",
            Policy::MaxAu => "maxau",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finegrained" => Ok(Policy::FineGrained),
            "random" => Ok(Policy::Random),
            "maxau" => Ok(Policy::MaxAu),
            other => Err(Error::Parse(format!("unknown policy {other:?}"))),
        }
    }
}

/// Which samples the random baseline may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RandomPool {
    #[default]
    All,
    Ua,
}

impl fmt::Display for RandomPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RandomPool::All => "all",
            RandomPool::Ua => "ua",
        })
    }
}

impl FromStr for RandomPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(RandomPool::All),
            "ua" => Ok(RandomPool::Ua),
            other => Err(Error::Parse(format!("unknown random pool {other:?}"))),
        }
    }
}

/// What the query policies need to know about one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryCandidate {
    pub tag: DynamicTag,
    pub static_li: StaticTag,
    /// Distance to the UAR prototypes; required for UAR samples.
    pub ranking: Option<f64>,
    pub entropy: f64,
}

fn check_budget(budget: Option<f64>) -> Result<()> {
    match budget {
        Some(b) if !b.is_finite() || b < 0.0 => Err(Error::validation(format!("invalid budget {b}"))),
        _ => Ok(()),
    }
}

/// Takes the longest prefix of `ranked` (already in query order) that the
/// budget allows.
fn plan_prefix(ranked: Vec<(usize, f64)>, n_total: usize, cost: &CostModel, budget: Option<f64>) -> Result<QueryPlan> {
    check_budget(budget)?;
    if n_total == 0 {
        return Err(Error::validation("no samples to plan over"));
    }
    let (take, status) = match budget {
        None => (ranked.len(), PlanStatus::Ok),
        Some(b) if b < cost.t_li() => {
            log::warn!("budget {b} is below the LI pass cost {}; no queries issued", cost.t_li());
            (0, PlanStatus::BudgetBelowLiCost)
        }
        Some(b) => (ranked.len().min(cost.max_queries(b, n_total)), PlanStatus::Ok),
    };
    let (selected, ranking_scores): (Vec<usize>, Vec<f64>) = ranked.into_iter().take(take).unzip();
    Ok(QueryPlan {
        realized_cost: cost.realized(selected.len(), n_total),
        selected,
        ranking_scores,
        budget,
        n_total,
        status,
    })
}

/// Fine-grained policy: UAR samples in ascending distance to the UAR
/// prototypes, cut at the budget. Equal scores keep index order.
pub fn select_queries(candidates: &[QueryCandidate], cost: &CostModel, budget: Option<f64>) -> Result<QueryPlan> {
    let mut ranked = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if c.tag != DynamicTag::Uar {
            continue;
        }
        match c.ranking {
            Some(s) if s.is_finite() => ranked.push((i, s)),
            _ => return Err(Error::validation(format!("UAR sample {i} lacks a finite ranking score"))),
        }
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    plan_prefix(ranked, candidates.len(), cost, budget)
}

/// Random baseline: a seeded uniform draw without replacement. Ranking
/// scores are the draw positions.
pub fn baseline_random(
    candidates: &[QueryCandidate],
    cost: &CostModel,
    budget: Option<f64>,
    seed: u64,
    pool: RandomPool,
) -> Result<QueryPlan> {
    let mut eligible: Vec<usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| pool == RandomPool::All || c.static_li == StaticTag::Ua)
        .map(|(i, _)| i)
        .collect();
    eligible.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let ranked = eligible.into_iter().enumerate().map(|(pos, i)| (i, pos as f64)).collect();
    plan_prefix(ranked, candidates.len(), cost, budget)
}

/// Max-AU baseline: static-UA samples by descending entropy. Ranking scores
/// are negated entropies so they ascend in query order.
pub fn baseline_max_au(candidates: &[QueryCandidate], cost: &CostModel, budget: Option<f64>) -> Result<QueryPlan> {
    let mut ranked: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.static_li == StaticTag::Ua)
        .map(|(i, c)| (i, -c.entropy))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    plan_prefix(ranked, candidates.len(), cost, budget)
}

/// Dispatches to the policy's planner.
pub fn plan_for_policy(
    policy: Policy,
    candidates: &[QueryCandidate],
    cost: &CostModel,
    budget: Option<f64>,
    seed: u64,
    pool: RandomPool,
) -> Result<QueryPlan> {
    match policy {
        Policy::FineGrained => select_queries(candidates, cost, budget),
        Policy::Random => baseline_random(candidates, cost, budget, seed, pool),
        Policy::MaxAu => baseline_max_au(candidates, cost, budget),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedPrediction {
    pub probs: Vec<ProbabilityVector>,
    pub provenance: Vec<Domain>,
}

/// HI prediction for planned samples, LI prediction for the rest.
pub fn fuse_predictions(
    li_probs: &[ProbabilityVector],
    hi_probs: &[Option<ProbabilityVector>],
    plan: &QueryPlan,
) -> Result<FusedPrediction> {
    if plan.n_total != li_probs.len() {
        return Err(Error::validation(format!(
            "plan covers {} samples but {} LI predictions were given",
            plan.n_total,
            li_probs.len()
        )));
    }
    let mut probs = li_probs.to_vec();
    let mut provenance = vec![Domain::Li; li_probs.len()];
    for &i in &plan.selected {
        let hi = hi_probs
            .get(i)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::validation(format!("no HI prediction for queried sample {i}")))?;
        if hi.n_classes() != probs[i].n_classes() {
            return Err(Error::validation(format!("class count mismatch at sample {i}")));
        }
        probs[i] = hi.clone();
        provenance[i] = Domain::Hi;
    }
    Ok(FusedPrediction { probs, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uar(score: f64) -> QueryCandidate {
        QueryCandidate { tag: DynamicTag::Uar, static_li: StaticTag::Ua, ranking: Some(score), entropy: 1.0 }
    }

    fn certain() -> QueryCandidate {
        QueryCandidate { tag: DynamicTag::C, static_li: StaticTag::C, ranking: None, entropy: 0.0 }
    }

    #[test]
    fn fifty_unit_budget_cost_point() {
        let cost = CostModel::new(1.0, 250.0).unwrap();
        assert_eq!(cost.adaptive_cost(0.196), 50.0);
        assert_eq!(cost.realized(196, 1000), 50.0);
        assert_eq!(cost.max_queries(50.0, 1000), 196);
    }

    #[test]
    fn cost_model_validation() {
        assert!(CostModel::new(2.0, 1.0).is_err());
        assert!(CostModel::new(0.0, 1.0).is_err());
    }

    #[test]
    fn budget_equal_to_li_cost_queries_nothing() {
        let cands = vec![uar(1.0), uar(2.0), certain()];
        let plan = select_queries(&cands, &CostModel::default(), Some(1.0)).unwrap();
        assert!(plan.selected.is_empty());
        assert_eq!(plan.realized_cost, 1.0);
        assert_eq!(plan.status, PlanStatus::Ok);

        let below = select_queries(&cands, &CostModel::default(), Some(0.5)).unwrap();
        assert!(below.selected.is_empty());
        assert_eq!(below.status, PlanStatus::BudgetBelowLiCost);
        assert!(select_queries(&cands, &CostModel::default(), Some(-1.0)).is_err());
    }

    #[test]
    fn sort_and_prefix() {
        let mut cands: Vec<_> = [3.0, 1.0, 4.0, 1.5, 9.0].iter().map(|&s| uar(s)).collect();
        cands.extend(std::iter::repeat_n(certain(), 5));
        // 10 samples, T^H = 10 → each query costs 1; budget 3 allows 2
        let cost = CostModel::new(1.0, 10.0).unwrap();
        let plan = select_queries(&cands, &cost, Some(3.0)).unwrap();
        assert_eq!(plan.selected, vec![1, 3]);
        assert_eq!(plan.ranking_scores, vec![1.0, 1.5]);
        assert_eq!(plan.realized_cost, 3.0);

        let all = select_queries(&cands, &cost, None).unwrap();
        assert_eq!(all.selected, vec![1, 3, 0, 2, 4]);
    }

    #[test]
    fn uar_without_score_rejected() {
        let mut c = uar(0.0);
        c.ranking = None;
        assert!(select_queries(&[c], &CostModel::default(), None).is_err());
    }

    #[test]
    fn max_au_picks_highest_entropy() {
        let cands: Vec<_> = [0.3, 1.7, 0.9]
            .iter()
            .map(|&e| QueryCandidate { tag: DynamicTag::Uai, static_li: StaticTag::Ua, ranking: None, entropy: e })
            .collect();
        // 3 samples, T^H = 3 → one query per unit above T^L
        let cost = CostModel::new(1.0, 3.0).unwrap();
        let plan = baseline_max_au(&cands, &cost, Some(2.0)).unwrap();
        assert_eq!(plan.selected, vec![1]);
        let sat = baseline_max_au(&cands, &cost, Some(100.0)).unwrap();
        assert_eq!(sat.selected.len(), 3);
    }

    #[test]
    fn random_is_seed_deterministic_and_saturates() {
        let cands: Vec<_> = (0..50).map(|i| if i % 2 == 0 { uar(i as f64) } else { certain() }).collect();
        let cost = CostModel::new(1.0, 50.0).unwrap();
        let a = baseline_random(&cands, &cost, Some(11.0), 7, RandomPool::All).unwrap();
        let b = baseline_random(&cands, &cost, Some(11.0), 7, RandomPool::All).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.selected.len(), 10);
        let ua = baseline_random(&cands, &cost, Some(1e9), 7, RandomPool::Ua).unwrap();
        assert_eq!(ua.selected.len(), 25);
        assert!(ua.selected.iter().all(|i| i % 2 == 0));
    }

    #[test]
    fn fusion_extremes_and_mix() {
        let li: Vec<_> = (0..10).map(|_| ProbabilityVector::new(vec![0.6, 0.4]).unwrap()).collect();
        let hi: Vec<_> = (0..10).map(|_| Some(ProbabilityVector::new(vec![0.1, 0.9]).unwrap())).collect();
        let mut plan = QueryPlan {
            selected: vec![],
            ranking_scores: vec![],
            realized_cost: 1.0,
            budget: None,
            n_total: 10,
            status: PlanStatus::Ok,
        };
        assert_eq!(fuse_predictions(&li, &hi, &plan).unwrap().probs, li);

        plan.selected = (0..10).collect();
        let all = fuse_predictions(&li, &hi, &plan).unwrap();
        assert!(all.probs.iter().zip(&hi).all(|(p, h)| Some(p) == h.as_ref()));

        plan.selected = vec![0, 2, 4, 6, 8];
        let half = fuse_predictions(&li, &hi, &plan).unwrap();
        for i in 0..10 {
            let want = if i % 2 == 0 { hi[i].clone().unwrap() } else { li[i].clone() };
            assert_eq!(half.probs[i], want);
            assert_eq!(half.provenance[i] == Domain::Hi, i % 2 == 0);
        }

        let mut missing = hi.clone();
        missing[4] = None;
        assert!(fuse_predictions(&li, &missing, &plan).is_err());
    }
}
