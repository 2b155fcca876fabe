//! Calibration subset selection and per-domain threshold calibration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record::FeatureRecord;

/// Default true-positive rate used to place `τ_EU`.
pub const DEFAULT_TPR: f64 = 0.95;

/// A stratified calibration subset. `strata[i]` is the `(class, group)` key
/// of `records[i]`; `source_indices[i]` its position in the source list.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    pub records: Vec<FeatureRecord>,
    pub strata: Vec<(usize, u32)>,
    pub source_indices: Vec<usize>,
}

impl CalibrationSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Proportional allocation of `target` draws over strata of the given sizes,
/// largest-remainder rounding, ties broken by stratum order. When `target`
/// allows it, every non-empty stratum receives at least one draw.
pub fn allocate(sizes: &[usize], target: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| target * s / n).collect();
    let mut rem: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(i, &s)| (target * s % n, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = target - alloc.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(short) {
        alloc[i] += 1;
    }

    let non_empty = sizes.iter().filter(|&&s| s > 0).count();
    if target >= non_empty {
        for i in 0..sizes.len() {
            if sizes[i] > 0 && alloc[i] == 0 {
                let donor = (0..sizes.len())
                    .filter(|&j| alloc[j] > 1)
                    .max_by(|&a, &b| alloc[a].cmp(&alloc[b]).then(b.cmp(&a)))
                    .expect("some stratum holds more than one draw");
                alloc[donor] -= 1;
                alloc[i] = 1;
            }
        }
    }
    alloc
}

/// Draws a calibration subset stratified by `(label, group)`.
pub fn sample_calibration_set(
    records: &[FeatureRecord],
    groups: &[u32],
    target_size: usize,
    seed: u64,
) -> Result<CalibrationSet> {
    if records.is_empty() {
        return Err(Error::validation("cannot draw a calibration set from no records"));
    }
    if groups.len() != records.len() {
        return Err(Error::validation("one group id per record is required"));
    }
    if target_size == 0 || target_size > records.len() {
        return Err(Error::validation(format!(
            "target size {target_size} outside 1..={}",
            records.len()
        )));
    }

    let mut strata: BTreeMap<(usize, u32), Vec<usize>> = BTreeMap::new();
    for (i, (r, &g)) in records.iter().zip(groups).enumerate() {
        let y = r.label.ok_or(Error::LabelsAbsent)?;
        strata.entry((y, g)).or_default().push(i);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let alloc = allocate(&sizes, target_size);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<(usize, (usize, u32))> = Vec::with_capacity(target_size);
    for ((key, members), &take) in strata.iter().zip(&alloc) {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        picked.extend(members.into_iter().take(take).map(|i| (i, *key)));
    }
    picked.sort_unstable_by_key(|&(i, _)| i);

    Ok(CalibrationSet {
        records: picked.iter().map(|&(i, _)| records[i].clone()).collect(),
        strata: picked.iter().map(|&(_, k)| k).collect(),
        source_indices: picked.iter().map(|&(i, _)| i).collect(),
    })
}

/// `τ_EU` as the `⌈tpr·n⌉`-th order statistic of the calibration scores.
pub fn calibrate_tau_eu(eu_scores: &[f64], tpr: f64) -> Result<f64> {
    if eu_scores.is_empty() {
        return Err(Error::validation("no EU scores to calibrate on"));
    }
    if !(tpr > 0.0 && tpr < 1.0) {
        return Err(Error::validation(format!("tpr {tpr} outside (0, 1)")));
    }
    if eu_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("EU scores must be finite"));
    }
    let mut sorted = eu_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // guard against tpr·n landing a hair above an integer
    let k = ((tpr * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[k - 1])
}

/// What the `τ_AU` sweep maximizes over low-EU calibration records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauAuObjective {
    /// `#(accurate ∧ C) − #(inaccurate ∧ C)`.
    #[default]
    Net,
    /// `#(accurate ∧ C)` alone.
    AccurateCertain,
}

impl fmt::Display for TauAuObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TauAuObjective::Net => "net",
            TauAuObjective::AccurateCertain => "accurate-certain",
        })
    }
}

impl FromStr for TauAuObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "net" => Ok(TauAuObjective::Net),
            "accurate-certain" => Ok(TauAuObjective::AccurateCertain),
            other => Err(Error::Parse(format!("unknown tau_au objective {other:?}"))),
        }
    }
}

/// One calibration record as seen by the `τ_AU` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuSample {
    pub entropy: f64,
    pub eu: f64,
    pub accurate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauAuFit {
    pub tau_au: f64,
    pub objective: i64,
    pub n_low_eu: usize,
}

/// Exact sweep of `τ_AU` over the distinct entropies of low-EU records plus
/// `ln C`. A record counts as certain when its entropy is strictly below the
/// candidate. Ties go to the smallest candidate.
pub fn calibrate_tau_au(
    samples: &[AuSample],
    tau_eu: f64,
    n_classes: usize,
    objective: TauAuObjective,
) -> Result<TauAuFit> {
    if n_classes < 2 {
        return Err(Error::validation("need at least 2 classes"));
    }
    let ln_c = (n_classes as f64).ln();
    let mut low: Vec<(f64, bool)> = samples
        .iter()
        .filter(|s| s.eu < tau_eu)
        .map(|s| (s.entropy.clamp(0.0, ln_c), s.accurate))
        .collect();
    if low.is_empty() {
        return Err(Error::UnusableCalibration(format!(
            "no calibration record has EU below tau_eu = {tau_eu}"
        )));
    }
    low.sort_by(|a, b| a.0.total_cmp(&b.0));

    let gain = |accurate: bool| -> i64 {
        match (objective, accurate) {
            (_, true) => 1,
            (TauAuObjective::Net, false) => -1,
            (TauAuObjective::AccurateCertain, false) => 0,
        }
    };

    // Walking the sorted list, the objective at candidate `v` is the running
    // total over all records with entropy < v.
    let mut best = TauAuFit { tau_au: f64::NAN, objective: i64::MIN, n_low_eu: low.len() };
    let mut total = 0i64;
    let mut i = 0;
    while i < low.len() {
        let v = low[i].0;
        if total > best.objective {
            best.tau_au = v;
            best.objective = total;
        }
        while i < low.len() && low[i].0 == v {
            total += gain(low[i].1);
            i += 1;
        }
    }
    // ln C admits every record strictly below it
    let below_ln_c: i64 = low.iter().filter(|s| s.0 < ln_c).map(|s| gain(s.1)).sum();
    if below_ln_c > best.objective {
        best.tau_au = ln_c;
        best.objective = below_ln_c;
    }
    Ok(best)
}
