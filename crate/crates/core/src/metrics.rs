//! Evaluation metrics: macro F1, ECE, P(accurate, certain), Kendall τ-b,
//! calibration-coverage AUC and budget-curve AUC.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::record::ProbabilityVector;

pub const DEFAULT_BINS: usize = 15;

/// `{0.05, 0.10, …, 0.95, 1.0}`.
pub fn default_coverage_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 20.0).collect()
}

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::validation(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub macro_f1: f64,
    /// `None` for classes neither present nor predicted.
    pub per_class: Vec<Option<f64>>,
}

/// Unweighted mean of one-vs-rest F1 over classes that occur in either list.
pub fn macro_f1(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<F1Report> {
    same_len(pred.len(), truth.len(), "macro_f1")?;
    if pred.is_empty() {
        return Err(Error::validation("macro_f1 on an empty sample"));
    }
    if pred.iter().chain(truth).any(|&y| y >= n_classes) {
        return Err(Error::validation(format!("label outside [0, {n_classes})")));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..n_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            (denom > 0).then(|| 2.0 * tp[c] as f64 / denom as f64)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_f1 = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(F1Report { macro_f1, per_class })
}

fn bin_index(conf: f64, n_bins: usize) -> usize {
    // right-closed bins (i/B, (i+1)/B]
    ((conf * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1
}

/// Expected calibration error over equal-width max-probability bins.
pub fn ece(probs: &[ProbabilityVector], truth: &[usize], n_bins: usize) -> Result<f64> {
    same_len(probs.len(), truth.len(), "ece")?;
    if probs.is_empty() {
        return Err(Error::validation("ece on an empty sample"));
    }
    if n_bins == 0 {
        return Err(Error::validation("ece needs at least one bin"));
    }
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (p, &y) in probs.iter().zip(truth) {
        let conf = p.max();
        let b = bin_index(conf, n_bins);
        count[b] += 1;
        conf_sum[b] += conf;
        hits[b] += usize::from(p.argmax() == y);
    }
    let n = probs.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let m = count[b] as f64;
            (m / n) * (hits[b] as f64 / m - conf_sum[b] / m).abs()
        })
        .sum())
}

/// Fraction of all samples that are both accurate and certain.
pub fn p_accurate_certain(pred: &[usize], truth: &[usize], certain: &[bool]) -> Result<f64> {
    same_len(pred.len(), truth.len(), "p_accurate_certain")?;
    same_len(pred.len(), certain.len(), "p_accurate_certain")?;
    if pred.is_empty() {
        return Err(Error::validation("p_accurate_certain on an empty sample"));
    }
    let hits = pred
        .iter()
        .zip(truth)
        .zip(certain)
        .filter(|((p, t), &c)| c && p == t)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Kendall τ-b in O(n log n): sort by `(x, y)`, count ties, then count
/// discordant pairs as merge-sort inversions in `y`.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x.len(), y.len(), "kendall_tau")?;
    if x.len() < 2 {
        return Err(Error::validation("kendall_tau needs at least 2 samples"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::validation("kendall_tau input contains NaN"));
    }
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |t: u64| t * t.saturating_sub(1) / 2;
    let total = pairs(n as u64);

    let mut tied_x = 0u64;
    let mut tied_xy = 0u64;
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            tied_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let discordant = count_inversions(&mut ys);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    if tied_x == total || tied_y == total {
        return Err(Error::UndefinedCorrelation("one input is constant".into()));
    }
    let numer = total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * discordant as f64;
    let denom = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    Ok((numer / denom).clamp(-1.0, 1.0))
}

/// Sorts `v` ascending, returning the number of strictly inverted pairs.
fn count_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mut buf = v.to_vec();
    let mut inversions = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[j] < v[i] {
                    buf[k] = v[j];
                    inversions += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + end - j].copy_from_slice(&v[j..end]);
            start = end;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    inversions
}

/// ECE after keeping the lowest-EU fraction `c` of samples, for each `c`
/// in `grid`. The cut is tie-inclusive: every sample sharing the EU value of
/// the last retained one is kept too. Grid points with nothing retained are
/// skipped.
pub fn calibration_coverage_curve(
    probs: &[ProbabilityVector],
    truth: &[usize],
    eu: &[f64],
    grid: &[f64],
    n_bins: usize,
) -> Result<Vec<(f64, f64)>> {
    same_len(probs.len(), truth.len(), "aucc")?;
    same_len(probs.len(), eu.len(), "aucc")?;
    if grid.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
        return Err(Error::validation("coverage grid must lie in (0, 1]"));
    }
    if eu.iter().any(|v| v.is_nan()) {
        return Err(Error::validation("EU scores contain NaN"));
    }
    let n = probs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eu[a].total_cmp(&eu[b]).then(a.cmp(&b)));

    let mut curve = Vec::with_capacity(grid.len());
    for &c in grid {
        let mut m = (c * n as f64).round() as usize;
        if m == 0 {
            continue;
        }
        let cut = eu[order[m - 1]];
        while m < n && eu[order[m]] == cut {
            m += 1;
        }
        let kept_p: Vec<ProbabilityVector> = order[..m].iter().map(|&i| probs[i].clone()).collect();
        let kept_y: Vec<usize> = order[..m].iter().map(|&i| truth[i]).collect();
        curve.push((c, ece(&kept_p, &kept_y, n_bins)?));
    }
    Ok(curve)
}

/// Area under the calibration-coverage curve, normalized by the coverage
/// span so the result is in ECE units.
pub fn aucc(probs: &[ProbabilityVector], truth: &[usize], eu: &[f64], grid: &[f64], n_bins: usize) -> Result<f64> {
    let curve = calibration_coverage_curve(probs, truth, eu, grid, n_bins)?;
    match curve.len() {
        0 => Err(Error::validation("no coverage point retained any sample")),
        1 => Ok(curve[0].1),
        _ => normalized_trapezoid(&curve),
    }
}

fn normalized_trapezoid(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::validation("curve needs at least 2 points"));
    }
    if curve.windows(2).any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::validation("curve abscissae must be strictly increasing"));
    }
    let area: f64 = curve.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    Ok(area / (curve[curve.len() - 1].0 - curve[0].0))
}

/// Trapezoidal area under a `(T^A, metric)` curve divided by the budget span.
pub fn budget_auc(curve: &[(f64, f64)]) -> Result<f64> {
    normalized_trapezoid(curve)
}

/// Metric bundle emitted by `eval` and `sweep`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub macro_f1: f64,
    pub per_class_f1: Vec<Option<f64>>,
    pub ece: f64,
    pub p_accurate_certain: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub aucc: Option<f64>,
    /// `(budget, f1, ece, pac)` rows of a budget sweep.
    pub curve: Vec<(f64, f64, f64, f64)>,
    pub int_f1: Option<f64>,
    pub int_ece: Option<f64>,
    pub int_pac: Option<f64>,
}

impl EvalReport {
    /// Fills the integrated metrics from `curve`.
    pub fn integrate_curve(&mut self) -> Result<()> {
        let pick = |f: fn(&(f64, f64, f64, f64)) -> f64| -> Vec<(f64, f64)> {
            self.curve.iter().map(|r| (r.0, f(r))).collect()
        };
        self.int_f1 = Some(budget_auc(&pick(|r| r.1))?);
        self.int_ece = Some(budget_auc(&pick(|r| r.2))?);
        self.int_pac = Some(budget_auc(&pick(|r| r.3))?);
        Ok(())
    }

    /// Machine-readable form. Metrics are fractions; `tau` is reported as
    /// a signed fraction as well.
    pub fn to_json(&self) -> Value {
        json!({
            "f1": self.macro_f1,
            "ece": self.ece,
            "pac": self.p_accurate_certain,
            "tau": self.kendall_tau,
            "aucc": self.aucc,
            "int_f1": self.int_f1,
            "int_ece": self.int_ece,
            "int_pac": self.int_pac,
            "per_class_f1": self.per_class_f1,
            "curve": self.curve.iter().map(|r| json!({
                "budget": r.0, "f1": r.1, "ece": r.2, "pac": r.3
            })).collect::<Vec<_>>(),
        })
    }
}
