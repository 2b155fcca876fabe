//! Brute-force reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    let pivot_row = m[col].clone();
                    for (v, p) in m[r].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Group means and the pooled, shrinkage-regularized covariance computed
/// directly from sample moments. Group order follows ascending id.
pub fn pooled_moments(rows: &[Vec<f64>], groups: &[u32], shrinkage: f64) -> (Vec<u32>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = rows[0].len();
    let mut ids: Vec<u32> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let means: Vec<Vec<f64>> = ids
        .iter()
        .map(|&g| {
            let members: Vec<&Vec<f64>> = rows.iter().zip(groups).filter(|(_, &h)| h == g).map(|(r, _)| r).collect();
            (0..d).map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64).collect()
        })
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for (r, g) in rows.iter().zip(groups) {
        let mu = &means[ids.binary_search(g).unwrap()];
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mu[i]) * (r[j] - mu[j]);
            }
        }
    }
    let n = rows.len() as f64;
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += shrinkage * scale;
    }
    (ids, means, cov)
}

/// `min_g sqrt((z − μ_g)ᵀ A (z − μ_g))` with ties to the first group.
pub fn quadratic_form_min(z: &[f64], ids: &[u32], means: &[Vec<f64>], inv: &[Vec<f64>]) -> (f64, u32) {
    let mut best = (f64::INFINITY, u32::MAX);
    for (mu, &id) in means.iter().zip(ids) {
        let diff: Vec<f64> = z.iter().zip(mu).map(|(a, b)| a - b).collect();
        let q: f64 = (0..diff.len())
            .map(|i| (0..diff.len()).map(|j| diff[i] * inv[i][j] * diff[j]).sum::<f64>())
            .sum();
        let s = q.max(0.0).sqrt();
        if s < best.0 {
            best = (s, id);
        }
    }
    best
}

/// k-th smallest Euclidean distance by sorting all distances.
pub fn knn_full_sort(points: &[Vec<f64>], z: &[f64], k: usize) -> f64 {
    let mut d: Vec<f64> = points
        .iter()
        .map(|p| p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    d.sort_by(f64::total_cmp);
    d[k - 1]
}

/// Kendall τ-b by enumerating all pairs.
pub fn kendall_pairs(x: &[f64], y: &[f64]) -> f64 {
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
            let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
            match (a == 0.0, b == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                (false, false) => {
                    if a == b {
                        conc += 1
                    } else {
                        disc += 1
                    }
                }
            }
        }
    }
    let n1 = (conc + disc + tx) as f64;
    let n2 = (conc + disc + ty) as f64;
    (conc - disc) as f64 / (n1 * n2).sqrt()
}

/// Exhaustive `τ_AU` search: every candidate threshold is scored over all
/// low-EU samples from scratch. Returns `(τ, objective)`.
pub fn tau_au_sweep(samples: &[(f64, f64, bool)], tau_eu: f64, ln_c: f64, penalize: bool) -> (f64, i64) {
    let low: Vec<(f64, bool)> = samples.iter().filter(|s| s.1 < tau_eu).map(|s| (s.0, s.2)).collect();
    let mut cands: Vec<f64> = low.iter().map(|s| s.0).collect();
    cands.push(ln_c);
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let mut best = (f64::NAN, i64::MIN);
    for &t in &cands {
        let obj: i64 = low
            .iter()
            .filter(|s| s.0 < t)
            .map(|s| match (s.1, penalize) {
                (true, _) => 1,
                (false, true) => -1,
                (false, false) => 0,
            })
            .sum();
        if obj > best.1 {
            best = (t, obj);
        }
    }
    best
}

/// ECE over right-closed equal-width bins, written from the definition.
pub fn ece_reference(conf_correct: &[(f64, bool)], bins: usize) -> f64 {
    let n = conf_correct.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let members: Vec<&(f64, bool)> =
            conf_correct.iter().filter(|(c, _)| (*c > lo || (b == 0 && *c >= 0.0)) && *c <= hi).collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let acc = members.iter().filter(|x| x.1).count() as f64 / m;
        let conf = members.iter().map(|x| x.0).sum::<f64>() / m;
        total += m / n * (acc - conf).abs();
    }
    total
}
