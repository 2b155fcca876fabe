//! Latent-space distance backends.
//!
//! Two ways of measuring how far a feature vector sits from a reference set:
//! the Mahalanobis distance to the nearest group centroid under one pooled,
//! shrinkage-regularized covariance ([`GaussianBank`]), and the exact
//! Euclidean distance to the k-th nearest stored point ([`NeighborBank`]).
//! [`PcaProjector`] optionally reduces features before either backend.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::record::FeatureRecord;

/// Default covariance shrinkage, relative to the mean variance `trace(Σ)/d`.
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

/// Default neighbor rank for the KNN backend.
pub const DEFAULT_K: usize = 100;

impl AsRef<[f64]> for FeatureRecord {
    fn as_ref(&self) -> &[f64] {
        &self.features
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Mahalanobis,
    Knn,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Mahalanobis => "mahalanobis",
            Backend::Knn => "knn",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mahalanobis" | "md" => Ok(Backend::Mahalanobis),
            "knn" => Ok(Backend::Knn),
            other => Err(Error::Parse(format!("unknown backend {other:?}"))),
        }
    }
}

fn check_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<usize> {
    let d = rows
        .first()
        .ok_or_else(|| Error::validation("no feature vectors supplied"))?
        .as_ref()
        .len();
    if d == 0 {
        return Err(Error::validation("feature dimension must be positive"));
    }
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != d {
            return Err(Error::validation(format!("row {i} has dimension {}, expected {d}", r.len())));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(format!("row {i} contains non-finite values")));
        }
    }
    Ok(d)
}

/// Class centroids sharing one pooled covariance.
#[derive(Debug, Clone)]
pub struct GaussianBank {
    dim: usize,
    group_ids: Vec<u32>,
    means: Vec<Vec<f64>>,
    cov_inv: DMatrix<f64>,
    // Upper-triangular W, row-major, with WᵀW = Σ⁻¹, so MD(z, μ) = ‖Wz − Wμ‖.
    whiten: Vec<f64>,
    whitened_means: Vec<Vec<f64>>,
}

impl GaussianBank {
    /// Fits per-group means and a covariance pooled over all groups with
    /// class-conditional centering, regularized as `Σ + λ·(trace(Σ)/d)·I`.
    ///
    /// When every group has zero spread the trace is zero; the scale then
    /// falls back to 1 so the regularized covariance is `λ·I`.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], groups: &[u32], shrinkage: f64) -> Result<Self> {
        let d = check_rows(rows)?;
        if groups.len() != rows.len() {
            return Err(Error::validation(format!(
                "{} group ids for {} rows",
                groups.len(),
                rows.len()
            )));
        }
        if !(0.0..1.0).contains(&shrinkage) {
            return Err(Error::validation(format!("shrinkage {shrinkage} outside [0, 1)")));
        }

        let mut ids: Vec<u32> = groups.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let slot = |g: u32| ids.binary_search(&g).expect("id collected above");

        let mut counts = vec![0usize; ids.len()];
        let mut means = vec![vec![0.0; d]; ids.len()];
        for (row, &g) in rows.iter().zip(groups) {
            let s = slot(g);
            counts[s] += 1;
            for (m, x) in means[s].iter_mut().zip(row.as_ref()) {
                *m += x;
            }
        }
        for (s, &n) in counts.iter().enumerate() {
            if n < 2 {
                return Err(Error::validation(format!(
                    "group {} has {n} member(s); at least 2 are required",
                    ids[s]
                )));
            }
            means[s].iter_mut().for_each(|m| *m /= n as f64);
        }

        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut diff = vec![0.0; d];
        for (row, &g) in rows.iter().zip(groups) {
            let mu = &means[slot(g)];
            for ((o, x), m) in diff.iter_mut().zip(row.as_ref()).zip(mu) {
                *o = x - m;
            }
            for i in 0..d {
                let di = diff[i];
                for j in i..d {
                    cov[(i, j)] += di * diff[j];
                }
            }
        }
        let n = rows.len() as f64;
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / n;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let trace = cov.trace();
        let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
        for i in 0..d {
            cov[(i, i)] += shrinkage * scale;
        }
        Self::from_covariance(ids, means, &cov)
    }

    /// Builds a bank from explicit centroids and covariance.
    pub fn from_covariance(group_ids: Vec<u32>, means: Vec<Vec<f64>>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariance is not symmetric positive definite".into()))?;
        let mut inv = chol.inverse();
        symmetrize(&mut inv);
        Self::from_inverse(group_ids, means, inv)
    }

    /// Builds a bank from centroids and an already-inverted covariance.
    pub fn from_inverse(group_ids: Vec<u32>, means: Vec<Vec<f64>>, cov_inv: DMatrix<f64>) -> Result<Self> {
        let d = cov_inv.nrows();
        if d == 0 || cov_inv.ncols() != d {
            return Err(Error::validation("inverse covariance must be square and non-empty"));
        }
        if means.is_empty() || means.len() != group_ids.len() {
            return Err(Error::validation("need one centroid per group id and at least one group"));
        }
        if means.iter().any(|m| m.len() != d) {
            return Err(Error::validation("centroid dimension does not match covariance"));
        }
        if group_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("group ids must be unique and ascending"));
        }
        let asym = (&cov_inv - cov_inv.transpose()).abs().max();
        let tol = 1e-8 * cov_inv.abs().max().max(1.0);
        if asym > tol {
            return Err(Error::Numerical(format!("inverse covariance asymmetric by {asym}")));
        }
        if cov_inv.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("inverse covariance has non-finite entries".into()));
        }
        let m = cov_inv
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("inverse covariance is not positive definite".into()))?
            .unpack();
        // W = Mᵀ, upper triangular
        let mut whiten = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                whiten[i * d + j] = m[(j, i)];
            }
        }
        let whitened_means = means.iter().map(|mu| apply_upper(&whiten, d, mu)).collect();
        Ok(Self { dim: d, group_ids, means, cov_inv, whiten, whitened_means })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group_ids(&self) -> &[u32] {
        &self.group_ids
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn shared_cov_inv(&self) -> &DMatrix<f64> {
        &self.cov_inv
    }

    /// A single-centroid bank for `group`, keeping the shared covariance.
    pub fn restrict_to(&self, group: u32) -> Result<Self> {
        let s = self
            .group_ids
            .binary_search(&group)
            .map_err(|_| Error::validation(format!("no group {group} in bank")))?;
        Ok(Self {
            dim: self.dim,
            group_ids: vec![group],
            means: vec![self.means[s].clone()],
            cov_inv: self.cov_inv.clone(),
            whiten: self.whiten.clone(),
            whitened_means: vec![self.whitened_means[s].clone()],
        })
    }

    /// Minimum Mahalanobis distance over centroids and the group attaining it
    /// (ties resolve to the lowest id).
    pub fn score(&self, z: &[f64]) -> Result<(f64, u32)> {
        if z.len() != self.dim {
            return Err(Error::validation(format!(
                "query has dimension {}, bank expects {}",
                z.len(),
                self.dim
            )));
        }
        let mut scratch = vec![0.0; self.dim];
        Ok(self.score_unchecked(z, &mut scratch))
    }

    fn score_unchecked(&self, z: &[f64], wz: &mut [f64]) -> (f64, u32) {
        let d = self.dim;
        for (i, out) in wz.iter_mut().enumerate() {
            let row = &self.whiten[i * d + i..(i + 1) * d];
            *out = row.iter().zip(&z[i..]).map(|(w, x)| w * x).sum();
        }
        let mut best = (f64::INFINITY, self.group_ids[0]);
        for (wm, &id) in self.whitened_means.iter().zip(&self.group_ids) {
            let sq: f64 = wz.iter().zip(wm).map(|(a, b)| (a - b) * (a - b)).sum();
            if sq < best.0 {
                best = (sq, id);
            }
        }
        (best.0.sqrt(), best.1)
    }

    /// Scores a row-major batch of `n × d` values.
    pub fn score_batch(&self, rows: &[f64]) -> Result<Vec<(f64, u32)>> {
        if !rows.len().is_multiple_of(self.dim) {
            return Err(Error::validation("batch length is not a multiple of the dimension"));
        }
        let mut scratch = vec![0.0; self.dim];
        Ok(rows
            .chunks_exact(self.dim)
            .map(|z| self.score_unchecked(z, &mut scratch))
            .collect())
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn apply_upper(w: &[f64], d: usize, z: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|i| w[i * d + i..(i + 1) * d].iter().zip(&z[i..]).map(|(a, b)| a * b).sum())
        .collect()
}

/// Fits a [`GaussianBank`] on records grouped by `grouping`.
pub fn fit_gaussian_bank(records: &[FeatureRecord], grouping: &[u32], shrinkage: f64) -> Result<GaussianBank> {
    GaussianBank::fit(records, grouping, shrinkage)
}

/// `(score, nearest_group)` of `z` against `bank`.
pub fn mahalanobis_score(z: &[f64], bank: &GaussianBank) -> Result<(f64, u32)> {
    bank.score(z)
}

/// Exact k-th-nearest-neighbor store.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborBank {
    dim: usize,
    points: Vec<f64>,
    k: usize,
    unit_norm: bool,
}

impl NeighborBank {
    pub fn new<R: AsRef<[f64]>>(rows: &[R], k: usize, unit_norm: bool) -> Result<Self> {
        let d = check_rows(rows)?;
        if k == 0 {
            return Err(Error::validation("k must be positive"));
        }
        if k > rows.len() {
            return Err(Error::validation(format!("k = {k} exceeds {} stored points", rows.len())));
        }
        let mut points = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if unit_norm {
                points.extend(normalize(r));
            } else {
                points.extend_from_slice(r);
            }
        }
        Ok(Self { dim: d, points, k, unit_norm })
    }

    /// Rebuilds a bank from its stored (already normalized, if `unit_norm`)
    /// flat point buffer.
    pub fn from_stored(dim: usize, points: Vec<f64>, k: usize, unit_norm: bool) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::validation("stored points do not match the dimension"));
        }
        if k == 0 || k > points.len() / dim {
            return Err(Error::validation(format!("k = {k} invalid for {} stored points", points.len() / dim)));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("stored points must be finite"));
        }
        Ok(Self { dim, points, k, unit_norm })
    }

    /// Like [`NeighborBank::new`] but clamps `k` to the number of points.
    pub fn new_clamped<R: AsRef<[f64]>>(rows: &[R], k: usize, unit_norm: bool) -> Result<Self> {
        Self::new(rows, k.min(rows.len()).max(1), unit_norm)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn score(&self, z: &[f64]) -> Result<f64> {
        self.score_rank(z, self.k)
    }

    /// Euclidean distance to the `rank`-th nearest stored point (1-based).
    pub fn score_rank(&self, z: &[f64], rank: usize) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::validation(format!(
                "query has dimension {}, bank expects {}",
                z.len(),
                self.dim
            )));
        }
        if rank == 0 || rank > self.len() {
            return Err(Error::validation(format!("rank {rank} outside 1..={}", self.len())));
        }
        let q: Vec<f64> = if self.unit_norm { normalize(z) } else { z.to_vec() };
        let mut d2: Vec<f64> = self
            .points
            .chunks_exact(self.dim)
            .map(|p| p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        let (_, kth, _) = d2.select_nth_unstable_by(rank - 1, f64::total_cmp);
        Ok(kth.sqrt())
    }
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

pub fn knn_score(z: &[f64], bank: &NeighborBank) -> Result<f64> {
    bank.score(z)
}

/// Orthonormal projection onto the leading principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjector {
    mean: Vec<f64>,
    // m × d, row-major
    components: Vec<f64>,
    m: usize,
}

impl PcaProjector {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], m: usize) -> Result<Self> {
        let d = check_rows(rows)?;
        if m == 0 || m > d {
            return Err(Error::validation(format!("cannot keep {m} components of a {d}-dimensional space")));
        }
        let n = rows.len();
        if n < 2 {
            return Err(Error::validation("PCA needs at least 2 samples"));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.as_ref()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for r in rows {
            let c = DVector::from_iterator(d, r.as_ref().iter().zip(&mean).map(|(x, m)| x - m));
            cov.syger(1.0, &c, &c, 1.0);
        }
        cov /= (n - 1) as f64;
        symmetrize(&mut cov);

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = Vec::with_capacity(m * d);
        for &j in order.iter().take(m) {
            let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
            // fix the sign so the largest-magnitude entry is positive
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.extend(v);
        }
        Ok(Self { mean, components, m })
    }

    pub fn from_parts(mean: Vec<f64>, components: Vec<f64>, m: usize) -> Result<Self> {
        let d = mean.len();
        if d == 0 || m == 0 || m > d || components.len() != m * d {
            return Err(Error::validation("inconsistent projector shape"));
        }
        Ok(Self { mean, components, m })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.mean.len();
        if z.len() != d {
            return Err(Error::validation(format!("query has dimension {}, projector expects {d}", z.len())));
        }
        Ok(self
            .components
            .chunks_exact(d)
            .map(|row| row.iter().zip(z).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }
}

pub fn fit_pca(records: &[FeatureRecord], m: usize) -> Result<PcaProjector> {
    PcaProjector::fit(records, m)
}

/// Either backend behind one scoring interface.
#[derive(Debug, Clone)]
pub enum DistanceBank {
    Gaussian(GaussianBank),
    Neighbor(NeighborBank),
}

impl DistanceBank {
    pub fn backend(&self) -> Backend {
        match self {
            DistanceBank::Gaussian(_) => Backend::Mahalanobis,
            DistanceBank::Neighbor(_) => Backend::Knn,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DistanceBank::Gaussian(b) => b.dim(),
            DistanceBank::Neighbor(b) => b.dim(),
        }
    }

    pub fn score(&self, z: &[f64]) -> Result<f64> {
        match self {
            DistanceBank::Gaussian(b) => b.score(z).map(|(s, _)| s),
            DistanceBank::Neighbor(b) => b.score(z),
        }
    }

    /// Score of a point that is itself stored in the bank. For KNN the
    /// zero self-distance is skipped so the score matches that of an unseen
    /// point from the same distribution.
    pub fn score_member(&self, z: &[f64]) -> Result<f64> {
        match self {
            DistanceBank::Gaussian(b) => b.score(z).map(|(s, _)| s),
            DistanceBank::Neighbor(b) => b.score_rank(z, (b.k() + 1).min(b.len())),
        }
    }
}
