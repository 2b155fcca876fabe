//! Paired LI/HI synthetic data with planted uncertainty categories.
//!
//! Class centroids sit on scaled basis vectors of the first `C` dimensions,
//! so every pair of centroids is `sep` apart. In LI, dimension `C` carries
//! the UE displacement and dimension `C + 1` separates resolvable from
//! irresolvable ambiguous samples. Probabilities are the softmax of negative
//! half squared distances to the centroids of the same domain.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamic::DynamicTag;
use crate::error::{Error, Result};
use crate::record::{Domain, FeatureRecord, ProbabilityVector};

/// Minimum UE displacement, in units of the LI noise scale.
pub const UE_DISPLACEMENT_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_classes: usize,
    pub d_hi: usize,
    pub d_li: usize,
    pub sep_hi: f64,
    pub sep_li: f64,
    pub frac_uar: f64,
    pub frac_uai: f64,
    pub frac_ue: f64,
    pub noise_li: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            n_classes: 6,
            d_hi: 64,
            d_li: 16,
            sep_hi: 8.0,
            sep_li: 8.0,
            frac_uar: 0.2,
            frac_uai: 0.1,
            frac_ue: 0.1,
            noise_li: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn frac_c(&self) -> f64 {
        1.0 - self.frac_uar - self.frac_uai - self.frac_ue
    }

    /// Same config with the UE share folded into C, for drawing
    /// calibration data.
    pub fn without_ue(&self) -> Self {
        Self { frac_ue: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::validation("n_samples must be positive"));
        }
        if self.n_classes < 2 {
            return Err(Error::validation("need at least 2 classes"));
        }
        for (name, v) in [("sep_hi", self.sep_hi), ("sep_li", self.sep_li)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_li.is_finite() && self.noise_li >= 0.0) {
            return Err(Error::validation(format!("noise_li must be non-negative, got {}", self.noise_li)));
        }
        for (name, v) in [("frac_uar", self.frac_uar), ("frac_uai", self.frac_uai), ("frac_ue", self.frac_ue)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.frac_c() < -1e-9 {
            return Err(Error::validation("fractions sum to more than 1"));
        }
        if self.d_li > self.d_hi {
            return Err(Error::validation(format!("d_li = {} exceeds d_hi = {}", self.d_li, self.d_hi)));
        }
        if self.d_hi < self.n_classes {
            return Err(Error::validation(format!(
                "infeasible geometry: d_hi = {} cannot hold {} class centroids",
                self.d_hi, self.n_classes
            )));
        }
        if self.d_li < self.n_classes + 2 {
            return Err(Error::validation(format!(
                "infeasible geometry: d_li = {} leaves no room for the UE and resolvability axes (need {})",
                self.d_li,
                self.n_classes + 2
            )));
        }
        Ok(())
    }
}

/// Paired dataset in sample order; `planted[i]` is the intended tag of pair `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub li: Vec<FeatureRecord>,
    pub hi: Vec<FeatureRecord>,
    pub planted: Vec<DynamicTag>,
}

fn softmax_neg_half_sq(z: &[f64], n_classes: usize, scale: f64) -> Result<ProbabilityVector> {
    // centroids are scale·e_c, so only the first C coordinates differ
    let logits: Vec<f64> = (0..n_classes)
        .map(|c| {
            let d2: f64 = (0..n_classes)
                .map(|j| {
                    let m = if j == c { scale } else { 0.0 };
                    (z[j] - m).powi(2)
                })
                .sum();
            -0.5 * d2
        })
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|v| ((v / total) as f32) as f64).collect();
    ProbabilityVector::new(p)
}

fn quantize(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| (x as f32) as f64).collect()
}

struct Domains {
    n_classes: usize,
    scale_li: f64,
    scale_hi: f64,
}

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    sd * rng.sample::<f64, _>(StandardNormal)
}

/// Generates the dataset. The same config always yields the same bytes.
pub fn generate_paired_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let n = cfg.n_samples;
    let c = cfg.n_classes;
    let geo = Domains {
        n_classes: c,
        scale_li: cfg.sep_li / std::f64::consts::SQRT_2,
        scale_hi: cfg.sep_hi / std::f64::consts::SQRT_2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let count = |f: f64| (f * n as f64).round() as usize;
    let (n_uar, n_uai, n_ue) = (count(cfg.frac_uar), count(cfg.frac_uai), count(cfg.frac_ue));
    if n_uar + n_uai + n_ue > n {
        return Err(Error::validation("rounded category counts exceed n_samples"));
    }
    let mut planted: Vec<DynamicTag> = std::iter::repeat_n(DynamicTag::Uar, n_uar)
        .chain(std::iter::repeat_n(DynamicTag::Uai, n_uai))
        .chain(std::iter::repeat_n(DynamicTag::Ue, n_ue))
        .chain(std::iter::repeat_n(DynamicTag::C, n - n_uar - n_uai - n_ue))
        .collect();
    planted.shuffle(&mut rng);

    let sigma = cfg.noise_li;
    let ue_shift = UE_DISPLACEMENT_SIGMAS * sigma.max(1.0);
    let kappa_li = 1.0 / cfg.sep_li;
    let kappa_hi = 1.0 / cfg.sep_hi;
    let mix = c.min(3);

    let mut li = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for &tag in &planted {
        let mut zl = vec![0.0; cfg.d_li];
        let mut zh = vec![0.0; cfg.d_hi];
        for v in zl.iter_mut().skip(c) {
            *v = gauss(&mut rng, sigma);
        }
        for v in zh.iter_mut().skip(c) {
            *v = gauss(&mut rng, 1.0);
        }

        let label = match tag {
            DynamicTag::C => {
                let y = rng.gen_range(0..c);
                for (j, v) in zl.iter_mut().take(c).enumerate() {
                    *v = if j == y { geo.scale_li } else { 0.0 } + gauss(&mut rng, sigma);
                }
                y
            }
            DynamicTag::Uar | DynamicTag::Uai => {
                let members = sample(&mut rng, c, mix).into_vec();
                let y = members[rng.gen_range(0..mix)];
                for (j, v) in zl.iter_mut().take(c).enumerate() {
                    let bary = if members.contains(&j) { geo.scale_li / mix as f64 } else { 0.0 };
                    *v = bary + gauss(&mut rng, kappa_li);
                }
                let side = if tag == DynamicTag::Uar { 0.5 } else { -0.5 };
                zl[c + 1] += side * cfg.sep_li;
                if tag == DynamicTag::Uai {
                    for (j, v) in zh.iter_mut().take(c).enumerate() {
                        let bary = if members.contains(&j) { geo.scale_hi / mix as f64 } else { 0.0 };
                        *v = bary + gauss(&mut rng, kappa_hi);
                    }
                }
                y
            }
            DynamicTag::Ue => {
                let y = rng.gen_range(0..c);
                for v in zl.iter_mut().take(c) {
                    *v = geo.scale_li / c as f64 + gauss(&mut rng, kappa_li);
                }
                zl[c] += ue_shift;
                y
            }
        };
        if tag != DynamicTag::Uai {
            for (j, v) in zh.iter_mut().take(c).enumerate() {
                *v = if j == label { geo.scale_hi } else { 0.0 } + gauss(&mut rng, 1.0);
            }
        }

        let zl = quantize(zl);
        let zh = quantize(zh);
        let pl = softmax_neg_half_sq(&zl, geo.n_classes, geo.scale_li)?;
        let ph = softmax_neg_half_sq(&zh, geo.n_classes, geo.scale_hi)?;
        li.push(FeatureRecord::new(zl, pl, Domain::Li)?.with_label(label)?);
        hi.push(FeatureRecord::new(zh, ph, Domain::Hi)?.with_label(label)?);
    }
    Ok(SynthDataset { li, hi, planted })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { n_samples: 500, ..SynthConfig::default() }
    }

    #[test]
    fn deterministic() {
        let a = generate_paired_dataset(&small()).unwrap();
        let b = generate_paired_dataset(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_paired_dataset(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.li[0].features, c.li[0].features);
    }

    #[test]
    fn planted_counts_follow_fractions() {
        let ds = generate_paired_dataset(&small()).unwrap();
        let count = |t| ds.planted.iter().filter(|&&p| p == t).count();
        assert_eq!(count(DynamicTag::Uar), 100);
        assert_eq!(count(DynamicTag::Uai), 50);
        assert_eq!(count(DynamicTag::Ue), 50);
        assert_eq!(count(DynamicTag::C), 300);
        assert!(ds.li.iter().all(|r| r.dim() == 16 && r.domain == Domain::Li));
        assert!(ds.hi.iter().all(|r| r.dim() == 64 && r.domain == Domain::Hi));
    }

    #[test]
    fn values_survive_f32_round_trip() {
        let ds = generate_paired_dataset(&small()).unwrap();
        for r in ds.li.iter().chain(&ds.hi) {
            assert!(r.features.iter().all(|&v| (v as f32) as f64 == v));
            assert!(r.probs.as_slice().iter().all(|&v| (v as f32) as f64 == v));
        }
    }

    #[test]
    fn infeasible_geometry_rejected() {
        assert!(generate_paired_dataset(&SynthConfig { d_li: 7, ..small() }).is_err());
        assert!(generate_paired_dataset(&SynthConfig { d_li: 70, ..small() }).is_err());
        assert!(generate_paired_dataset(&SynthConfig { frac_ue: 0.8, ..small() }).is_err());
        assert!(generate_paired_dataset(&SynthConfig { sep_li: 0.0, ..small() }).is_err());
    }

    #[test]
    fn without_ue_folds_into_certain() {
        let cfg = small().without_ue();
        assert_eq!(cfg.frac_ue, 0.0);
        assert!((cfg.frac_c() - 0.7).abs() < 1e-12);
    }
}
