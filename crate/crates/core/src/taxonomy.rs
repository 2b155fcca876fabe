//! Entropy-based aleatoric scoring and the static three-way taxonomy
//! (certain / uncertain-aleatoric / uncertain-epistemic).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::record::{Domain, ProbabilityVector};

/// Shannon entropy in nats with `0·ln 0 = 0`, clamped to `[0, ln C]`.
pub fn entropy(p: &ProbabilityVector) -> f64 {
    let h: f64 = p
        .as_slice()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    h.clamp(0.0, (p.n_classes() as f64).ln())
}

/// Validating entry point for raw slices.
pub fn entropy_of(probs: &[f64]) -> Result<f64> {
    Ok(entropy(&ProbabilityVector::new(probs.to_vec())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StaticTag {
    C,
    Ua,
    Ue,
}

impl StaticTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StaticTag::C => "C",
            StaticTag::Ua => "UA",
            StaticTag::Ue => "UE",
        }
    }
}

impl fmt::Display for StaticTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StaticTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C" => Ok(StaticTag::C),
            "UA" => Ok(StaticTag::Ua),
            "UE" => Ok(StaticTag::Ue),
            other => Err(Error::Parse(format!("unknown static tag {other:?}"))),
        }
    }
}

/// Outcome of the static taxonomy for one sample.
///
/// `au_score` is only defined for low-EU samples; aleatoric estimates are
/// meaningless once the sample is out of distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticLabel {
    pub tag: StaticTag,
    pub eu_score: f64,
    pub au_score: Option<f64>,
}

impl StaticLabel {
    pub fn is_certain(&self) -> bool {
        self.tag == StaticTag::C
    }
}

/// Category boundaries for one domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    tau_eu: f64,
    tau_au: f64,
    domain: Domain,
}

impl Thresholds {
    pub fn new(tau_eu: f64, tau_au: f64, domain: Domain, n_classes: usize) -> Result<Self> {
        if !tau_eu.is_finite() || tau_eu <= 0.0 {
            return Err(Error::validation(format!("tau_eu must be positive and finite, got {tau_eu}")));
        }
        let ln_c = (n_classes as f64).ln();
        if !tau_au.is_finite() || tau_au < 0.0 || tau_au > ln_c + 1e-12 {
            return Err(Error::validation(format!(
                "tau_au must lie in [0, ln C = {ln_c}], got {tau_au}"
            )));
        }
        Ok(Self { tau_eu, tau_au: tau_au.min(ln_c), domain })
    }

    pub fn tau_eu(&self) -> f64 {
        self.tau_eu
    }

    pub fn tau_au(&self) -> f64 {
        self.tau_au
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }
}

/// Static taxonomy: UE iff `eu ≥ τ_EU`, else UA iff `H[p] ≥ τ_AU`, else C.
pub fn classify_static(eu: f64, p: &ProbabilityVector, th: &Thresholds) -> Result<StaticLabel> {
    if !eu.is_finite() || eu < 0.0 {
        return Err(Error::validation(format!("EU score must be finite and non-negative, got {eu}")));
    }
    if eu >= th.tau_eu {
        return Ok(StaticLabel { tag: StaticTag::Ue, eu_score: eu, au_score: None });
    }
    let au = entropy(p);
    let tag = if au >= th.tau_au { StaticTag::Ua } else { StaticTag::C };
    Ok(StaticLabel { tag, eu_score: eu, au_score: Some(au) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn entropy_extremes() {
        assert_eq!(entropy(&pv(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0])), 0.0);
        let u = entropy(&ProbabilityVector::uniform(6).unwrap());
        assert!((u - 1.791759469228055).abs() < 1e-12);
    }

    #[test]
    fn entropy_matches_termwise_sum() {
        // -Σ p ln p over (0.7, 0.2, 0.1), summed termwise offline
        let h = entropy(&pv(&[0.7, 0.2, 0.1, 0.0, 0.0, 0.0]));
        assert!((h - 0.8018185525433372).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_bad_simplex() {
        assert!(entropy_of(&[0.5, 0.4]).is_err());
    }

    fn th(tau_eu: f64, tau_au: f64) -> Thresholds {
        Thresholds::new(tau_eu, tau_au, Domain::Li, 6).unwrap()
    }

    #[test]
    fn static_boundaries() {
        let t = th(2.0, 0.5);
        let sharp = pv(&[0.99, 0.01, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(classify_static(1.0, &sharp, &t).unwrap().tag, StaticTag::C);

        let ue = classify_static(2.0, &ProbabilityVector::uniform(6).unwrap(), &t).unwrap();
        assert_eq!(ue.tag, StaticTag::Ue);
        assert_eq!(ue.au_score, None);

        let p = pv(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let at_boundary = th(2.0, entropy(&p));
        let ua = classify_static(1.0, &p, &at_boundary).unwrap();
        assert_eq!(ua.tag, StaticTag::Ua);
        assert!(ua.au_score.is_some());
    }

    #[test]
    fn thresholds_validate() {
        assert!(Thresholds::new(0.0, 0.1, Domain::Li, 2).is_err());
        assert!(Thresholds::new(1.0, 0.8, Domain::Li, 2).is_err());
        assert!(Thresholds::new(1.0, 2f64.ln(), Domain::Hi, 2).is_ok());
        assert!(classify_static(-1.0, &pv(&[0.5, 0.5]), &Thresholds::new(1.0, 0.1, Domain::Li, 2).unwrap()).is_err());
    }

    fn simplex(c: usize) -> impl Strategy<Value = ProbabilityVector> {
        prop::collection::vec(0.0f64..1.0, c).prop_filter_map("zero mass", |w| {
            ProbabilityVector::normalized(w).ok()
        })
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_permutation_invariant(p in simplex(6), rot in 0usize..6) {
            let h = entropy(&p);
            prop_assert!(h >= 0.0 && h <= 6f64.ln());
            let mut v = p.as_slice().to_vec();
            v.rotate_left(rot);
            let q = ProbabilityVector::new(v).unwrap();
            prop_assert!((entropy(&q) - h).abs() < 1e-12);
        }

        #[test]
        fn static_taxonomy_is_total_and_monotone(
            p in simplex(4),
            eu in 0.0f64..10.0,
            tau_eu in 0.1f64..10.0,
            tau_au in 0.0f64..1.3,
            bump in 0.0f64..1.0,
        ) {
            let base = Thresholds::new(tau_eu, tau_au, Domain::Li, 4).unwrap();
            let l = classify_static(eu, &p, &base).unwrap();
            prop_assert_eq!(l.au_score.is_some(), eu < tau_eu);

            // raising tau_au never turns C into UA
            let higher_au = Thresholds::new(tau_eu, (tau_au + bump).min(4f64.ln()), Domain::Li, 4).unwrap();
            if l.tag == StaticTag::C {
                prop_assert_eq!(classify_static(eu, &p, &higher_au).unwrap().tag, StaticTag::C);
            }
            // raising tau_eu never turns C/UA into UE
            let higher_eu = Thresholds::new(tau_eu + bump, tau_au, Domain::Li, 4).unwrap();
            if l.tag != StaticTag::Ue {
                prop_assert_ne!(classify_static(eu, &p, &higher_eu).unwrap().tag, StaticTag::Ue);
            }
        }
    }
}
