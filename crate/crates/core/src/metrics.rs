//! Multimodality scores for a single [`Mixture`].
//!
//! * MCE: normalized entropy of the mixing coefficients.
//! * WAKLD: doubly π-weighted sum of pairwise component KL divergences.
//! * SEMD: π-weighted 2-Wasserstein distance from the primary mode to every
//!   other component.
//! * JSD: generalized Jensen-Shannon divergence, `H(Σ π_i p_i) − Σ π_i H(p_i)`.
//!
//! A mixture with a single positive-weight component scores 0 on all four.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gmm::{entropy_gaussian, kl_unchecked, mixture_entropy, w2_unchecked, EntropyEstimator, Mixture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Mce,
    Wakld,
    Semd,
    Jsd,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [MetricName::Mce, MetricName::Wakld, MetricName::Semd, MetricName::Jsd];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Mce => "mce",
            MetricName::Wakld => "wakld",
            MetricName::Semd => "semd",
            MetricName::Jsd => "jsd",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown metric {s:?}")))
    }
}

/// One score with the estimator that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: MetricName,
    pub value: f64,
    /// `(samples, seed)` when the value came from a Monte Carlo estimate.
    pub estimator_meta: Option<(usize, u64)>,
}

fn effective_components(m: &Mixture) -> usize {
    m.weights().iter().filter(|w| **w > 0.0).count()
}

/// Mixing coefficient entropy, normalized by `ln k`; 0 for k = 1.
pub fn mce(m: &Mixture) -> f64 {
    let k = m.k();
    if k < 2 {
        return 0.0;
    }
    let h: f64 = m
        .weights()
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| -w * w.ln())
        .sum();
    (h / (k as f64).ln()).clamp(0.0, 1.0)
}

/// `Σ_i π_i Σ_j π_j D_KL(p_i || p_j)`.
pub fn wakld(m: &Mixture) -> f64 {
    if effective_components(m) < 2 {
        return 0.0;
    }
    let (w, c) = (m.weights(), m.components());
    let mut total = 0.0;
    for i in 0..m.k() {
        if w[i] == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for j in 0..m.k() {
            if w[j] == 0.0 || i == j {
                continue;
            }
            inner += w[j] * kl_unchecked(&c[i], &c[j]);
        }
        total += w[i] * inner;
    }
    total
}

/// `Σ_{j ≠ p} π_j W2(p_p, p_j)` where `p` is the primary mode.
pub fn semd(m: &Mixture) -> f64 {
    if effective_components(m) < 2 {
        return 0.0;
    }
    let p = m.primary_index();
    let primary = &m.components()[p];
    m.weights()
        .iter()
        .zip(m.components())
        .enumerate()
        .filter(|(j, (w, _))| *j != p && **w > 0.0)
        .map(|(_, (w, c))| w * w2_unchecked(primary, c))
        .sum()
}

/// Generalized Jensen-Shannon divergence of the weighted components.
pub fn jsd(m: &Mixture, estimator: EntropyEstimator) -> Result<f64> {
    if effective_components(m) < 2 {
        return Ok(0.0);
    }
    let h_mix = mixture_entropy(m, estimator)?;
    let h_parts: f64 = m
        .weights()
        .iter()
        .zip(m.components())
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, c)| w * entropy_gaussian(c))
        .sum();
    Ok((h_mix - h_parts).max(0.0))
}

/// All four scores for one mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub mce: f64,
    pub wakld: f64,
    pub semd: f64,
    pub jsd: f64,
    pub jsd_estimator: EntropyEstimator,
}

impl MetricScores {
    pub fn get(&self, name: MetricName) -> f64 {
        match name {
            MetricName::Mce => self.mce,
            MetricName::Wakld => self.wakld,
            MetricName::Semd => self.semd,
            MetricName::Jsd => self.jsd,
        }
    }

    pub fn values(&self) -> [MetricValue; 4] {
        MetricName::ALL.map(|name| MetricValue {
            name,
            value: self.get(name),
            estimator_meta: match name {
                MetricName::Jsd => self.jsd_estimator.mc_meta(),
                _ => None,
            },
        })
    }
}

pub fn all_metrics(m: &Mixture, estimator: EntropyEstimator) -> Result<MetricScores> {
    Ok(MetricScores {
        mce: mce(m),
        wakld: wakld(m),
        semd: semd(m),
        jsd: jsd(m, estimator)?,
        jsd_estimator: estimator,
    })
}

/// One row of a metric report; the CSV column order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sample_id: u64,
    pub k: usize,
    pub label: String,
    pub mce: f64,
    pub wakld: f64,
    pub semd: f64,
    pub jsd: f64,
    /// 0 when JSD came from quadrature.
    pub jsd_n_samples: usize,
    pub seed: u64,
}

pub const METRIC_ROW_COLUMNS: [&str; 9] =
    ["sample_id", "k", "label", "mce", "wakld", "semd", "jsd", "jsd_n_samples", "seed"];

impl MetricRow {
    pub fn new(sample_id: u64, k: usize, label: impl Into<String>, scores: &MetricScores, seed: u64) -> Self {
        let (n, seed) = scores.jsd_estimator.mc_meta().unwrap_or((0, seed));
        Self {
            sample_id,
            k,
            label: label.into(),
            mce: scores.mce,
            wakld: scores.wakld,
            semd: scores.semd,
            jsd: scores.jsd,
            jsd_n_samples: n,
            seed,
        }
    }
}

pub fn write_metric_rows<W: std::io::Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(METRIC_ROW_COLUMNS)?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{GaussianComponent, QUADRATURE_POINTS};
    use approx::assert_abs_diff_eq;

    const QUAD: EntropyEstimator = EntropyEstimator::Quadrature { points: QUADRATURE_POINTS };

    fn mix(parts: &[(f64, f64, f64)]) -> Mixture {
        Mixture::univariate(parts).unwrap()
    }

    #[test]
    fn mce_examples() {
        assert_eq!(mce(&mix(&[(1.0, 0.0, 1.0)])), 0.0);
        assert_abs_diff_eq!(mce(&mix(&[(0.5, 0.0, 1.0), (0.5, 1.0, 1.0)])), 1.0, epsilon = 1e-12);
        let direct = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln()) / 2f64.ln();
        let got = mce(&mix(&[(0.75, 0.0, 1.0), (0.25, 1.0, 1.0)]));
        assert_abs_diff_eq!(got, direct, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 0.811278, epsilon = 1e-6);
        assert_eq!(mce(&mix(&[(1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (0.0, 2.0, 1.0)])), 0.0);
    }

    #[test]
    fn wakld_examples() {
        let same = mix(&[(0.2, 1.0, 0.5), (0.3, 1.0, 0.5), (0.5, 1.0, 0.5)]);
        assert_eq!(wakld(&same), 0.0);
        let pair = mix(&[(0.5, 0.0, 1.0), (0.5, 2.0, 1.0)]);
        assert_abs_diff_eq!(wakld(&pair), 1.0, epsilon = 1e-12);
        assert_eq!(wakld(&mix(&[(1.0, 0.0, 1.0), (0.0, 9.0, 1.0)])), 0.0);
    }

    #[test]
    fn semd_examples() {
        assert_eq!(semd(&mix(&[(0.4, 2.0, 1.0), (0.6, 2.0, 1.0)])), 0.0);
        assert_abs_diff_eq!(semd(&mix(&[(0.6, 0.0, 1.0), (0.4, 3.0, 1.0)])), 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(semd(&mix(&[(0.5, 0.0, 1.0), (0.5, 3.0, 1.0)])), 1.5, epsilon = 1e-12);
        assert_eq!(mix(&[(0.5, 0.0, 1.0), (0.5, 3.0, 1.0)]).primary_index(), 0);
    }

    #[test]
    fn jsd_examples() {
        let same = mix(&[(0.5, 0.0, 1.0), (0.5, 0.0, 1.0)]);
        assert!(jsd(&same, QUAD).unwrap() <= 0.02);
        let mc = EntropyEstimator::MonteCarlo { samples: 4096, seed: 5 };
        assert!(jsd(&same, mc).unwrap() <= 0.02);

        let far = mix(&[(0.5, -10.0, 1.0), (0.5, 10.0, 1.0)]);
        assert_abs_diff_eq!(jsd(&far, QUAD).unwrap(), 2f64.ln(), epsilon = 0.02);
        assert_abs_diff_eq!(jsd(&far, mc).unwrap(), 2f64.ln(), epsilon = 0.02);

        assert_eq!(jsd(&mix(&[(1.0, 3.0, 0.2)]), QUAD).unwrap(), 0.0);
    }

    #[test]
    fn jsd_propagates_estimator_errors() {
        let c = GaussianComponent::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let d = GaussianComponent::new(vec![1.0, 0.0], vec![1.0, 1.0]).unwrap();
        let m = Mixture::new(vec![0.5, 0.5], vec![c, d]).unwrap();
        assert!(matches!(jsd(&m, QUAD), Err(Error::Unsupported(_))));
        assert!(all_metrics(&m, QUAD).is_err());
    }

    #[test]
    fn all_metrics_matches_individual_calls() {
        let m = mix(&[(0.1, -3.0, 0.4), (0.6, 0.5, 1.2), (0.3, 4.0, 0.8)]);
        let mc = EntropyEstimator::MonteCarlo { samples: 2048, seed: 9 };
        let all = all_metrics(&m, mc).unwrap();
        assert_eq!(all.mce.to_bits(), mce(&m).to_bits());
        assert_eq!(all.wakld.to_bits(), wakld(&m).to_bits());
        assert_eq!(all.semd.to_bits(), semd(&m).to_bits());
        assert_eq!(all.jsd.to_bits(), jsd(&m, mc).unwrap().to_bits());
        assert_eq!(all.values()[3].estimator_meta, Some((2048, 9)));

        let one = all_metrics(&mix(&[(1.0, 2.0, 3.0)]), QUAD).unwrap();
        assert_eq!([one.mce, one.wakld, one.semd, one.jsd], [0.0; 4]);
    }

    #[test]
    fn monotone_in_separation() {
        let mut prev = [0.0f64; 3];
        for step in 0..=16 {
            let sep = step as f64 * 0.5;
            let m = mix(&[(0.5, 0.0, 1.0), (0.5, sep, 1.0)]);
            let cur = [wakld(&m), semd(&m), jsd(&m, QUAD).unwrap()];
            for (c, p) in cur.iter().zip(&prev) {
                assert!(c + 1e-12 >= *p, "sep {sep}: {cur:?} vs {prev:?}");
            }
            prev = cur;
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for n in MetricName::ALL {
            assert_eq!(n.as_str().parse::<MetricName>().unwrap(), n);
        }
        assert!("dip".parse::<MetricName>().is_err());
    }

    #[test]
    fn metric_rows_use_fixed_columns() {
        let m = mix(&[(0.5, 0.0, 1.0), (0.5, 2.0, 1.0)]);
        let s = all_metrics(&m, QUAD).unwrap();
        let mut buf = Vec::new();
        write_metric_rows(&mut buf, &[MetricRow::new(0, 2, "grid", &s, 4)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRIC_ROW_COLUMNS.join(","));
        assert!(text.lines().nth(1).unwrap().starts_with("0,2,grid,1.0,1.0,1.0,"));
    }
}
