use serde::{Deserialize, Serialize};

use super::normal::normal_cdf;
use crate::attribution::AttributionMatrix;
use crate::boost::Ensemble;
use crate::{Error, Result};

/// Two-sided 5% critical value used by every verdict.
pub const Z_CRITICAL: f64 = 1.96;

/// `min(#(φ_j > φ_k), #(φ_k > φ_j)) / M`; exact ties count for neither side.
pub fn empirical_flip_rate(attr: &AttributionMatrix, j: usize, k: usize) -> f64 {
    let (a, b) = order_counts(attr, j, k);
    a.min(b) as f64 / attr.n_models() as f64
}

/// Fraction of model pairs that order `j` and `k` oppositely. Unlike
/// [`empirical_flip_rate`] this can exceed 1/2 and is never used for verdicts.
pub fn pairwise_flip_rate(attr: &AttributionMatrix, j: usize, k: usize) -> f64 {
    let m = attr.n_models();
    if m < 2 {
        return 0.0;
    }
    let (a, b) = order_counts(attr, j, k);
    (a * b) as f64 / (m * (m - 1) / 2) as f64
}

fn order_counts(attr: &AttributionMatrix, j: usize, k: usize) -> (usize, usize) {
    let (cj, ck) = (attr.column(j), attr.column(k));
    let mut above = 0;
    let mut below = 0;
    for (a, b) in cj.iter().zip(ck.iter()) {
        if a > b {
            above += 1;
        } else if b > a {
            below += 1;
        }
    }
    (above, below)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub j: usize,
    pub k: usize,
    /// |mean(φ_j − φ_k)|
    pub mean_gap: f64,
    pub noise_sd: f64,
    /// `+∞` (serialised as `null`) when the differences are constant and nonzero.
    #[serde(with = "inf_as_null")]
    pub z: f64,
    #[serde(with = "inf_as_null")]
    pub snr: f64,
    pub flip_empirical: f64,
    pub flip_predicted: f64,
    pub verdict: Verdict,
}

/// Multi-model Z-test on the per-model differences `φ_j − φ_k`.
pub fn z_test(attr: &AttributionMatrix, j: usize, k: usize) -> Result<PairDiagnostic> {
    let m = attr.n_models();
    if m < 2 {
        return Err(Error::param(format!("the Z-test needs at least 2 models, got {m}")));
    }
    let p = attr.n_features();
    if j >= p || k >= p {
        return Err(Error::param(format!("feature index out of range for {p} features")));
    }
    let d: Vec<f64> = attr.column(j).iter().zip(attr.column(k)).map(|(a, b)| a - b).collect();
    let (mean, sd) = mean_sd(&d);
    let gap = mean.abs();
    let (z, snr, verdict) = if sd > 0.0 {
        let snr = gap / sd;
        let z = snr * (m as f64).sqrt();
        (z, snr, if z < Z_CRITICAL { Verdict::Unstable } else { Verdict::Stable })
    } else if gap > 0.0 {
        (f64::INFINITY, f64::INFINITY, Verdict::Stable)
    } else {
        (0.0, 0.0, Verdict::Degenerate)
    };
    Ok(PairDiagnostic {
        j,
        k,
        mean_gap: gap,
        noise_sd: sd,
        z,
        snr,
        flip_empirical: empirical_flip_rate(attr, j, k),
        flip_predicted: normal_cdf(-snr),
        verdict,
    })
}

/// Sample mean and standard deviation (divisor n−1).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub j: usize,
    pub k: usize,
    pub p_hat_j: f64,
    pub p_hat_k: f64,
    pub t_eff: f64,
    #[serde(with = "inf_as_null")]
    pub z_split: f64,
    pub flagged: bool,
}

/// Effective number of independent trees. Without subsampling, consecutive
/// trees are correlated through the residuals: drop a burn-in of `⌈1/η⌉`
/// trees and deflate by the AR(1) factor `(1−η)/(1+η)`. Clamped to ≥ 1.
pub fn effective_trees(t: usize, eta: f64, subsampled: bool) -> f64 {
    if subsampled {
        return t as f64;
    }
    let burn_in = (1.0 / eta - 1e-9).ceil();
    ((t as f64 - burn_in) * (1.0 - eta) / (1.0 + eta)).max(1.0)
}

/// Single-model split-frequency screen for the pair `(j, k)`.
pub fn screen(ensemble: &Ensemble, pair: (usize, usize), eta: f64) -> Result<ScreenResult> {
    let t = ensemble.trees.len();
    if t < 10 {
        return Err(Error::param(format!("the split-frequency screen needs at least 10 trees, got {t}")));
    }
    let (j, k) = pair;
    if j >= ensemble.n_features || k >= ensemble.n_features {
        return Err(Error::param("feature index out of range"));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param(format!("learning rate must lie in (0, 1], got {eta}")));
    }
    let p_j = ensemble.trees_using(j) as f64 / t as f64;
    let p_k = ensemble.trees_using(k) as f64 / t as f64;
    let t_eff = effective_trees(t, eta, !ensemble.config.is_deterministic());
    Ok(screen_from_frequencies(j, k, p_j, p_k, t_eff))
}

pub fn screen_from_frequencies(j: usize, k: usize, p_j: f64, p_k: f64, t_eff: f64) -> ScreenResult {
    let var = (p_j * (1.0 - p_j) + p_k * (1.0 - p_k)) / t_eff;
    let gap = (p_j - p_k).abs();
    let z_split = if var > 0.0 {
        gap / var.sqrt()
    } else if gap > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    ScreenResult {
        j,
        k,
        p_hat_j: p_j,
        p_hat_k: p_k,
        t_eff,
        z_split,
        flagged: z_split < Z_CRITICAL,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub n_pairs: usize,
    pub n_unstable: usize,
    /// Over pairs with finite Z; `None` when undefined.
    pub pearson_r_between_z_and_flip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub pairs: Vec<PairDiagnostic>,
    pub summary: ReportSummary,
}

impl DiagnosticReport {
    pub fn new(pairs: Vec<PairDiagnostic>) -> Self {
        let finite: Vec<&PairDiagnostic> = pairs.iter().filter(|p| p.z.is_finite()).collect();
        let zs: Vec<f64> = finite.iter().map(|p| p.z).collect();
        let flips: Vec<f64> = finite.iter().map(|p| p.flip_empirical).collect();
        let summary = ReportSummary {
            n_pairs: pairs.len(),
            n_unstable: pairs.iter().filter(|p| p.verdict == Verdict::Unstable).count(),
            pearson_r_between_z_and_flip: pearson(&zs, &flips),
        };
        DiagnosticReport { pairs, summary }
    }

    /// Runs the Z-test on every listed pair.
    pub fn for_pairs(attr: &AttributionMatrix, pairs: &[(usize, usize)]) -> Result<Self> {
        let diags = pairs.iter().map(|&(j, k)| z_test(attr, j, k)).collect::<Result<_>>()?;
        Ok(Self::new(diags))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "j", "k", "mean_gap", "noise_sd", "z", "snr", "flip_empirical", "flip_predicted", "verdict",
        ])?;
        for p in &self.pairs {
            w.write_record([
                p.j.to_string(),
                p.k.to_string(),
                p.mean_gap.to_string(),
                p.noise_sd.to_string(),
                p.z.to_string(),
                p.snr.to_string(),
                p.flip_empirical.to_string(),
                p.flip_predicted.to_string(),
                serde_json::to_value(p.verdict)?.as_str().unwrap_or_default().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<diagnostic csv>", e))?;
        Ok(())
    }
}

pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
