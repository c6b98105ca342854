use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::diagnostics::mean_sd;
use super::normal::{normal_cdf, normal_quantile};
use crate::attribution::AttributionVector;
use crate::boost::{split_counts, Ensemble};
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Gaussian flip probability `Φ(−snr)`.
pub fn flip_from_snr(snr: f64) -> f64 {
    normal_cdf(-snr.abs())
}

/// Worst-case error of the Gaussian flip formula: `0.4748·γ/σ³`.
pub fn berry_esseen_bound(gamma: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("Berry-Esseen bound needs sigma > 0"));
    }
    Ok(0.4748 * gamma / sigma.powi(3))
}

/// Smallest M with `Φ(−Δ√M/σ) ≤ δ`: `max(1, ⌈(σ/Δ)²·Φ⁻¹(1−δ)²⌉)`.
pub fn min_ensemble_size(sigma: f64, delta_gap: f64, delta_risk: f64) -> Result<usize> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma must be positive"));
    }
    if delta_gap == 0.0 {
        return Err(Error::param("symmetric pair: no finite ensemble separates"));
    }
    if !(delta_gap > 0.0) {
        return Err(Error::param("attribution gap must be positive"));
    }
    if !(delta_risk > 0.0 && delta_risk < 0.5) {
        return Err(Error::param("risk level must lie in (0, 0.5)"));
    }
    let q = normal_quantile(1.0 - delta_risk)?;
    let m = ((sigma / delta_gap).powi(2) * q * q).ceil();
    Ok((m as usize).max(1))
}

/// Minimum number of model queries to resolve a gap `Δ₀` at noise `σ`: `σ²/(8Δ₀²)`.
pub fn query_lower_bound(sigma: f64, delta0: f64) -> Result<f64> {
    if !(sigma > 0.0 && delta0 > 0.0) {
        return Err(Error::param("sigma and delta0 must be positive"));
    }
    Ok(sigma * sigma / (8.0 * delta0 * delta0))
}

/// Within-group attribution ratio `1/(1 − αρ²)`.
pub fn theoretical_ratio(rho: f64, alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho.abs()) {
        return Err(Error::param(format!("rho must satisfy |rho| < 1, got {rho}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let denom = 1.0 - alpha * rho * rho;
    if denom <= 0.0 {
        return Err(Error::param("ratio diverges for alpha·rho² ≥ 1"));
    }
    Ok(1.0 / denom)
}

/// Expected split-count gap between first-mover and peer: `ρ²T/(2 − ρ²)`.
pub fn split_gap(rho: f64, t: f64) -> f64 {
    let r2 = rho * rho;
    r2 * t / (2.0 - r2)
}

/// Idealised split counts `(first-mover, peer)` = `(T/(2−ρ²), (1−ρ²)T/(2−ρ²))`.
pub fn axiom_split_counts(rho: f64, t: f64) -> (f64, f64) {
    let r2 = rho * rho;
    (t / (2.0 - r2), (1.0 - r2) * t / (2.0 - r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactFlipModel {
    pub p_top: f64,
    pub tie_prob: f64,
    pub flip_no_ties: f64,
    pub flip_tiebroken: f64,
}

/// Pairwise flip rate of two independent models when each feature of a group
/// of `m` is first-mover with probability `1/m` and the rest tie.
pub fn exact_flip_model(m: usize) -> Result<ExactFlipModel> {
    if m < 2 {
        return Err(Error::param(format!("group size must be at least 2, got {m}")));
    }
    let mf = m as f64;
    Ok(ExactFlipModel {
        p_top: 1.0 / mf,
        tie_prob: (mf - 2.0) / mf,
        flip_no_ties: 2.0 / (mf * mf),
        flip_tiebroken: 0.5,
    })
}

/// Lower bound on Spearman correlation when only a group of `m` ranks is
/// scrambled: `1 − 3m²/(P³ − P)`.
pub fn spearman_bound(p: usize, m: usize) -> Result<f64> {
    if p < 2 || m < 2 || m > p {
        return Err(Error::param(format!("need P ≥ 2 and 2 ≤ m ≤ P, got P={p}, m={m}")));
    }
    let (pf, mf) = (p as f64, m as f64);
    Ok(1.0 - 3.0 * mf * mf / (pf.powi(3) - pf))
}

/// Monte Carlo mean Spearman correlation between two rankings of `P` items
/// whose first `m` positions are independently shuffled.
pub fn spearman_monte_carlo(p: usize, m: usize, reps: usize, seed: u64) -> Result<f64> {
    spearman_bound(p, m)?;
    let mut r = rng::stream(seed, Stream::Resample);
    let pf = p as f64;
    let mut total = 0.0;
    let mut a: Vec<usize> = (0..p).collect();
    let mut b: Vec<usize> = (0..p).collect();
    for _ in 0..reps {
        a[..m].shuffle(&mut r);
        b[..m].shuffle(&mut r);
        let d2: f64 = a.iter().zip(&b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
        total += 1.0 - 6.0 * d2 / (pf * (pf * pf - 1.0));
    }
    Ok(total / reps.max(1) as f64)
}

fn choose2(m: usize) -> f64 {
    (m * m.saturating_sub(1)) as f64 / 2.0
}

/// Expected Kendall distance between rankings from two independent models:
/// within-group pairs flip with probability 1/2, between-group pairs with
/// `Φ(−Δ/σ)`. Between-group gaps are listed for group pairs `(ℓ, ℓ')`, `ℓ < ℓ'`,
/// in lexicographic order.
pub fn expected_kendall(group_sizes: &[usize], between_gaps: &[f64], between_sds: &[f64]) -> Result<f64> {
    let l = group_sizes.len();
    let n_between = l * l.saturating_sub(1) / 2;
    if between_gaps.len() != between_sds.len() || (!between_gaps.is_empty() && between_gaps.len() != n_between) {
        return Err(Error::param(format!(
            "expected {n_between} between-group gaps and sds, got {} and {}",
            between_gaps.len(),
            between_sds.len()
        )));
    }
    if group_sizes.contains(&0) {
        return Err(Error::param("group sizes must be positive"));
    }
    let mut total: f64 = group_sizes.iter().map(|&m| choose2(m) / 2.0).sum();
    let mut idx = 0;
    if !between_gaps.is_empty() {
        for a in 0..l {
            for b in a + 1..l {
                let sd = between_sds[idx];
                if !(sd > 0.0) {
                    return Err(Error::param("between-group sds must be positive"));
                }
                total += (group_sizes[a] * group_sizes[b]) as f64 * flip_from_snr(between_gaps[idx] / sd);
                idx += 1;
            }
        }
    }
    Ok(total)
}

/// Share of all feature pairs that sit inside a correlated group.
pub fn rashomon_coefficient(group_sizes: &[usize], p: usize) -> Result<f64> {
    let used: usize = group_sizes.iter().sum();
    if p < 2 || used > p || group_sizes.contains(&0) {
        return Err(Error::param(format!("invalid group sizes {group_sizes:?} for P={p}")));
    }
    Ok(group_sizes.iter().map(|&m| choose2(m)).sum::<f64>() / choose2(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FimAnalysis {
    pub lambda_minus: f64,
    pub semi_axis: f64,
    pub cr_variance_scale: f64,
}

/// Fisher-information geometry of a correlated Gaussian pair.
pub fn fim_analysis(rho: f64, sigma: f64, epsilon: f64) -> Result<FimAnalysis> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::param(format!("rho must lie in [0, 1); rho = 1 is singular (got {rho})")));
    }
    if !(sigma > 0.0 && epsilon > 0.0) {
        return Err(Error::param("sigma and epsilon must be positive"));
    }
    Ok(FimAnalysis {
        lambda_minus: (1.0 - rho) / (sigma * sigma),
        semi_axis: sigma * (2.0 * epsilon / (1.0 - rho)).sqrt(),
        cr_variance_scale: 2.0 * sigma * sigma / (1.0 - rho),
    })
}

/// Coefficient of variation (sample sd / mean) of `φ_j / n_j` over features with splits.
pub fn proportionality_cv(ensemble: &Ensemble, shap: &AttributionVector) -> Result<f64> {
    let counts = split_counts(ensemble);
    if counts.len() != shap.len() {
        return Err(Error::param("attribution vector length does not match the model"));
    }
    proportionality_cv_raw(&counts, &shap.values)
}

pub fn proportionality_cv_raw(counts: &[usize], values: &[f64]) -> Result<f64> {
    let per: Vec<f64> = counts
        .iter()
        .zip(values)
        .filter(|(n, _)| **n > 0)
        .map(|(n, v)| v / *n as f64)
        .collect();
    if per.len() < 2 {
        return Err(Error::param("proportionality needs at least 2 features with splits"));
    }
    let (mean, sd) = mean_sd(&per);
    if mean == 0.0 {
        return Err(Error::param("attributions are all zero"));
    }
    Ok(sd / mean)
}

/// Parameter bundle for the closed-form calculators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    pub rho: f64,
    pub alpha: f64,
    pub t: usize,
    pub m: usize,
    pub p: usize,
    pub sigma: f64,
    pub delta_gap: f64,
    pub delta_risk: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl Default for AnalyticParams {
    fn default() -> Self {
        AnalyticParams {
            rho: 0.9,
            alpha: 2.0 / std::f64::consts::PI,
            t: 100,
            m: 2,
            p: 10,
            sigma: 1.0,
            delta_gap: 0.5,
            delta_risk: 0.05,
            epsilon: 0.25,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSummary {
    pub ratio: f64,
    pub ratio_alpha_one: f64,
    pub split_gap: f64,
    pub first_mover_count: f64,
    pub peer_count: f64,
    pub exact_flip: ExactFlipModel,
    pub spearman_bound: f64,
    pub min_ensemble_size: usize,
    pub query_lower_bound: f64,
    pub fim: FimAnalysis,
    pub berry_esseen: f64,
    pub rashomon_single_group: f64,
}

impl AnalyticParams {
    pub fn evaluate(&self) -> Result<AnalyticSummary> {
        let (first, peer) = axiom_split_counts(self.rho, self.t as f64);
        Ok(AnalyticSummary {
            ratio: theoretical_ratio(self.rho, self.alpha)?,
            ratio_alpha_one: theoretical_ratio(self.rho, 1.0)?,
            split_gap: split_gap(self.rho, self.t as f64),
            first_mover_count: first,
            peer_count: peer,
            exact_flip: exact_flip_model(self.m)?,
            spearman_bound: spearman_bound(self.p, self.m)?,
            min_ensemble_size: min_ensemble_size(self.sigma, self.delta_gap, self.delta_risk)?,
            query_lower_bound: query_lower_bound(self.sigma, self.delta_gap)?,
            fim: fim_analysis(self.rho, self.sigma, self.epsilon)?,
            berry_esseen: berry_esseen_bound(self.gamma, self.sigma)?,
            rashomon_single_group: rashomon_coefficient(&[self.m], self.p)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_table() {
        for (rho, want) in [(0.5, 1.33), (0.7, 1.96), (0.9, 5.26), (0.95, 10.26)] {
            assert!((theoretical_ratio(rho, 1.0).unwrap() - want).abs() < 0.01);
        }
        assert_eq!(theoretical_ratio(0.0, 1.0).unwrap(), 1.0);
        assert!(theoretical_ratio(1.0, 1.0).is_err());
        assert!(theoretical_ratio(0.5, 1.5).is_err());
    }

    #[test]
    fn ratio_monotone() {
        let mut prev = 0.0;
        for i in 0..99 {
            let r = theoretical_ratio(i as f64 / 100.0, 0.6).unwrap();
            assert!(r > prev || i == 0);
            prev = r;
        }
        assert!(theoretical_ratio(0.5, 0.7).unwrap() > theoretical_ratio(0.5, 0.6).unwrap());
    }

    #[test]
    fn gap_and_counts() {
        assert!((split_gap(0.5, 100.0) - 25.0 / 1.75).abs() < 1e-12);
        for i in 1..100 {
            let rho = i as f64 / 100.0;
            assert!(split_gap(rho, 100.0) >= rho * rho * 50.0);
            let (a, b) = axiom_split_counts(rho, 100.0);
            assert!((a - b - split_gap(rho, 100.0)).abs() < 1e-9);
        }
        let (a, b) = axiom_split_counts(0.5, 100.0);
        assert!((a - 57.142_857).abs() < 1e-5 && (b - 42.857_143).abs() < 1e-5);
    }

    #[test]
    fn ensemble_size() {
        assert_eq!(min_ensemble_size(1.0, 1.0, 0.05).unwrap(), 3);
        let coef = normal_quantile(0.95).unwrap().powi(2);
        assert!((coef - 2.71).abs() < 0.01);
        let m = min_ensemble_size(1.0, 0.15, 0.05).unwrap();
        assert!((119..=122).contains(&m), "{m}");
        assert_eq!(min_ensemble_size(1.0, 1.0, 0.499_999_999).unwrap(), 1);
        assert!(min_ensemble_size(1.0, 0.0, 0.05).is_err());
        assert!(min_ensemble_size(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn query_bound() {
        assert_eq!(query_lower_bound(1.0, 1.0).unwrap(), 0.125);
        assert!((query_lower_bound(2.0, 0.2).unwrap() - 12.5).abs() < 1e-12);
        let a = query_lower_bound(1.0, 0.3).unwrap();
        let b = query_lower_bound(1.0, 0.15).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn flip_model_consistency() {
        let two = exact_flip_model(2).unwrap();
        assert_eq!(two.tie_prob, 0.0);
        assert_eq!(two.flip_no_ties, 0.5);
        let five = exact_flip_model(5).unwrap();
        assert!((five.tie_prob - 0.6).abs() < 1e-15 && (five.flip_no_ties - 0.08).abs() < 1e-15);
        for m in 2..=10 {
            let f = exact_flip_model(m).unwrap();
            assert!((f.p_top * m as f64 - 1.0).abs() < 1e-12);
            assert!((f.tie_prob + 2.0 * f.p_top - 1.0).abs() < 1e-12);
            assert_eq!(f.flip_tiebroken, 0.5);
        }
        assert!(exact_flip_model(1).is_err());
    }

    #[test]
    fn flip_model_by_enumeration() {
        // pair (0, 1) in a group of m: model A orders 0 above 1 iff 0 is first-mover,
        // below iff 1 is; otherwise tie. Count opposite strict orders over m² pairs.
        for m in 2..=8usize {
            let mut flips = 0;
            for a in 0..m {
                for b in 0..m {
                    let oa = if a == 0 { 1 } else if a == 1 { -1 } else { 0 };
                    let ob = if b == 0 { 1 } else if b == 1 { -1 } else { 0 };
                    if oa * ob == -1 {
                        flips += 1;
                    }
                }
            }
            let f = exact_flip_model(m).unwrap();
            assert!((flips as f64 / (m * m) as f64 - f.flip_no_ties).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_distances() {
        assert!((spearman_bound(30, 5).unwrap() - (1.0 - 75.0 / 26970.0)).abs() < 1e-12);
        assert!(spearman_bound(3, 4).is_err());
        assert_eq!(expected_kendall(&[2], &[], &[]).unwrap(), 0.5);
        let k = expected_kendall(&[2, 3], &[0.0], &[1.0]).unwrap();
        assert!((k - (0.5 + 1.5 + 3.0)).abs() < 1e-12);
        assert!(expected_kendall(&[2, 3], &[0.0, 1.0], &[1.0, 1.0]).is_err());
        assert!((rashomon_coefficient(&[5, 5], 10).unwrap() - 20.0 / 45.0).abs() < 1e-15);
        assert!(rashomon_coefficient(&[6, 6], 10).is_err());
        let mc = spearman_monte_carlo(10, 3, 2000, 1).unwrap();
        assert!(mc < 1.0 && mc > 0.9);
    }

    #[test]
    fn fim() {
        let f = fim_analysis(0.5, 1.0, 0.25).unwrap();
        assert!((f.semi_axis - 1.0).abs() < 1e-15);
        assert_eq!(fim_analysis(0.0, 2.0, 1.0).unwrap().lambda_minus, 0.25);
        let a = fim_analysis(0.3, 1.5, 0.1).unwrap().semi_axis;
        let b = fim_analysis(0.3, 1.5, 0.4).unwrap().semi_axis;
        assert!((b / a - 2.0).abs() < 1e-12);
        assert!(fim_analysis(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn berry_esseen_and_snr() {
        assert_eq!(flip_from_snr(0.0), 0.5);
        assert!((flip_from_snr(1.96) - 0.025).abs() < 1e-4);
        assert!((berry_esseen_bound(2.0, 1.0).unwrap() - 0.9496).abs() < 1e-12);
        assert!(berry_esseen_bound(1.0, 0.0).is_err());
    }

    #[test]
    fn proportionality() {
        assert_eq!(proportionality_cv_raw(&[2, 4, 0], &[1.0, 2.0, 0.0]).unwrap(), 0.0);
        assert!(proportionality_cv_raw(&[2, 0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn analytic_bundle() {
        let s = AnalyticParams::default().evaluate().unwrap();
        assert!((s.ratio_alpha_one - 5.26).abs() < 0.01);
        assert_eq!(s.exact_flip.flip_tiebroken, 0.5);
    }
}
