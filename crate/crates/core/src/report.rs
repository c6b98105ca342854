//! Human-readable instability disclosure built from an attribution matrix.

use serde::Serialize;

use crate::attribution::AttributionMatrix;
use crate::dash::{consensus, Aggregator};
use crate::stability::{z_test, CorrelationGroups, PairDiagnostic, Z_CRITICAL};
use crate::{Error, Result};

const TEMPLATE: &str = include_str!("../assets/disclosure.txt");

fn section(name: &str) -> &'static str {
    let header = format!("[{name}]");
    let mut lines = TEMPLATE.lines().filter(|l| !l.starts_with('#'));
    lines.find(|l| l.trim() == header);
    let body = lines.next().unwrap_or_default();
    debug_assert!(!body.starts_with('['), "template section {name} is empty");
    body
}

fn fill(text: &str, vars: &[(&str, String)]) -> String {
    vars.iter()
        .fold(text.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

/// A correlated group whose members cannot be ordered reliably.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnstableGroup {
    pub features: Vec<String>,
    pub indices: Vec<usize>,
    /// Mean empirical flip rate over the group's pairs.
    pub flip_rate: f64,
    pub pairs: Vec<PairDiagnostic>,
    pub total_attribution: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisclosureReport {
    pub threshold: f64,
    pub models: usize,
    pub unstable_groups: Vec<UnstableGroup>,
    /// Smallest Z over pairs drawn from two different correlated groups.
    pub min_between_z: Option<f64>,
    pub ranking: Vec<Vec<String>>,
}

impl DisclosureReport {
    /// Needs at least two models for the Z-test.
    pub fn build(attr: &AttributionMatrix, groups: &CorrelationGroups) -> Result<Self> {
        if attr.n_models() < 2 {
            return Err(Error::param("a disclosure report needs at least 2 models"));
        }
        let mut result = consensus(attr, Aggregator::Mean)?;
        result.annotate(attr, groups, None)?;
        let total: f64 = result.values.iter().sum();
        let unstable_groups = result
            .tied_groups
            .iter()
            .map(|g| -> Result<UnstableGroup> {
                let mut pairs = Vec::new();
                for (a, &j) in g.iter().enumerate() {
                    for &k in &g[a + 1..] {
                        pairs.push(z_test(attr, j, k)?);
                    }
                }
                let flip_rate = pairs.iter().map(|p| p.flip_empirical).sum::<f64>() / pairs.len().max(1) as f64;
                let group_total: f64 = g.iter().map(|&j| result.values[j]).sum();
                Ok(UnstableGroup {
                    features: g.iter().map(|&j| attr.names[j].clone()).collect(),
                    indices: g.clone(),
                    flip_rate,
                    pairs,
                    total_attribution: group_total,
                    share: if total > 0.0 { group_total / total } else { 0.0 },
                })
            })
            .collect::<Result<_>>()?;

        let mut min_between_z: Option<f64> = None;
        for (a, ga) in groups.groups.iter().enumerate() {
            for gb in &groups.groups[a + 1..] {
                for &j in ga {
                    for &k in gb {
                        let z = z_test(attr, j, k)?.z;
                        min_between_z = Some(min_between_z.map_or(z, |m| m.min(z)));
                    }
                }
            }
        }
        let ranking = result
            .ranking()
            .into_iter()
            .map(|b| b.into_iter().map(|j| attr.names[j].clone()).collect())
            .collect();
        Ok(DisclosureReport {
            threshold: groups.threshold,
            models: attr.n_models(),
            unstable_groups,
            min_between_z,
            ranking,
        })
    }

    pub fn has_instability(&self) -> bool {
        !self.unstable_groups.is_empty()
    }

    /// Plain-text report: ranking, per-pair Z values and the filled disclosure.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Consensus ranking over {} models (tied features share a block):\n", self.models));
        for (i, block) in self.ranking.iter().enumerate() {
            out.push_str(&format!("  {}. {}\n", i + 1, block.join(" = ")));
        }
        out.push('\n');
        if !self.unstable_groups.is_empty() {
            out.push_str("Within-group Z values:\n");
            for g in &self.unstable_groups {
                for p in &g.pairs {
                    out.push_str(&format!(
                        "  {} vs {}: Z = {}, flip = {:.1}%\n",
                        g.features[g.indices.iter().position(|&j| j == p.j).unwrap_or(0)],
                        g.features[g.indices.iter().position(|&j| j == p.k).unwrap_or(0)],
                        fmt_z(p.z),
                        100.0 * p.flip_empirical
                    ));
                }
            }
            out.push('\n');
        }
        out.push_str("Disclosure:\n");
        for para in self.disclosure_paragraphs() {
            out.push_str(&para);
            out.push_str("\n\n");
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }

    pub fn disclosure_paragraphs(&self) -> Vec<String> {
        let threshold = format!("{}", self.threshold);
        let models = self.models.to_string();
        let mut paras = Vec::new();
        if self.unstable_groups.is_empty() {
            paras.push(fill(section("no-unstable"), &[("models", models.clone()), ("threshold", threshold.clone())]));
        }
        for g in &self.unstable_groups {
            let flip = format!("{:.0}", 100.0 * g.flip_rate);
            let mut text = fill(
                section("unstable-group"),
                &[
                    ("features", g.features.join(", ")),
                    ("threshold", threshold.clone()),
                    ("flip_pct", flip.clone()),
                ],
            );
            text.push(' ');
            text.push_str(&fill(
                section("group-total"),
                &[
                    ("features", g.features.join(", ")),
                    ("value", format!("{:.4}", g.total_attribution)),
                    ("share_pct", format!("{:.1}", 100.0 * g.share)),
                    ("flip_pct", flip),
                ],
            ));
            paras.push(text);
        }
        if let Some(z) = self.min_between_z {
            let name = if z > Z_CRITICAL { "between-stable" } else { "between-unstable" };
            paras.push(fill(section(name), &[("min_z", fmt_z(z))]));
        }
        if self.has_instability() {
            paras.push(fill(section("closing"), &[("models", models)]));
        }
        paras
    }
}

fn fmt_z(z: f64) -> String {
    if z.is_finite() {
        format!("{z:.2}")
    } else {
        "inf".into()
    }
}
