//! DASH consensus: column-wise aggregation of an attribution matrix across
//! independently trained models, with ties reported for features whose
//! relative order is not supported by the Z-test.

use std::fmt;
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionConfig, AttributionMatrix, EvalPlan};
use crate::boost::{first_mover, fit_many, Ensemble, TrainConfig};
use crate::rng::{self, Stream};
use crate::stability::{binary_entropy, normal_cdf, screen, z_test, CorrelationGroups, PairDiagnostic, ScreenResult, Verdict};
use crate::synthdata::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregator {
    Mean,
    /// Drops `⌊αM⌋` rows from each tail before averaging.
    Trimmed(f64),
    Median,
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregator::Mean => f.write_str("mean"),
            Aggregator::Trimmed(a) => write!(f, "trimmed({a})"),
            Aggregator::Median => f.write_str("median"),
        }
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    /// Accepts `mean`, `median`, `trimmed(0.1)` or `trimmed:0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "mean" => return Ok(Aggregator::Mean),
            "median" => return Ok(Aggregator::Median),
            _ => {}
        }
        let alpha = s
            .strip_prefix("trimmed(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("trimmed:"))
            .and_then(|a| a.parse::<f64>().ok())
            .ok_or_else(|| Error::param(format!("unknown consensus method '{s}'")))?;
        Ok(Aggregator::Trimmed(alpha))
    }
}

impl Serialize for Aggregator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Aggregator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn aggregate_column(mut col: Vec<f64>, method: Aggregator) -> Result<f64> {
    let m = col.len();
    match method {
        Aggregator::Mean => Ok(col.iter().sum::<f64>() / m as f64),
        Aggregator::Median => {
            col.sort_by(f64::total_cmp);
            Ok(if m % 2 == 1 {
                col[m / 2]
            } else {
                (col[m / 2 - 1] + col[m / 2]) / 2.0
            })
        }
        Aggregator::Trimmed(alpha) => {
            if !(0.0..0.5).contains(&alpha) {
                return Err(Error::param(format!("trim fraction must lie in [0, 0.5), got {alpha}")));
            }
            let cut = (alpha * m as f64).floor() as usize;
            if m <= 2 * cut {
                return Err(Error::param("trimming leaves no rows"));
            }
            col.sort_by(f64::total_cmp);
            let kept = &col[cut..m - cut];
            Ok(kept.iter().sum::<f64>() / kept.len() as f64)
        }
    }
}

/// Column-wise aggregate of the matrix.
pub fn aggregate(attr: &AttributionMatrix, method: Aggregator) -> Result<Vec<f64>> {
    (0..attr.n_features())
        .map(|j| aggregate_column(attr.column(j).to_vec(), method))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub values: Vec<f64>,
    pub method: Aggregator,
    #[serde(rename = "M")]
    pub m: usize,
    /// Every group has equal first-mover counts. False when first-mover
    /// information was not supplied.
    pub balanced: bool,
    /// Times each feature was first-mover of its group (empty when unknown).
    pub first_mover_counts: Vec<usize>,
    pub tied_groups: Vec<Vec<usize>>,
}

/// Plain consensus without group metadata.
pub fn consensus(attr: &AttributionMatrix, method: Aggregator) -> Result<ConsensusResult> {
    Ok(ConsensusResult {
        values: aggregate(attr, method)?,
        method,
        m: attr.n_models(),
        balanced: false,
        first_mover_counts: Vec::new(),
        tied_groups: Vec::new(),
    })
}

/// True iff every feature of `group` is first-mover equally often.
pub fn is_balanced(first_movers: &[Option<usize>], group: &[usize]) -> bool {
    let counts: Vec<usize> = group
        .iter()
        .map(|j| first_movers.iter().filter(|f| **f == Some(*j)).count())
        .collect();
    counts.windows(2).all(|w| w[0] == w[1])
}

/// Within-group pairs whose Z-test is not stable, merged transitively.
pub fn tied_groups(attr: &AttributionMatrix, groups: &CorrelationGroups) -> Result<Vec<Vec<usize>>> {
    let p = attr.n_features();
    let mut uf = UnionFind::<usize>::new(p);
    let mut tied = vec![false; p];
    if attr.n_models() >= 2 {
        for (j, k) in groups.within_pairs() {
            if z_test(attr, j, k)?.verdict != Verdict::Stable {
                uf.union(j, k);
                tied[j] = true;
                tied[k] = true;
            }
        }
    } else {
        // one model gives no evidence either way; the whole group is reported tied
        for g in &groups.groups {
            for w in g.windows(2) {
                uf.union(w[0], w[1]);
            }
            g.iter().for_each(|&j| tied[j] = true);
        }
    }
    let labels = uf.into_labeling();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for j in 0..p {
        if tied[j] && !out.iter().any(|g| g.contains(&j)) {
            out.push((j..p).filter(|&k| tied[k] && labels[k] == labels[j]).collect());
        }
    }
    Ok(out)
}

impl ConsensusResult {
    /// Adds tie and balance metadata. `first_movers[i]` is the per-group
    /// first-mover list of model `i`, with groups indexed as in `groups`.
    pub fn annotate(
        &mut self,
        attr: &AttributionMatrix,
        groups: &CorrelationGroups,
        first_movers: Option<&[Vec<Option<usize>>]>,
    ) -> Result<()> {
        self.tied_groups = tied_groups(attr, groups)?;
        if let Some(fm) = first_movers {
            let mut counts = vec![0; attr.n_features()];
            for row in fm {
                for j in row.iter().flatten() {
                    counts[*j] += 1;
                }
            }
            self.balanced = groups.groups.iter().enumerate().all(|(g, members)| {
                let per_model: Vec<Option<usize>> = fm.iter().map(|row| row.get(g).copied().flatten()).collect();
                is_balanced(&per_model, members)
            });
            self.first_mover_counts = counts;
        }
        Ok(())
    }

    /// Ordered blocks, most important first; tied groups form one block
    /// ranked by their mean consensus value. Equal keys keep index order.
    pub fn ranking(&self) -> Vec<Vec<usize>> {
        let mut blocks: Vec<(f64, Vec<usize>)> = self
            .tied_groups
            .iter()
            .map(|g| (g.iter().map(|&j| self.values[j]).sum::<f64>() / g.len() as f64, g.clone()))
            .collect();
        for j in 0..self.values.len() {
            if !self.tied_groups.iter().any(|g| g.contains(&j)) {
                blocks.push((self.values[j], vec![j]));
            }
        }
        blocks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1[0].cmp(&b.1[0])));
        blocks.into_iter().map(|(_, g)| g).collect()
    }

    pub fn to_json(&self, names: &[String]) -> Result<String> {
        #[derive(Serialize)]
        struct Report<'a> {
            #[serde(flatten)]
            result: &'a ConsensusResult,
            names: &'a [String],
            ranking: Vec<Vec<&'a str>>,
        }
        let ranking = self
            .ranking()
            .into_iter()
            .map(|b| b.into_iter().map(|j| names[j].as_str()).collect())
            .collect();
        Ok(serde_json::to_string_pretty(&Report {
            result: self,
            names,
            ranking,
        })?)
    }
}

/// Order asserted by the consensus of `sub` for the pair: `+1` for j above k,
/// `-1` for below, `0` for a reported tie.
fn consensus_order(sub: &AttributionMatrix, j: usize, k: usize) -> Result<i8> {
    if sub.n_models() >= 2 && z_test(sub, j, k)?.verdict != Verdict::Stable {
        return Ok(0);
    }
    let gap = aggregate_column(sub.column(j).to_vec(), Aggregator::Mean)?
        - aggregate_column(sub.column(k).to_vec(), Aggregator::Mean)?;
    Ok(if gap > 0.0 {
        1
    } else if gap < 0.0 {
        -1
    } else {
        0
    })
}

fn min_count_rate(orders: &[i8]) -> f64 {
    let up = orders.iter().filter(|o| **o > 0).count();
    let down = orders.iter().filter(|o| **o < 0).count();
    up.min(down) as f64 / orders.len() as f64
}

/// Flip rate of the DASH ordering of `(j, k)` across resampled sub-ensembles
/// of `m_sub` rows.
///
/// Each resample asserts an order only when its own Z-test is stable and
/// reports a tie otherwise; ties count for neither side. When the number of
/// distinct subsets does not exceed `n_resamples` every subset is enumerated
/// once, so `m_sub = 1` reproduces [`crate::stability::empirical_flip_rate`]
/// exactly and `m_sub = M` gives 0.
pub fn consensus_flip_rate(
    attr: &AttributionMatrix,
    j: usize,
    k: usize,
    m_sub: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<f64> {
    let m = attr.n_models();
    if m_sub == 0 || m_sub > m {
        return Err(Error::param(format!("sub-ensemble size {m_sub} must lie in 1..={m}")));
    }
    if n_resamples < 50 {
        return Err(Error::param("consensus flip rate needs at least 50 resamples"));
    }
    let orders: Vec<i8> = if n_choose(m, m_sub) <= n_resamples as f64 {
        combinations(m, m_sub)
            .iter()
            .map(|rows| consensus_order(&attr.select_rows(rows), j, k))
            .collect::<Result<_>>()?
    } else {
        (0..n_resamples)
            .map(|r| {
                let mut g = rng::substream(seed, Stream::Resample, r as u64);
                let rows = rng::sample_sorted(&mut g, m, m_sub);
                consensus_order(&attr.select_rows(&rows), j, k)
            })
            .collect::<Result<_>>()?
    };
    Ok(min_count_rate(&orders))
}

/// Retrain-equivalent variant: splits the rows into `⌊M/m_sub⌋` disjoint
/// sub-ensembles, each an independent DASH run.
pub fn consensus_flip_rate_disjoint(attr: &AttributionMatrix, j: usize, k: usize, m_sub: usize) -> Result<f64> {
    let blocks = attr.n_models() / m_sub.max(1);
    if m_sub == 0 || blocks < 2 {
        return Err(Error::param("need at least two disjoint sub-ensembles"));
    }
    let orders: Vec<i8> = (0..blocks)
        .map(|b| {
            let rows: Vec<usize> = (b * m_sub..(b + 1) * m_sub).collect();
            consensus_order(&attr.select_rows(&rows), j, k)
        })
        .collect::<Result<_>>()?;
    Ok(min_count_rate(&orders))
}

fn n_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for t in i..k {
            cur[t] = cur[t - 1] + 1;
        }
    }
}

/// Bits of within-group ordering discarded by a tie: `log2(m!)`.
pub fn info_loss_within(m: usize) -> f64 {
    (2..=m).map(|i| (i as f64).log2()).sum()
}

/// Information about a between-group order carried by an M-model consensus.
pub fn info_between(m: usize, delta: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma must be positive"));
    }
    Ok(1.0 - binary_entropy(normal_cdf(-delta.abs() * (m as f64).sqrt() / sigma)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "screen@5")]
    Screen,
    #[serde(rename = "confirm@10")]
    Confirm,
    #[serde(rename = "resolve@25")]
    Resolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    /// Not flagged by the screen.
    Stable,
    /// Clear Z-test at the confirm or resolve stage.
    ResolvedStable,
    /// Reported as a tie.
    Tied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub j: usize,
    pub k: usize,
    pub screen: ScreenResult,
    /// Z-test on the first stage's models.
    pub pilot: PairDiagnostic,
    /// Z-test at the stage that settled the pair (absent when the screen cleared it).
    pub final_test: Option<PairDiagnostic>,
    pub status: PairStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressiveOutcome {
    pub stage_reached: Stage,
    pub pairs: Vec<PairOutcome>,
    pub models_trained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressiveConfig {
    pub stage_sizes: [usize; 3],
    pub z_critical: f64,
    /// Open interval of |Z| at the confirm stage that triggers the resolve stage.
    pub borderline: (f64, f64),
    pub attribution: AttributionConfig,
    pub seed_base: u64,
}

impl Default for ProgressiveConfig {
    fn default() -> Self {
        ProgressiveConfig {
            stage_sizes: [5, 10, 25],
            z_critical: 1.96,
            borderline: (1.5, 2.5),
            attribution: AttributionConfig::default(),
            seed_base: 0,
        }
    }
}

/// Screen → confirm → resolve with adaptive ensemble growth.
///
/// At the confirm stage a pair with |Z| inside the borderline interval is
/// escalated; otherwise |Z| < z_critical is a tie and anything else is stable.
pub fn progressive_dash(
    dataset: &Dataset,
    train_config: &TrainConfig,
    pairs: &[(usize, usize)],
    cfg: &ProgressiveConfig,
) -> Result<ProgressiveOutcome> {
    let plan = EvalPlan::split(dataset, &cfg.attribution)?;
    let mut models: Vec<Ensemble> = Vec::new();
    let grow = |target: usize, models: &mut Vec<Ensemble>| -> Result<AttributionMatrix> {
        let seeds: Vec<u64> = (models.len()..target).map(|i| cfg.seed_base + i as u64).collect();
        models.extend(fit_many(&plan.train, train_config, &seeds)?);
        AttributionMatrix::from_models(models, &plan, cfg.attribution.method)
    };
    let [m0, m1, m2] = cfg.stage_sizes;
    let pilot = grow(m0, &mut models)?;
    let mut outcomes = Vec::with_capacity(pairs.len());
    for &(j, k) in pairs {
        let scr = screen(&models[0], (j, k), train_config.learning_rate)?;
        outcomes.push(PairOutcome {
            j,
            k,
            pilot: z_test(&pilot, j, k)?,
            status: if scr.flagged { PairStatus::Tied } else { PairStatus::Stable },
            screen: scr,
            final_test: None,
        });
    }
    if outcomes.iter().all(|o| o.status == PairStatus::Stable) {
        return Ok(ProgressiveOutcome {
            stage_reached: Stage::Screen,
            pairs: outcomes,
            models_trained: m0,
        });
    }
    let confirm = grow(m1, &mut models)?;
    let mut escalate = Vec::new();
    for (i, o) in outcomes.iter_mut().enumerate() {
        if o.status == PairStatus::Stable {
            continue;
        }
        let d = z_test(&confirm, o.j, o.k)?;
        o.status = if d.z > cfg.borderline.0 && d.z < cfg.borderline.1 {
            escalate.push(i);
            PairStatus::Tied
        } else if d.z < cfg.z_critical {
            PairStatus::Tied
        } else {
            PairStatus::ResolvedStable
        };
        o.final_test = Some(d);
    }
    if escalate.is_empty() {
        return Ok(ProgressiveOutcome {
            stage_reached: Stage::Confirm,
            pairs: outcomes,
            models_trained: m1,
        });
    }
    let resolve = grow(m2, &mut models)?;
    for i in escalate {
        let o = &mut outcomes[i];
        let d = z_test(&resolve, o.j, o.k)?;
        o.status = if d.verdict == Verdict::Stable {
            PairStatus::ResolvedStable
        } else {
            PairStatus::Tied
        };
        o.final_test = Some(d);
    }
    Ok(ProgressiveOutcome {
        stage_reached: Stage::Resolve,
        pairs: outcomes,
        models_trained: m2,
    })
}

/// Trains `m` models, builds the attribution matrix and an annotated consensus
/// in one call.
pub fn run_dash(
    dataset: &Dataset,
    train_config: &TrainConfig,
    m: usize,
    seed_base: u64,
    attribution: &AttributionConfig,
    groups: &CorrelationGroups,
    method: Aggregator,
) -> Result<(AttributionMatrix, ConsensusResult)> {
    let plan = EvalPlan::split(dataset, attribution)?;
    let seeds: Vec<u64> = (0..m as u64).map(|i| seed_base + i).collect();
    let models = fit_many(&plan.train, train_config, &seeds)?;
    let attr = AttributionMatrix::from_models(&models, &plan, attribution.method)?;
    let group_of = groups.group_of(dataset.n_features());
    let fm: Vec<Vec<Option<usize>>> = models.iter().map(|e| first_mover(e, &group_of)).collect();
    let mut result = consensus(&attr, method)?;
    result.annotate(&attr, groups, Some(&fm))?;
    Ok((attr, result))
}
