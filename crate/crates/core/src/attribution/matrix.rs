use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{permutation_importance, shap_global, split_count_importance, AttributionVector, BackgroundSet};
use crate::boost::{fit_many, Ensemble, TrainConfig};
use crate::rng::{self, Stream};
use crate::synthdata::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Shap,
    Permutation,
    SplitCount,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shap" => Ok(Method::Shap),
            "permutation" => Ok(Method::Permutation),
            "split_count" | "split-count" => Ok(Method::SplitCount),
            other => Err(Error::param(format!(
                "unknown attribution method '{other}' (expected shap, permutation or split_count)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Shap => "shap",
            Method::Permutation => "permutation",
            Method::SplitCount => "split_count",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionConfig {
    pub method: Method,
    /// Rows held out from training for global attribution.
    pub eval_size: usize,
    pub background_size: usize,
    pub eval_slice_seed: u64,
    pub background_seed: u64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            method: Method::Shap,
            eval_size: 200,
            background_size: 50,
            eval_slice_seed: 0,
            background_seed: 0,
        }
    }
}

/// Training rows plus the evaluation slice and background shared by every
/// model of a matrix.
#[derive(Debug, Clone)]
pub struct EvalPlan {
    pub train: Dataset,
    pub eval_features: Array2<f64>,
    pub eval_target: Array1<f64>,
    pub background: BackgroundSet,
    pub eval_slice_seed: u64,
    pub background_seed: u64,
}

impl EvalPlan {
    /// Holds out `min(eval_size, n/2)` seed-chosen rows; the background is
    /// drawn from the remaining training rows.
    pub fn split(dataset: &Dataset, cfg: &AttributionConfig) -> Result<Self> {
        let n = dataset.n_samples();
        let eval_count = cfg.eval_size.min(n / 2);
        if eval_count == 0 || cfg.background_size == 0 {
            return Err(Error::param("evaluation slice and background must be nonempty"));
        }
        let mut r = rng::stream(cfg.eval_slice_seed, Stream::EvalSlice);
        let eval_idx = rng::sample_sorted(&mut r, n, eval_count);
        let mut held = vec![false; n];
        eval_idx.iter().for_each(|&i| held[i] = true);
        let train_idx: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
        let train = dataset.subset_rows(&train_idx);
        let eval = dataset.subset_rows(&eval_idx);
        Self::with_eval(train, &eval, cfg)
    }

    /// Uses a separately supplied evaluation set.
    pub fn with_eval(train: Dataset, eval: &Dataset, cfg: &AttributionConfig) -> Result<Self> {
        if eval.n_features() != train.n_features() {
            return Err(Error::param("evaluation set and training set differ in width"));
        }
        let background = BackgroundSet::sample(train.features.view(), cfg.background_size, cfg.background_seed)?;
        Ok(EvalPlan {
            train,
            eval_features: eval.features.clone(),
            eval_target: eval.target.clone(),
            background,
            eval_slice_seed: cfg.eval_slice_seed,
            background_seed: cfg.background_seed,
        })
    }
}

/// Global attribution of one model under `method`; `seed` drives permutation draws.
pub fn attribution_row(ensemble: &Ensemble, plan: &EvalPlan, method: Method, seed: u64) -> Result<AttributionVector> {
    match method {
        Method::Shap => shap_global(ensemble, plan.eval_features.view(), &plan.background),
        Method::Permutation => permutation_importance(ensemble, plan.eval_features.view(), plan.eval_target.view(), seed),
        Method::SplitCount => Ok(split_count_importance(ensemble)),
    }
}

/// M×P table of nonnegative global attributions, one row per trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    pub values: Array2<f64>,
    pub names: Vec<String>,
    pub seeds: Vec<u64>,
    pub method: Method,
    pub eval_slice_seed: u64,
    pub background_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    seeds: Vec<u64>,
    method: Method,
    eval_slice_seed: u64,
    background_seed: u64,
}

impl AttributionMatrix {
    /// Wraps raw values; seeds default to `0..M`.
    pub fn new(values: Array2<f64>, names: Vec<String>, method: Method) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::param("attribution matrix needs at least one row"));
        }
        if names.len() != values.ncols() {
            return Err(Error::param(format!(
                "{} names for {} attribution columns",
                names.len(),
                values.ncols()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::param(format!("attribution entries must be finite and nonnegative, found {v}")));
        }
        let seeds = (0..values.nrows() as u64).collect();
        Ok(AttributionMatrix {
            values,
            names,
            seeds,
            method,
            eval_slice_seed: 0,
            background_seed: 0,
        })
    }

    /// Convenience for simulated matrices with generic feature names.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(values, names, Method::Shap)
    }

    /// Attributes each model on the plan's shared slice, in model order.
    pub fn from_models(models: &[Ensemble], plan: &EvalPlan, method: Method) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::param("no models to attribute"));
        }
        let rows: Vec<AttributionVector> = models
            .par_iter()
            .map(|e| attribution_row(e, plan, method, e.seed))
            .collect::<Result<_>>()?;
        let p = plan.train.n_features();
        let mut values = Array2::zeros((rows.len(), p));
        for (mut dst, row) in values.axis_iter_mut(Axis(0)).zip(&rows) {
            dst.assign(&ArrayView1::from(&row.values));
        }
        let mut out = Self::new(values, plan.train.names.clone(), method)?;
        out.seeds = models.iter().map(|e| e.seed).collect();
        out.eval_slice_seed = plan.eval_slice_seed;
        out.background_seed = plan.background_seed;
        Ok(out)
    }

    pub fn n_models(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Matrix restricted to the given rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        AttributionMatrix {
            values: self.values.select(Axis(0), rows),
            seeds: rows.iter().map(|&i| self.seeds[i]).collect(),
            ..self.clone()
        }
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes the CSV table and its JSON sidecar next to it.
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let file = fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        self.write_csv(file)?;
        let side = Self::sidecar_path(csv_path);
        fs::write(&side, self.sidecar_json()?).map_err(|e| Error::io(&side, e))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for row in self.values.rows() {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush().map_err(|e| Error::io("<attribution csv>", e))?;
        Ok(())
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            seeds: self.seeds.clone(),
            method: self.method,
            eval_slice_seed: self.eval_slice_seed,
            background_seed: self.background_seed,
        })?)
    }

    /// Reads a matrix CSV; the sidecar is used when present.
    pub fn load(csv_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let file = fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut out = Self::read_csv(file)?;
        let side = Self::sidecar_path(csv_path);
        if side.exists() {
            let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            let meta: Sidecar = serde_json::from_str(&text)?;
            if meta.seeds.len() != out.n_models() {
                return Err(Error::param(format!(
                    "sidecar lists {} seeds for {} rows",
                    meta.seeds.len(),
                    out.n_models()
                )));
            }
            out.seeds = meta.seeds;
            out.method = meta.method;
            out.eval_slice_seed = meta.eval_slice_seed;
            out.background_seed = meta.background_seed;
        }
        Ok(out)
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut flat = Vec::new();
        let mut rows = 0;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            for (j, cell) in rec.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row: i + 2,
                    column: names.get(j).cloned().unwrap_or_default(),
                    message: format!("'{cell}' is not a number"),
                })?;
                flat.push(v);
            }
            rows += 1;
        }
        let values = Array2::from_shape_vec((rows, names.len()), flat)
            .map_err(|e| Error::param(format!("ragged attribution table: {e}")))?;
        Self::new(values, names, Method::Shap)
    }
}

/// Trains `m` models with seeds `seed_base..seed_base+m` and attributes each
/// on a shared held-out slice.
pub fn attribution_matrix(
    dataset: &Dataset,
    train_config: &TrainConfig,
    m: usize,
    seed_base: u64,
    cfg: &AttributionConfig,
) -> Result<AttributionMatrix> {
    if m == 0 {
        return Err(Error::param("model count must be at least 1"));
    }
    let plan = EvalPlan::split(dataset, cfg)?;
    let seeds: Vec<u64> = (0..m as u64).map(|i| seed_base + i).collect();
    let models = fit_many(&plan.train, train_config, &seeds)?;
    AttributionMatrix::from_models(&models, &plan, cfg.method)
}
