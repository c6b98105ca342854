//! Synthetic collinear datasets and CSV persistence.
//!
//! Features are drawn group by group from an equicorrelated Gaussian: inside a
//! group every pair has correlation `rho`, groups are mutually independent, and
//! optional extra features are independent standard normals. The response is
//! linear, `y = Σ β_j x_j + ε` with `ε ~ N(0, noise_sd²)`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Block structure of the feature vector: `group_count` blocks of
/// `group_size` equicorrelated features, followed by `extras` independent ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group_count: usize,
    pub group_size: usize,
    pub rho: f64,
    #[serde(default)]
    pub extras: usize,
}

impl GroupSpec {
    pub fn new(group_count: usize, group_size: usize, rho: f64) -> Self {
        GroupSpec {
            group_count,
            group_size,
            rho,
            extras: 0,
        }
    }

    pub fn with_extras(mut self, extras: usize) -> Self {
        self.extras = extras;
        self
    }

    pub fn n_features(&self) -> usize {
        self.group_count * self.group_size + self.extras
    }

    /// Group index per feature; extras carry `None`.
    pub fn group_of(&self) -> Vec<Option<usize>> {
        (0..self.n_features())
            .map(|j| {
                let g = j / self.group_size.max(1);
                (g < self.group_count).then_some(g)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::param("group size must be at least 1"));
        }
        if self.n_features() == 0 {
            return Err(Error::param("dataset must have at least one feature"));
        }
        check_rho(self.group_size, self.rho)
    }
}

/// Full data-generating configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub groups: GroupSpec,
    pub betas: Vec<f64>,
    pub noise_sd: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl DgpConfig {
    /// β = 1 on every grouped feature, 0 on extras, unit noise.
    pub fn symmetric(groups: GroupSpec, n_samples: usize, seed: u64) -> Self {
        let betas = groups
            .group_of()
            .iter()
            .map(|g| if g.is_some() { 1.0 } else { 0.0 })
            .collect();
        DgpConfig {
            groups,
            betas,
            noise_sd: 1.0,
            n_samples,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.groups.validate()?;
        if self.betas.len() != self.groups.n_features() {
            return Err(Error::param(format!(
                "betas has {} entries but the group layout has {} features",
                self.betas.len(),
                self.groups.n_features()
            )));
        }
        if self.betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::param("betas must be finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::param("noise_sd must be a finite nonnegative number"));
        }
        if self.n_samples < 2 {
            return Err(Error::param("n_samples must be at least 2"));
        }
        Ok(())
    }
}

/// Feature matrix (rows = samples) with target and column metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub target: Array1<f64>,
    pub names: Vec<String>,
    pub group_of: Vec<Option<usize>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, target: Array1<f64>, names: Vec<String>) -> Result<Self> {
        if features.nrows() != target.len() {
            return Err(Error::param(format!(
                "feature matrix has {} rows but target has {} entries",
                features.nrows(),
                target.len()
            )));
        }
        if features.ncols() != names.len() {
            return Err(Error::param(format!(
                "feature matrix has {} columns but {} names were given",
                features.ncols(),
                names.len()
            )));
        }
        let group_of = vec![None; names.len()];
        Ok(Dataset {
            features,
            target,
            names,
            group_of,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.features.column(j)
    }

    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            target: self.target.select(Axis(0), rows),
            names: self.names.clone(),
            group_of: self.group_of.clone(),
        }
    }

    /// Columns whose values are all identical.
    pub fn zero_variance_columns(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| {
                let col = self.column(j);
                let first = col[0];
                col.iter().all(|&v| v == first)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.features.iter().all(|v| v.is_finite()) && self.target.iter().all(|v| v.is_finite())
    }
}

fn check_rho(m: usize, rho: f64) -> Result<()> {
    if !rho.is_finite() {
        return Err(Error::param("rho must be finite"));
    }
    if m == 1 {
        return Ok(());
    }
    let lower = -1.0 / (m as f64 - 1.0);
    if rho <= lower || rho >= 1.0 {
        return Err(Error::param(format!(
            "rho = {rho} outside the admissible range ({lower}, 1) for group size {m}"
        )));
    }
    Ok(())
}

/// `m × m` matrix with unit diagonal and `rho` everywhere else.
pub fn equicorrelated_cov(m: usize, rho: f64) -> Result<Array2<f64>> {
    if m == 0 {
        return Err(Error::param("group size must be at least 1"));
    }
    check_rho(m, rho)?;
    Ok(Array2::from_shape_fn((m, m), |(i, j)| if i == j { 1.0 } else { rho }))
}

/// Lower Cholesky factor of the equicorrelation matrix.
fn equicorrelated_factor(m: usize, rho: f64) -> Result<Array2<f64>> {
    let cov = equicorrelated_cov(m, rho)?;
    let dm = DMatrix::from_fn(m, m, |i, j| cov[[i, j]]);
    let chol = dm.cholesky().ok_or_else(|| {
        Error::param(format!(
            "equicorrelation matrix (m = {m}, rho = {rho}) is not positive definite"
        ))
    })?;
    let l = chol.l();
    Ok(Array2::from_shape_fn((m, m), |(i, j)| l[(i, j)]))
}

/// Draws a dataset. The feature stream and the noise stream are separate, so
/// changing `betas` or `noise_sd` leaves the feature matrix untouched.
pub fn sample_dataset(config: &DgpConfig) -> Result<Dataset> {
    config.validate()?;
    let spec = &config.groups;
    let n = config.n_samples;
    let p = spec.n_features();
    let m = spec.group_size;
    let factor = equicorrelated_factor(m, spec.rho)?;

    let mut feat_rng = rng::stream(config.seed, Stream::Data);
    let mut noise_rng = rng::stream(config.seed, Stream::Noise);
    let mut features = Array2::<f64>::zeros((n, p));
    let mut z = vec![0.0; m];
    for i in 0..n {
        for g in 0..spec.group_count {
            for zk in z.iter_mut() {
                *zk = feat_rng.sample(StandardNormal);
            }
            for a in 0..m {
                let mut v = 0.0;
                for b in 0..=a {
                    v += factor[[a, b]] * z[b];
                }
                features[[i, g * m + a]] = v;
            }
        }
        for e in 0..spec.extras {
            features[[i, spec.group_count * m + e]] = feat_rng.sample(StandardNormal);
        }
    }

    let betas = Array1::from(config.betas.clone());
    let mut target = features.dot(&betas);
    if config.noise_sd > 0.0 {
        for y in target.iter_mut() {
            let eps: f64 = noise_rng.sample(StandardNormal);
            *y += config.noise_sd * eps;
        }
    }

    let names = default_names(spec);
    Ok(Dataset {
        features,
        target,
        names,
        group_of: spec.group_of(),
    })
}

fn default_names(spec: &GroupSpec) -> Vec<String> {
    let mut names = Vec::with_capacity(spec.n_features());
    for g in 0..spec.group_count {
        for a in 0..spec.group_size {
            names.push(format!("g{g}_x{a}"));
        }
    }
    for e in 0..spec.extras {
        names.push(format!("extra{e}"));
    }
    names
}

/// How the response column is identified in a CSV header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    /// Plain integers are column indices; anything else is a column name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, target)
}

pub fn read_csv<R: Read>(reader: R, target: &TargetColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target_idx = match target {
        TargetColumn::Name(name) => header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Parse {
                row: 1,
                column: name.clone(),
                message: "target column not found in header".into(),
            }
        })?,
        TargetColumn::Index(i) if *i < header.len() => *i,
        TargetColumn::Index(i) => {
            return Err(Error::Parse {
                row: 1,
                column: i.to_string(),
                message: format!("target index out of range for {} columns", header.len()),
            })
        }
    };

    let p = header.len() - 1;
    let mut values: Vec<f64> = Vec::new();
    let mut target_vals: Vec<f64> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: String::from("*"),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: header[c].clone(),
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: header[c].clone(),
                    message: format!("non-finite cell {cell:?}"),
                });
            }
            if c == target_idx {
                target_vals.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = target_vals.len();
    if n == 0 {
        return Err(Error::Parse {
            row: 2,
            column: String::from("*"),
            message: "no data rows".into(),
        });
    }
    let features = Array2::from_shape_vec((n, p), values)
        .map_err(|e| Error::param(format!("internal shape error: {e}")))?;
    let names = header
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(features, Array1::from(target_vals), names)
}

/// Writes features followed by a `target` column. Values use the shortest
/// representation that parses back to the identical `f64`.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, file)
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.names.iter().map(String::as_str).collect();
    let target_name = if dataset.names.iter().any(|n| n == "target") {
        "__target"
    } else {
        "target"
    };
    header.push(target_name);
    w.write_record(&header)?;
    let mut buf = Vec::with_capacity(dataset.n_features() + 1);
    for (row, y) in dataset.features.rows().into_iter().zip(dataset.target.iter()) {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        buf.push(y.to_string());
        w.write_record(&buf)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        let ma = a.mean().unwrap();
        let mb = b.mean().unwrap();
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn cov_small_cases() {
        let id = equicorrelated_cov(2, 0.0).unwrap();
        assert_eq!(id, ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]));
        let half = equicorrelated_cov(2, 0.5).unwrap();
        assert_eq!(half, ndarray::arr2(&[[1.0, 0.5], [0.5, 1.0]]));
        assert_eq!(equicorrelated_cov(1, 3.0).unwrap(), ndarray::arr2(&[[1.0]]));
    }

    #[test]
    fn cov_rejects_inadmissible_rho() {
        assert!(equicorrelated_cov(2, 1.0).is_err());
        assert!(equicorrelated_cov(3, -0.5).is_err());
        assert!(equicorrelated_cov(3, -0.49).is_ok());
        assert!(equicorrelated_cov(0, 0.1).is_err());
    }

    #[test]
    fn cov_eigenvalues_match_closed_form() {
        let cov = equicorrelated_cov(5, 0.9).unwrap();
        let dm = DMatrix::from_fn(5, 5, |i, j| cov[[i, j]]);
        let mut eig: Vec<f64> = dm.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &e in &eig[..4] {
            assert!((e - 0.1).abs() < 1e-10, "{eig:?}");
        }
        assert!((eig[4] - 4.6).abs() < 1e-10);
    }

    #[test]
    fn within_pair_correlation_near_rho() {
        let cfg = DgpConfig::symmetric(GroupSpec::new(1, 2, 0.9), 2000, 7);
        let d = sample_dataset(&cfg).unwrap();
        let r = pearson(d.column(0), d.column(1));
        assert!((r - 0.9).abs() < 0.04, "r = {r}");
    }

    #[test]
    fn cross_group_correlation_near_zero() {
        let cfg = DgpConfig::symmetric(GroupSpec::new(2, 2, 0.9), 2000, 7);
        let d = sample_dataset(&cfg).unwrap();
        for a in 0..2 {
            for b in 2..4 {
                let r = pearson(d.column(a), d.column(b));
                assert!(r.abs() < 0.07, "r({a},{b}) = {r}");
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = DgpConfig::symmetric(GroupSpec::new(2, 3, 0.5).with_extras(1), 300, 11);
        let a = sample_dataset(&cfg).unwrap();
        let b = sample_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        assert!(a.zero_variance_columns().is_empty());
        assert_eq!(a.group_of[6], None);
        assert_eq!(a.group_of[4], Some(1));
    }

    #[test]
    fn noise_stream_does_not_move_features() {
        let mut cfg = DgpConfig::symmetric(GroupSpec::new(1, 2, 0.3), 50, 3);
        let a = sample_dataset(&cfg).unwrap();
        cfg.noise_sd = 0.0;
        cfg.betas = vec![2.0, -1.0];
        let b = sample_dataset(&cfg).unwrap();
        assert_eq!(a.features, b.features);
        for i in 0..50 {
            let expect = 2.0 * b.features[[i, 0]] - b.features[[i, 1]];
            assert!((b.target[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = DgpConfig::symmetric(GroupSpec::new(1, 2, 0.3), 50, 3);
        cfg.betas.pop();
        assert!(sample_dataset(&cfg).is_err());
        let cfg = DgpConfig::symmetric(GroupSpec::new(1, 2, 0.3), 1, 3);
        assert!(sample_dataset(&cfg).is_err());
    }

    #[test]
    fn smallest_csv() {
        let text = "a,y\n1,2\n3,4\n5,6\n";
        let d = read_csv(text.as_bytes(), &TargetColumn::Name("y".into())).unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.n_features(), 1);
        assert_eq!(d.names, vec!["a"]);
        assert_eq!(d.target.to_vec(), vec![2.0, 4.0, 6.0]);
        let by_index = read_csv(text.as_bytes(), &TargetColumn::Index(0)).unwrap();
        assert_eq!(by_index.target.to_vec(), vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn na_cell_is_located() {
        let text = "a,b,y\n1,2,3\n4,NA,6\n";
        let err = read_csv(text.as_bytes(), &TargetColumn::Name("y".into())).unwrap_err();
        match err {
            Error::Parse { row, column, message } => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
                assert!(message.contains("NA"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_target_is_reported() {
        let text = "a,b\n1,2\n";
        let err = read_csv(text.as_bytes(), &TargetColumn::Name("y".into())).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
        let err = read_csv(text.as_bytes(), &TargetColumn::Index(5)).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cfg = DgpConfig::symmetric(GroupSpec::new(2, 2, 0.7), 64, 5);
        let d = sample_dataset(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &TargetColumn::Name("target".into())).unwrap();
        let max_diff = d
            .features
            .iter()
            .zip(back.features.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-12);
        assert_eq!(d.target, back.target);
        assert_eq!(d.names, back.names);
    }

    #[test]
    fn target_column_parsing() {
        assert_eq!("3".parse::<TargetColumn>().unwrap(), TargetColumn::Index(3));
        assert_eq!(
            "price".parse::<TargetColumn>().unwrap(),
            TargetColumn::Name("price".into())
        );
    }
}
