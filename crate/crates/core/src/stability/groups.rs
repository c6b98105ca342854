use ndarray::{Array2, ArrayView2};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

/// Connected components of the graph with edges `|pearson| > threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGroups {
    pub threshold: f64,
    /// Groups of size ≥ 2, each sorted, ordered by smallest member.
    pub groups: Vec<Vec<usize>>,
    pub singletons: Vec<usize>,
    pub flagged_zero_variance: Vec<usize>,
}

impl CorrelationGroups {
    /// Group index per feature (`None` for singletons).
    pub fn group_of(&self, n_features: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_features];
        for (g, members) in self.groups.iter().enumerate() {
            for &j in members {
                out[j] = Some(g);
            }
        }
        out
    }

    /// All unordered pairs `(j, k)`, `j < k`, inside a common group.
    pub fn within_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for g in &self.groups {
            for (a, &j) in g.iter().enumerate() {
                for &k in &g[a + 1..] {
                    pairs.push((j, k));
                }
            }
        }
        pairs
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

/// Pearson correlation matrix of the columns; zero-variance columns get 0
/// off-diagonal entries.
pub fn correlation_matrix(features: ArrayView2<f64>) -> Array2<f64> {
    let (n, p) = features.dim();
    let mut centred = features.to_owned();
    for mut col in centred.columns_mut() {
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|v| v - mean);
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
    let mut corr = centred.t().dot(&centred);
    for j in 0..p {
        corr[[j, j]] = 1.0;
    }
    corr
}

pub fn correlate_groups(features: ArrayView2<f64>, threshold: f64) -> CorrelationGroups {
    let p = features.ncols();
    let zero_var: Vec<usize> = (0..p)
        .filter(|&j| {
            let col = features.column(j);
            col.iter().all(|v| *v == col[0])
        })
        .collect();
    let corr = correlation_matrix(features);
    let mut uf = UnionFind::<usize>::new(p);
    for j in 0..p {
        for k in j + 1..p {
            if corr[[j, k]].abs() > threshold && !zero_var.contains(&j) && !zero_var.contains(&k) {
                uf.union(j, k);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut singletons = Vec::new();
    for j in 0..p {
        let members: Vec<usize> = (0..p).filter(|&k| labels[k] == labels[j]).collect();
        if members.len() < 2 {
            singletons.push(j);
        } else if members[0] == j {
            groups.push(members);
        }
    }
    CorrelationGroups {
        threshold,
        groups,
        singletons,
        flagged_zero_variance: zero_var,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{sample_dataset, DgpConfig, GroupSpec};
    use ndarray::Array2;

    #[test]
    fn independent_data_has_no_groups() {
        let d = sample_dataset(&DgpConfig::symmetric(GroupSpec::new(1, 1, 0.0).with_extras(5), 2000, 1)).unwrap();
        let g = correlate_groups(d.features.view(), 0.5);
        assert!(g.groups.is_empty());
        assert_eq!(g.singletons, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn one_correlated_pair() {
        let d = sample_dataset(&DgpConfig::symmetric(GroupSpec::new(1, 2, 0.9).with_extras(3), 5000, 2)).unwrap();
        let g = correlate_groups(d.features.view(), 0.5);
        assert_eq!(g.groups, vec![vec![0, 1]]);
        assert_eq!(g.within_pairs(), vec![(0, 1)]);
        assert_eq!(g.group_of(5), vec![Some(0), Some(0), None, None, None]);
    }

    #[test]
    fn chain_is_transitive() {
        // columns 0-1 and 1-2 correlate at 0.6, 0-2 at 0.2 in the exact table below
        let corr_rows = [[1.0, 0.6, 0.2], [0.6, 1.0, 0.6], [0.2, 0.6, 1.0]];
        let cov = Array2::from_shape_fn((3, 3), |(i, j)| corr_rows[i][j]);
        let l = nalgebra::DMatrix::from_fn(3, 3, |i, j| cov[[i, j]]).cholesky().unwrap().unpack();
        let z = sample_dataset(&DgpConfig::symmetric(GroupSpec::new(1, 1, 0.0).with_extras(2), 20000, 3)).unwrap();
        let x = Array2::from_shape_fn((20000, 3), |(r, i)| (0..=i).map(|k| l[(i, k)] * z.features[[r, k]]).sum());
        let corr = correlation_matrix(x.view());
        assert!((corr[[0, 2]] - 0.2).abs() < 0.05);
        let g = correlate_groups(x.view(), 0.5);
        assert_eq!(g.groups, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn zero_variance_is_flagged() {
        let x = ndarray::arr2(&[[1.0, 5.0, 1.0], [2.0, 5.0, 2.1], [3.0, 5.0, 2.9]]);
        let g = correlate_groups(x.view(), 0.5);
        assert_eq!(g.flagged_zero_variance, vec![1]);
        assert_eq!(g.groups, vec![vec![0, 2]]);
        assert_eq!(g.singletons, vec![1]);
    }
}
