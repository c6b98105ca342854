use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::{AttributionKind, AttributionVector};
use crate::boost::{Ensemble, Node, Tree};
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Reference rows that stand in for "absent" features.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    rows: Array2<f64>,
}

impl BackgroundSet {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::param("background set must contain at least one row"));
        }
        Ok(BackgroundSet { rows })
    }

    /// `size` distinct rows drawn from `features` (all rows if fewer exist).
    pub fn sample(features: ArrayView2<f64>, size: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, Stream::Background);
        let idx = rng::sample_sorted(&mut rng, features.nrows(), size);
        Self::new(features.select(Axis(0), &idx))
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

/// Exact interventional Shapley values of a single tree for the pair (x, z),
/// added into `phi` after multiplying by `scale`.
///
/// Along any root-to-leaf path, a split where x and z disagree pins its feature
/// to the coalition (x side) or to its complement (z side). A leaf reached with
/// `a` pinned-in and `b` pinned-out features is the game `v·1[A ⊆ S, B ∩ S = ∅]`
/// whose Shapley values are `v·(a-1)!b!/(a+b)!` on A and `-v·a!(b-1)!/(a+b)!`
/// on B.
fn tree_pair(tree: &Tree, x: ArrayView1<f64>, z: ArrayView1<f64>, scale: f64, phi: &mut [f64]) {
    let mut path: Vec<(usize, bool)> = Vec::with_capacity(16);
    walk(tree, 0, x, z, scale, &mut path, 0, 0, phi);
}

#[allow(clippy::too_many_arguments)]
fn walk(
    tree: &Tree,
    idx: usize,
    x: ArrayView1<f64>,
    z: ArrayView1<f64>,
    scale: f64,
    path: &mut Vec<(usize, bool)>,
    n_in: usize,
    n_out: usize,
    phi: &mut [f64],
) {
    match tree.nodes[idx] {
        Node::Leaf { value, .. } => {
            if n_in + n_out == 0 || value == 0.0 {
                return;
            }
            let v = value * scale;
            let binom = binomial(n_in + n_out, n_in);
            let w_in = if n_in > 0 { v / (n_in as f64 * binom) } else { 0.0 };
            let w_out = if n_out > 0 { v / (n_out as f64 * binom) } else { 0.0 };
            for &(f, inside) in path.iter() {
                if inside {
                    phi[f] += w_in;
                } else {
                    phi[f] -= w_out;
                }
            }
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let x_child = if x[feature] < threshold { left } else { right };
            let z_child = if z[feature] < threshold { left } else { right };
            if x_child == z_child {
                walk(tree, x_child, x, z, scale, path, n_in, n_out, phi);
                return;
            }
            match path.iter().find(|(f, _)| *f == feature) {
                Some(&(_, true)) => walk(tree, x_child, x, z, scale, path, n_in, n_out, phi),
                Some(&(_, false)) => walk(tree, z_child, x, z, scale, path, n_in, n_out, phi),
                None => {
                    path.push((feature, true));
                    walk(tree, x_child, x, z, scale, path, n_in + 1, n_out, phi);
                    path.pop();
                    path.push((feature, false));
                    walk(tree, z_child, x, z, scale, path, n_in, n_out + 1, phi);
                    path.pop();
                }
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Interventional SHAP values of a single tree (unscaled leaf values) for `x`.
pub fn shap_local_tree(tree: &Tree, x: ArrayView1<f64>, background: &BackgroundSet, n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    let inv_b = 1.0 / background.len() as f64;
    for z in background.rows().rows() {
        tree_pair(tree, x, z, inv_b, &mut phi);
    }
    phi
}

/// Signed local attributions; they sum to `f(x) - mean_z f(z)`.
pub fn shap_local(ensemble: &Ensemble, x: ArrayView1<f64>, background: &BackgroundSet) -> Result<AttributionVector> {
    check_dims(ensemble, x.len(), background)?;
    Ok(AttributionVector::new(
        local_unchecked(ensemble, x, background),
        AttributionKind::LocalSigned,
    ))
}

fn local_unchecked(ensemble: &Ensemble, x: ArrayView1<f64>, background: &BackgroundSet) -> Vec<f64> {
    let mut phi = vec![0.0; ensemble.n_features];
    let scale = ensemble.learning_rate / background.len() as f64;
    for tree in &ensemble.trees {
        for z in background.rows().rows() {
            tree_pair(tree, x, z, scale, &mut phi);
        }
    }
    phi
}

fn check_dims(ensemble: &Ensemble, width: usize, background: &BackgroundSet) -> Result<()> {
    if width != ensemble.n_features {
        return Err(Error::param(format!(
            "row has {width} features but the model expects {}",
            ensemble.n_features
        )));
    }
    if background.rows().ncols() != ensemble.n_features {
        return Err(Error::param(format!(
            "background has {} columns but the model expects {}",
            background.rows().ncols(),
            ensemble.n_features
        )));
    }
    Ok(())
}

/// Mean absolute local attribution over `eval_rows`.
pub fn shap_global(ensemble: &Ensemble, eval_rows: ArrayView2<f64>, background: &BackgroundSet) -> Result<AttributionVector> {
    if eval_rows.nrows() == 0 {
        return Err(Error::param("evaluation slice is empty"));
    }
    check_dims(ensemble, eval_rows.ncols(), background)?;
    let locals: Vec<Vec<f64>> = (0..eval_rows.nrows())
        .into_par_iter()
        .map(|i| local_unchecked(ensemble, eval_rows.row(i), background))
        .collect();
    let mut total = vec![0.0; ensemble.n_features];
    for phi in &locals {
        for (t, v) in total.iter_mut().zip(phi) {
            *t += v.abs();
        }
    }
    let n = eval_rows.nrows() as f64;
    total.iter_mut().for_each(|t| *t /= n);
    Ok(AttributionVector::new(total, AttributionKind::GlobalMeanAbs))
}
