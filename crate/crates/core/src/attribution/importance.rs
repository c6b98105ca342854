use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

use super::{AttributionKind, AttributionVector};
use crate::boost::{split_counts, Ensemble};
use crate::rng::{self, Stream};
use crate::{Error, Result};

fn mse(ensemble: &Ensemble, rows: ArrayView2<f64>, target: ArrayView1<f64>) -> f64 {
    let mut total = 0.0;
    for (x, y) in rows.rows().into_iter().zip(target) {
        let r = ensemble.predict_unchecked(x) - y;
        total += r * r;
    }
    total / rows.nrows() as f64
}

/// Increase in MSE on `eval_rows` when each column is shuffled once, floored at 0.
///
/// Column `j` is shuffled with its own seeded substream, so results do not
/// depend on evaluation order.
pub fn permutation_importance(
    ensemble: &Ensemble,
    eval_rows: ArrayView2<f64>,
    target: ArrayView1<f64>,
    seed: u64,
) -> Result<AttributionVector> {
    if eval_rows.nrows() < 10 {
        return Err(Error::param(format!(
            "permutation importance needs at least 10 evaluation rows, got {}",
            eval_rows.nrows()
        )));
    }
    if eval_rows.ncols() != ensemble.n_features || target.len() != eval_rows.nrows() {
        return Err(Error::param("evaluation rows do not match the model or target length"));
    }
    let base = mse(ensemble, eval_rows, target);
    let mut work = eval_rows.to_owned();
    let mut values = vec![0.0; ensemble.n_features];
    for (j, value) in values.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..eval_rows.nrows()).collect();
        order.shuffle(&mut rng::substream(seed, Stream::Permutation, j as u64));
        for (i, &src) in order.iter().enumerate() {
            work[[i, j]] = eval_rows[[src, j]];
        }
        *value = (mse(ensemble, work.view(), target) - base).max(0.0);
        work.column_mut(j).assign(&eval_rows.column(j));
    }
    Ok(AttributionVector::new(values, AttributionKind::Permutation))
}

/// Split counts normalised to sum to one.
pub fn split_count_importance(ensemble: &Ensemble) -> AttributionVector {
    let counts = split_counts(ensemble);
    let total: usize = counts.iter().sum();
    if total == 0 {
        let mut v = AttributionVector::new(vec![0.0; counts.len()], AttributionKind::SplitCount);
        v.degenerate = true;
        return v;
    }
    let values = counts.iter().map(|&c| c as f64 / total as f64).collect();
    AttributionVector::new(values, AttributionKind::SplitCount)
}
