//! Per-model feature attributions.
//!
//! Local attributions are exact interventional Shapley values: for a query
//! row `x` and a background row `z`, a coalition `S` evaluates the model on the
//! hybrid row taking features in `S` from `x` and the rest from `z`; the value
//! of `S` is the average over the background set. Global attributions are the
//! mean absolute local values over a fixed evaluation slice.

mod importance;
mod matrix;
mod shap;

pub use importance::{permutation_importance, split_count_importance};
pub use matrix::{attribution_matrix, attribution_row, AttributionConfig, AttributionMatrix, EvalPlan, Method};
pub use shap::{shap_global, shap_local, shap_local_tree, BackgroundSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionKind {
    LocalSigned,
    GlobalMeanAbs,
    Permutation,
    SplitCount,
}

impl AttributionKind {
    pub fn is_global(self) -> bool {
        !matches!(self, AttributionKind::LocalSigned)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub values: Vec<f64>,
    pub kind: AttributionKind,
    /// Set when the vector is all zeros because the model carries no signal
    /// for this method (e.g. no splits at all).
    #[serde(default)]
    pub degenerate: bool,
}

impl AttributionVector {
    pub fn new(values: Vec<f64>, kind: AttributionKind) -> Self {
        AttributionVector {
            values,
            kind,
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, v) in self.values.iter().enumerate() {
            if best.is_none_or(|b| *v > self.values[b]) {
                best = Some(i);
            }
        }
        best
    }
}
