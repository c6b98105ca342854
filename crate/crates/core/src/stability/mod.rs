//! Stability diagnostics and closed-form predictions.

mod bounds;
mod diagnostics;
mod groups;
mod normal;

pub use bounds::{
    axiom_split_counts, berry_esseen_bound, exact_flip_model, expected_kendall, fim_analysis, flip_from_snr,
    min_ensemble_size, proportionality_cv, proportionality_cv_raw, query_lower_bound, rashomon_coefficient,
    spearman_bound, spearman_monte_carlo, split_gap, theoretical_ratio, AnalyticParams, AnalyticSummary,
    ExactFlipModel, FimAnalysis,
};
pub use diagnostics::{
    effective_trees, empirical_flip_rate, mean_sd, pairwise_flip_rate, pearson, screen, screen_from_frequencies,
    z_test, DiagnosticReport, PairDiagnostic, ReportSummary, ScreenResult, Verdict, Z_CRITICAL,
};
pub use groups::{correlate_groups, correlation_matrix, CorrelationGroups};
pub use normal::{binary_entropy, normal_cdf, normal_pdf, normal_quantile};
