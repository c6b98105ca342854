//! Checks against the bundled Wisconsin breast cancer table (569 rows, 30 features).

use std::path::PathBuf;

use dashlab::stability::{correlate_groups, rashomon_coefficient};
use dashlab::synthdata::{load_csv, TargetColumn};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/breast_cancer.csv")
}

#[test]
fn fixture_loads() {
    let d = load_csv(fixture(), &TargetColumn::Name("target".into())).unwrap();
    assert_eq!(d.n_samples(), 569);
    assert_eq!(d.n_features(), 30);
    assert_eq!(d.names[0], "mean_radius");
}

#[test]
fn rashomon_coefficient_of_breast_cancer_groups() {
    let d = load_csv(fixture(), &TargetColumn::Name("target".into())).unwrap();
    let groups = correlate_groups(d.features.view(), 0.5);
    let mut sizes = groups.group_sizes();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![2, 25]);
    let r = rashomon_coefficient(&sizes, d.n_features()).unwrap();
    assert!((r - 0.692).abs() < 5e-4, "R = {r}");
    // worst-case share of non-replicating pairwise comparisons
    assert!((100.0 * r / 2.0 - 34.6).abs() < 0.05);
}
