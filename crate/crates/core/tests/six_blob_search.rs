//! Randomized search on the six-class blob set should not make the booster worse.

use terpscape::classify::{default_search_space, randomized_search, stratified_kfold_cv, Algorithm, ModelSpec};
use terpscape::synthetic::{gaussian_blobs, proportional_counts, BlobSpec};

#[test]
fn tuned_gbdt_matches_or_beats_untuned() {
    let counts = proportional_counts(&[13245.0, 11814.0, 9198.0, 5115.0, 9600.0, 9550.0], 1500);
    let (x, y) = gaussian_blobs(&BlobSpec::isotropic(counts, 6, 4.9, 1.0), 11);
    let classes: Vec<String> = (0..6).map(|c| format!("c{c}")).collect();
    let base = ModelSpec::new(Algorithm::Gbdt);

    let untuned = stratified_kfold_cv(&base, &x, &y, &classes, 5, 42).unwrap();
    let search = randomized_search(
        &base,
        &default_search_space(Algorithm::Gbdt),
        &x,
        &y,
        &classes,
        4,
        5,
        42,
    )
    .unwrap();
    let tuned = stratified_kfold_cv(&search.best, &x, &y, &classes, 5, 42).unwrap();

    assert_eq!(search.trace.len(), 4);
    assert!(
        tuned.mean.weighted_f1 >= untuned.mean.weighted_f1 - 0.01,
        "tuned {} vs untuned {}",
        tuned.mean.weighted_f1,
        untuned.mean.weighted_f1
    );
    assert!(untuned.mean.weighted_f1 >= 0.90);
}
