mod common;

use plantscope::dataset::SyntheticSceneSpec;

#[test]
fn plant_fixture_is_linearly_separable() {
    let acc = common::linear_probe(&SyntheticSceneSpec::plant(), 11, 200, 50);
    println!("plant probe {acc}");
    assert!(acc >= 0.90, "linear probe holdout accuracy {acc}");
}

#[test]
fn cooling_fixture_is_linearly_separable() {
    let acc = common::linear_probe(&SyntheticSceneSpec::cooling(), 4, 200, 50);
    println!("cooling probe {acc}");
    assert!(acc >= 0.90, "linear probe holdout accuracy {acc}");
}
