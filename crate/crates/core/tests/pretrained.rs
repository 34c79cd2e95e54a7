//! Checks that need a pretrained model behind a `model/1` adapter and the
//! NEWTS test split. Run with `cargo test --test pretrained -- --ignored`
//! after setting `STEERLAB_PRETRAINED_MODEL` (adapter command line) and
//! `STEERLAB_NEWTS_TEST` (records file).

mod common;

fn setup() -> (String, std::path::PathBuf) {
    common::pretrained_setup().unwrap_or_else(|| {
        panic!("set {} and {} to run this test", common::PRETRAINED_ENV, common::NEWTS_ENV)
    })
}

#[test]
#[ignore = "needs a pretrained model adapter and the NEWTS test split"]
fn sentiment_rises_with_strength() {
    let (model, newts) = setup();
    let msg = common::pretrained_trend(&model, &newts).unwrap_or_else(|e| panic!("{e}"));
    println!("{msg}");
}

#[test]
#[ignore = "needs a pretrained model adapter and the NEWTS test split"]
fn extreme_strengths_collapse_distinct2() {
    let (model, newts) = setup();
    let msg = common::pretrained_degradation(&model, &newts).unwrap_or_else(|e| panic!("{e}"));
    println!("{msg}");
}
