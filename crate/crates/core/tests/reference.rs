//! The shipped reference CSV of reported ToolQA correct rates must
//! reproduce the published delta cells and averages when fed through the
//! comparison machinery.

use std::path::PathBuf;
use tums::harness::{average_rate, compare_rates, round_down_2dp, RateTable};
use tums::types::{DatasetClass, Difficulty};

fn reference_csv() -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../reference/toolqa_reported_rates.csv");
    std::fs::read_to_string(path).expect("reference CSV present")
}

#[test]
fn tums_easy_average_is_55_75() {
    let tums =
        RateTable::from_baseline_csv(&reference_csv(), "TUMS", "Qwen1.5-72B-Chat", Difficulty::Easy)
            .unwrap();
    assert_eq!(tums.rates.len(), 8);
    let rates: Vec<f64> = tums.rates.values().copied().collect();
    assert_eq!(average_rate(&rates), 55.75);
}

#[test]
fn tums_hard_average_rounds_down_to_16_45() {
    let tums =
        RateTable::from_baseline_csv(&reference_csv(), "TUMS", "Qwen1.5-72B-Chat", Difficulty::Hard)
            .unwrap();
    assert_eq!(tums.rates.len(), 7);
    let rates: Vec<f64> = tums.rates.values().copied().collect();
    let raw = average_rate(&rates);
    assert!((raw - 16.46).abs() <= 0.01);
    assert_eq!(round_down_2dp(raw), 16.45);
}

#[test]
fn deltas_against_react_match_the_published_cells() {
    let csv = reference_csv();
    let tums_easy =
        RateTable::from_baseline_csv(&csv, "TUMS", "Qwen1.5-72B-Chat", Difficulty::Easy).unwrap();
    let react_easy =
        RateTable::from_baseline_csv(&csv, "ReAct", "Qwen1.5-72B-Chat", Difficulty::Easy).unwrap();
    let easy = compare_rates(&tums_easy, &react_easy);
    assert_eq!(easy[&DatasetClass::Flight].rendered, "+28.9%");
    assert_eq!(easy[&DatasetClass::Coffee].rendered, "-");

    let tums_hard =
        RateTable::from_baseline_csv(&csv, "TUMS", "Qwen1.5-72B-Chat", Difficulty::Hard).unwrap();
    let react_hard =
        RateTable::from_baseline_csv(&csv, "ReAct", "Qwen1.5-72B-Chat", Difficulty::Hard).unwrap();
    let hard = compare_rates(&tums_hard, &react_hard);
    assert_eq!(hard[&DatasetClass::Yelp].rendered, "+157.1%");
    assert_eq!(hard[&DatasetClass::Flight].rendered, "-45.5%");
    // agenda: both zero on hard, an undefined cell
    assert_eq!(hard[&DatasetClass::Agenda].rendered, "—");
}
