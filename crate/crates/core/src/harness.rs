//! The benchmark harness: runs question suites through a configured
//! pipeline variant, scores answers, computes correct rates and response
//! costs, and persists one trajectory file per question plus a run report.

use crate::datastore::{load_questions, DataError, QuestionMode};
use crate::decomposer::EpisodeRunner;
use crate::gateway::{Gateway, LedgerSnapshot};
use crate::processor::HandlerRegistry;
use crate::prompting::PromptCatalog;
use crate::recognizer::{recognize, RecognizeError};
use crate::toolkit::Executor;
use crate::types::{
    DatasetClass, Difficulty, HintFlavor, Question, Trajectory, TrajectoryBuilder,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VariantName {
    #[serde(rename = "tums")]
    Tums,
    #[serde(rename = "tums-nir")]
    TumsNir,
    #[serde(rename = "tums-os")]
    TumsOs,
    #[serde(rename = "tums-pre")]
    TumsPre,
}

impl VariantName {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantName::Tums => "tums",
            VariantName::TumsNir => "tums-nir",
            VariantName::TumsOs => "tums-os",
            VariantName::TumsPre => "tums-pre",
        }
    }

    pub fn parse(name: &str) -> Option<VariantName> {
        match name.to_ascii_lowercase().as_str() {
            "tums" => Some(VariantName::Tums),
            "tums-nir" | "tums_nir" => Some(VariantName::TumsNir),
            "tums-os" | "tums_os" => Some(VariantName::TumsOs),
            "tums-pre" | "tums_pre" => Some(VariantName::TumsPre),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistryMode {
    Multi,
    DirectOnly,
}

/// A pipeline variant. Constructed only from a [`VariantName`], so the
/// flag combinations stay the four the ablations define.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariantConfig {
    pub name: VariantName,
    pub recognizer_enabled: bool,
    pub registry_mode: RegistryMode,
    pub hint_flavor: HintFlavor,
}

impl VariantConfig {
    pub fn of(name: VariantName) -> VariantConfig {
        match name {
            VariantName::Tums => VariantConfig {
                name,
                recognizer_enabled: true,
                registry_mode: RegistryMode::Multi,
                hint_flavor: HintFlavor::Standard,
            },
            VariantName::TumsNir => VariantConfig {
                name,
                recognizer_enabled: false,
                registry_mode: RegistryMode::Multi,
                hint_flavor: HintFlavor::Standard,
            },
            VariantName::TumsOs => VariantConfig {
                name,
                recognizer_enabled: true,
                registry_mode: RegistryMode::DirectOnly,
                hint_flavor: HintFlavor::Standard,
            },
            VariantName::TumsPre => VariantConfig {
                name,
                recognizer_enabled: true,
                registry_mode: RegistryMode::Multi,
                hint_flavor: HintFlavor::Preference,
            },
        }
    }

    /// The registry this variant runs under.
    pub fn registry(&self) -> HandlerRegistry {
        match self.registry_mode {
            RegistryMode::Multi => HandlerRegistry::standard(),
            RegistryMode::DirectOnly => HandlerRegistry::direct_only(),
        }
    }
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Default relative tolerance for numeric answer comparison.
pub const NUMERIC_TOLERANCE: f64 = 1e-4;

/// Normalization applied to both sides before comparison: trim, lowercase,
/// collapse internal whitespace, strip one trailing period, strip thousands
/// separators between digits.
pub fn normalize_answer(answer: &str) -> String {
    let collapsed = answer
        .trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let collapsed = collapsed.trim_end_matches('.').to_string();
    let bytes = collapsed.as_bytes();
    let mut out = String::with_capacity(collapsed.len());
    for (i, ch) in collapsed.char_indices() {
        if ch == ','
            && i > 0
            && bytes[i - 1].is_ascii_digit()
            && bytes.get(i + 1).map(|b| b.is_ascii_digit()).unwrap_or(false)
        {
            continue;
        }
        out.push(ch);
    }
    out
}

pub fn score_answer_with_tolerance(predicted: &str, gold: &str, tolerance: f64) -> bool {
    let predicted = normalize_answer(predicted);
    let gold = normalize_answer(gold);
    if let (Ok(a), Ok(b)) = (predicted.parse::<f64>(), gold.parse::<f64>()) {
        if a == b {
            return true;
        }
        let scale = a.abs().max(b.abs());
        return (a - b).abs() <= tolerance * scale;
    }
    predicted == gold
}

/// Exact match after normalization, with relative tolerance `1e-4` when both
/// sides parse as numbers.
pub fn score_answer(predicted: &str, gold: &str) -> bool {
    score_answer_with_tolerance(predicted, gold, NUMERIC_TOLERANCE)
}

// ---------------------------------------------------------------------------
// Metric arithmetic
// ---------------------------------------------------------------------------

/// Unweighted mean over the datasets present.
pub fn average_rate(rates: &[f64]) -> f64 {
    if rates.is_empty() {
        return 0.0;
    }
    rates.iter().sum::<f64>() / rates.len() as f64
}

/// Two-decimal display rounding that rounds down (16.4571… prints 16.45,
/// matching the published tables); the raw value is reported alongside.
pub fn round_down_2dp(value: f64) -> f64 {
    ((value * 100.0) + 1e-9).floor() / 100.0
}

/// One cell of a variant-vs-baseline delta table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaCell {
    /// Relative change (a−b)/b in percent; absent when the baseline is zero.
    pub relative_percent: Option<f64>,
    pub rendered: String,
}

/// Relative change of `a` against baseline `b`, rendered the way the result
/// tables print it: signed one-decimal percent, `-` for no change, `—` for
/// an undefined (zero-baseline) cell.
pub fn delta_percent(a: f64, b: f64) -> DeltaCell {
    if b == 0.0 {
        return DeltaCell {
            relative_percent: None,
            rendered: "—".to_string(),
        };
    }
    let relative = (a - b) / b * 100.0;
    let rendered = if relative.abs() < 0.05 {
        "-".to_string()
    } else {
        format!("{relative:+.1}%")
    };
    DeltaCell {
        relative_percent: Some(relative),
        rendered,
    }
}

/// Per-dataset correct rates, the common shape of a run report and an
/// ingested baseline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateTable {
    pub rates: BTreeMap<DatasetClass, f64>,
}

/// Relative change per dataset over the classes both tables cover.
pub fn compare_rates(a: &RateTable, b: &RateTable) -> BTreeMap<DatasetClass, DeltaCell> {
    let mut out = BTreeMap::new();
    for (dataset, a_rate) in &a.rates {
        if let Some(b_rate) = b.rates.get(dataset) {
            out.insert(*dataset, delta_percent(*a_rate, *b_rate));
        }
    }
    out
}

/// Delta table between two run reports (self vs baseline).
pub fn compare_runs(a: &RunReport, b: &RunReport) -> BTreeMap<DatasetClass, DeltaCell> {
    compare_rates(&RateTable::from_report(a), &RateTable::from_report(b))
}

impl RateTable {
    pub fn from_report(report: &RunReport) -> RateTable {
        RateTable {
            rates: report
                .per_dataset
                .iter()
                .map(|(dataset, score)| (*dataset, score.correct_rate))
                .collect(),
        }
    }

    /// Pull one method's rates for one difficulty out of a baseline CSV with
    /// header `method,model,difficulty,dataset,correct_rate`.
    pub fn from_baseline_csv(
        text: &str,
        method: &str,
        model: &str,
        difficulty: Difficulty,
    ) -> Result<RateTable, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let mut rates = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| DataError::MalformedCsv {
                line: (i + 2) as u64,
                detail: e.to_string(),
            })?;
            let bad = |detail: &str| DataError::MalformedCsv {
                line: (i + 2) as u64,
                detail: detail.to_string(),
            };
            let row_method = record.get(0).ok_or_else(|| bad("missing method"))?;
            let row_model = record.get(1).ok_or_else(|| bad("missing model"))?;
            let row_difficulty = record.get(2).ok_or_else(|| bad("missing difficulty"))?;
            let row_dataset = record.get(3).ok_or_else(|| bad("missing dataset"))?;
            let row_rate = record.get(4).ok_or_else(|| bad("missing correct_rate"))?;
            if !row_method.eq_ignore_ascii_case(method) || !row_model.eq_ignore_ascii_case(model) {
                continue;
            }
            let wanted = match difficulty {
                Difficulty::Easy => "easy",
                Difficulty::Hard => "hard",
            };
            if !row_difficulty.eq_ignore_ascii_case(wanted) {
                continue;
            }
            let dataset = DatasetClass::parse(row_dataset)
                .map_err(|e| bad(&e.to_string()))?;
            let rate: f64 = row_rate.parse().map_err(|_| bad("bad correct_rate"))?;
            rates.insert(dataset, rate);
        }
        Ok(RateTable { rates })
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetScore {
    pub n: usize,
    pub correct: usize,
    pub correct_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecognizerStats {
    pub evaluated: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub variant: VariantName,
    pub per_dataset: BTreeMap<DatasetClass, DatasetScore>,
    /// Unweighted mean of the per-dataset rates, raw and display-rounded.
    pub average_correct_rate: f64,
    pub average_correct_rate_rounded: f64,
    pub total_questions: usize,
    pub total_correct: usize,
    pub ledger: LedgerSnapshot,
    /// Equals `ledger.total_responses`.
    pub total_cost: u64,
    /// `total_cost / total_correct`; absent when nothing was correct.
    pub average_cost: Option<f64>,
    pub average_cost_undefined: bool,
    pub executor_calls: u64,
    /// Question ids whose episodes aborted on infrastructure errors.
    pub aborted: Vec<String>,
    /// Classification accuracy against the ground-truth dataset labels,
    /// present when the recognizer ran.
    pub recognizer: Option<RecognizerStats>,
    pub prompt_checksum: String,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("question {qid} carries no dataset ground truth; suites require it")]
    MissingDataset { qid: String },
    #[error("question {qid} carries no gold answer; scoring requires it")]
    MissingGold { qid: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Everything a run needs, owned in one place.
pub struct Pipeline {
    pub gateway: Gateway,
    pub catalog: PromptCatalog,
    pub registry: HandlerRegistry,
    pub executor: Executor,
    pub variant: VariantConfig,
    pub max_steps: usize,
}

/// One question's outcome: the trajectory plus what the recognizer said
/// (when it ran and parsed).
pub struct QuestionRun {
    pub trajectory: Trajectory,
    pub recognized: Option<DatasetClass>,
}

impl Pipeline {
    /// Run one question end to end: recognizer (per variant), then the
    /// decomposition loop. A recognizer that cannot parse a class degrades
    /// to a hint-less episode; a recognizer infrastructure failure aborts.
    pub fn run_question(&self, question: &Question) -> QuestionRun {
        let (hint, recognized) = if self.variant.recognizer_enabled {
            match recognize(&self.gateway, &self.catalog, question, self.variant.hint_flavor) {
                Ok(outcome) => (Some(outcome.hint), Some(outcome.dataset)),
                Err(RecognizeError::UnparseableClass { .. }) => (None, None),
                Err(_) => {
                    return QuestionRun {
                        trajectory: TrajectoryBuilder::new(
                            question.clone(),
                            None,
                            self.max_steps,
                        )
                        .aborted(),
                        recognized: None,
                    }
                }
            }
        } else {
            (None, None)
        };
        let runner = EpisodeRunner {
            gateway: &self.gateway,
            catalog: &self.catalog,
            registry: &self.registry,
            executor: &self.executor,
            max_steps: self.max_steps,
        };
        QuestionRun {
            trajectory: runner.run(question, hint),
            recognized,
        }
    }
}

// ---------------------------------------------------------------------------
// Suite running
// ---------------------------------------------------------------------------

/// Load the question files a selector names: `all` takes every
/// `questions/*.jsonl` under the data directory (sorted by file name);
/// otherwise a comma-separated list of stems like `flight-easy,coffee-hard`.
pub fn load_suite(data_dir: &Path, selector: &str) -> Result<Vec<Question>, HarnessError> {
    let questions_dir = data_dir.join("questions");
    let mut files: Vec<std::path::PathBuf> = Vec::new();
    if selector.trim().eq_ignore_ascii_case("all") {
        let entries = std::fs::read_dir(&questions_dir).map_err(|source| HarnessError::Io {
            path: questions_dir.display().to_string(),
            source,
        })?;
        files.extend(
            entries
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false)),
        );
        files.sort();
    } else {
        for stem in selector.split(',') {
            files.push(questions_dir.join(format!("{}.jsonl", stem.trim())));
        }
    }
    let mut questions = Vec::new();
    for file in files {
        questions.extend(load_questions(&file, QuestionMode::Scoring)?);
    }
    Ok(questions)
}

/// Run every question under the pipeline, aggregate the report, and (when
/// `out_dir` is given) write `report.json`, `report.md`, `cost.csv`, and one
/// `trajectories/<qid>.json` per question. With `workers > 1` questions run
/// concurrently; aggregation stays in question order.
pub fn run_suite(
    pipeline: &Pipeline,
    questions: &[Question],
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<RunReport, HarnessError> {
    for question in questions {
        if question.dataset().is_none() {
            return Err(HarnessError::MissingDataset {
                qid: question.id().to_string(),
            });
        }
        if question.gold_answer().is_none() {
            return Err(HarnessError::MissingGold {
                qid: question.id().to_string(),
            });
        }
    }

    let runs: Vec<QuestionRun> = run_parallel(pipeline, questions, workers.max(1));
    let report = build_report(pipeline, questions, &runs);

    if let Some(out_dir) = out_dir {
        write_run(out_dir, &report, questions, &runs)?;
    }
    Ok(report)
}

fn run_parallel(pipeline: &Pipeline, questions: &[Question], workers: usize) -> Vec<QuestionRun> {
    if workers <= 1 || questions.len() <= 1 {
        return questions.iter().map(|q| pipeline.run_question(q)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<QuestionRun>>> =
        Mutex::new((0..questions.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(questions.len()) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= questions.len() {
                    break;
                }
                let run = pipeline.run_question(&questions[index]);
                slots.lock().expect("result slots poisoned")[index] = Some(run);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|slot| slot.expect("every question ran"))
        .collect()
}

fn build_report(pipeline: &Pipeline, questions: &[Question], runs: &[QuestionRun]) -> RunReport {
    let mut per_dataset: BTreeMap<DatasetClass, DatasetScore> = BTreeMap::new();
    let mut aborted = Vec::new();
    let mut recognizer_evaluated = 0usize;
    let mut recognizer_correct = 0usize;
    let mut total_correct = 0usize;

    for (question, run) in questions.iter().zip(runs) {
        let dataset = question.dataset().expect("validated before running");
        let gold = question.gold_answer().expect("validated before running");
        let correct = run
            .trajectory
            .final_answer()
            .map(|answer| score_answer(answer, gold))
            .unwrap_or(false);
        let entry = per_dataset.entry(dataset).or_insert(DatasetScore {
            n: 0,
            correct: 0,
            correct_rate: 0.0,
        });
        entry.n += 1;
        if correct {
            entry.correct += 1;
            total_correct += 1;
        }
        if run.trajectory.termination() == crate::types::Termination::Aborted {
            aborted.push(question.id().to_string());
        }
        if pipeline.variant.recognizer_enabled {
            if let Some(recognized) = run.recognized {
                recognizer_evaluated += 1;
                if recognized == dataset {
                    recognizer_correct += 1;
                }
            }
        }
    }
    for score in per_dataset.values_mut() {
        score.correct_rate = 100.0 * score.correct as f64 / score.n as f64;
    }
    let rates: Vec<f64> = per_dataset.values().map(|s| s.correct_rate).collect();
    let average = average_rate(&rates);
    let ledger = pipeline.gateway.ledger().snapshot();
    let total_cost = ledger.total_responses;
    let average_cost = if total_correct > 0 {
        Some(total_cost as f64 / total_correct as f64)
    } else {
        None
    };
    RunReport {
        variant: pipeline.variant.name,
        per_dataset,
        average_correct_rate: average,
        average_correct_rate_rounded: round_down_2dp(average),
        total_questions: questions.len(),
        total_correct,
        ledger,
        total_cost,
        average_cost_undefined: average_cost.is_none(),
        average_cost,
        executor_calls: pipeline.executor.call_count(),
        aborted,
        recognizer: pipeline.variant.recognizer_enabled.then_some(RecognizerStats {
            evaluated: recognizer_evaluated,
            correct: recognizer_correct,
        }),
        prompt_checksum: pipeline.catalog.checksum().to_string(),
    }
}

/// Replace anything outside `[A-Za-z0-9._-]` so a qid is a safe file stem.
pub fn sanitize_qid(qid: &str) -> String {
    qid.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_run(
    out_dir: &Path,
    report: &RunReport,
    questions: &[Question],
    runs: &[QuestionRun],
) -> Result<(), HarnessError> {
    let trajectories_dir = out_dir.join("trajectories");
    std::fs::create_dir_all(&trajectories_dir).map_err(|source| HarnessError::Io {
        path: trajectories_dir.display().to_string(),
        source,
    })?;
    for (question, run) in questions.iter().zip(runs) {
        let path = trajectories_dir.join(format!("{}.json", sanitize_qid(question.id())));
        let mut body = serde_json::to_string_pretty(&run.trajectory)?;
        body.push('\n');
        write_file(&path, &body)?;
    }

    // timestamps live in a meta block apart from the report body, so report
    // bodies of identical runs stay byte-identical
    let created_unix_secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let document = serde_json::json!({
        "meta": {
            "created_unix_secs": created_unix_secs,
            "generator": format!("tums {}", env!("CARGO_PKG_VERSION")),
        },
        "report": report,
    });
    let mut body = serde_json::to_string_pretty(&document)?;
    body.push('\n');
    write_file(&out_dir.join("report.json"), &body)?;
    write_file(&out_dir.join("report.md"), &render_markdown(report))?;
    write_file(&out_dir.join("cost.csv"), &render_cost_csv(report))?;
    Ok(())
}

/// Markdown mirror of the per-dataset table.
pub fn render_markdown(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Run report — {}\n\n", report.variant.as_str()));
    out.push_str("| Dataset | n | Correct | Correct rate |\n");
    out.push_str("|---|---|---|---|\n");
    for (dataset, score) in &report.per_dataset {
        out.push_str(&format!(
            "| {} | {} | {} | {:.2} |\n",
            dataset.label(),
            score.n,
            score.correct,
            score.correct_rate
        ));
    }
    out.push_str(&format!(
        "\nAverage correct rate: {:.4} (displayed {:.2})\n",
        report.average_correct_rate, report.average_correct_rate_rounded
    ));
    out.push_str(&format!(
        "Total cost: {} responses ({} recognizer, {} decomposer, {} processor)\n",
        report.total_cost,
        report.ledger.per_module["recognizer"],
        report.ledger.per_module["decomposer"],
        report.ledger.per_module["processor"],
    ));
    match report.average_cost {
        Some(cost) => out.push_str(&format!("Average cost: {cost:.2} responses per correct answer\n")),
        None => out.push_str("Average cost: undefined (no correct answers)\n"),
    }
    if !report.aborted.is_empty() {
        out.push_str(&format!("Aborted: {}\n", report.aborted.join(", ")));
    }
    out.push_str(&format!("Prompt checksum: {}\n", report.prompt_checksum));
    out
}

/// Flat metric/value rows for cost plotting.
pub fn render_cost_csv(report: &RunReport) -> String {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("total_cost,{}\n", report.total_cost));
    match report.average_cost {
        Some(cost) => out.push_str(&format!("average_cost,{cost}\n")),
        None => out.push_str("average_cost,\n"),
    }
    for (module, count) in &report.ledger.per_module {
        out.push_str(&format!("responses_{module},{count}\n"));
    }
    out.push_str(&format!("executor_calls,{}\n", report.executor_calls));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_normalization_examples() {
        assert!(score_answer("55.75 ", "55.75"));
        assert!(score_answer("1,234", "1234"));
        assert!(score_answer("Delta Airlines", "delta airlines"));
        assert!(score_answer("  spaced   out  ", "spaced out"));
        assert!(score_answer("42.", "42"));
        assert!(!score_answer("41", "42"));
        assert!(!score_answer("delta", "united"));
    }

    #[test]
    fn score_numeric_tolerance() {
        assert!(score_answer("55.750001", "55.75"));
        assert!(!score_answer("55.76", "55.75"));
        assert!(score_answer("0", "0.0"));
        // text equal only after normalization, not numeric
        assert!(score_answer("no flights", "No  flights."));
    }

    #[test]
    fn easy_average_is_exact() {
        let rates = [58.0, 88.0, 76.0, 83.0, 28.0, 3.0, 60.0, 50.0];
        assert_eq!(average_rate(&rates), 55.75);
    }

    #[test]
    fn hard_average_raw_and_rounded() {
        let rates = [6.0, 36.2, 36.0, 7.0, 16.0, 14.0, 0.0];
        let raw = average_rate(&rates);
        assert!((raw - 16.457142857142857).abs() < 1e-12);
        assert!((raw - 16.46).abs() < 0.01);
        assert_eq!(round_down_2dp(raw), 16.45);
        assert_eq!(round_down_2dp(55.75), 55.75);
    }

    #[test]
    fn delta_examples() {
        let flight = delta_percent(58.0, 45.0);
        assert_eq!(flight.rendered, "+28.9%");
        let yelp = delta_percent(36.0, 14.0);
        assert_eq!(yelp.rendered, "+157.1%");
        let coffee = delta_percent(88.0, 88.0);
        assert_eq!(coffee.rendered, "-");
        assert_eq!(coffee.relative_percent, Some(0.0));
        let zero_base = delta_percent(50.0, 0.0);
        assert_eq!(zero_base.rendered, "—");
        assert_eq!(zero_base.relative_percent, None);
        let drop = delta_percent(6.0, 11.0);
        assert_eq!(drop.rendered, "-45.5%");
    }

    #[test]
    fn compare_tables_intersect() {
        let mut a = RateTable::default();
        let mut b = RateTable::default();
        a.rates.insert(DatasetClass::Flight, 58.0);
        a.rates.insert(DatasetClass::Coffee, 88.0);
        b.rates.insert(DatasetClass::Flight, 45.0);
        let delta = compare_rates(&a, &b);
        assert_eq!(delta.len(), 1);
        assert_eq!(delta[&DatasetClass::Flight].rendered, "+28.9%");
    }

    #[test]
    fn baseline_csv_roundtrip() {
        let csv = "method,model,difficulty,dataset,correct_rate\n\
                   ReAct,Qwen1.5-72B-Chat,easy,flight,45.0\n\
                   ReAct,Qwen1.5-72B-Chat,hard,flight,11.0\n\
                   TUMS,Qwen1.5-72B-Chat,easy,flight,58.0\n";
        let react =
            RateTable::from_baseline_csv(csv, "ReAct", "Qwen1.5-72B-Chat", Difficulty::Easy)
                .unwrap();
        assert_eq!(react.rates[&DatasetClass::Flight], 45.0);
        assert_eq!(react.rates.len(), 1);
        let bad = RateTable::from_baseline_csv("method,model\nReAct,q\n", "ReAct", "q", Difficulty::Easy);
        assert!(bad.is_err());
    }

    #[test]
    fn variant_invariants() {
        let tums = VariantConfig::of(VariantName::Tums);
        assert!(tums.recognizer_enabled);
        assert_eq!(tums.registry_mode, RegistryMode::Multi);
        assert_eq!(tums.hint_flavor, HintFlavor::Standard);
        let nir = VariantConfig::of(VariantName::TumsNir);
        assert!(!nir.recognizer_enabled);
        let os = VariantConfig::of(VariantName::TumsOs);
        assert_eq!(os.registry_mode, RegistryMode::DirectOnly);
        let pre = VariantConfig::of(VariantName::TumsPre);
        assert_eq!(pre.hint_flavor, HintFlavor::Preference);
        assert_eq!(VariantName::parse("TUMS-OS"), Some(VariantName::TumsOs));
        assert_eq!(VariantName::parse("unknown"), None);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rates_stay_in_bounds(correct in proptest::collection::vec(0usize..=50, 1..8)) {
                let rates: Vec<f64> = correct.iter().map(|&c| 100.0 * c as f64 / 50.0).collect();
                let avg = average_rate(&rates);
                prop_assert!((0.0..=100.0).contains(&avg));
                for r in rates {
                    prop_assert!((0.0..=100.0).contains(&r));
                }
            }

            #[test]
            fn normalization_is_idempotent(s in "\\PC{0,60}") {
                let once = normalize_answer(&s);
                let twice = normalize_answer(&once);
                prop_assert_eq!(once, twice);
            }
        }
    }
}
