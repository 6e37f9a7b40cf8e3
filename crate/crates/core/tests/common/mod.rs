#![allow(dead_code)]
//! Shared fixtures for the integration and acceptance suites: the on-disk
//! stores and question files under `fixtures/`, scripted episodes for the
//! eight-question suite, and a prompt-recording backend.

use std::path::PathBuf;
use std::sync::Arc;
use std::sync::Mutex;
use tums::datastore::DataStores;
use tums::gateway::{
    Backend, BackendError, Gateway, GenerationConfig, RetryPolicy, ScriptEntry, ScriptedBackend,
};
use tums::harness::{Pipeline, VariantConfig, VariantName};
use tums::prompting::PromptCatalog;
use tums::toolkit::Executor;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn prompts_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../prompts")
}

pub fn load_stores() -> Arc<DataStores> {
    Arc::new(DataStores::load_dir(&fixtures_dir().join("data")).expect("fixture stores load"))
}

pub fn load_catalog() -> PromptCatalog {
    PromptCatalog::load(&prompts_dir()).expect("prompt catalog loads")
}

/// A pipeline over the fixture stores with a scripted backend.
pub fn scripted_pipeline(variant: VariantName, script: Vec<ScriptEntry>) -> Pipeline {
    let variant = VariantConfig::of(variant);
    Pipeline {
        gateway: Gateway::new(
            Box::new(ScriptedBackend::new(script).expect("non-empty script")),
            GenerationConfig::default(),
            RetryPolicy::immediate(1),
        ),
        catalog: load_catalog(),
        registry: variant.registry(),
        executor: Executor::new(load_stores()),
        variant,
        max_steps: 10,
    }
}

fn entry(response: &str) -> ScriptEntry {
    ScriptEntry::response(response)
}

fn expecting(expect: &str, response: &str) -> ScriptEntry {
    ScriptEntry::expecting(expect, response)
}

/// The scripted episodes for the eight fixture questions, in suite order
/// (question files sort by name: agenda, airbnb, coffee, dblp, flight,
/// gsm8k, scirex, yelp). With `recognizer` set, each episode is preceded by
/// one classification response.
pub fn suite_script(recognizer: bool) -> Vec<ScriptEntry> {
    let mut script = Vec::new();
    let recognize = |label: &str, keyword: &str, script: &mut Vec<ScriptEntry>| {
        if recognizer {
            script.push(expecting(
                keyword,
                &format!("The keywords point one way. [{label}]"),
            ));
        }
    };

    // agenda
    recognize("Agenda", "dentist", &mut script);
    script.extend([
        expecting(
            "Subtask 1:",
            "Look it up in the agenda corpus. [RetrieveAgenda]<dentist appointment>",
        ),
        expecting(
            "RetrieveAgenda[PARAMETER]",
            "Answer: RetrieveAgenda[dentist appointment]",
        ),
        entry("The retrieved entry says Monday at 9am. [Finish]<Monday at 9am>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[Monday at 9am]"),
    ]);

    // airbnb
    recognize("Airbnb", "Maspeth", &mut script);
    script.extend([
        expecting(
            "Subtask 1:",
            "One query finds the nightly price. [SQLInterpreter]<find the nightly price of the listing named Bright modern room in Maspeth>",
        ),
        expecting(
            "extract the framework",
            "SELECT <columns> FROM <table> WHERE <equality conditions>",
        ),
        expecting(
            "map the implicit information",
            "table: airbnb\ncolumns: price\nequality conditions: name='Bright modern room' AND neighbourhood='Maspeth'",
        ),
        expecting(
            "Mappings:",
            "Answer: SQLInterpreter[SELECT price FROM airbnb WHERE name='Bright modern room' AND neighbourhood='Maspeth']",
        ),
        entry("The nightly price is 61.5, so multiply by 8. [Calculate]<61.5*8>"),
        expecting("Calculate[PARAMETER]", "Answer: Calculate[61.5*8]"),
        entry("The total is 492. [Finish]<492>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[492]"),
    ]);

    // coffee
    recognize("Coffee", "coffee", &mut script);
    script.extend([
        expecting(
            "Subtask 1:",
            "An aggregate over a date range fits one SQL query. [SQLInterpreter]<compute the average coffee price between 2022-01-01 and 2022-01-02>",
        ),
        expecting(
            "extract the framework",
            "SELECT AVG(<column>) FROM <table> WHERE <range conditions>",
        ),
        expecting(
            "map the implicit information",
            "table: coffee\ncolumn: Price\nrange conditions: Date >= '2022-01-01' AND Date <= '2022-01-02'",
        ),
        expecting(
            "Mappings:",
            "Answer: SQLInterpreter[SELECT AVG(Price) FROM coffee WHERE Date >= '2022-01-01' AND Date <= '2022-01-02']",
        ),
        entry("The average is 5. [Finish]<5>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[5]"),
    ]);

    // dblp
    recognize("DBLP", "coauthors", &mut script);
    script.extend([
        expecting(
            "Subtask 1:",
            "We need the collaboration graph. [LoadGraph]<load the dblp graph>",
        ),
        expecting("LoadGraph[PARAMETER]", "Answer: LoadGraph[dblp]"),
        entry("Now list the neighbours. [NeighbourCheck]<who are the neighbours of Ada Lovelace>"),
        expecting(
            "NeighbourCheck[PARAMETER]",
            "Answer: NeighbourCheck[Ada Lovelace]",
        ),
        entry("The neighbours are the coauthors. [Finish]<Alan Turing, Grace Hopper>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[Alan Turing, Grace Hopper]"),
    ]);

    // flight
    recognize("Flight", "flights", &mut script);
    script.extend([
        expecting(
            "Subtask 1:",
            "We need the flights database first. [LoadDB]<load the flights database>",
        ),
        expecting("LoadDB[PARAMETER]", "Answer: LoadDB[flights]"),
        entry("Now narrow to the route and date. [FilterDB]<filter flights with Origin=BOS, Dest=ATL, FlightDate=2022-01-01>"),
        expecting(
            "categorize the filtering information",
            "time: FlightDate=2022-01-01\nspace: Origin=BOS, Dest=ATL\nobject: none",
        ),
        expecting("Category: time", "FlightDate=2022-01-01"),
        expecting("Category: space", "Origin=BOS, Dest=ATL"),
        expecting("Category: object", "none"),
        entry("The filter reports 2 matching flights. [Finish]<2>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[2]"),
    ]);

    // gsm8k
    recognize("GSM8K", "Natalia", &mut script);
    script.extend([
        expecting(
            "Subtask 1:",
            "May is half of April. [Calculate]<48+48/2>",
        ),
        expecting("Calculate[PARAMETER]", "Answer: Calculate[48+48/2]"),
        entry("The total is 72. [Finish]<72>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[72]"),
    ]);

    // scirex
    recognize("SciREX", "segmentation", &mut script);
    script.extend([
        expecting(
            "Subtask 1:",
            "Retrieve the passage about the model. [RetrieveScirex]<UNet segmentation evaluated dataset>",
        ),
        expecting(
            "RetrieveScirex[PARAMETER]",
            "Answer: RetrieveScirex[UNet segmentation evaluated dataset]",
        ),
        entry("The passage names CamVid. [Finish]<CamVid>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[CamVid]"),
    ]);

    // yelp
    recognize("Yelp", "Monsoon", &mut script);
    script.extend([
        expecting(
            "Subtask 1:",
            "We need the yelp database. [LoadDB]<load the yelp database>",
        ),
        expecting("LoadDB[PARAMETER]", "Answer: LoadDB[yelp]"),
        entry("Narrow to the business by name. [FilterDB]<filter businesses with Name=Monsoon Cafe>"),
        expecting(
            "categorize the filtering information",
            "time: none\nspace: none\nobject: Name=Monsoon Cafe",
        ),
        expecting("Category: time", "none"),
        expecting("Category: space", "none"),
        expecting("Category: object", "Name=Monsoon Cafe"),
        entry("Read the categories column. [GetValue]<get the values of the Categories column>"),
        expecting("GetValue[PARAMETER]", "Answer: GetValue[Categories]"),
        entry("The categories are listed. [Finish]<Thai; Breakfast>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[Thai; Breakfast]"),
    ]);

    script
}

/// The same eight episodes under the one-structure registry: FilterDB and
/// SQLInterpreter answer through their direct prompts in a single call.
pub fn suite_script_direct_only(recognizer: bool) -> Vec<ScriptEntry> {
    let mut script = Vec::new();
    let recognize = |label: &str, keyword: &str, script: &mut Vec<ScriptEntry>| {
        if recognizer {
            script.push(expecting(
                keyword,
                &format!("The keywords point one way. [{label}]"),
            ));
        }
    };

    // agenda
    recognize("Agenda", "dentist", &mut script);
    script.extend([
        entry("Look it up in the agenda corpus. [RetrieveAgenda]<dentist appointment>"),
        expecting(
            "RetrieveAgenda[PARAMETER]",
            "Answer: RetrieveAgenda[dentist appointment]",
        ),
        entry("The retrieved entry says Monday at 9am. [Finish]<Monday at 9am>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[Monday at 9am]"),
    ]);

    // airbnb
    recognize("Airbnb", "Maspeth", &mut script);
    script.extend([
        entry("One query finds the nightly price. [SQLInterpreter]<find the nightly price of the listing named Bright modern room in Maspeth>"),
        expecting(
            "SQLInterpreter[PARAMETER]",
            "Answer: SQLInterpreter[SELECT price FROM airbnb WHERE name='Bright modern room' AND neighbourhood='Maspeth']",
        ),
        entry("The nightly price is 61.5, so multiply by 8. [Calculate]<61.5*8>"),
        expecting("Calculate[PARAMETER]", "Answer: Calculate[61.5*8]"),
        entry("The total is 492. [Finish]<492>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[492]"),
    ]);

    // coffee
    recognize("Coffee", "coffee", &mut script);
    script.extend([
        entry("An aggregate over a date range fits one SQL query. [SQLInterpreter]<compute the average coffee price between 2022-01-01 and 2022-01-02>"),
        expecting(
            "SQLInterpreter[PARAMETER]",
            "Answer: SQLInterpreter[SELECT AVG(Price) FROM coffee WHERE Date >= '2022-01-01' AND Date <= '2022-01-02']",
        ),
        entry("The average is 5. [Finish]<5>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[5]"),
    ]);

    // dblp
    recognize("DBLP", "coauthors", &mut script);
    script.extend([
        entry("We need the collaboration graph. [LoadGraph]<load the dblp graph>"),
        expecting("LoadGraph[PARAMETER]", "Answer: LoadGraph[dblp]"),
        entry("Now list the neighbours. [NeighbourCheck]<who are the neighbours of Ada Lovelace>"),
        expecting(
            "NeighbourCheck[PARAMETER]",
            "Answer: NeighbourCheck[Ada Lovelace]",
        ),
        entry("The neighbours are the coauthors. [Finish]<Alan Turing, Grace Hopper>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[Alan Turing, Grace Hopper]"),
    ]);

    // flight
    recognize("Flight", "flights", &mut script);
    script.extend([
        entry("We need the flights database first. [LoadDB]<load the flights database>"),
        expecting("LoadDB[PARAMETER]", "Answer: LoadDB[flights]"),
        entry("Now narrow to the route and date. [FilterDB]<filter flights with Origin=BOS, Dest=ATL, FlightDate=2022-01-01>"),
        expecting(
            "FilterDB[PARAMETER]",
            "Answer: FilterDB[Origin=BOS, Dest=ATL, FlightDate=2022-01-01]",
        ),
        entry("The filter reports 2 matching flights. [Finish]<2>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[2]"),
    ]);

    // gsm8k
    recognize("GSM8K", "Natalia", &mut script);
    script.extend([
        entry("May is half of April. [Calculate]<48+48/2>"),
        expecting("Calculate[PARAMETER]", "Answer: Calculate[48+48/2]"),
        entry("The total is 72. [Finish]<72>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[72]"),
    ]);

    // scirex
    recognize("SciREX", "segmentation", &mut script);
    script.extend([
        entry("Retrieve the passage about the model. [RetrieveScirex]<UNet segmentation evaluated dataset>"),
        expecting(
            "RetrieveScirex[PARAMETER]",
            "Answer: RetrieveScirex[UNet segmentation evaluated dataset]",
        ),
        entry("The passage names CamVid. [Finish]<CamVid>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[CamVid]"),
    ]);

    // yelp
    recognize("Yelp", "Monsoon", &mut script);
    script.extend([
        entry("We need the yelp database. [LoadDB]<load the yelp database>"),
        expecting("LoadDB[PARAMETER]", "Answer: LoadDB[yelp]"),
        entry("Narrow to the business by name. [FilterDB]<filter businesses with Name=Monsoon Cafe>"),
        expecting(
            "FilterDB[PARAMETER]",
            "Answer: FilterDB[Name=Monsoon Cafe]",
        ),
        entry("Read the categories column. [GetValue]<get the values of the Categories column>"),
        expecting("GetValue[PARAMETER]", "Answer: GetValue[Categories]"),
        entry("The categories are listed. [Finish]<Thai; Breakfast>"),
        expecting("Finish[PARAMETER]", "Answer: Finish[Thai; Breakfast]"),
    ]);

    script
}

/// Expected response counts for the scripted suite, by module.
pub struct SuiteCounts {
    pub questions: u64,
    pub decomposer: u64,
    pub processor: u64,
    pub steps: u64,
    pub finishes: u64,
}

pub fn suite_counts() -> SuiteCounts {
    SuiteCounts {
        questions: 8,
        decomposer: 21,
        processor: 31,
        steps: 21,
        finishes: 8,
    }
}

/// Backend wrapper that records every prompt it is asked to complete; the
/// log handle stays with the test.
pub struct RecordingBackend {
    inner: ScriptedBackend,
    log: Arc<Mutex<Vec<String>>>,
}

impl RecordingBackend {
    pub fn new(script: Vec<ScriptEntry>) -> (RecordingBackend, Arc<Mutex<Vec<String>>>) {
        let log = Arc::new(Mutex::new(Vec::new()));
        (
            RecordingBackend {
                inner: ScriptedBackend::new(script).expect("non-empty script"),
                log: Arc::clone(&log),
            },
            log,
        )
    }
}

impl Backend for RecordingBackend {
    fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<String, BackendError> {
        self.log
            .lock()
            .expect("prompt log poisoned")
            .push(prompt.to_string());
        self.inner.complete(prompt, config)
    }
}
