//! The intent recognizer: one classification prompt per question, parsing
//! the final bracketed dataset label out of the response and resolving the
//! hint that the decomposer will run under.

use crate::gateway::{Caller, Gateway, GatewayError};
use crate::prompting::{PromptCatalog, PromptError};
use crate::types::{DatasetClass, Hint, HintFlavor, Question};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecognitionOutcome {
    pub dataset: DatasetClass,
    pub hint: Hint,
    pub raw_response: String,
}

#[derive(Debug, Error)]
pub enum RecognizeError {
    #[error("{0}")]
    Infrastructure(#[from] GatewayError),
    #[error("{0}")]
    Prompt(#[from] PromptError),
    #[error("UnparseableClass: no bracketed label or label not in the eight classes: {response:?}")]
    UnparseableClass { response: String },
}

/// The last bracketed token that parses as one of the eight labels; earlier
/// labels and non-label brackets (including an echoed `[DATASET]`) lose.
pub fn parse_dataset_label(response: &str) -> Option<DatasetClass> {
    let mut found = None;
    let mut rest = response;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        match after.find([']', '[']) {
            Some(close) if after.as_bytes()[close] == b']' => {
                if let Ok(dataset) = DatasetClass::parse(&after[..close]) {
                    found = Some(dataset);
                }
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    found
}

/// Classify one question and resolve its hint of the requested flavor
/// (falling back to Standard when no Preference hint exists for the class).
/// An unparseable response is retried once with the same prompt, then
/// surfaced; the caller may proceed hint-less.
pub fn recognize(
    gateway: &Gateway,
    catalog: &PromptCatalog,
    question: &Question,
    flavor: HintFlavor,
) -> Result<RecognitionOutcome, RecognizeError> {
    let prompt = catalog.recognizer_prompt(question, catalog.recognizer_exemplars())?;
    let mut last_response = String::new();
    for _ in 0..2 {
        let response = gateway.complete(&prompt, Caller::Recognizer)?;
        if let Some(dataset) = parse_dataset_label(&response) {
            let hint = catalog
                .hint(dataset, flavor)
                .expect("catalog validation guarantees a standard hint per class")
                .clone();
            return Ok(RecognitionOutcome {
                dataset,
                hint,
                raw_response: response,
            });
        }
        last_response = response;
    }
    Err(RecognizeError::UnparseableClass {
        response: last_response,
    })
}
