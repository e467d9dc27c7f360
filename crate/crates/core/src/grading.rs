//! Per-interaction judgment: binary grading with error taxonomy for
//! deterministic-answer tasks; atomic-fact precision plus quality dimensions
//! for open-ended tasks; follow-up grading.
//!
//! All judgments come from the interviewer model. The only local shortcut is
//! an optional exact string match against the gold answer, which short-circuits
//! obviously correct deterministic answers.

use serde_json::Value;

use crate::agents::{chat_structured, ChatAgent, FieldKind, SchemaField, StructuredError};
use crate::domain::{
    ChatMessage, ErrorType, FactLabel, GradeKind, GradeOutcome, Problem, QualityScores,
    TaskKind, ValidationError,
};
use crate::prompts::{PromptKind, TaskProfile};

#[derive(Debug, thiserror::Error)]
pub enum GradingError {
    #[error(transparent)]
    Structured(#[from] StructuredError),
    #[error("judge produced an empty fact decomposition")]
    EmptyDecomposition,
    #[error("fact precision is undefined for an empty label list")]
    EmptyLabels,
    #[error("judge changed the fact count: expected {expected}, got {actual}")]
    Cardinality { expected: usize, actual: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Template(#[from] ValidationError),
}

/// Case-, whitespace- and trailing-punctuation-insensitive comparison used by
/// the exact-match fast path.
pub fn normalized_answer(text: &str) -> String {
    text.trim()
        .trim_end_matches(['.', '!'])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn prompt_message(text: String) -> Vec<ChatMessage> {
    vec![ChatMessage::interviewer(text)]
}

/// Judge a deterministic-answer attempt. Incorrect answers carry one of the
/// four error types; correct answers carry none.
pub fn grade_binary(
    problem: &Problem,
    answer: &str,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<GradeOutcome, GradingError> {
    if problem.task_kind != TaskKind::DeterministicAnswer {
        return Err(GradingError::Precondition(
            "grade_binary requires a deterministic-answer task".into(),
        ));
    }
    let gold = problem.gold_answer.as_deref().unwrap_or_default();
    if profile.exact_match_fast_path
        && !gold.is_empty()
        && normalized_answer(answer) == normalized_answer(gold)
    {
        return Ok(GradeOutcome {
            kind: GradeKind::Binary { correct: true },
            error_type: None,
            quality: None,
            raw_judgment: "exact match against gold answer".into(),
        });
    }

    let prompt = profile.prompts.render(
        PromptKind::GradeBinary,
        &[
            ("question", &problem.question),
            ("answer", gold),
            ("solution", &problem.reference_solution),
            ("history", answer),
        ],
    )?;
    let schema = [
        SchemaField::required("correct", FieldKind::Bool),
        SchemaField::optional("error_type", FieldKind::Text),
    ];
    let outcome = chat_structured(
        interviewer,
        &prompt_message(prompt),
        &schema,
        profile.max_parse_retries,
        |v, raw| {
            let correct = v["correct"].as_bool().expect("schema-checked");
            let error_type = if correct {
                None
            } else {
                let name = v["error_type"]
                    .as_str()
                    .ok_or("incorrect answers need an \"error_type\"")?;
                Some(
                    ErrorType::parse(name)
                        .ok_or_else(|| format!("unknown error type \"{name}\""))?,
                )
            };
            Ok(GradeOutcome {
                kind: GradeKind::Binary { correct },
                error_type,
                quality: None,
                raw_judgment: raw.to_string(),
            })
        },
    )?;
    Ok(outcome)
}

fn parse_fact_array(v: &Value) -> Result<Vec<FactLabel>, String> {
    let items = v["facts"].as_array().expect("schema-checked");
    let mut labels = Vec::with_capacity(items.len());
    for item in items {
        let fact = item["fact"]
            .as_str()
            .ok_or("every fact needs a string \"fact\"")?;
        if fact.trim().is_empty() {
            return Err("fact text must be non-empty".into());
        }
        let supported = item["supported"]
            .as_bool()
            .ok_or("every fact needs a boolean \"supported\"")?;
        labels.push(FactLabel { fact: fact.to_string(), supported });
    }
    Ok(labels)
}

const FACTS_SCHEMA: [SchemaField; 1] = [SchemaField::required("facts", FieldKind::Array)];

/// Split an open-ended answer into atomic facts labeled against the
/// reference solution.
pub fn decompose_and_label(
    problem: &Problem,
    answer: &str,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<Vec<FactLabel>, GradingError> {
    if problem.task_kind != TaskKind::OpenEnded {
        return Err(GradingError::Precondition(
            "decompose_and_label requires an open-ended task".into(),
        ));
    }
    if answer.trim().is_empty() {
        return Err(GradingError::EmptyDecomposition);
    }
    let prompt = profile.prompts.render(
        PromptKind::Decompose,
        &[
            ("question", &problem.question),
            ("solution", &problem.reference_solution),
            ("output", answer),
        ],
    )?;
    let labels = chat_structured(
        interviewer,
        &prompt_message(prompt),
        &FACTS_SCHEMA,
        profile.max_parse_retries,
        |v, _| parse_fact_array(v),
    )?;
    if labels.is_empty() {
        return Err(GradingError::EmptyDecomposition);
    }
    Ok(labels)
}

/// Supported-fact fraction: an exact count ratio.
pub fn fact_precision(labels: &[FactLabel]) -> Result<f64, GradingError> {
    if labels.is_empty() {
        return Err(GradingError::EmptyLabels);
    }
    let supported = labels.iter().filter(|l| l.supported).count();
    Ok(supported as f64 / labels.len() as f64)
}

fn render_facts(labels: &[FactLabel]) -> String {
    serde_json::to_string(labels).expect("fact labels serialize")
}

/// Fold a correction statement into an existing fact list. The judge must
/// return exactly as many facts as before; a count change triggers one
/// corrective re-ask and then fails.
pub fn merge_revision(
    problem: &Problem,
    previous_labels: &[FactLabel],
    correction: &str,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<Vec<FactLabel>, GradingError> {
    if previous_labels.is_empty() {
        return Err(GradingError::Precondition(
            "merge_revision requires a non-empty previous fact list".into(),
        ));
    }
    if correction.trim().is_empty() {
        return Ok(previous_labels.to_vec());
    }
    let prompt = profile.prompts.render(
        PromptKind::MergeRevision,
        &[
            ("question", &problem.question),
            ("solution", &problem.reference_solution),
            ("facts", &render_facts(previous_labels)),
            ("correction", correction),
        ],
    )?;
    let expected = previous_labels.len();
    let messages = prompt_message(prompt);
    let merged = chat_structured(
        interviewer,
        &messages,
        &FACTS_SCHEMA,
        profile.max_parse_retries,
        |v, _| parse_fact_array(v),
    )?;
    if merged.len() == expected {
        return Ok(merged);
    }
    // One corrective re-ask dedicated to the cardinality contract.
    let mut dialogue = messages;
    dialogue.push(ChatMessage::interviewee(render_facts(&merged)));
    dialogue.push(ChatMessage::interviewer(format!(
        "Your fact list has {} entries but must have exactly {} entries, one per \
         original fact, in the same order. Reply again with the corrected JSON object.",
        merged.len(),
        expected
    )));
    let retried = chat_structured(
        interviewer,
        &dialogue,
        &FACTS_SCHEMA,
        profile.max_parse_retries,
        |v, _| parse_fact_array(v),
    )?;
    if retried.len() == expected {
        Ok(retried)
    } else {
        Err(GradingError::Cardinality { expected, actual: retried.len() })
    }
}

/// Judge a follow-up answer. Follow-up grading is binary for every task kind.
pub fn grade_followup(
    followup_question: &str,
    answer: &str,
    gold_context: &str,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<GradeOutcome, GradingError> {
    let prompt = profile.prompts.render(
        PromptKind::GradeFollowup,
        &[
            ("followup_question", followup_question),
            ("followup_answer", answer),
            ("context", gold_context),
        ],
    )?;
    let schema = [SchemaField::required("correct", FieldKind::Bool)];
    let outcome = chat_structured(
        interviewer,
        &prompt_message(prompt),
        &schema,
        profile.max_parse_retries,
        |v, raw| {
            Ok(GradeOutcome {
                kind: GradeKind::Binary { correct: v["correct"].as_bool().expect("schema-checked") },
                error_type: None,
                quality: None,
                raw_judgment: raw.to_string(),
            })
        },
    )?;
    Ok(outcome)
}

fn unit_dimension(v: &Value, name: &str) -> Result<f64, String> {
    let x = v[name].as_f64().expect("schema-checked");
    // Judges sometimes answer on a 0-100 scale; normalize to [0, 1].
    let x = if x > 1.0 && x <= 100.0 { x / 100.0 } else { x };
    if !(0.0..=1.0).contains(&x) {
        return Err(format!("\"{name}\" must be within [0, 1]"));
    }
    Ok(x)
}

/// Judge completeness, redundancy, readability, and depth of an open-ended
/// answer, each in [0, 1].
pub fn assess_quality(
    problem: &Problem,
    answer: &str,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<QualityScores, GradingError> {
    if problem.task_kind != TaskKind::OpenEnded {
        return Err(GradingError::Precondition(
            "assess_quality requires an open-ended task".into(),
        ));
    }
    let prompt = profile.prompts.render(
        PromptKind::AssessQuality,
        &[
            ("question", &problem.question),
            ("solution", &problem.reference_solution),
            ("output", answer),
        ],
    )?;
    let schema = [
        SchemaField::required("completeness", FieldKind::Number),
        SchemaField::required("redundancy", FieldKind::Number),
        SchemaField::required("readability", FieldKind::Number),
        SchemaField::required("depth", FieldKind::Number),
    ];
    let scores = chat_structured(
        interviewer,
        &prompt_message(prompt),
        &schema,
        profile.max_parse_retries,
        |v, _| {
            Ok(QualityScores {
                completeness: unit_dimension(v, "completeness")?,
                redundancy: unit_dimension(v, "redundancy")?,
                readability: unit_dimension(v, "readability")?,
                depth: unit_dimension(v, "depth")?,
            })
        },
    )?;
    Ok(scores)
}
