//! Typed follow-up question generation.
//!
//! Deterministic tasks get a rationale question after success or a
//! clarification question keyed to the diagnosed error type after failure;
//! open-ended tasks get a question probing reference facts the answer missed.
//! Generated questions are checked for novelty and non-disclosure; a
//! violation earns the judge one corrective re-ask before failing.

use crate::agents::{chat_structured, ChatAgent, FieldKind, SchemaField, StructuredError};
use crate::domain::{ChatMessage, ErrorType, FactLabel, FollowUpType, Problem, TaskKind, ValidationError};
use crate::prompts::{PromptKind, TaskProfile};

#[derive(Debug, thiserror::Error)]
pub enum FollowupError {
    #[error(transparent)]
    Structured(#[from] StructuredError),
    #[error(transparent)]
    Template(#[from] ValidationError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("generated question rejected after re-ask: {reason}")]
    Rejected { reason: String, question: String },
}

/// A generated follow-up question awaiting an answer.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFollowup {
    pub followup_type: FollowUpType,
    pub question: String,
}

const QUESTION_SCHEMA: [SchemaField; 1] = [SchemaField::required("question", FieldKind::Text)];

fn ask_question(
    interviewer: &dyn ChatAgent,
    prompt: String,
    max_parse_retries: u32,
    validate: impl Fn(&str) -> Result<(), String>,
) -> Result<String, FollowupError> {
    let messages = vec![ChatMessage::interviewer(prompt)];
    let extract = |v: &serde_json::Value, _raw: &str| -> Result<String, String> {
        let q = v["question"].as_str().expect("schema-checked").trim().to_string();
        if q.is_empty() {
            return Err("question must be non-empty".into());
        }
        Ok(q)
    };
    let first = chat_structured(interviewer, &messages, &QUESTION_SCHEMA, max_parse_retries, extract)?;
    let reason = match validate(&first) {
        Ok(()) => return Ok(first),
        Err(reason) => reason,
    };
    let mut dialogue = messages;
    dialogue.push(ChatMessage::interviewee(first));
    dialogue.push(ChatMessage::interviewer(format!(
        "That question cannot be used: {reason}. Ask a different question that \
         respects the constraints, as a JSON object with the key \"question\"."
    )));
    let second =
        chat_structured(interviewer, &dialogue, &QUESTION_SCHEMA, max_parse_retries, extract)?;
    match validate(&second) {
        Ok(()) => Ok(second),
        Err(reason) => Err(FollowupError::Rejected { reason, question: second }),
    }
}

fn render_list(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items.iter().map(|q| format!("- {q}")).collect::<Vec<_>>().join("\n")
    }
}

/// Sentences of the reference solution long enough to be meaningful
/// disclosure targets.
fn solution_sentences(solution: &str) -> Vec<&str> {
    solution
        .split(['.', '?', '!', '\n'])
        .map(str::trim)
        .filter(|s| s.len() >= 20)
        .collect()
}

/// Ask why a correct solution works, grounded only in the model's own
/// solution text.
pub fn gen_rationale(
    problem: &Problem,
    model_solution: &str,
    prior_followups: &[String],
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<GeneratedFollowup, FollowupError> {
    if problem.task_kind != TaskKind::DeterministicAnswer {
        return Err(FollowupError::Precondition(
            "rationale follow-ups apply to deterministic-answer tasks".into(),
        ));
    }
    let gold = problem.gold_answer.clone().unwrap_or_default();
    let prompt = profile.prompts.render(
        PromptKind::FollowupRationale,
        &[
            ("question", &problem.question),
            ("answer", &gold),
            ("solution", &problem.reference_solution),
            ("model_solution", model_solution),
            ("prior", &render_list(prior_followups)),
        ],
    )?;
    let question = ask_question(interviewer, prompt, profile.max_parse_retries, |q| {
        if prior_followups.iter().any(|p| p == q) {
            return Err("the question repeats an earlier follow-up verbatim".into());
        }
        if !gold.trim().is_empty() && q.contains(gold.trim()) {
            return Err("the question contains the gold answer".into());
        }
        Ok(())
    })?;
    Ok(GeneratedFollowup { followup_type: FollowUpType::Rationale, question })
}

/// Phrases that would reveal the diagnosed error type to the interviewee.
fn discloses_error_type(question: &str, error_type: ErrorType) -> bool {
    let lower = question.to_lowercase();
    if lower.contains("error type") || lower.contains("type of error") {
        return true;
    }
    let word = match error_type {
        ErrorType::Concept => "concept",
        ErrorType::Misinterpret => "misinterpret",
        ErrorType::Calculation => "calculation",
        ErrorType::NA => return false,
    };
    lower.contains(&format!("{word} error")) || lower.contains(&format!("error of {word}"))
}

/// Probe the cause of repeated failure. The subtype comes from the task's
/// follow-up policy; the diagnosis itself must stay hidden.
pub fn gen_clarification(
    problem: &Problem,
    error_type: ErrorType,
    dialogue_history: &str,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<GeneratedFollowup, FollowupError> {
    if problem.task_kind != TaskKind::DeterministicAnswer {
        return Err(FollowupError::Precondition(
            "clarification follow-ups apply to deterministic-answer tasks".into(),
        ));
    }
    let gold = problem.gold_answer.clone().unwrap_or_default();
    let prompt = profile.prompts.render(
        PromptKind::FollowupClarification,
        &[
            ("question", &problem.question),
            ("answer", &gold),
            ("solution", &problem.reference_solution),
            ("history", dialogue_history),
            ("error_type", error_type.as_str()),
        ],
    )?;
    let question = ask_question(interviewer, prompt, profile.max_parse_retries, |q| {
        if discloses_error_type(q, error_type) {
            return Err("the question discloses the diagnosed error type".into());
        }
        if !gold.trim().is_empty() && q.contains(gold.trim()) {
            return Err("the question contains the gold answer".into());
        }
        Ok(())
    })?;
    let followup_type = profile.followup_policy.for_outcome(false, Some(error_type));
    Ok(GeneratedFollowup { followup_type, question })
}

/// Probe reference facts missing from the answer. When nothing is
/// unsupported, falls back to probing the depth of a covered fact so the
/// follow-up budget is spent either way.
pub fn gen_additional_facts(
    problem: &Problem,
    labels: &[FactLabel],
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<GeneratedFollowup, FollowupError> {
    if problem.task_kind != TaskKind::OpenEnded {
        return Err(FollowupError::Precondition(
            "additional-facts follow-ups apply to open-ended tasks".into(),
        ));
    }
    if labels.is_empty() {
        return Err(FollowupError::Precondition("fact labels must be non-empty".into()));
    }
    let unsupported: Vec<&FactLabel> = labels.iter().filter(|l| !l.supported).collect();
    let targets: Vec<String> = if unsupported.is_empty() {
        labels.iter().map(|l| l.fact.clone()).collect()
    } else {
        unsupported.iter().map(|l| l.fact.clone()).collect()
    };
    let prompt = profile.prompts.render(
        PromptKind::FollowupAdditionalFacts,
        &[
            ("question", &problem.question),
            ("reference_facts", &render_list(&targets)),
            ("output", &labels
                .iter()
                .map(|l| format!("[{}] {}", if l.supported { "covered" } else { "missing" }, l.fact))
                .collect::<Vec<_>>()
                .join("\n")),
        ],
    )?;
    let sentences = solution_sentences(&problem.reference_solution);
    let question = ask_question(interviewer, prompt, profile.max_parse_retries, |q| {
        for fact in &targets {
            let fact = fact.trim();
            if fact.len() > 3 && q.contains(fact) {
                return Err("the question quotes a reference fact verbatim".into());
            }
        }
        for sentence in &sentences {
            if q.contains(sentence) {
                return Err("the question quotes the reference solution verbatim".into());
            }
        }
        Ok(())
    })?;
    Ok(GeneratedFollowup { followup_type: FollowUpType::AdditionalFacts, question })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{ExhaustionPolicy, ScriptedAgent};

    fn math_problem() -> Problem {
        Problem {
            id: "m1".into(),
            task_kind: TaskKind::DeterministicAnswer,
            question: "a and b are consecutive integers with a + b = 11; find a * b.".into(),
            reference_solution: "a = 5, b = 6, so a * b = 30.".into(),
            gold_answer: Some("30".into()),
            difficulty: None,
        }
    }

    fn open_problem() -> Problem {
        Problem {
            id: "d1".into(),
            task_kind: TaskKind::OpenEnded,
            question: "Why do the roots of unity matter?".into(),
            reference_solution:
                "Each n-th root of unity is cos(2*pi*k/n) + i*sin(2*pi*k/n) for k = 0..n-1."
                    .into(),
            gold_answer: None,
            difficulty: None,
        }
    }

    fn q(text: &str) -> String {
        format!(r#"{{"question": "{text}"}}"#)
    }

    #[test]
    fn rationale_accepts_wellformed_question() {
        let judge = ScriptedAgent::from_queue(
            [q("How do you determine the values of a and b from their sum?")],
            ExhaustionPolicy::Error,
        );
        let out = gen_rationale(&math_problem(), "a=5 b=6 so 30", &[], &judge, &TaskProfile::math())
            .unwrap();
        assert_eq!(out.followup_type, FollowUpType::Rationale);
        assert!(out.question.starts_with("How do you determine"));
    }

    #[test]
    fn rationale_rejects_repeat_then_errors() {
        let prior = vec!["How did you find a?".to_string()];
        let judge = ScriptedAgent::from_queue(
            [q("How did you find a?"), q("How did you find a?")],
            ExhaustionPolicy::RepeatLast,
        );
        let err = gen_rationale(&math_problem(), "sol", &prior, &judge, &TaskProfile::math())
            .unwrap_err();
        assert!(matches!(err, FollowupError::Rejected { .. }));
        assert_eq!(judge.call_count(), 2);
    }

    #[test]
    fn rationale_reask_can_recover() {
        let prior = vec!["How did you find a?".to_string()];
        let judge = ScriptedAgent::from_queue(
            [q("How did you find a?"), q("Why must a and b differ by one?")],
            ExhaustionPolicy::Error,
        );
        let out =
            gen_rationale(&math_problem(), "sol", &prior, &judge, &TaskProfile::math()).unwrap();
        assert_eq!(out.question, "Why must a and b differ by one?");
    }

    #[test]
    fn clarification_maps_concept_subtype() {
        let judge = ScriptedAgent::from_queue(
            [q("What does it mean for a and b to be consecutive integers?")],
            ExhaustionPolicy::Error,
        );
        let out = gen_clarification(
            &math_problem(),
            ErrorType::Concept,
            "history",
            &judge,
            &TaskProfile::math(),
        )
        .unwrap();
        assert_eq!(out.followup_type, FollowUpType::ClarificationConcept);
    }

    #[test]
    fn clarification_maps_misinterpret_subtype() {
        let judge = ScriptedAgent::from_queue(
            [q("Could you explain what the problem means by consecutive?")],
            ExhaustionPolicy::Error,
        );
        let out = gen_clarification(
            &math_problem(),
            ErrorType::Misinterpret,
            "history",
            &judge,
            &TaskProfile::math(),
        )
        .unwrap();
        assert_eq!(out.followup_type, FollowUpType::ClarificationInterpretation);
    }

    #[test]
    fn clarification_calculation_defaults_to_interpretation() {
        let judge = ScriptedAgent::from_queue(
            [q("Could you walk through how you combined the two values?")],
            ExhaustionPolicy::Error,
        );
        let out = gen_clarification(
            &math_problem(),
            ErrorType::Calculation,
            "history",
            &judge,
            &TaskProfile::math(),
        )
        .unwrap();
        assert_eq!(out.followup_type, FollowUpType::ClarificationInterpretation);
    }

    #[test]
    fn clarification_rejects_error_type_disclosure() {
        let judge = ScriptedAgent::from_queue(
            [
                q("You made a calculation error; can you redo it?"),
                q("You made a calculation error; can you redo it?"),
            ],
            ExhaustionPolicy::RepeatLast,
        );
        let err = gen_clarification(
            &math_problem(),
            ErrorType::Calculation,
            "history",
            &judge,
            &TaskProfile::math(),
        )
        .unwrap_err();
        assert!(matches!(err, FollowupError::Rejected { .. }));
    }

    #[test]
    fn additional_facts_targets_unsupported() {
        let labels = vec![
            FactLabel { fact: "roots lie on the unit circle".into(), supported: true },
            FactLabel { fact: "the n-th roots formula uses cos and sin".into(), supported: false },
        ];
        let judge = ScriptedAgent::from_queue(
            [q("Can you provide an example of determining the 6th roots of unity?")],
            ExhaustionPolicy::Error,
        );
        let out =
            gen_additional_facts(&open_problem(), &labels, &judge, &TaskProfile::depthqa()).unwrap();
        assert_eq!(out.followup_type, FollowUpType::AdditionalFacts);
        assert!(out.question.contains("6th roots"));
    }

    #[test]
    fn additional_facts_rejects_verbatim_fact() {
        let labels = vec![FactLabel {
            fact: "the n-th roots formula uses cos and sin".into(),
            supported: false,
        }];
        let judge = ScriptedAgent::from_queue(
            [
                q("Is it true that the n-th roots formula uses cos and sin?"),
                q("How would you compute all solutions of z^6 = 1?"),
            ],
            ExhaustionPolicy::Error,
        );
        let out =
            gen_additional_facts(&open_problem(), &labels, &judge, &TaskProfile::depthqa()).unwrap();
        assert_eq!(out.question, "How would you compute all solutions of z^6 = 1?");
        assert_eq!(judge.call_count(), 2);
    }

    #[test]
    fn additional_facts_falls_back_to_covered_facts() {
        let labels = vec![FactLabel { fact: "roots lie on the unit circle".into(), supported: true }];
        let judge = ScriptedAgent::from_queue(
            [q("Where in the complex plane do these solutions sit, and why?")],
            ExhaustionPolicy::Error,
        );
        let out =
            gen_additional_facts(&open_problem(), &labels, &judge, &TaskProfile::depthqa()).unwrap();
        assert_eq!(out.followup_type, FollowUpType::AdditionalFacts);
    }

    #[test]
    fn subtype_mapping_is_total_over_error_types() {
        let policy = TaskProfile::math().followup_policy;
        for et in ErrorType::ALL {
            let t = policy.for_outcome(false, Some(et));
            assert!(t.is_clarification());
        }
        assert_eq!(policy.for_outcome(true, None), FollowUpType::Rationale);
    }
}
