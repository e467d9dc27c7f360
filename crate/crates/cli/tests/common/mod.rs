//! Shared scripted fixture: a deterministic math task where marker strings in
//! the interviewee's answers steer the scripted interviewer's grading,
//! feedback, follow-ups, and summaries. Each problem's question carries a
//! behavior tag that selects how many attempts the interviewee needs.
#![allow(dead_code)] // each test binary uses a different subset

use std::path::{Path, PathBuf};

use serde_json::json;

use interview_core::agents::{AgentHandle, ExhaustionPolicy, ScriptRule, ScriptSpec, ScriptedAgent};
use interview_core::domain::{Problem, TaskKind};
use interview_core::engine::AgentPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    CorrectAt1,
    CorrectAt2,
    CorrectAt3,
    NeverCorrect,
}

impl Behavior {
    pub fn tag(self) -> &'static str {
        match self {
            Behavior::CorrectAt1 => "BEHC1",
            Behavior::CorrectAt2 => "BEHC2",
            Behavior::CorrectAt3 => "BEHC3",
            Behavior::NeverCorrect => "BEHNV",
        }
    }

    /// Hand-walked carry-forward score vector for max_retries = 2.
    pub fn expected_score_at(self) -> [f64; 3] {
        match self {
            Behavior::CorrectAt1 => [1.0, 1.0, 1.0],
            Behavior::CorrectAt2 => [0.0, 1.0, 1.0],
            Behavior::CorrectAt3 => [0.0, 0.0, 1.0],
            Behavior::NeverCorrect => [0.0, 0.0, 0.0],
        }
    }

    pub fn expected_interactions(self) -> usize {
        match self {
            Behavior::CorrectAt1 => 1,
            Behavior::CorrectAt2 => 2,
            Behavior::CorrectAt3 | Behavior::NeverCorrect => 3,
        }
    }

    pub fn solves(self) -> bool {
        self != Behavior::NeverCorrect
    }
}

fn letters(mut i: usize) -> String {
    let mut out = String::new();
    for _ in 0..3 {
        out.push(char::from(b'a' + (i % 26) as u8));
        i /= 26;
    }
    out
}

/// Problem `i` with the given behavior. The two addends are unique per
/// problem so masking rules can target them.
pub fn fixture_problem(i: usize, behavior: Behavior) -> Problem {
    let x = 100 + i;
    let y = 500 + i;
    Problem {
        id: format!("p{i:03}"),
        task_kind: TaskKind::DeterministicAnswer,
        question: format!("Task {} {}: add {} and {}.", behavior.tag(), letters(i), x, y),
        reference_solution: format!("Add the two numbers: {x} + {y} = {}.", x + y),
        gold_answer: Some((x + y).to_string()),
        difficulty: Some(format!("{}", i % 4 + 1)),
    }
}

fn rule(contains: impl Into<String>, response: impl ToString) -> ScriptRule {
    ScriptRule { contains: contains.into(), response: response.to_string() }
}

/// Interviewer rules for every engine-issued call, including per-problem
/// modification replies (the first addend becomes `u`).
pub fn interviewer_rules(problems: &[Problem]) -> Vec<ScriptRule> {
    let mut rules = vec![rule(
        "Decide whether the candidate's reply",
        json!({"is_question": false}),
    )];
    for p in problems {
        let x = p
            .question
            .split_whitespace()
            .find(|t| t.chars().all(|c| c.is_ascii_digit()))
            .expect("fixture question has a bare numeral");
        let modified = p.question.replacen(x, "u", 1);
        rules.push(rule(
            // the trailing "Output:" pins this to the modification prompt
            format!("Question: {}\n\nOutput:", p.question),
            json!({
                "modified_question": modified,
                "explanation": format!("u denotes {x}")
            }),
        ));
    }
    rules.extend([
        rule("Candidate's answer: ANSWER_CORRECT", json!({"correct": true})),
        rule(
            "Candidate's answer: ANSWER_WRONG_NV_3",
            json!({"correct": false, "error_type": "Concept"}),
        ),
        rule(
            "Candidate's answer: ANSWER_WRONG",
            json!({"correct": false, "error_type": "Calculation"}),
        ),
        rule(
            "Candidate's latest answer: ANSWER_WRONG_C2_1",
            json!({"feedback": "FEEDBACK_C2_1 revisit the addition step.",
                   "feedback_type": "Error Identification and Correction"}),
        ),
        rule(
            "Candidate's latest answer: ANSWER_WRONG_C3_2",
            json!({"feedback": "FEEDBACK_C3_2 check how you carried the tens.",
                   "feedback_type": "Precision and Accuracy Emphasis"}),
        ),
        rule(
            "Candidate's latest answer: ANSWER_WRONG_C3_1",
            json!({"feedback": "FEEDBACK_C3_1 re-read the two operands.",
                   "feedback_type": "Process and Strategy Guidance"}),
        ),
        rule(
            "Candidate's latest answer: ANSWER_WRONG_NV_2",
            json!({"feedback": "FEEDBACK_NV_2 think about what addition means here.",
                   "feedback_type": "Conceptual Guidance"}),
        ),
        rule(
            "Candidate's latest answer: ANSWER_WRONG_NV_1",
            json!({"feedback": "FEEDBACK_NV_1 the total is off, try again.",
                   "feedback_type": "Error Identification and Correction"}),
        ),
        rule(
            "answered the question correctly",
            json!({"question": "FOLLOWUP_Q_RATIONALE why does your final step hold?"}),
        ),
        rule(
            "kept getting this question wrong",
            json!({"question": "FOLLOWUP_Q_CLARIFY how do you read what the task asks?"}),
        ),
        rule("Grade the candidate's answer to a follow-up", json!({"correct": true})),
        rule("Summarize the interview session", "SESSION_SUMMARY handled feedback sensibly"),
        rule(
            "You are given summaries of individual interview sessions",
            "OVERALL_SUMMARY solid on arithmetic, weak on carrying",
        ),
    ]);
    rules
}

/// Interviewee rules: follow-up replies first, then feedback-keyed revisions,
/// then behavior-tag first answers.
pub fn interviewee_rules() -> Vec<ScriptRule> {
    vec![
        rule("FOLLOWUP_Q_", "FOLLOWUP_REPLY here is my reasoning."),
        rule("FEEDBACK_C3_2", "ANSWER_CORRECT after two rounds of feedback"),
        rule("FEEDBACK_C3_1", "ANSWER_WRONG_C3_2"),
        rule("FEEDBACK_C2_1", "ANSWER_CORRECT after one round of feedback"),
        rule("FEEDBACK_NV_2", "ANSWER_WRONG_NV_3"),
        rule("FEEDBACK_NV_1", "ANSWER_WRONG_NV_2"),
        rule("BEHC1", "ANSWER_CORRECT on the first try"),
        rule("BEHC2", "ANSWER_WRONG_C2_1"),
        rule("BEHC3", "ANSWER_WRONG_C3_1"),
        rule("BEHNV", "ANSWER_WRONG_NV_1"),
    ]
}

pub fn scripted_agents(problems: &[Problem]) -> AgentPair {
    AgentPair {
        interviewer: AgentHandle::scripted(ScriptedAgent::from_spec(ScriptSpec {
            rules: interviewer_rules(problems),
            queue: vec![],
            exhausted: ExhaustionPolicy::Error,
            latency_ms: 0,
        })),
        interviewee: AgentHandle::scripted(ScriptedAgent::from_spec(ScriptSpec {
            rules: interviewee_rules(),
            queue: vec![],
            exhausted: ExhaustionPolicy::Error,
            latency_ms: 0,
        })),
    }
}

pub struct FixtureDir {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub dataset: PathBuf,
    pub interviewer_script: PathBuf,
    pub interviewee_script: PathBuf,
}

/// Write a complete on-disk fixture: dataset JSONL, both agent scripts, and
/// a config.toml pointing at them.
pub fn write_fixture_dir(dir: &Path, problems: &[Problem], extra_config: &str) -> FixtureDir {
    let dataset = dir.join("dataset.jsonl");
    let mut body = String::new();
    for p in problems {
        body.push_str(&serde_json::to_string(p).unwrap());
        body.push('\n');
    }
    std::fs::write(&dataset, body).unwrap();

    let interviewer_script = dir.join("interviewer.json");
    std::fs::write(
        &interviewer_script,
        serde_json::to_string_pretty(&ScriptSpec {
            rules: interviewer_rules(problems),
            queue: vec![],
            exhausted: ExhaustionPolicy::Error,
            latency_ms: 0,
        })
        .unwrap(),
    )
    .unwrap();

    let interviewee_script = dir.join("interviewee.json");
    std::fs::write(
        &interviewee_script,
        serde_json::to_string_pretty(&ScriptSpec {
            rules: interviewee_rules(),
            queue: vec![],
            exhausted: ExhaustionPolicy::Error,
            latency_ms: 0,
        })
        .unwrap(),
    )
    .unwrap();

    let config = dir.join("config.toml");
    std::fs::write(
        &config,
        format!(
            r#"[agents.interviewer]
kind = "scripted"
script = "interviewer.json"

[agents.interviewee]
kind = "scripted"
script = "interviewee.json"

[run]
max_retries = 2
max_questions = 2
followups_per_interview = 1
mode = "interview"
random_seed = 7
parallelism = 2
{extra_config}

[task]
profile = "math"
"#
        ),
    )
    .unwrap();

    FixtureDir {
        dir: dir.to_path_buf(),
        config,
        dataset,
        interviewer_script,
        interviewee_script,
    }
}

/// The 12-problem protocol-walk fixture: each behavior three times.
pub fn twelve_problem_fixture() -> (Vec<Problem>, Vec<Behavior>) {
    let behaviors = vec![
        Behavior::CorrectAt1,
        Behavior::CorrectAt2,
        Behavior::CorrectAt3,
        Behavior::NeverCorrect,
        Behavior::CorrectAt1,
        Behavior::CorrectAt2,
        Behavior::CorrectAt3,
        Behavior::NeverCorrect,
        Behavior::CorrectAt1,
        Behavior::CorrectAt2,
        Behavior::CorrectAt3,
        Behavior::NeverCorrect,
    ];
    let problems =
        behaviors.iter().enumerate().map(|(i, b)| fixture_problem(i, *b)).collect();
    (problems, behaviors)
}
