//! Library-level protocol walk: a scripted interview batch through the
//! engine, aggregated and persisted, read back bit-exactly.

use interview_core::agents::{AgentHandle, ExhaustionPolicy, ScriptRule, ScriptSpec, ScriptedAgent};
use interview_core::domain::{Mode, Problem, RunConfig, TaskKind, Termination, TranscriptRecord};
use interview_core::engine::{run_batch, AgentPair};
use interview_core::metrics::build_score_table;
use interview_core::store::{read_transcripts, TranscriptWriter};

fn rule(contains: &str, response: &str) -> ScriptRule {
    ScriptRule { contains: contains.into(), response: response.into() }
}

fn agents() -> AgentPair {
    let interviewer = ScriptedAgent::from_spec(ScriptSpec {
        rules: vec![
            rule("Decide whether the candidate's reply", r#"{"is_question": false}"#),
            rule("Candidate's answer: WRONG", r#"{"correct": false, "error_type": "Misinterpret"}"#),
            rule("Candidate's answer: RIGHT", r#"{"correct": true}"#),
            rule(
                "Write feedback for a candidate",
                r#"{"feedback": "REVISE read the question once more.", "feedback_type": "Process and Strategy Guidance"}"#,
            ),
            rule("answered the question correctly", r#"{"question": "FQ why is that valid?"}"#),
            rule("kept getting this question wrong", r#"{"question": "FQ what is being asked?"}"#),
            rule("Grade the candidate's answer to a follow-up", r#"{"correct": false}"#),
        ],
        queue: vec![],
        exhausted: ExhaustionPolicy::Error,
        latency_ms: 0,
    });
    let interviewee = ScriptedAgent::from_spec(ScriptSpec {
        rules: vec![
            rule("FQ ", "because of the distributive law"),
            rule("REVISE", "RIGHT second attempt"),
            rule("even-id", "RIGHT first attempt"),
            rule("odd-id", "WRONG first attempt"),
        ],
        queue: vec![],
        exhausted: ExhaustionPolicy::Error,
        latency_ms: 0,
    });
    AgentPair {
        interviewer: AgentHandle::scripted(interviewer),
        interviewee: AgentHandle::scripted(interviewee),
    }
}

fn problems(n: usize) -> Vec<Problem> {
    (0..n)
        .map(|i| Problem {
            id: format!("p{i:02}"),
            task_kind: TaskKind::DeterministicAnswer,
            question: format!(
                "{} question number {i}: add 10 and 20.",
                if i % 2 == 0 { "even-id" } else { "odd-id" }
            ),
            reference_solution: "10 + 20 = 30".into(),
            gold_answer: Some("unmatchable-gold".into()),
            difficulty: None,
        })
        .collect()
}

#[test]
fn batch_walk_aggregates_and_roundtrips() {
    let problems = problems(6);
    let config = RunConfig {
        max_retries: 2,
        max_questions: 2,
        followups_per_interview: 1,
        mode: Mode::Interview,
        parallelism: 3,
        ..RunConfig::default()
    };
    let transcripts = run_batch(
        &problems,
        &[],
        &agents(),
        &interview_core::prompts::TaskProfile::math(),
        &config,
    )
    .unwrap();

    assert_eq!(transcripts.len(), 6);
    for (i, t) in transcripts.iter().enumerate() {
        assert_eq!(t.problem.id, format!("p{i:02}"));
        if i % 2 == 0 {
            assert_eq!(t.score_at, vec![1.0, 1.0, 1.0]);
            assert_eq!(t.interactions.len(), 1);
        } else {
            assert_eq!(t.score_at, vec![0.0, 1.0, 1.0]);
            assert_eq!(t.interactions.len(), 2);
            assert!(t.interactions[0].feedback.is_some());
        }
        assert_eq!(t.termination, Termination::SolvedEarly);
        assert_eq!(t.followups.len(), 1);
        assert_eq!(t.followups[0].grade.score(), 0.0);
    }

    let records: Vec<TranscriptRecord> =
        transcripts.iter().map(|t| TranscriptRecord::from_transcript(t, "itest")).collect();
    let table = build_score_table(&records).unwrap();
    assert_eq!(table.score_seed_at, vec![0.5, 1.0, 1.0]);
    assert_eq!(table.adapt, 0.5);
    assert_eq!(table.problem_count, 6);
    assert_eq!(table.followup_count, 6);
    assert_eq!(table.score_follow_total, 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcripts.jsonl");
    {
        let mut writer = TranscriptWriter::append(&path).unwrap();
        for r in &records {
            writer.write(r).unwrap();
        }
    }
    let reread = read_transcripts(&path).unwrap();
    assert_eq!(reread, records);
    let raw = std::fs::read_to_string(&path).unwrap();
    for (line, record) in raw.lines().zip(&records) {
        assert_eq!(line, serde_json::to_string(record).unwrap());
    }
}
