//! The interview report: performance scores, error analysis with examples,
//! and the two-stage generated summary, serialized as JSON plus a
//! human-readable text rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, ChatAgent};
use crate::domain::{ChatMessage, ScoreTable, TranscriptRecord, ValidationError};
use crate::prompts::{PromptKind, TaskProfile};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Template(#[from] ValidationError),
    #[error("inconsistent report inputs: {0}")]
    Consistency(String),
    #[error("no input to summarize")]
    EmptyInput,
}

/// One illustrative failure: the question, the failing answer, and the
/// feedback the interviewer gave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excerpt {
    pub error_type: String,
    pub problem_id: String,
    pub question: String,
    pub answer: String,
    pub feedback: Option<String>,
}

/// Up to `per_type` excerpts per final-interaction error type, picked
/// deterministically (lowest problem id first). `questions` resolves the
/// original question text for judge-mode records without a modified question.
pub fn pick_examples(
    transcripts: &[TranscriptRecord],
    per_type: usize,
    questions: &BTreeMap<String, String>,
) -> BTreeMap<String, Vec<Excerpt>> {
    let mut by_type: BTreeMap<String, Vec<Excerpt>> = BTreeMap::new();
    let mut sorted: Vec<&TranscriptRecord> =
        transcripts.iter().filter(|t| !t.is_agent_error()).collect();
    sorted.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
    for t in sorted {
        let Some(last) = t.interactions.last() else { continue };
        let Some(error_type) = last.error_type.clone() else { continue };
        let question = t
            .modified_question
            .clone()
            .or_else(|| questions.get(&t.problem_id).cloned())
            .unwrap_or_default();
        let feedback = t.interactions.iter().rev().find_map(|i| i.feedback.clone());
        let bucket = by_type.entry(error_type.clone()).or_default();
        if bucket.len() < per_type {
            bucket.push(Excerpt {
                error_type,
                problem_id: t.problem_id.clone(),
                question,
                answer: last.answer.clone(),
                feedback,
            });
        }
    }
    by_type
}

/// Mean of each quality dimension over final interactions that carry one.
/// `None` when no transcript has quality scores (deterministic tasks).
pub fn quality_means(transcripts: &[TranscriptRecord]) -> Option<BTreeMap<String, f64>> {
    let mut sums = [0.0f64; 4];
    let mut count = 0usize;
    for t in transcripts.iter().filter(|t| !t.is_agent_error()) {
        if let Some(q) = t.interactions.last().and_then(|i| i.quality) {
            sums[0] += q.completeness;
            sums[1] += q.redundancy;
            sums[2] += q.readability;
            sums[3] += q.depth;
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    let mut means = BTreeMap::new();
    for (name, sum) in ["completeness", "redundancy", "readability", "depth"].iter().zip(sums) {
        means.insert(name.to_string(), sum / count as f64);
    }
    Some(means)
}

fn render_session_history(t: &TranscriptRecord) -> String {
    let mut out = String::new();
    if let Some(q) = &t.modified_question {
        out.push_str(&format!("user: Question: {q}\n"));
    } else {
        out.push_str(&format!("user: Question (problem {}):\n", t.problem_id));
    }
    for i in &t.interactions {
        out.push_str(&format!("assistant: {}\n", i.answer));
        if let Some(f) = &i.feedback {
            out.push_str(&format!("user: {f}\n"));
        }
    }
    for f in &t.followups {
        out.push_str(&format!("user: {}\n", f.question));
        out.push_str(&format!("assistant: {}\n", f.answer));
    }
    out
}

/// Summarize one session's dialogue. Sessions that failed before producing
/// any interaction get a placeholder without an agent call.
pub fn summarize_session(
    transcript: &TranscriptRecord,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<String, ReportError> {
    if transcript.interactions.is_empty() {
        return Ok("(session failed)".to_string());
    }
    let prompt = profile.prompts.render(
        PromptKind::SummarizeSession,
        &[("session_history", &render_session_history(transcript))],
    )?;
    let reply = interviewer.chat(&[ChatMessage::interviewer(prompt)])?;
    Ok(reply.trim().to_string())
}

/// Two-stage summarization: summaries grouped into chunks of at most
/// `chunk_size`, each chunk summarized, then one merge call over the chunk
/// summaries. A single chunk skips the merge.
pub fn summarize_all(
    session_summaries: &[String],
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
    chunk_size: usize,
) -> Result<String, ReportError> {
    if session_summaries.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let chunk_size = chunk_size.max(1);
    let mut chunk_outputs = Vec::new();
    for chunk in session_summaries.chunks(chunk_size) {
        let joined = chunk
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt =
            profile.prompts.render(PromptKind::SummarizeReport, &[("summaries", &joined)])?;
        let reply = interviewer.chat(&[ChatMessage::interviewer(prompt)])?;
        chunk_outputs.push(reply.trim().to_string());
    }
    if chunk_outputs.len() == 1 {
        return Ok(chunk_outputs.pop().expect("one chunk"));
    }
    let joined = chunk_outputs
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = profile.prompts.render(PromptKind::SummarizeReport, &[("summaries", &joined)])?;
    let reply = interviewer.chat(&[ChatMessage::interviewer(prompt)])?;
    Ok(reply.trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportScores {
    pub seed_at: Vec<f64>,
    pub adapt: f64,
    pub follow_total: f64,
    pub follow_by_type: BTreeMap<String, f64>,
}

/// The assembled three-section report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewReport {
    pub scores: ReportScores,
    pub error_frequencies: BTreeMap<String, f64>,
    pub quality_means: BTreeMap<String, f64>,
    pub examples: Vec<Excerpt>,
    pub summary: String,
    pub attrition_count: usize,
}

/// Assemble the report document. Pure: no agent calls happen here.
pub fn build_report(
    score_table: &ScoreTable,
    error_frequencies: &BTreeMap<String, f64>,
    examples: &BTreeMap<String, Vec<Excerpt>>,
    summary: String,
    quality_means: Option<BTreeMap<String, f64>>,
    attrition_count: usize,
) -> Result<InterviewReport, ReportError> {
    if score_table.problem_count == 0 {
        return Err(ReportError::Consistency("score table covers zero problems".into()));
    }
    let total: f64 = error_frequencies.values().sum();
    if total > 1.0 + 1e-9 {
        return Err(ReportError::Consistency("error frequencies sum above one".into()));
    }
    for (error_type, freq) in error_frequencies {
        let count = freq * score_table.problem_count as f64;
        if (count - count.round()).abs() > 1e-6 {
            return Err(ReportError::Consistency(format!(
                "frequency of {error_type} is not a count over {} problems",
                score_table.problem_count
            )));
        }
    }
    for error_type in examples.keys() {
        if error_frequencies.get(error_type).copied().unwrap_or(0.0) == 0.0 {
            return Err(ReportError::Consistency(format!(
                "examples listed for {error_type}, which has zero frequency"
            )));
        }
    }
    if let Some(q) = &quality_means {
        for (name, v) in q {
            if !(0.0..=1.0).contains(v) {
                return Err(ReportError::Consistency(format!(
                    "quality mean {name} outside [0, 1]"
                )));
            }
        }
    }
    Ok(InterviewReport {
        scores: ReportScores {
            seed_at: score_table.score_seed_at.clone(),
            adapt: score_table.adapt,
            follow_total: score_table.score_follow_total,
            follow_by_type: score_table.score_follow_by_type.clone(),
        },
        error_frequencies: error_frequencies.clone(),
        quality_means: quality_means.unwrap_or_default(),
        examples: examples.values().flatten().cloned().collect(),
        summary,
        attrition_count,
    })
}

/// Round half-up at `decimals` places (ties go toward positive infinity).
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let factor = 10f64.powi(decimals as i32);
    (x * factor + 0.5).floor() / factor
}

/// Percentage rendering used throughout the text report: fraction x 100,
/// rounded half-up to one decimal.
pub fn percent(fraction: f64) -> String {
    format!("{:.1}", round_half_up(fraction * 100.0, 1))
}

/// Human-readable rendering of the three report sections.
pub fn render_report_text(report: &InterviewReport, title: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("Interview Report: {title}\n"));
    out.push_str("=================================================\n\n");

    out.push_str("1. Performance Scores (%)\n");
    let seed: Vec<String> = report
        .scores
        .seed_at
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{}(@{})", percent(*v), i + 1))
        .collect();
    out.push_str(&format!("  Score at interaction: {}\n", seed.join(", ")));
    out.push_str(&format!("  Response adaptability: {}\n", percent(report.scores.adapt)));
    out.push_str(&format!("  Follow-up accuracy: {}\n", percent(report.scores.follow_total)));
    for (name, v) in &report.scores.follow_by_type {
        out.push_str(&format!("    {name}: {}\n", percent(*v)));
    }
    out.push('\n');

    if report.quality_means.is_empty() {
        out.push_str("2. Error Types & Examples\n");
        if report.error_frequencies.is_empty() {
            out.push_str("  (no errors recorded)\n");
        }
        for (name, freq) in &report.error_frequencies {
            out.push_str(&format!("  {name}: {:.2}\n", freq));
        }
        for e in &report.examples {
            out.push_str(&format!(
                "  example [{}] problem {}\n    Q: {}\n    A: {}\n",
                e.error_type, e.problem_id, e.question, e.answer
            ));
            if let Some(f) = &e.feedback {
                out.push_str(&format!("    feedback: {f}\n"));
            }
        }
    } else {
        out.push_str("2. Response Quality & Examples\n");
        for (name, v) in &report.quality_means {
            out.push_str(&format!("  {name}: {}\n", percent(*v)));
        }
    }
    out.push('\n');

    out.push_str("3. Summary\n");
    out.push_str(&format!("  {}\n", report.summary));
    if report.attrition_count > 0 {
        out.push_str(&format!(
            "\n(excluded {} failed session(s) from all scores)\n",
            report.attrition_count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{ExhaustionPolicy, ScriptedAgent};
    use crate::domain::{FollowupRecord, InteractionRecord};

    fn record(id: &str, final_error: Option<&str>) -> TranscriptRecord {
        let correct = final_error.is_none();
        TranscriptRecord {
            problem_id: id.into(),
            mode: "interview".into(),
            modified_question: Some(format!("question for {id}")),
            interactions: vec![
                InteractionRecord {
                    attempt: 1,
                    answer: "first try".into(),
                    correct_or_precision: 0.0,
                    error_type: None,
                    feedback: Some("try again".into()),
                    feedback_type: Some("process_strategy_guidance".into()),
                    quality: None,
                },
                InteractionRecord {
                    attempt: 2,
                    answer: "second try".into(),
                    correct_or_precision: if correct { 1.0 } else { 0.0 },
                    error_type: final_error.map(str::to_string),
                    feedback: None,
                    feedback_type: None,
                    quality: None,
                },
            ],
            score_at: vec![0.0, if correct { 1.0 } else { 0.0 }],
            followups: vec![FollowupRecord {
                followup_type: "rationale".into(),
                question: "why?".into(),
                answer: "because".into(),
                score: 1.0,
            }],
            termination: if correct { "solved_early" } else { "retries_exhausted" }.into(),
            config_hash: "h".into(),
        }
    }

    #[test]
    fn no_errors_means_no_examples() {
        let ts = vec![record("p1", None)];
        assert!(pick_examples(&ts, 2, &BTreeMap::new()).is_empty());
    }

    #[test]
    fn examples_pick_lowest_ids_first() {
        let ts = vec![
            record("p3", Some("Calculation")),
            record("p1", Some("Calculation")),
            record("p2", Some("Calculation")),
        ];
        let ex = pick_examples(&ts, 2, &BTreeMap::new());
        let calc = &ex["Calculation"];
        assert_eq!(calc.len(), 2);
        assert_eq!(calc[0].problem_id, "p1");
        assert_eq!(calc[1].problem_id, "p2");
        assert_eq!(calc[0].feedback.as_deref(), Some("try again"));
    }

    #[test]
    fn example_partition_matches_recount() {
        let ts = vec![
            record("p1", Some("Concept")),
            record("p2", Some("Calculation")),
            record("p3", None),
            record("p4", Some("Concept")),
        ];
        let ex = pick_examples(&ts, 10, &BTreeMap::new());
        assert_eq!(ex["Concept"].len(), 2);
        assert_eq!(ex["Calculation"].len(), 1);
        assert_eq!(ex.values().map(Vec::len).sum::<usize>(), 3);
    }

    #[test]
    fn session_summary_passes_through() {
        let agent = ScriptedAgent::from_queue(["the model did fine"], ExhaustionPolicy::Error);
        let s = summarize_session(&record("p1", None), &agent, &TaskProfile::math()).unwrap();
        assert_eq!(s, "the model did fine");
    }

    #[test]
    fn session_summary_sees_the_feedback_exchanges() {
        // keyed to the rendered log: the rule only fires when the session
        // history actually contains the feedback turn
        let agent = ScriptedAgent::from_rules([(
            "user: try again",
            "the model revised its answer after feedback",
        )]);
        let s = summarize_session(&record("p1", None), &agent, &TaskProfile::math()).unwrap();
        assert!(s.contains("feedback"));
    }

    #[test]
    fn failed_session_gets_placeholder_without_agent_call() {
        let mut t = record("p1", None);
        t.interactions.clear();
        t.termination = "agent_error".into();
        let agent = ScriptedAgent::from_queue(Vec::<String>::new(), ExhaustionPolicy::Error);
        let s = summarize_session(&t, &agent, &TaskProfile::math()).unwrap();
        assert_eq!(s, "(session failed)");
        assert_eq!(agent.call_count(), 0);
    }

    #[test]
    fn single_chunk_skips_the_merge_call() {
        let agent = ScriptedAgent::from_queue(["combined"], ExhaustionPolicy::Error);
        let out = summarize_all(&["only one".into()], &agent, &TaskProfile::math(), 10).unwrap();
        assert_eq!(out, "combined");
        assert_eq!(agent.call_count(), 1);
    }

    #[test]
    fn chunking_makes_ceiling_plus_merge_calls() {
        let agent = ScriptedAgent::from_queue(
            ["c1", "c2", "c3", "merged"],
            ExhaustionPolicy::Error,
        );
        let summaries: Vec<String> = (0..25).map(|i| format!("s{i}")).collect();
        let out = summarize_all(&summaries, &agent, &TaskProfile::math(), 10).unwrap();
        assert_eq!(out, "merged");
        assert_eq!(agent.call_count(), 4);
    }

    #[test]
    fn empty_summaries_error() {
        let agent = ScriptedAgent::from_queue(Vec::<String>::new(), ExhaustionPolicy::Error);
        assert!(matches!(
            summarize_all(&[], &agent, &TaskProfile::math(), 10),
            Err(ReportError::EmptyInput)
        ));
    }

    fn score_table() -> ScoreTable {
        ScoreTable {
            score_seed_at: vec![0.72, 0.82, 0.84],
            adapt: 0.84 - 0.72,
            score_follow_total: 0.93,
            score_follow_by_type: [("rationale".to_string(), 0.99)].into_iter().collect(),
            problem_count: 100,
            followup_count: 100,
        }
    }

    #[test]
    fn build_report_assembles_three_sections() {
        let freqs: BTreeMap<String, f64> =
            [("Calculation".to_string(), 0.26)].into_iter().collect();
        let examples = pick_examples(&[record("p1", Some("Calculation"))], 1, &BTreeMap::new());
        let report =
            build_report(&score_table(), &freqs, &examples, "ok".into(), None, 0).unwrap();
        assert_eq!(report.scores.seed_at.len(), 3);
        assert_eq!(report.examples.len(), 1);
        let text = render_report_text(&report, "fixture");
        assert!(text.contains("1. Performance Scores"));
        assert!(text.contains("2. Error Types & Examples"));
        assert!(text.contains("3. Summary"));
        assert!(text.contains("72.0(@1), 82.0(@2), 84.0(@3)"));
    }

    #[test]
    fn open_ended_report_shows_quality_instead_of_errors() {
        let quality: BTreeMap<String, f64> = [
            ("completeness".to_string(), 0.835),
            ("redundancy".to_string(), 0.649),
            ("readability".to_string(), 0.969),
            ("depth".to_string(), 0.649),
        ]
        .into_iter()
        .collect();
        let report = build_report(
            &score_table(),
            &BTreeMap::new(),
            &BTreeMap::new(),
            "ok".into(),
            Some(quality),
            0,
        )
        .unwrap();
        let text = render_report_text(&report, "fixture");
        assert!(text.contains("Response Quality & Examples"));
        assert!(text.contains("completeness: 83.5"));
        assert!(!text.contains("Error Types"));
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        // 0.265 over 100 problems is not a whole count
        let freqs: BTreeMap<String, f64> =
            [("Calculation".to_string(), 0.265)].into_iter().collect();
        let err =
            build_report(&score_table(), &freqs, &BTreeMap::new(), "ok".into(), None, 0)
                .unwrap_err();
        assert!(matches!(err, ReportError::Consistency(_)));
    }

    #[test]
    fn printed_numbers_match_table_times_100_half_up() {
        let report = build_report(
            &score_table(),
            &BTreeMap::new(),
            &BTreeMap::new(),
            "ok".into(),
            None,
            0,
        )
        .unwrap();
        let text = render_report_text(&report, "t");
        for v in &report.scores.seed_at {
            assert!(text.contains(&percent(*v)));
        }
        assert!(text.contains(&percent(report.scores.adapt)));
        // half-up at the boundary
        assert_eq!(round_half_up(12.05, 1), 12.1);
        assert_eq!(round_half_up(12.5, 0), 13.0);
        assert_eq!(percent(0.72), "72.0");
    }
}
