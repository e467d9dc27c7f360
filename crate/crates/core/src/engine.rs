//! The interview state machine: Problem Set Up, Feedback & Revision, and
//! Follow-up Question Answering, plus the batch runner that executes one
//! session per problem.
//!
//! A session is strictly sequential internally; sessions for distinct
//! problems run concurrently up to the configured parallelism. Results are
//! delivered in input order regardless of completion order, so a run with
//! deterministic agents is reproducible bit for bit.

use std::collections::BTreeMap;

use crate::agents::{chat_structured, AgentHandle, ChatAgent, FieldKind, SchemaField};
use crate::domain::{
    ChatMessage, ErrorType, FactLabel, FeedbackRecord, FollowUp, FollowUpType, GradeKind,
    GradeOutcome, Interaction, InterviewTranscript, Mode, ModifiedProblem, Problem, RunConfig,
    TaskKind, Termination, ValidationError,
};
use crate::followup::{gen_additional_facts, gen_clarification, gen_rationale, GeneratedFollowup};
use crate::grading::{
    assess_quality, decompose_and_label, fact_precision, grade_binary, grade_followup,
    merge_revision,
};
use crate::prompts::{GradingKind, PromptKind, TaskProfile};

/// Interview phases, in protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Setup,
    FeedbackRevision,
    FollowUp,
    Done,
}

/// Live session state. Phases only ever advance.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub phase: Phase,
    pub attempt: u32,
    pub questions_asked: u32,
    pub dialogue: Vec<ChatMessage>,
}

impl SessionState {
    fn new() -> Self {
        SessionState { phase: Phase::Setup, attempt: 0, questions_asked: 0, dialogue: Vec::new() }
    }

    fn advance(&mut self, next: Phase) {
        debug_assert!(next >= self.phase, "phases only advance");
        self.phase = next;
    }
}

/// The two agents driving a run.
#[derive(Clone)]
pub struct AgentPair {
    pub interviewer: AgentHandle,
    pub interviewee: AgentHandle,
}

struct Session<'a> {
    problem: &'a Problem,
    modified: Option<&'a ModifiedProblem>,
    interviewer: &'a dyn ChatAgent,
    interviewee: &'a dyn ChatAgent,
    profile: &'a TaskProfile,
    config: &'a RunConfig,
    state: SessionState,
    interactions: Vec<Interaction>,
    followups: Vec<FollowUp>,
    budget_truncated: bool,
}

impl<'a> Session<'a> {
    fn posed_question(&self) -> &str {
        self.modified
            .map(|m| m.modified_question.as_str())
            .unwrap_or(self.problem.question.as_str())
    }

    /// The problem as the grader should see it: the posed question, with the
    /// modification mapping appended to the reference solution so judgments
    /// account for masked values.
    fn grading_problem(&self) -> Problem {
        let mut p = self.problem.clone();
        p.question = self.posed_question().to_string();
        if let Some(m) = self.modified {
            p.reference_solution = format!(
                "{}\n\nHow the posed question maps to the original: {}",
                p.reference_solution, m.explanation
            );
        }
        p
    }

    fn gold_context(&self) -> String {
        let p = self.grading_problem();
        match self.problem.task_kind {
            TaskKind::DeterministicAnswer => format!(
                "Correct answer: {}\nReference solution: {}",
                self.problem.gold_answer.as_deref().unwrap_or("(none)"),
                p.reference_solution
            ),
            TaskKind::OpenEnded => format!("Reference solution: {}", p.reference_solution),
        }
    }

    fn render_dialogue(&self) -> String {
        let mut out = String::new();
        for m in &self.state.dialogue {
            out.push_str(m.role.wire_name());
            out.push_str(": ");
            out.push_str(&m.content);
            out.push('\n');
        }
        out
    }

    fn ask_interviewee(&mut self) -> Result<String, String> {
        let reply = self
            .interviewee
            .chat(&self.state.dialogue)
            .map_err(|e| format!("interviewee call failed: {e}"))?;
        Ok(reply)
    }

    /// Problem Set Up: pose the question, let the interviewee either answer
    /// or ask for clarification (answered from the modification mapping, at
    /// most once), and return the first answer attempt.
    fn setup(&mut self) -> Result<String, String> {
        let system = self
            .profile
            .prompts
            .get(PromptKind::IntervieweeSystem)
            .map_err(|e| e.to_string())?
            .trim()
            .to_string();
        self.state.dialogue.push(ChatMessage::system(system));
        self.state
            .dialogue
            .push(ChatMessage::interviewer(format!("Question: {}", self.posed_question())));
        self.state.questions_asked = 1;

        let mut answer = self.ask_interviewee()?;
        if self.config.mode == Mode::Interview
            && self.modified.is_some()
            && self.reply_is_question(&answer)?
        {
            let clarification = self.clarify(&answer)?;
            self.state.dialogue.push(ChatMessage::interviewee(answer));
            self.state.dialogue.push(ChatMessage::interviewer(clarification));
            answer = self.ask_interviewee()?;
        }
        self.state.dialogue.push(ChatMessage::interviewee(answer.clone()));
        Ok(answer)
    }

    fn reply_is_question(&self, reply: &str) -> Result<bool, String> {
        let prompt = self
            .profile
            .prompts
            .render(
                PromptKind::ClarifyCheck,
                &[("question", self.posed_question()), ("reply", reply)],
            )
            .map_err(|e| e.to_string())?;
        let schema = [SchemaField::required("is_question", FieldKind::Bool)];
        chat_structured(
            self.interviewer,
            &[ChatMessage::interviewer(prompt)],
            &schema,
            self.profile.max_parse_retries,
            |v, _| Ok(v["is_question"].as_bool().expect("schema-checked")),
        )
        .map_err(|e| format!("clarification check failed: {e}"))
    }

    fn clarify(&self, request: &str) -> Result<String, String> {
        let explanation = self.modified.map(|m| m.explanation.as_str()).unwrap_or("(none)");
        let prompt = self
            .profile
            .prompts
            .render(
                PromptKind::ClarifyAnswer,
                &[
                    ("question", self.posed_question()),
                    ("explanation", explanation),
                    ("reply", request),
                ],
            )
            .map_err(|e| e.to_string())?;
        let schema = [SchemaField::required("clarification", FieldKind::Text)];
        chat_structured(
            self.interviewer,
            &[ChatMessage::interviewer(prompt)],
            &schema,
            self.profile.max_parse_retries,
            |v, _| {
                let text = v["clarification"].as_str().expect("schema-checked").trim();
                if text.is_empty() {
                    return Err("clarification must be non-empty".into());
                }
                Ok(text.to_string())
            },
        )
        .map_err(|e| format!("clarification answer failed: {e}"))
    }

    fn grade_attempt(
        &mut self,
        answer: &str,
        previous_labels: &mut Option<Vec<FactLabel>>,
    ) -> Result<GradeOutcome, String> {
        let grading_problem = self.grading_problem();
        match self.profile.grading_kind {
            GradingKind::Binary => {
                grade_binary(&grading_problem, answer, self.interviewer, self.profile)
                    .map_err(|e| format!("grading failed: {e}"))
            }
            GradingKind::FactPrecision => {
                let labels = match previous_labels.as_ref() {
                    None => {
                        decompose_and_label(&grading_problem, answer, self.interviewer, self.profile)
                            .map_err(|e| format!("decomposition failed: {e}"))?
                    }
                    Some(prev) => {
                        merge_revision(&grading_problem, prev, answer, self.interviewer, self.profile)
                            .map_err(|e| format!("revision merge failed: {e}"))?
                    }
                };
                let precision =
                    fact_precision(&labels).map_err(|e| format!("precision failed: {e}"))?;
                let quality = assess_quality(&grading_problem, answer, self.interviewer, self.profile)
                    .map_err(|e| format!("quality assessment failed: {e}"))?;
                let raw_judgment =
                    serde_json::to_string(&labels).expect("fact labels serialize");
                *previous_labels = Some(labels.clone());
                Ok(GradeOutcome {
                    kind: GradeKind::FactPrecision { facts: labels, precision },
                    error_type: None,
                    quality: Some(quality),
                    raw_judgment,
                })
            }
        }
    }

    fn generate_feedback(
        &self,
        grade: &GradeOutcome,
        answer: &str,
    ) -> Result<FeedbackRecord, String> {
        let grading_problem = self.grading_problem();
        let prior: Vec<String> = self
            .interactions
            .iter()
            .filter_map(|i| i.feedback.as_ref().map(|f| f.text.clone()))
            .collect();
        let history = if prior.is_empty() { "(none)".to_string() } else { prior.join("\n---\n") };
        let prompt = self
            .profile
            .prompts
            .render(
                PromptKind::Feedback,
                &[
                    ("question", &grading_problem.question),
                    ("solution", &grading_problem.reference_solution),
                    ("answer", self.problem.gold_answer.as_deref().unwrap_or("(none)")),
                    ("evaluation", &grade.raw_judgment),
                    ("history", &history),
                    ("output", answer),
                ],
            )
            .map_err(|e| e.to_string())?;
        let schema = [
            SchemaField::required("feedback", FieldKind::Text),
            SchemaField::required("feedback_type", FieldKind::Text),
        ];
        let interpret = |v: &serde_json::Value, _raw: &str| -> Result<FeedbackRecord, String> {
            let text = v["feedback"].as_str().expect("schema-checked").trim().to_string();
            if text.is_empty() {
                return Err("feedback must be non-empty".into());
            }
            let type_name = v["feedback_type"].as_str().expect("schema-checked");
            let feedback_type = crate::domain::FeedbackType::parse(type_name)
                .ok_or_else(|| format!("unknown feedback type \"{type_name}\""))?;
            Ok(FeedbackRecord { text, feedback_type })
        };
        let messages = vec![ChatMessage::interviewer(prompt)];
        let first = chat_structured(
            self.interviewer,
            &messages,
            &schema,
            self.profile.max_parse_retries,
            interpret,
        )
        .map_err(|e| format!("feedback generation failed: {e}"))?;

        let gold = self.problem.gold_answer.as_deref().map(str::trim).unwrap_or("");
        if gold.is_empty() || !first.text.contains(gold) {
            return Ok(first);
        }
        // The feedback leaked the gold answer; allow one corrective re-ask.
        let mut dialogue = messages;
        dialogue.push(ChatMessage::interviewee(first.text));
        dialogue.push(ChatMessage::interviewer(
            "Your feedback reveals the answer itself, which is not allowed. \
             Rewrite it without stating the answer, as the same JSON object."
                .to_string(),
        ));
        let second = chat_structured(
            self.interviewer,
            &dialogue,
            &schema,
            self.profile.max_parse_retries,
            interpret,
        )
        .map_err(|e| format!("feedback generation failed: {e}"))?;
        if second.text.contains(gold) {
            return Err("feedback disclosed the gold answer after a re-ask".into());
        }
        Ok(second)
    }

    /// Feedback & Revision: grade, stop on full correctness, otherwise feed
    /// back and elicit a revision, up to max_retries revisions.
    fn feedback_revision(&mut self, first_answer: String) -> Result<(), String> {
        self.state.advance(Phase::FeedbackRevision);
        let max_attempts = self.config.max_attempts();
        let mut answer = first_answer;
        let mut previous_labels: Option<Vec<FactLabel>> = None;
        for attempt in 1..=max_attempts {
            self.state.attempt = attempt;
            let grade = self.grade_attempt(&answer, &mut previous_labels)?;
            let fully = grade.fully_correct(self.profile.quality_threshold);
            if fully || attempt == max_attempts {
                self.interactions.push(Interaction {
                    attempt_index: attempt,
                    interviewee_answer: answer,
                    grade,
                    feedback: None,
                });
                return Ok(());
            }
            let feedback = self.generate_feedback(&grade, &answer)?;
            self.state.dialogue.push(ChatMessage::interviewer(feedback.text.clone()));
            self.interactions.push(Interaction {
                attempt_index: attempt,
                interviewee_answer: answer,
                grade,
                feedback: Some(feedback),
            });
            answer = self.ask_interviewee()?;
            self.state.dialogue.push(ChatMessage::interviewee(answer.clone()));
        }
        unreachable!("loop returns at the final attempt")
    }

    fn generate_followup(&self, followup_type: FollowUpType) -> Result<GeneratedFollowup, String> {
        let grading_problem = self.grading_problem();
        let last = self.interactions.last().expect("followups come after interactions");
        let prior: Vec<String> = self.followups.iter().map(|f| f.question.clone()).collect();
        match followup_type {
            FollowUpType::Rationale => gen_rationale(
                &grading_problem,
                &last.interviewee_answer,
                &prior,
                self.interviewer,
                self.profile,
            )
            .map_err(|e| format!("rationale generation failed: {e}")),
            FollowUpType::ClarificationConcept | FollowUpType::ClarificationInterpretation => {
                gen_clarification(
                    &grading_problem,
                    last.grade.error_type.unwrap_or(ErrorType::NA),
                    &self.render_dialogue(),
                    self.interviewer,
                    self.profile,
                )
                .map_err(|e| format!("clarification generation failed: {e}"))
            }
            FollowUpType::AdditionalFacts => {
                let labels = match &last.grade.kind {
                    GradeKind::FactPrecision { facts, .. } => facts.clone(),
                    GradeKind::Binary { .. } => Vec::new(),
                };
                gen_additional_facts(&grading_problem, &labels, self.interviewer, self.profile)
                    .map_err(|e| format!("additional-facts generation failed: {e}"))
            }
        }
    }

    /// Follow-up Question Answering: one typed follow-up per budgeted slot.
    fn followup_phase(&mut self) -> Result<(), String> {
        self.state.advance(Phase::FollowUp);
        let (fully, error_type) = {
            let last = self.interactions.last().expect("at least one interaction");
            (last.grade.fully_correct(self.profile.quality_threshold), last.grade.error_type)
        };
        for _ in 0..self.config.followups_per_interview {
            if self.state.questions_asked >= self.config.max_questions {
                self.budget_truncated = true;
                break;
            }
            let planned = self.profile.followup_policy.for_outcome(fully, error_type);
            let generated = self.generate_followup(planned)?;
            self.state.questions_asked += 1;
            self.state.dialogue.push(ChatMessage::interviewer(generated.question.clone()));
            let answer = self.ask_interviewee()?;
            self.state.dialogue.push(ChatMessage::interviewee(answer.clone()));
            let grade = grade_followup(
                &generated.question,
                &answer,
                &self.gold_context(),
                self.interviewer,
                self.profile,
            )
            .map_err(|e| format!("follow-up grading failed: {e}"))?;
            self.followups.push(FollowUp {
                followup_type: generated.followup_type,
                question: generated.question,
                answer,
                grade,
            });
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), String> {
        let first_answer = self.setup()?;
        self.feedback_revision(first_answer)?;
        self.followup_phase()?;
        self.state.advance(Phase::Done);
        Ok(())
    }

    /// Carry-forward score vector over n = 1..N: the grade of attempt
    /// min(n, last attempt made). Empty sessions score zero.
    fn score_vector(&self) -> Vec<f64> {
        let n = self.config.max_attempts() as usize;
        (1..=n)
            .map(|i| {
                if self.interactions.is_empty() {
                    0.0
                } else {
                    self.interactions[i.min(self.interactions.len()) - 1].grade.score()
                }
            })
            .collect()
    }

    fn into_transcript(self, failure: Option<String>) -> InterviewTranscript {
        let termination = if failure.is_some() {
            Termination::AgentError
        } else if self.budget_truncated {
            Termination::QuestionBudgetExhausted
        } else if self
            .interactions
            .last()
            .map(|i| i.grade.fully_correct(self.profile.quality_threshold))
            .unwrap_or(false)
        {
            Termination::SolvedEarly
        } else {
            Termination::RetriesExhausted
        };
        InterviewTranscript {
            score_at: self.score_vector(),
            problem: self.problem.clone(),
            modified: self.modified.cloned(),
            mode: self.config.mode,
            interactions: self.interactions,
            followups: self.followups,
            termination,
            failure,
        }
    }
}

fn check_preconditions(
    modified: Option<&ModifiedProblem>,
    config: &RunConfig,
) -> Result<(), ValidationError> {
    config.validate()?;
    if config.mode == Mode::Judge && modified.is_some() {
        return Err(ValidationError::new("judge mode must not apply a modification"));
    }
    Ok(())
}

fn run_session(
    problem: &Problem,
    modified: Option<&ModifiedProblem>,
    interviewer: &dyn ChatAgent,
    interviewee: &dyn ChatAgent,
    profile: &TaskProfile,
    config: &RunConfig,
) -> InterviewTranscript {
    let mut session = Session {
        problem,
        modified,
        interviewer,
        interviewee,
        profile,
        config,
        state: SessionState::new(),
        interactions: Vec::new(),
        followups: Vec::new(),
        budget_truncated: false,
    };
    let failure = session.run().err();
    session.into_transcript(failure)
}

/// Run one interview session. Agent failures do not error: they produce a
/// truncated transcript with `Termination::AgentError`.
pub fn run_interview(
    problem: &Problem,
    modified: Option<&ModifiedProblem>,
    interviewer: &dyn ChatAgent,
    interviewee: &dyn ChatAgent,
    profile: &TaskProfile,
    config: &RunConfig,
) -> Result<InterviewTranscript, ValidationError> {
    check_preconditions(modified, config)?;
    profile.validate()?;
    Ok(run_session(problem, modified, interviewer, interviewee, profile, config))
}

/// Run a batch, delivering each transcript to `sink` in input order as soon
/// as every earlier transcript has been delivered. Per-problem agent errors
/// are recorded in that problem's transcript and never abort the batch.
pub fn run_batch_with(
    problems: &[Problem],
    modifications: &[Option<ModifiedProblem>],
    agents: &AgentPair,
    profile: &TaskProfile,
    config: &RunConfig,
    mut sink: impl FnMut(usize, &InterviewTranscript),
) -> Result<Vec<InterviewTranscript>, ValidationError> {
    profile.validate()?;
    if !modifications.is_empty() && modifications.len() != problems.len() {
        return Err(ValidationError::new(
            "modifications must be empty or match the problem list length",
        ));
    }
    let modification_for =
        |i: usize| -> Option<&ModifiedProblem> { modifications.get(i).and_then(Option::as_ref) };
    for i in 0..problems.len() {
        check_preconditions(modification_for(i), config)?;
    }
    if problems.is_empty() {
        return Ok(Vec::new());
    }

    #[cfg(feature = "parallel")]
    if config.parallelism > 1 && problems.len() > 1 {
        return run_batch_parallel(problems, modifications, agents, profile, config, sink);
    }

    let mut results = Vec::with_capacity(problems.len());
    for (i, problem) in problems.iter().enumerate() {
        let interviewer = agents.interviewer.for_session();
        let interviewee = agents.interviewee.for_session();
        let transcript = run_session(
            problem,
            modification_for(i),
            &interviewer,
            &interviewee,
            profile,
            config,
        );
        sink(i, &transcript);
        results.push(transcript);
    }
    Ok(results)
}

#[cfg(feature = "parallel")]
fn run_batch_parallel(
    problems: &[Problem],
    modifications: &[Option<ModifiedProblem>],
    agents: &AgentPair,
    profile: &TaskProfile,
    config: &RunConfig,
    mut sink: impl FnMut(usize, &InterviewTranscript),
) -> Result<Vec<InterviewTranscript>, ValidationError> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| ValidationError::new(format!("thread pool: {e}")))?;

    let mut slots: Vec<Option<InterviewTranscript>> = (0..problems.len()).map(|_| None).collect();
    let (tx, rx) = std::sync::mpsc::channel::<(usize, InterviewTranscript)>();

    std::thread::scope(|scope| {
        scope.spawn(move || {
            pool.install(|| {
                problems.par_iter().enumerate().for_each_with(tx, |tx, (i, problem)| {
                    let interviewer = agents.interviewer.for_session();
                    let interviewee = agents.interviewee.for_session();
                    let transcript = run_session(
                        problem,
                        modifications.get(i).and_then(Option::as_ref),
                        &interviewer,
                        &interviewee,
                        profile,
                        config,
                    );
                    let _ = tx.send((i, transcript));
                });
            });
        });

        // Reorder completions so the sink sees strict input order.
        let mut pending: BTreeMap<usize, InterviewTranscript> = BTreeMap::new();
        let mut next = 0usize;
        for (i, transcript) in rx {
            pending.insert(i, transcript);
            while let Some(t) = pending.remove(&next) {
                sink(next, &t);
                slots[next] = Some(t);
                next += 1;
            }
        }
    });

    Ok(slots.into_iter().map(|s| s.expect("every slot filled")).collect())
}

/// Run a batch and return the transcripts in input order.
pub fn run_batch(
    problems: &[Problem],
    modifications: &[Option<ModifiedProblem>],
    agents: &AgentPair,
    profile: &TaskProfile,
    config: &RunConfig,
) -> Result<Vec<InterviewTranscript>, ValidationError> {
    run_batch_with(problems, modifications, agents, profile, config, |_, _| {})
}
