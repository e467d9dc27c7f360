//! Core value types shared by every stage of the interview pipeline, plus
//! the canonical JSONL transcript record written to disk.
//!
//! Everything here is an immutable value object: cheap to clone, safe to
//! send across session threads.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// How answers to a problem are judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    /// A single verifiable answer exists (math word problems and the like).
    DeterministicAnswer,
    /// Long-form answers judged by factual precision against a reference.
    OpenEnded,
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub task_kind: TaskKind,
    pub question: String,
    pub reference_solution: String,
    pub gold_answer: Option<String>,
    pub difficulty: Option<String>,
}

/// Strategy used to rewrite a seed question before the interview.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModificationStrategy {
    /// Replace numeric literals with unknown symbols or ambiguous phrases.
    VariableMasking,
    /// Generate a fresh question answerable from the same reference solution.
    QuestionRegeneration,
}

impl ModificationStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ModificationStrategy::VariableMasking => "variable_masking",
            ModificationStrategy::QuestionRegeneration => "question_regeneration",
        }
    }
}

/// A contamination-resistant rewrite of a problem's question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifiedProblem {
    pub original_id: String,
    pub modified_question: String,
    pub strategy: ModificationStrategy,
    /// Maps each masked value (or the new focus) back to the original.
    pub explanation: String,
}

/// Wire-level chat role. `Interviewer` is the "user" side of the dialogue,
/// `Interviewee` the "assistant" side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    System,
    Interviewer,
    Interviewee,
}

impl Role {
    /// Role string used by the chat-completion wire protocol.
    pub fn wire_name(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::Interviewer => "user",
            Role::Interviewee => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }
    pub fn interviewer(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Interviewer, content: content.into() }
    }
    pub fn interviewee(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Interviewee, content: content.into() }
    }
}

/// Judge-assigned cause of an incorrect answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorType {
    Concept,
    Misinterpret,
    Calculation,
    #[serde(rename = "N/A")]
    NA,
}

impl ErrorType {
    pub const ALL: [ErrorType; 4] = [
        ErrorType::Concept,
        ErrorType::Misinterpret,
        ErrorType::Calculation,
        ErrorType::NA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::Concept => "Concept",
            ErrorType::Misinterpret => "Misinterpret",
            ErrorType::Calculation => "Calculation",
            ErrorType::NA => "N/A",
        }
    }

    /// Tolerant parse of judge output: case-insensitive, accepts "NA"/"N/A".
    pub fn parse(s: &str) -> Option<ErrorType> {
        match s.trim().to_ascii_lowercase().as_str() {
            "concept" | "conceptual" => Some(ErrorType::Concept),
            "misinterpret" | "misinterpretation" => Some(ErrorType::Misinterpret),
            "calculation" => Some(ErrorType::Calculation),
            "n/a" | "na" | "n-a" => Some(ErrorType::NA),
            _ => None,
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One atomic fact extracted from a long-form answer, with its support label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactLabel {
    pub fact: String,
    pub supported: bool,
}

/// Judge-assessed answer quality, each dimension normalized to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub completeness: f64,
    pub redundancy: f64,
    pub readability: f64,
    pub depth: f64,
}

impl QualityScores {
    pub fn dimensions(&self) -> [f64; 4] {
        [self.completeness, self.redundancy, self.readability, self.depth]
    }

    pub fn all_in_unit_interval(&self) -> bool {
        self.dimensions().iter().all(|d| (0.0..=1.0).contains(d))
    }
}

/// The grading payload: binary correctness or atomic-fact precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GradeKind {
    Binary { correct: bool },
    FactPrecision { facts: Vec<FactLabel>, precision: f64 },
}

/// Per-interaction judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeOutcome {
    pub kind: GradeKind,
    /// Present only when the interaction was judged not fully correct.
    pub error_type: Option<ErrorType>,
    pub quality: Option<QualityScores>,
    pub raw_judgment: String,
}

impl GradeOutcome {
    /// Numeric score of this grade: 0/1 for binary, the precision otherwise.
    pub fn score(&self) -> f64 {
        match &self.kind {
            GradeKind::Binary { correct } => {
                if *correct {
                    1.0
                } else {
                    0.0
                }
            }
            GradeKind::FactPrecision { precision, .. } => *precision,
        }
    }

    /// Whether this grade ends the revision loop. Binary grades are fully
    /// correct when correct; precision grades require precision = 1 and every
    /// quality dimension at or above `quality_threshold` (when assessed).
    pub fn fully_correct(&self, quality_threshold: f64) -> bool {
        match &self.kind {
            GradeKind::Binary { correct } => *correct,
            GradeKind::FactPrecision { precision, .. } => {
                let quality_ok = match &self.quality {
                    Some(q) => q.dimensions().iter().all(|d| *d >= quality_threshold),
                    None => true,
                };
                *precision >= 1.0 && quality_ok
            }
        }
    }
}

/// The five feedback categories the feedback generator may emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeedbackType {
    ConceptualGuidance,
    ErrorIdentificationCorrection,
    ProcessStrategyGuidance,
    PrecisionAccuracyEmphasis,
    EncouragementAffirmation,
}

impl FeedbackType {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackType::ConceptualGuidance => "conceptual_guidance",
            FeedbackType::ErrorIdentificationCorrection => "error_identification_correction",
            FeedbackType::ProcessStrategyGuidance => "process_strategy_guidance",
            FeedbackType::PrecisionAccuracyEmphasis => "precision_accuracy_emphasis",
            FeedbackType::EncouragementAffirmation => "encouragement_affirmation",
        }
    }

    /// Tolerant parse: ignores case and separator style, accepts both the
    /// prompt spelling ("Error Identification and Correction") and the
    /// serialized one.
    pub fn parse(s: &str) -> Option<FeedbackType> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "conceptualguidance" => Some(FeedbackType::ConceptualGuidance),
            "erroridentificationcorrection" | "erroridentificationandcorrection" => {
                Some(FeedbackType::ErrorIdentificationCorrection)
            }
            "processstrategyguidance" | "processandstrategyguidance" => {
                Some(FeedbackType::ProcessStrategyGuidance)
            }
            "precisionaccuracyemphasis" | "precisionandaccuracyemphasis" => {
                Some(FeedbackType::PrecisionAccuracyEmphasis)
            }
            "encouragementaffirmation" | "encouragementandaffirmation" => {
                Some(FeedbackType::EncouragementAffirmation)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub text: String,
    pub feedback_type: FeedbackType,
}

/// Follow-up question taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FollowUpType {
    Rationale,
    ClarificationConcept,
    ClarificationInterpretation,
    AdditionalFacts,
}

impl FollowUpType {
    pub const ALL: [FollowUpType; 4] = [
        FollowUpType::Rationale,
        FollowUpType::ClarificationConcept,
        FollowUpType::ClarificationInterpretation,
        FollowUpType::AdditionalFacts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FollowUpType::Rationale => "rationale",
            FollowUpType::ClarificationConcept => "clarification_concept",
            FollowUpType::ClarificationInterpretation => "clarification_interpretation",
            FollowUpType::AdditionalFacts => "additional_facts",
        }
    }

    pub fn parse(s: &str) -> Option<FollowUpType> {
        match s {
            "rationale" => Some(FollowUpType::Rationale),
            "clarification_concept" => Some(FollowUpType::ClarificationConcept),
            "clarification_interpretation" => Some(FollowUpType::ClarificationInterpretation),
            "additional_facts" => Some(FollowUpType::AdditionalFacts),
            _ => None,
        }
    }

    /// True for either clarification subtype.
    pub fn is_clarification(self) -> bool {
        matches!(
            self,
            FollowUpType::ClarificationConcept | FollowUpType::ClarificationInterpretation
        )
    }
}

impl fmt::Display for FollowUpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One asked-and-answered follow-up question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUp {
    pub followup_type: FollowUpType,
    pub question: String,
    pub answer: String,
    pub grade: GradeOutcome,
}

/// One answer attempt with its grade and the feedback that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    /// 1-based attempt number.
    pub attempt_index: u32,
    pub interviewee_answer: String,
    pub grade: GradeOutcome,
    /// Present iff the grade was not fully correct and a revision followed.
    pub feedback: Option<FeedbackRecord>,
}

/// Why a session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    SolvedEarly,
    RetriesExhausted,
    QuestionBudgetExhausted,
    AgentError,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::SolvedEarly => "solved_early",
            Termination::RetriesExhausted => "retries_exhausted",
            Termination::QuestionBudgetExhausted => "question_budget_exhausted",
            Termination::AgentError => "agent_error",
        }
    }

    pub fn parse(s: &str) -> Option<Termination> {
        match s {
            "solved_early" => Some(Termination::SolvedEarly),
            "retries_exhausted" => Some(Termination::RetriesExhausted),
            "question_budget_exhausted" => Some(Termination::QuestionBudgetExhausted),
            "agent_error" => Some(Termination::AgentError),
            _ => None,
        }
    }
}

/// Evaluation mode: single-turn judging or the full interview protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Judge,
    Interview,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Judge => "judge",
            Mode::Interview => "interview",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s.to_ascii_lowercase().as_str() {
            "judge" => Some(Mode::Judge),
            "interview" => Some(Mode::Interview),
            _ => None,
        }
    }
}

/// The full per-problem dialogue outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewTranscript {
    pub problem: Problem,
    pub modified: Option<ModifiedProblem>,
    pub mode: Mode,
    pub interactions: Vec<Interaction>,
    /// Score at interaction n = 1..N with carry-forward after early success.
    pub score_at: Vec<f64>,
    pub followups: Vec<FollowUp>,
    pub termination: Termination,
    /// Diagnostic for `AgentError` terminations; not part of the wire record.
    pub failure: Option<String>,
}

/// Run-level knobs for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Maximum revisions after the first attempt.
    pub max_retries: u32,
    /// Per-problem question budget: the seed question plus follow-ups.
    pub max_questions: u32,
    pub followups_per_interview: u32,
    pub mode: Mode,
    pub interviewer_temperature: f64,
    pub interviewee_temperature: f64,
    pub random_seed: u64,
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_retries: 2,
            max_questions: 2,
            followups_per_interview: 1,
            mode: Mode::Interview,
            interviewer_temperature: 0.0,
            interviewee_temperature: 1.0,
            random_seed: 0,
            parallelism: 1,
        }
    }
}

impl RunConfig {
    /// Total answer attempts allowed per problem.
    pub fn max_attempts(&self) -> u32 {
        1 + self.max_retries
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.max_questions == 0 {
            return Err(ValidationError::new("max_questions must be positive"));
        }
        if self.parallelism == 0 {
            return Err(ValidationError::new("parallelism must be positive"));
        }
        if self.interviewer_temperature < 0.0 || self.interviewee_temperature < 0.0 {
            return Err(ValidationError::new("temperatures must be >= 0"));
        }
        if self.mode == Mode::Judge && (self.max_retries != 0 || self.followups_per_interview != 0)
        {
            return Err(ValidationError::new(
                "judge mode requires max_retries = 0 and followups_per_interview = 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ValidationError {
    pub message: String,
}

impl ValidationError {
    pub fn new(message: impl Into<String>) -> Self {
        ValidationError { message: message.into() }
    }
}

/// Aggregated scores for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    /// Mean score at interaction n = 1..N.
    pub score_seed_at: Vec<f64>,
    /// score_seed_at[N] - score_seed_at[1].
    pub adapt: f64,
    pub score_follow_total: f64,
    pub score_follow_by_type: BTreeMap<String, f64>,
    pub problem_count: usize,
    pub followup_count: usize,
}

/// Dataset validation findings, one per violated invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetError {
    EmptyId { line: usize },
    DuplicateId { id: String },
    EmptyQuestion { id: String },
    MissingGoldAnswer { id: String },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::EmptyId { line } => write!(f, "problem #{line}: empty id"),
            DatasetError::DuplicateId { id } => write!(f, "duplicate problem id: {id}"),
            DatasetError::EmptyQuestion { id } => write!(f, "problem {id}: empty question"),
            DatasetError::MissingGoldAnswer { id } => {
                write!(f, "problem {id}: deterministic-answer task without gold_answer")
            }
        }
    }
}

/// Validate a dataset against the problem invariants. Returns one entry per
/// violation; an empty vector means the dataset is usable.
pub fn validate_dataset(problems: &[Problem]) -> Vec<DatasetError> {
    let mut errors = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, p) in problems.iter().enumerate() {
        if p.id.trim().is_empty() {
            errors.push(DatasetError::EmptyId { line: idx + 1 });
            continue;
        }
        if !seen.insert(p.id.clone()) {
            errors.push(DatasetError::DuplicateId { id: p.id.clone() });
        }
        if p.question.trim().is_empty() {
            errors.push(DatasetError::EmptyQuestion { id: p.id.clone() });
        }
        if p.task_kind == TaskKind::DeterministicAnswer
            && p.gold_answer.as_deref().is_none_or(|g| g.trim().is_empty())
        {
            errors.push(DatasetError::MissingGoldAnswer { id: p.id.clone() });
        }
    }
    errors
}

// ---------------------------------------------------------------------------
// Canonical JSONL transcript record
// ---------------------------------------------------------------------------

/// One interaction as serialized in the transcript stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub attempt: u32,
    pub answer: String,
    /// 1.0/0.0 for binary grading, the fact precision otherwise.
    pub correct_or_precision: f64,
    pub error_type: Option<String>,
    pub feedback: Option<String>,
    pub feedback_type: Option<String>,
    /// Judge-assessed quality dimensions (open-ended tasks only).
    pub quality: Option<QualityScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowupRecord {
    #[serde(rename = "type")]
    pub followup_type: String,
    pub question: String,
    pub answer: String,
    pub score: f64,
}

/// Canonical per-problem record: one JSON object per line of the transcript
/// stream. Field order is fixed so serialization round-trips byte-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub problem_id: String,
    pub mode: String,
    pub modified_question: Option<String>,
    pub interactions: Vec<InteractionRecord>,
    pub score_at: Vec<f64>,
    pub followups: Vec<FollowupRecord>,
    pub termination: String,
    /// Hash of the run configuration that produced this record.
    pub config_hash: String,
}

impl TranscriptRecord {
    pub fn from_transcript(t: &InterviewTranscript, config_hash: &str) -> TranscriptRecord {
        TranscriptRecord {
            problem_id: t.problem.id.clone(),
            mode: t.mode.as_str().to_string(),
            modified_question: t.modified.as_ref().map(|m| m.modified_question.clone()),
            interactions: t
                .interactions
                .iter()
                .map(|i| InteractionRecord {
                    attempt: i.attempt_index,
                    answer: i.interviewee_answer.clone(),
                    correct_or_precision: i.grade.score(),
                    error_type: i.grade.error_type.map(|e| e.as_str().to_string()),
                    feedback: i.feedback.as_ref().map(|f| f.text.clone()),
                    feedback_type: i.feedback.as_ref().map(|f| f.feedback_type.as_str().to_string()),
                    quality: i.grade.quality,
                })
                .collect(),
            score_at: t.score_at.clone(),
            followups: t
                .followups
                .iter()
                .map(|f| FollowupRecord {
                    followup_type: f.followup_type.as_str().to_string(),
                    question: f.question.clone(),
                    answer: f.answer.clone(),
                    score: f.grade.score(),
                })
                .collect(),
            termination: t.termination.as_str().to_string(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn is_agent_error(&self) -> bool {
        self.termination == Termination::AgentError.as_str()
    }

    /// Score at interaction `n` (1-based) with carry-forward past the end.
    pub fn score_at_interaction(&self, n: usize) -> Option<f64> {
        if self.score_at.is_empty() || n == 0 {
            return None;
        }
        Some(self.score_at[n.min(self.score_at.len()) - 1])
    }
}

/// FNV-1a 64-bit hash, hex-encoded. Used to fingerprint run configurations in
/// every output artifact so resume can refuse mismatched inputs.
pub fn fingerprint(data: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in data.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
