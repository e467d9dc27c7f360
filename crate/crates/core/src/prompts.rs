//! Task profiles: which grading pipeline a task uses, its follow-up policy,
//! and the prompt templates behind every interviewer call.
//!
//! Templates are plain text with named `{placeholder}` slots. The defaults
//! are compiled in; a directory of same-named `.txt` files can override any
//! of them without rebuilding.

use std::collections::BTreeMap;
use std::path::Path;

use crate::domain::{ErrorType, FollowUpType, TaskKind, ValidationError};

/// Every distinct interviewer-side call the engine can issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PromptKind {
    IntervieweeSystem,
    Modify,
    ClarifyCheck,
    ClarifyAnswer,
    GradeBinary,
    Decompose,
    MergeRevision,
    AssessQuality,
    Feedback,
    FollowupRationale,
    FollowupClarification,
    FollowupAdditionalFacts,
    GradeFollowup,
    SummarizeSession,
    SummarizeReport,
}

impl PromptKind {
    pub const ALL: [PromptKind; 15] = [
        PromptKind::IntervieweeSystem,
        PromptKind::Modify,
        PromptKind::ClarifyCheck,
        PromptKind::ClarifyAnswer,
        PromptKind::GradeBinary,
        PromptKind::Decompose,
        PromptKind::MergeRevision,
        PromptKind::AssessQuality,
        PromptKind::Feedback,
        PromptKind::FollowupRationale,
        PromptKind::FollowupClarification,
        PromptKind::FollowupAdditionalFacts,
        PromptKind::GradeFollowup,
        PromptKind::SummarizeSession,
        PromptKind::SummarizeReport,
    ];

    /// File name used for directory overrides.
    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::IntervieweeSystem => "interviewee_system.txt",
            PromptKind::Modify => "modify.txt",
            PromptKind::ClarifyCheck => "clarify_check.txt",
            PromptKind::ClarifyAnswer => "clarify_answer.txt",
            PromptKind::GradeBinary => "grade.txt",
            PromptKind::Decompose => "decompose.txt",
            PromptKind::MergeRevision => "merge_revision.txt",
            PromptKind::AssessQuality => "quality.txt",
            PromptKind::Feedback => "feedback.txt",
            PromptKind::FollowupRationale => "followup_rationale.txt",
            PromptKind::FollowupClarification => "followup_clarification.txt",
            PromptKind::FollowupAdditionalFacts => "followup_additional_facts.txt",
            PromptKind::GradeFollowup => "grade_followup.txt",
            PromptKind::SummarizeSession => "summarize_session.txt",
            PromptKind::SummarizeReport => "summarize_report.txt",
        }
    }
}

/// A named set of prompt templates.
#[derive(Debug, Clone, Default)]
pub struct PromptBundle {
    templates: BTreeMap<PromptKind, String>,
}

impl PromptBundle {
    pub fn set(&mut self, kind: PromptKind, text: impl Into<String>) {
        self.templates.insert(kind, text.into());
    }

    pub fn contains(&self, kind: PromptKind) -> bool {
        self.templates.contains_key(&kind)
    }

    pub fn get(&self, kind: PromptKind) -> Result<&str, ValidationError> {
        self.templates
            .get(&kind)
            .map(String::as_str)
            .ok_or_else(|| {
                ValidationError::new(format!("prompt bundle missing template {:?}", kind))
            })
    }

    /// Substitute `{name}` slots. Unknown braces (JSON examples in the
    /// template body) are left untouched.
    pub fn render(
        &self,
        kind: PromptKind,
        vars: &[(&str, &str)],
    ) -> Result<String, ValidationError> {
        let mut text = self.get(kind)?.to_string();
        for (name, value) in vars {
            text = text.replace(&format!("{{{name}}}"), value);
        }
        Ok(text)
    }
}

/// Grading pipeline selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradingKind {
    Binary,
    FactPrecision,
}

impl GradingKind {
    pub fn task_kind(self) -> TaskKind {
        match self {
            GradingKind::Binary => TaskKind::DeterministicAnswer,
            GradingKind::FactPrecision => TaskKind::OpenEnded,
        }
    }
}

/// Total mapping from the final seed-question outcome to a follow-up type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FollowupPolicy {
    pub on_correct: FollowUpType,
    pub on_concept: FollowUpType,
    pub on_misinterpret: FollowUpType,
    pub on_calculation: FollowUpType,
    pub on_na: FollowUpType,
}

impl FollowupPolicy {
    /// Deterministic-answer tasks: rationale after success, clarification
    /// keyed to the diagnosed error type after failure.
    pub fn deterministic() -> Self {
        FollowupPolicy {
            on_correct: FollowUpType::Rationale,
            on_concept: FollowUpType::ClarificationConcept,
            on_misinterpret: FollowUpType::ClarificationInterpretation,
            on_calculation: FollowUpType::ClarificationInterpretation,
            on_na: FollowUpType::ClarificationInterpretation,
        }
    }

    /// Open-ended tasks: always probe reference facts missing from the answer.
    pub fn open_ended() -> Self {
        FollowupPolicy {
            on_correct: FollowUpType::AdditionalFacts,
            on_concept: FollowUpType::AdditionalFacts,
            on_misinterpret: FollowUpType::AdditionalFacts,
            on_calculation: FollowUpType::AdditionalFacts,
            on_na: FollowUpType::AdditionalFacts,
        }
    }

    /// Follow-up type for the final seed-question outcome. Total: every
    /// (correctness, error type) combination maps to a type.
    pub fn for_outcome(&self, fully_correct: bool, error_type: Option<ErrorType>) -> FollowUpType {
        if fully_correct {
            return self.on_correct;
        }
        match error_type {
            Some(ErrorType::Concept) => self.on_concept,
            Some(ErrorType::Misinterpret) => self.on_misinterpret,
            Some(ErrorType::Calculation) => self.on_calculation,
            Some(ErrorType::NA) | None => self.on_na,
        }
    }
}

/// Everything the engine needs to run one task family.
#[derive(Debug, Clone)]
pub struct TaskProfile {
    pub name: String,
    pub grading_kind: GradingKind,
    pub prompts: PromptBundle,
    pub followup_policy: FollowupPolicy,
    /// Open-ended answers count as fully correct only when precision is 1 and
    /// every quality dimension reaches this threshold.
    pub quality_threshold: f64,
    /// Skip the judge call when a deterministic answer string-matches gold.
    pub exact_match_fast_path: bool,
    /// Corrective re-asks allowed per structured interviewer call.
    pub max_parse_retries: u32,
}

impl TaskProfile {
    /// Arithmetic-reasoning profile: binary grading with error taxonomy,
    /// variable-masking modification.
    pub fn math() -> Self {
        let mut prompts = PromptBundle::default();
        prompts.set(
            PromptKind::IntervieweeSystem,
            include_str!("../templates/math/interviewee_system.txt"),
        );
        prompts.set(PromptKind::Modify, include_str!("../templates/math/modify.txt"));
        prompts.set(PromptKind::ClarifyCheck, include_str!("../templates/math/clarify_check.txt"));
        prompts.set(
            PromptKind::ClarifyAnswer,
            include_str!("../templates/math/clarify_answer.txt"),
        );
        prompts.set(PromptKind::GradeBinary, include_str!("../templates/math/grade.txt"));
        prompts.set(PromptKind::Feedback, include_str!("../templates/math/feedback.txt"));
        prompts.set(
            PromptKind::FollowupRationale,
            include_str!("../templates/math/followup_rationale.txt"),
        );
        prompts.set(
            PromptKind::FollowupClarification,
            include_str!("../templates/math/followup_clarification.txt"),
        );
        prompts.set(
            PromptKind::GradeFollowup,
            include_str!("../templates/math/grade_followup.txt"),
        );
        prompts.set(
            PromptKind::SummarizeSession,
            include_str!("../templates/math/summarize_session.txt"),
        );
        prompts.set(
            PromptKind::SummarizeReport,
            include_str!("../templates/math/summarize_report.txt"),
        );
        TaskProfile {
            name: "math".into(),
            grading_kind: GradingKind::Binary,
            prompts,
            followup_policy: FollowupPolicy::deterministic(),
            quality_threshold: 0.8,
            exact_match_fast_path: true,
            max_parse_retries: 2,
        }
    }

    /// Open-ended profile: atomic-fact precision plus quality dimensions,
    /// question-regeneration modification.
    pub fn depthqa() -> Self {
        let mut prompts = PromptBundle::default();
        prompts.set(
            PromptKind::IntervieweeSystem,
            include_str!("../templates/depthqa/interviewee_system.txt"),
        );
        prompts.set(PromptKind::Modify, include_str!("../templates/depthqa/modify.txt"));
        prompts.set(
            PromptKind::ClarifyCheck,
            include_str!("../templates/depthqa/clarify_check.txt"),
        );
        prompts.set(
            PromptKind::ClarifyAnswer,
            include_str!("../templates/depthqa/clarify_answer.txt"),
        );
        prompts.set(PromptKind::Decompose, include_str!("../templates/depthqa/decompose.txt"));
        prompts.set(
            PromptKind::MergeRevision,
            include_str!("../templates/depthqa/merge_revision.txt"),
        );
        prompts.set(PromptKind::AssessQuality, include_str!("../templates/depthqa/quality.txt"));
        prompts.set(PromptKind::Feedback, include_str!("../templates/depthqa/feedback.txt"));
        prompts.set(
            PromptKind::FollowupAdditionalFacts,
            include_str!("../templates/depthqa/followup_additional_facts.txt"),
        );
        prompts.set(
            PromptKind::GradeFollowup,
            include_str!("../templates/depthqa/grade_followup.txt"),
        );
        prompts.set(
            PromptKind::SummarizeSession,
            include_str!("../templates/depthqa/summarize_session.txt"),
        );
        prompts.set(
            PromptKind::SummarizeReport,
            include_str!("../templates/depthqa/summarize_report.txt"),
        );
        TaskProfile {
            name: "depthqa".into(),
            grading_kind: GradingKind::FactPrecision,
            prompts,
            followup_policy: FollowupPolicy::open_ended(),
            quality_threshold: 0.8,
            exact_match_fast_path: false,
            max_parse_retries: 2,
        }
    }

    pub fn by_name(name: &str) -> Option<TaskProfile> {
        match name.to_ascii_lowercase().as_str() {
            "math" => Some(TaskProfile::math()),
            "depthqa" | "stem" => Some(TaskProfile::depthqa()),
            _ => None,
        }
    }

    /// Prompt kinds the engine will issue for this grading pipeline.
    pub fn required_kinds(grading_kind: GradingKind) -> &'static [PromptKind] {
        match grading_kind {
            GradingKind::Binary => &[
                PromptKind::IntervieweeSystem,
                PromptKind::Modify,
                PromptKind::ClarifyCheck,
                PromptKind::ClarifyAnswer,
                PromptKind::GradeBinary,
                PromptKind::Feedback,
                PromptKind::FollowupRationale,
                PromptKind::FollowupClarification,
                PromptKind::GradeFollowup,
                PromptKind::SummarizeSession,
                PromptKind::SummarizeReport,
            ],
            GradingKind::FactPrecision => &[
                PromptKind::IntervieweeSystem,
                PromptKind::Modify,
                PromptKind::ClarifyCheck,
                PromptKind::ClarifyAnswer,
                PromptKind::Decompose,
                PromptKind::MergeRevision,
                PromptKind::AssessQuality,
                PromptKind::Feedback,
                PromptKind::FollowupAdditionalFacts,
                PromptKind::GradeFollowup,
                PromptKind::SummarizeSession,
                PromptKind::SummarizeReport,
            ],
        }
    }

    /// Verify the bundle contains a template for every call this profile's
    /// pipeline can issue.
    pub fn validate(&self) -> Result<(), ValidationError> {
        for kind in Self::required_kinds(self.grading_kind) {
            self.prompts.get(*kind)?;
        }
        if !(0.0..=1.0).contains(&self.quality_threshold) {
            return Err(ValidationError::new("quality_threshold must be in [0, 1]"));
        }
        Ok(())
    }

    /// Replace templates with same-named `.txt` files found in `dir`.
    /// Returns the kinds that were overridden.
    pub fn load_overrides(&mut self, dir: &Path) -> std::io::Result<Vec<PromptKind>> {
        let mut replaced = Vec::new();
        for kind in PromptKind::ALL {
            let path = dir.join(kind.file_name());
            if path.is_file() {
                self.prompts.set(kind, std::fs::read_to_string(&path)?);
                replaced.push(kind);
            }
        }
        Ok(replaced)
    }
}
