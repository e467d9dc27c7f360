//! Seed-question preparation: contamination-resistant rewrites of benchmark
//! questions, produced by the interviewer before the interview starts.
//!
//! Deterministic-answer questions get their numeric literals masked with
//! unknown symbols; open-ended questions are regenerated from the reference
//! solution. Rewrites are validated structurally and cached in a JSONL
//! sidecar keyed by (problem id, strategy, seed).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::agents::{chat_structured, ChatAgent, FieldKind, SchemaField, StructuredError};
use crate::domain::{
    ChatMessage, ModificationStrategy, ModifiedProblem, Problem, TaskKind, ValidationError,
};
use crate::prompts::{PromptKind, TaskProfile};

#[derive(Debug, thiserror::Error)]
pub enum SeedprepError {
    #[error(transparent)]
    Structured(#[from] StructuredError),
    #[error(transparent)]
    Template(#[from] ValidationError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("modification rejected: {0}")]
    Validation(String),
    #[error("modification cache I/O: {0}")]
    Cache(#[from] std::io::Error),
}

/// Numeric literal occurrences in a text: integers and decimals, including
/// digits inside LaTeX markup. Returns value -> occurrence count.
pub fn numeric_literal_counts(text: &str) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let literal: String = chars[start..i].iter().collect();
            *counts.entry(literal).or_insert(0) += 1;
        } else {
            i += 1;
        }
    }
    counts
}

/// Indices of `a` tokens that are not part of a longest common subsequence
/// with `b`: the tokens the rewrite removed or changed.
fn removed_token_indices<'t>(a: &[&'t str], b: &[&'t str]) -> Vec<usize> {
    let (n, m) = (a.len(), b.len());
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut removed = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            removed.push(i);
            i += 1;
        } else {
            j += 1;
        }
    }
    removed.extend(i..n);
    removed
}

/// Structural checks on a variable-masking rewrite:
/// at least one numeric literal removed, every removed token overlaps a
/// numeric literal, and every masked value is named in the explanation.
pub fn validate_masking(
    original: &str,
    modified: &str,
    explanation: &str,
) -> Result<(), SeedprepError> {
    if modified.trim() == original.trim() {
        return Err(SeedprepError::Validation("modified question equals the original".into()));
    }
    let before = numeric_literal_counts(original);
    let after = numeric_literal_counts(modified);

    let masked: Vec<&String> = before
        .iter()
        .filter(|(value, count)| after.get(*value).copied().unwrap_or(0) < **count)
        .map(|(value, _)| value)
        .collect();
    if masked.is_empty() {
        return Err(SeedprepError::Validation("no numeric literal was masked".into()));
    }
    for value in &masked {
        if !explanation.contains(value.as_str()) {
            return Err(SeedprepError::Validation(format!(
                "explanation does not name the masked value {value}"
            )));
        }
    }

    let original_tokens: Vec<&str> = original.split_whitespace().collect();
    let modified_tokens: Vec<&str> = modified.split_whitespace().collect();
    for idx in removed_token_indices(&original_tokens, &modified_tokens) {
        let token = original_tokens[idx];
        if !token.chars().any(|c| c.is_ascii_digit()) {
            return Err(SeedprepError::Validation(format!(
                "rewrite altered non-numeric text: \"{token}\""
            )));
        }
    }
    Ok(())
}

const MODIFY_SCHEMA: [SchemaField; 2] = [
    SchemaField::required("modified_question", FieldKind::Text),
    SchemaField::required("explanation", FieldKind::Text),
];

fn call_modifier(
    interviewer: &dyn ChatAgent,
    prompt: String,
    max_parse_retries: u32,
) -> Result<(String, String), StructuredError> {
    chat_structured(
        interviewer,
        &[ChatMessage::interviewer(prompt)],
        &MODIFY_SCHEMA,
        max_parse_retries,
        |v, _| {
            let q = v["modified_question"].as_str().expect("schema-checked").trim();
            let e = v["explanation"].as_str().expect("schema-checked").trim();
            if q.is_empty() || e.is_empty() {
                return Err("modified_question and explanation must be non-empty".into());
            }
            Ok((q.to_string(), e.to_string()))
        },
    )
}

/// Mask numeric literals in a deterministic-answer question with unknown
/// symbols, keeping everything else intact.
pub fn mask_variables(
    problem: &Problem,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<ModifiedProblem, SeedprepError> {
    if problem.task_kind != TaskKind::DeterministicAnswer {
        return Err(SeedprepError::Precondition(
            "variable masking applies to deterministic-answer tasks".into(),
        ));
    }
    if numeric_literal_counts(&problem.question).is_empty() {
        return Err(SeedprepError::Validation(
            "question contains no numeric literal to mask".into(),
        ));
    }
    let prompt =
        profile.prompts.render(PromptKind::Modify, &[("question", &problem.question)])?;
    let (modified_question, explanation) =
        call_modifier(interviewer, prompt, profile.max_parse_retries)?;
    validate_masking(&problem.question, &modified_question, &explanation)?;
    Ok(ModifiedProblem {
        original_id: problem.id.clone(),
        modified_question,
        strategy: ModificationStrategy::VariableMasking,
        explanation,
    })
}

fn normalized_question(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Generate a fresh open-ended question answerable from the same reference
/// solution.
pub fn regenerate_question(
    problem: &Problem,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
) -> Result<ModifiedProblem, SeedprepError> {
    if problem.task_kind != TaskKind::OpenEnded {
        return Err(SeedprepError::Precondition(
            "question regeneration applies to open-ended tasks".into(),
        ));
    }
    if problem.reference_solution.trim().is_empty() {
        return Err(SeedprepError::Precondition(
            "question regeneration needs a reference solution".into(),
        ));
    }
    let prompt = profile.prompts.render(
        PromptKind::Modify,
        &[("question", &problem.question), ("solution", &problem.reference_solution)],
    )?;
    let (modified_question, explanation) =
        call_modifier(interviewer, prompt, profile.max_parse_retries)?;
    if normalized_question(&modified_question) == normalized_question(&problem.question) {
        return Err(SeedprepError::Validation(
            "regenerated question matches the original".into(),
        ));
    }
    Ok(ModifiedProblem {
        original_id: problem.id.clone(),
        modified_question,
        strategy: ModificationStrategy::QuestionRegeneration,
        explanation,
    })
}

/// Strategy for a task kind: masking for deterministic answers, regeneration
/// for open-ended questions.
pub fn strategy_for(task_kind: TaskKind) -> ModificationStrategy {
    match task_kind {
        TaskKind::DeterministicAnswer => ModificationStrategy::VariableMasking,
        TaskKind::OpenEnded => ModificationStrategy::QuestionRegeneration,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    problem_id: String,
    strategy: String,
    seed: u64,
    modified_question: String,
    explanation: String,
}

type CacheKey = (String, String, u64);

/// JSONL sidecar of modifications, keyed by (problem id, strategy, seed).
/// First writer wins on identical keys.
pub struct ModificationCache {
    path: PathBuf,
    entries: Mutex<BTreeMap<CacheKey, ModifiedProblem>>,
}

impl ModificationCache {
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        if path.is_file() {
            for line in std::fs::read_to_string(&path)?.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = match serde_json::from_str(line) {
                    Ok(r) => r,
                    Err(_) => continue, // tolerate a torn trailing line
                };
                let strategy = match rec.strategy.as_str() {
                    "variable_masking" => ModificationStrategy::VariableMasking,
                    "question_regeneration" => ModificationStrategy::QuestionRegeneration,
                    _ => continue,
                };
                entries.entry((rec.problem_id.clone(), rec.strategy, rec.seed)).or_insert(
                    ModifiedProblem {
                        original_id: rec.problem_id,
                        modified_question: rec.modified_question,
                        strategy,
                        explanation: rec.explanation,
                    },
                );
            }
        }
        Ok(ModificationCache { path, entries: Mutex::new(entries) })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(
        &self,
        problem_id: &str,
        strategy: ModificationStrategy,
        seed: u64,
    ) -> Option<ModifiedProblem> {
        self.entries
            .lock()
            .unwrap()
            .get(&(problem_id.to_string(), strategy.as_str().to_string(), seed))
            .cloned()
    }

    /// Insert unless the key exists; returns whether the value was stored.
    pub fn put(&self, seed: u64, modification: &ModifiedProblem) -> std::io::Result<bool> {
        let key = (
            modification.original_id.clone(),
            modification.strategy.as_str().to_string(),
            seed,
        );
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(&key) {
            return Ok(false);
        }
        let record = CacheRecord {
            problem_id: modification.original_id.clone(),
            strategy: modification.strategy.as_str().to_string(),
            seed,
            modified_question: modification.modified_question.clone(),
            explanation: modification.explanation.clone(),
        };
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        let mut line = serde_json::to_string(&record).expect("cache record serializes");
        line.push('\n');
        file.write_all(line.as_bytes())?;
        entries.insert(key, modification.clone());
        Ok(true)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Modify one problem with the task's strategy, reusing the cache when a
/// modification for (id, strategy, seed) already exists.
pub fn prepare_seed(
    problem: &Problem,
    interviewer: &dyn ChatAgent,
    profile: &TaskProfile,
    cache: Option<&ModificationCache>,
    seed: u64,
) -> Result<ModifiedProblem, SeedprepError> {
    let strategy = strategy_for(problem.task_kind);
    if let Some(cache) = cache {
        if let Some(hit) = cache.get(&problem.id, strategy, seed) {
            return Ok(hit);
        }
    }
    let modification = match strategy {
        ModificationStrategy::VariableMasking => mask_variables(problem, interviewer, profile)?,
        ModificationStrategy::QuestionRegeneration => {
            regenerate_question(problem, interviewer, profile)?
        }
    };
    if let Some(cache) = cache {
        cache.put(seed, &modification)?;
    }
    Ok(modification)
}
