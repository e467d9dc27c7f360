//! Dataset loading (JSONL, one problem per line) with a shim for common
//! benchmark field spellings, plus the seeded difficulty-stratified sampler.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use interview_core::domain::{validate_dataset, Problem, TaskKind};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("dataset line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("dataset invalid:\n{0}")]
    Invalid(String),
    #[error("cannot sample {requested} problems from {available}")]
    NotEnough { requested: usize, available: usize },
}

fn first_string(value: &Value, keys: &[&str]) -> Option<String> {
    for key in keys {
        match value.get(key) {
            Some(Value::String(s)) if !s.trim().is_empty() => return Some(s.clone()),
            Some(Value::Number(n)) => return Some(n.to_string()),
            _ => {}
        }
    }
    None
}

/// Map one JSONL object onto a `Problem`, accepting the common field
/// spellings: problem/question/query, solution/reference_solution,
/// answer/gold_answer, level/difficulty.
pub fn problem_from_value(
    value: &Value,
    line: usize,
    default_kind: TaskKind,
) -> Result<Problem, DatasetError> {
    let question = first_string(value, &["question", "problem", "query"]).ok_or_else(|| {
        DatasetError::Malformed { line, message: "no question/problem/query field".into() }
    })?;
    let id = first_string(value, &["id", "problem_id", "idx", "index"])
        .unwrap_or_else(|| format!("q{line:05}"));
    let reference_solution =
        first_string(value, &["reference_solution", "solution", "reference"]).unwrap_or_default();
    let gold_answer = first_string(value, &["gold_answer", "answer", "final_answer"]);
    let difficulty = first_string(value, &["difficulty", "level"]);
    let task_kind = match first_string(value, &["task_kind"]).as_deref() {
        Some("DeterministicAnswer") | Some("deterministic") => TaskKind::DeterministicAnswer,
        Some("OpenEnded") | Some("open_ended") => TaskKind::OpenEnded,
        Some(other) => {
            return Err(DatasetError::Malformed {
                line,
                message: format!("unknown task_kind \"{other}\""),
            })
        }
        None => default_kind,
    };
    Ok(Problem { id, task_kind, question, reference_solution, gold_answer, difficulty })
}

/// Load and validate a dataset. Every problem invariant violation is
/// reported at once.
pub fn load_dataset(path: &Path, default_kind: TaskKind) -> Result<Vec<Problem>, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    let mut problems = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| DatasetError::Malformed { line: i + 1, message: e.to_string() })?;
        problems.push(problem_from_value(&value, i + 1, default_kind)?);
    }
    let errors = validate_dataset(&problems);
    if !errors.is_empty() {
        let listing =
            errors.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n");
        return Err(DatasetError::Invalid(listing));
    }
    Ok(problems)
}

/// Seeded sample of `count` problems with an equal share per difficulty
/// level. Shortfall in one level is redistributed round-robin to the rest;
/// output order is by problem id for reproducibility.
pub fn sample_stratified(
    problems: &[Problem],
    count: usize,
    seed: u64,
) -> Result<Vec<Problem>, DatasetError> {
    if count > problems.len() {
        return Err(DatasetError::NotEnough { requested: count, available: problems.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_level: BTreeMap<String, Vec<&Problem>> = BTreeMap::new();
    for p in problems {
        by_level
            .entry(p.difficulty.clone().unwrap_or_else(|| "(unspecified)".into()))
            .or_default()
            .push(p);
    }
    for bucket in by_level.values_mut() {
        bucket.sort_by(|a, b| a.id.cmp(&b.id));
        bucket.shuffle(&mut rng);
    }

    let levels: Vec<String> = by_level.keys().cloned().collect();
    let mut quota: BTreeMap<&str, usize> =
        levels.iter().map(|l| (l.as_str(), count / levels.len())).collect();
    let mut leftover = count - (count / levels.len()) * levels.len();
    for level in &levels {
        if leftover == 0 {
            break;
        }
        *quota.get_mut(level.as_str()).unwrap() += 1;
        leftover -= 1;
    }

    // redistribute shortfall from levels smaller than their quota
    let mut shortfall = 0;
    for level in &levels {
        let available = by_level[level.as_str()].len();
        let q = quota.get_mut(level.as_str()).unwrap();
        if *q > available {
            shortfall += *q - available;
            *q = available;
        }
    }
    while shortfall > 0 {
        let mut progressed = false;
        for level in &levels {
            if shortfall == 0 {
                break;
            }
            let available = by_level[level.as_str()].len();
            let q = quota.get_mut(level.as_str()).unwrap();
            if *q < available {
                *q += 1;
                shortfall -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let mut sampled: Vec<Problem> = Vec::with_capacity(count);
    for level in &levels {
        for p in by_level[level.as_str()].iter().take(quota[level.as_str()]) {
            sampled.push((*p).clone());
        }
    }
    sampled.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(sampled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shim_maps_common_spellings() {
        let value: Value = serde_json::json!({
            "problem": "What is 2 + 2?",
            "solution": "2 + 2 = 4",
            "answer": "4",
            "level": "easy"
        });
        let p = problem_from_value(&value, 3, TaskKind::DeterministicAnswer).unwrap();
        assert_eq!(p.question, "What is 2 + 2?");
        assert_eq!(p.reference_solution, "2 + 2 = 4");
        assert_eq!(p.gold_answer.as_deref(), Some("4"));
        assert_eq!(p.difficulty.as_deref(), Some("easy"));
        assert_eq!(p.id, "q00003");
    }

    #[test]
    fn canonical_names_win() {
        let value: Value = serde_json::json!({
            "id": "p7",
            "question": "Q",
            "reference_solution": "S",
            "gold_answer": "G"
        });
        let p = problem_from_value(&value, 1, TaskKind::DeterministicAnswer).unwrap();
        assert_eq!(p.id, "p7");
        assert_eq!(p.gold_answer.as_deref(), Some("G"));
    }

    fn make_problems(per_level: &[(&str, usize)]) -> Vec<Problem> {
        let mut out = Vec::new();
        for (level, n) in per_level {
            for i in 0..*n {
                out.push(Problem {
                    id: format!("{level}-{i:03}"),
                    task_kind: TaskKind::DeterministicAnswer,
                    question: format!("q {i} + {i}?"),
                    reference_solution: "s".into(),
                    gold_answer: Some("g".into()),
                    difficulty: Some(level.to_string()),
                });
            }
        }
        out
    }

    #[test]
    fn stratified_sample_is_balanced_and_seeded() {
        let problems = make_problems(&[("1", 50), ("2", 50), ("3", 50), ("4", 50)]);
        let a = sample_stratified(&problems, 100, 7).unwrap();
        let b = sample_stratified(&problems, 100, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_stratified(&problems, 100, 8).unwrap();
        assert_ne!(a, c);
        for level in ["1", "2", "3", "4"] {
            let n = a.iter().filter(|p| p.difficulty.as_deref() == Some(level)).count();
            assert_eq!(n, 25);
        }
    }

    #[test]
    fn shortfall_is_redistributed() {
        let problems = make_problems(&[("1", 3), ("2", 50)]);
        let sampled = sample_stratified(&problems, 20, 1).unwrap();
        assert_eq!(sampled.len(), 20);
        assert_eq!(
            sampled.iter().filter(|p| p.difficulty.as_deref() == Some("1")).count(),
            3
        );
    }

    #[test]
    fn oversampling_is_an_error() {
        let problems = make_problems(&[("1", 3)]);
        assert!(matches!(
            sample_stratified(&problems, 5, 1),
            Err(DatasetError::NotEnough { requested: 5, available: 3 })
        ));
    }
}
