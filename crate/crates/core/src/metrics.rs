//! Pure aggregation of transcript records into score tables.
//!
//! Transcripts that ended in an agent error are excluded from every mean and
//! surfaced separately as an attrition count.

use std::collections::BTreeMap;

use crate::domain::{ErrorType, FollowUpType, ScoreTable, TranscriptRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no usable transcripts")]
    EmptyInput,
    #[error("interaction index must be >= 1")]
    BadIndex,
    #[error("no follow-ups match the filter")]
    NoMatchingFollowups,
}

/// Transcripts that count toward means.
pub fn included(transcripts: &[TranscriptRecord]) -> impl Iterator<Item = &TranscriptRecord> {
    transcripts.iter().filter(|t| !t.is_agent_error())
}

/// Transcripts dropped because their session failed.
pub fn attrition_count(transcripts: &[TranscriptRecord]) -> usize {
    transcripts.iter().filter(|t| t.is_agent_error()).count()
}

/// Mean score at interaction `n` (1-based), carry-forward past each
/// transcript's last interaction.
pub fn score_seed_at(transcripts: &[TranscriptRecord], n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::BadIndex);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in included(transcripts) {
        if let Some(score) = t.score_at_interaction(n) {
            sum += score;
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(sum / count as f64)
}

/// Score_seed@final_n - Score_seed@1.
pub fn adaptability(transcripts: &[TranscriptRecord], final_n: usize) -> Result<f64, MetricsError> {
    Ok(score_seed_at(transcripts, final_n)? - score_seed_at(transcripts, 1)?)
}

/// Mean follow-up grade, optionally restricted to one follow-up type.
pub fn score_follow(
    transcripts: &[TranscriptRecord],
    type_filter: Option<FollowUpType>,
) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in included(transcripts) {
        for f in &t.followups {
            if let Some(filter) = type_filter {
                if f.followup_type != filter.as_str() {
                    continue;
                }
            }
            sum += f.score;
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::NoMatchingFollowups);
    }
    Ok(sum / count as f64)
}

/// Frequency of each final-interaction error type over the included
/// transcripts. For binary runs the four fractions plus the correct rate sum
/// to one.
pub fn error_frequencies(transcripts: &[TranscriptRecord]) -> BTreeMap<ErrorType, f64> {
    let mut counts: BTreeMap<ErrorType, usize> = BTreeMap::new();
    let mut total = 0usize;
    for t in included(transcripts) {
        let Some(last) = t.interactions.last() else { continue };
        total += 1;
        if let Some(name) = last.error_type.as_deref() {
            if let Some(error_type) = ErrorType::parse(name) {
                *counts.entry(error_type).or_insert(0) += 1;
            }
        }
    }
    let mut freqs = BTreeMap::new();
    if total == 0 {
        return freqs;
    }
    for (error_type, count) in counts {
        freqs.insert(error_type, count as f64 / total as f64);
    }
    freqs
}

/// Number of interactions the score vectors cover.
pub fn interaction_depth(transcripts: &[TranscriptRecord]) -> usize {
    included(transcripts).map(|t| t.score_at.len()).max().unwrap_or(0)
}

/// Assemble the full score table for one run. Runs without follow-ups (judge
/// mode) report a zero follow-up score with `followup_count = 0`.
pub fn build_score_table(transcripts: &[TranscriptRecord]) -> Result<ScoreTable, MetricsError> {
    let depth = interaction_depth(transcripts);
    if depth == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let score_seed_at_vec: Vec<f64> = (1..=depth)
        .map(|n| score_seed_at(transcripts, n))
        .collect::<Result<_, _>>()?;
    let adapt = score_seed_at_vec[depth - 1] - score_seed_at_vec[0];

    let mut by_type = BTreeMap::new();
    let mut followup_count = 0usize;
    for followup_type in FollowUpType::ALL {
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in included(transcripts) {
            for f in &t.followups {
                if f.followup_type == followup_type.as_str() {
                    sum += f.score;
                    count += 1;
                }
            }
        }
        if count > 0 {
            by_type.insert(followup_type.as_str().to_string(), sum / count as f64);
            followup_count += count;
        }
    }
    let score_follow_total = if followup_count == 0 {
        0.0
    } else {
        score_follow(transcripts, None)?
    };

    Ok(ScoreTable {
        score_seed_at: score_seed_at_vec,
        adapt,
        score_follow_total,
        score_follow_by_type: by_type,
        problem_count: included(transcripts).count(),
        followup_count,
    })
}

/// Plain-text rendering: one aligned row of seed scores, adaptability, and
/// follow-up accuracies.
pub fn render_score_table(table: &ScoreTable, label: &str) -> String {
    let mut headers: Vec<String> =
        (1..=table.score_seed_at.len()).map(|n| format!("Score_seed@{n}")).collect();
    headers.push("Adapt.".into());
    for name in table.score_follow_by_type.keys() {
        headers.push(format!("Follow[{name}]"));
    }
    headers.push("Follow_total".into());

    let mut values: Vec<String> = table.score_seed_at.iter().map(|v| format!("{v:.3}")).collect();
    values.push(format!("{:.3}", table.adapt));
    for v in table.score_follow_by_type.values() {
        values.push(format!("{v:.3}"));
    }
    values.push(format!("{:.3}", table.score_follow_total));

    let label_width = label.len().max("run".len());
    let mut out = String::new();
    out.push_str(&format!("{:label_width$}", ""));
    for (h, v) in headers.iter().zip(&values) {
        let w = h.len().max(v.len()) + 2;
        out.push_str(&format!("{h:>w$}"));
    }
    out.push('\n');
    out.push_str(&format!("{label:label_width$}"));
    for (h, v) in headers.iter().zip(&values) {
        let w = h.len().max(v.len()) + 2;
        out.push_str(&format!("{v:>w$}"));
    }
    out.push('\n');
    out.push_str(&format!(
        "problems: {}   followups: {}\n",
        table.problem_count, table.followup_count
    ));
    out
}
