//! Reliability and contamination analyses over completed run artifacts:
//! verbosity-bias correlation, self-enhancement matrix, multi-run robustness,
//! and the judge-vs-interview contamination comparison.
//!
//! Everything here is a pure function; the CSV renderings are plot-ready.

use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{ScoreTable, TranscriptRecord};
use crate::special::student_t_two_tailed_p;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least {needed} data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate variance: all {side} values are equal")]
    DegenerateVariance { side: &'static str },
    #[error("missing cell: {0}")]
    MissingCell(String),
    #[error("setting {0} needs at least 2 repetitions")]
    InsufficientRepetitions(String),
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
    #[error("length mismatch between paired samples")]
    LengthMismatch,
}

/// Pearson correlation with its exact two-tailed p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub count: usize,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (divisor k - 1).
pub fn sample_std(values: &[f64]) -> Result<f64, AnalysisError> {
    if values.len() < 2 {
        return Err(AnalysisError::InsufficientData { needed: 2, got: values.len() });
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

/// Pearson r between paired samples, with the two-tailed p-value from
/// t = r sqrt((n-2)/(1-r^2)) against Student-t with n-2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch);
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalysisError::InsufficientData { needed: 3, got: n });
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateVariance { side: "x" });
    }
    if syy == 0.0 {
        return Err(AnalysisError::DegenerateVariance { side: "y" });
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if (1.0 - r * r) <= f64::EPSILON {
        0.0
    } else {
        student_t_two_tailed_p(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(Correlation { r, p, count: n })
}

/// Whitespace-delimited token count: the tokenizer-neutral length measure.
pub fn answer_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// One (length, score) observation at a given interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerbosityPoint {
    pub length: usize,
    pub score: f64,
}

/// The answers actually given at interaction `n`, paired with their scores.
/// Transcripts that ended earlier (or in an agent error) contribute nothing.
pub fn verbosity_points(transcripts: &[TranscriptRecord], interaction_n: usize) -> Vec<VerbosityPoint> {
    let mut points = Vec::new();
    for t in transcripts.iter().filter(|t| !t.is_agent_error()) {
        if interaction_n >= 1 && t.interactions.len() >= interaction_n {
            let it = &t.interactions[interaction_n - 1];
            points.push(VerbosityPoint {
                length: answer_token_count(&it.answer),
                score: it.correct_or_precision,
            });
        }
    }
    points
}

/// Correlation between answer length and score at one interaction.
pub fn verbosity_correlation(
    transcripts: &[TranscriptRecord],
    interaction_n: usize,
) -> Result<Correlation, AnalysisError> {
    let points = verbosity_points(transcripts, interaction_n);
    if points.len() < 3 {
        return Err(AnalysisError::InsufficientData { needed: 3, got: points.len() });
    }
    let lengths: Vec<f64> = points.iter().map(|p| p.length as f64).collect();
    let scores: Vec<f64> = points.iter().map(|p| p.score).collect();
    pearson(&lengths, &scores)
}

/// Interviewer-by-interviewee score matrix with per-model self-deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfEnhancement {
    /// Sorted union of model ids; indexes both matrix dimensions.
    pub models: Vec<String>,
    /// `matrix[i][j]` = score when models[i] interviews models[j].
    pub matrix: Vec<Vec<Option<f64>>>,
    /// self-delta(m) = matrix[m][m] - mean over other interviewers of matrix[.][m].
    pub self_delta: BTreeMap<String, f64>,
}

/// Build the self-enhancement matrix from per-(interviewer, interviewee)
/// score tables, reading Score_seed@n.
pub fn self_enhancement_matrix(
    cells: &BTreeMap<(String, String), ScoreTable>,
    n: usize,
) -> Result<SelfEnhancement, AnalysisError> {
    let mut names: BTreeSet<String> = BTreeSet::new();
    for (interviewer, interviewee) in cells.keys() {
        names.insert(interviewer.clone());
        names.insert(interviewee.clone());
    }
    let models: Vec<String> = names.into_iter().collect();

    let score_at = |table: &ScoreTable| -> Result<f64, AnalysisError> {
        table
            .score_seed_at
            .get(n - 1)
            .copied()
            .ok_or_else(|| AnalysisError::MissingCell(format!("no Score_seed@{n} in table")))
    };

    let mut matrix = vec![vec![None; models.len()]; models.len()];
    for (i, interviewer) in models.iter().enumerate() {
        for (j, interviewee) in models.iter().enumerate() {
            if let Some(table) = cells.get(&(interviewer.clone(), interviewee.clone())) {
                matrix[i][j] = Some(score_at(table)?);
            }
        }
    }

    let interviewees: BTreeSet<&String> = cells.keys().map(|(_, e)| e).collect();
    let mut self_delta = BTreeMap::new();
    for interviewee in interviewees {
        let j = models.iter().position(|m| m == interviewee).expect("in union");
        let own = matrix[j][j].ok_or_else(|| {
            AnalysisError::MissingCell(format!("diagonal ({interviewee}, {interviewee})"))
        })?;
        let others: Vec<f64> = (0..models.len())
            .filter(|i| *i != j)
            .filter_map(|i| matrix[i][j])
            .collect();
        if others.is_empty() {
            return Err(AnalysisError::MissingCell(format!(
                "no off-diagonal interviewer for {interviewee}"
            )));
        }
        self_delta.insert(interviewee.clone(), own - mean(&others));
    }
    Ok(SelfEnhancement { models, matrix, self_delta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub setting: String,
    pub mean: f64,
    pub std: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Robustness {
    pub rows: Vec<RobustnessRow>,
    /// Arithmetic mean of the per-setting standard deviations.
    pub grand_mean_std: f64,
}

/// Per-setting sample standard deviation of Score_seed@n over repeated runs.
pub fn robustness_std(
    settings: &[(String, Vec<ScoreTable>)],
    n: usize,
) -> Result<Robustness, AnalysisError> {
    if settings.is_empty() {
        return Err(AnalysisError::InsufficientData { needed: 1, got: 0 });
    }
    let mut rows = Vec::with_capacity(settings.len());
    for (setting, tables) in settings {
        if tables.len() < 2 {
            return Err(AnalysisError::InsufficientRepetitions(setting.clone()));
        }
        let scores: Vec<f64> = tables
            .iter()
            .map(|t| {
                t.score_seed_at.get(n - 1).copied().ok_or_else(|| {
                    AnalysisError::MissingCell(format!("{setting}: no Score_seed@{n}"))
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push(RobustnessRow {
            setting: setting.clone(),
            mean: mean(&scores),
            std: sample_std(&scores)?,
            repetitions: scores.len(),
        });
    }
    let grand_mean_std = mean(&rows.iter().map(|r| r.std).collect::<Vec<_>>());
    Ok(Robustness { rows, grand_mean_std })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub setting: String,
    pub contaminated: bool,
    pub judge: f64,
    pub interview: f64,
}

/// Judge-vs-interview scores for contaminated and uncontaminated settings,
/// with group averages and the per-column contamination gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationComparison {
    pub rows: Vec<ComparisonRow>,
    pub judge_avg_uncontaminated: f64,
    pub judge_avg_contaminated: f64,
    pub interview_avg_uncontaminated: f64,
    pub interview_avg_contaminated: f64,
    /// avg(contaminated) - avg(uncontaminated) per column.
    pub judge_gap: f64,
    pub interview_gap: f64,
}

pub fn contamination_compare(
    judge_scores: &BTreeMap<String, f64>,
    interview_scores: &BTreeMap<String, f64>,
    uncontaminated_ids: &[String],
    contaminated_ids: &[String],
) -> Result<ContaminationComparison, AnalysisError> {
    let judge_keys: BTreeSet<&String> = judge_scores.keys().collect();
    let interview_keys: BTreeSet<&String> = interview_scores.keys().collect();
    if judge_keys != interview_keys {
        return Err(AnalysisError::KeyMismatch(
            "judge and interview maps cover different settings".into(),
        ));
    }
    let mut partition: BTreeSet<&String> = BTreeSet::new();
    for id in uncontaminated_ids.iter().chain(contaminated_ids) {
        if !partition.insert(id) {
            return Err(AnalysisError::KeyMismatch(format!("setting {id} listed twice")));
        }
    }
    if partition != judge_keys {
        return Err(AnalysisError::KeyMismatch(
            "the id lists do not partition the setting keys".into(),
        ));
    }
    if uncontaminated_ids.is_empty() || contaminated_ids.is_empty() {
        return Err(AnalysisError::KeyMismatch("both groups must be non-empty".into()));
    }

    let collect = |ids: &[String]| -> (Vec<f64>, Vec<f64>) {
        let judge: Vec<f64> = ids.iter().map(|id| judge_scores[id]).collect();
        let interview: Vec<f64> = ids.iter().map(|id| interview_scores[id]).collect();
        (judge, interview)
    };
    let (judge_u, interview_u) = collect(uncontaminated_ids);
    let (judge_c, interview_c) = collect(contaminated_ids);

    let mut rows = Vec::new();
    for id in uncontaminated_ids {
        rows.push(ComparisonRow {
            setting: id.clone(),
            contaminated: false,
            judge: judge_scores[id],
            interview: interview_scores[id],
        });
    }
    for id in contaminated_ids {
        rows.push(ComparisonRow {
            setting: id.clone(),
            contaminated: true,
            judge: judge_scores[id],
            interview: interview_scores[id],
        });
    }

    let judge_avg_uncontaminated = mean(&judge_u);
    let judge_avg_contaminated = mean(&judge_c);
    let interview_avg_uncontaminated = mean(&interview_u);
    let interview_avg_contaminated = mean(&interview_c);
    Ok(ContaminationComparison {
        rows,
        judge_avg_uncontaminated,
        judge_avg_contaminated,
        interview_avg_uncontaminated,
        interview_avg_contaminated,
        judge_gap: judge_avg_contaminated - judge_avg_uncontaminated,
        interview_gap: interview_avg_contaminated - interview_avg_uncontaminated,
    })
}

// ---------------------------------------------------------------------------
// Plot-ready CSV renderings
// ---------------------------------------------------------------------------

pub fn verbosity_csv(points: &[VerbosityPoint], correlation: &Correlation) -> String {
    let mut out =
        format!("# r={:.9} p={:.9} n={}\nlength,score\n", correlation.r, correlation.p, correlation.count);
    for p in points {
        out.push_str(&format!("{},{}\n", p.length, p.score));
    }
    out
}

pub fn self_enhancement_csv(result: &SelfEnhancement) -> String {
    let mut out = String::from("interviewer,interviewee,score,self_delta\n");
    for (i, interviewer) in result.models.iter().enumerate() {
        for (j, interviewee) in result.models.iter().enumerate() {
            if let Some(score) = result.matrix[i][j] {
                let delta = if i == j {
                    result.self_delta.get(interviewee).map(|d| format!("{d}")).unwrap_or_default()
                } else {
                    String::new()
                };
                out.push_str(&format!("{interviewer},{interviewee},{score},{delta}\n"));
            }
        }
    }
    out
}

pub fn robustness_csv(result: &Robustness) -> String {
    let mut out = String::from("setting,repetitions,mean,std\n");
    for row in &result.rows {
        out.push_str(&format!("{},{},{},{}\n", row.setting, row.repetitions, row.mean, row.std));
    }
    out.push_str(&format!("grand_mean,,,{}\n", result.grand_mean_std));
    out
}

pub fn contamination_csv(result: &ContaminationComparison) -> String {
    let mut out = String::from("setting,group,judge,interview\n");
    for row in &result.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.setting,
            if row.contaminated { "contaminated" } else { "uncontaminated" },
            row.judge,
            row.interview
        ));
    }
    out.push_str(&format!(
        "avg_uncontaminated,,{},{}\n",
        result.judge_avg_uncontaminated, result.interview_avg_uncontaminated
    ));
    out.push_str(&format!(
        "avg_contaminated,,{},{}\n",
        result.judge_avg_contaminated, result.interview_avg_contaminated
    ));
    out.push_str(&format!("gap,,{},{}\n", result.judge_gap, result.interview_gap));
    out
}
