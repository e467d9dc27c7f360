//! `analyze` subcommands: reliability and contamination analyses over stored
//! artifacts. These never contact an agent; they read transcripts and score
//! documents and emit plot-ready CSV under `<out>/analysis/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use interview_core::analysis::{
    contamination_compare, contamination_csv, robustness_csv, robustness_std,
    self_enhancement_csv, self_enhancement_matrix, verbosity_correlation, verbosity_csv,
    verbosity_points, ContaminationComparison, Correlation, Robustness, SelfEnhancement,
};
use interview_core::domain::{fingerprint, ScoreTable};
use interview_core::store::read_transcripts;

use crate::pipeline::{PipelineError, ScoresDoc};

fn io_err(context: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Artifacts(format!("{context}: {e}"))
}

fn analysis_dir(out: &Path) -> Result<PathBuf, PipelineError> {
    let dir = out.join("analysis");
    std::fs::create_dir_all(&dir).map_err(|e| io_err("creating analysis directory", e))?;
    Ok(dir)
}

fn write_csv(path: &Path, input_stamp: &str, body: &str) -> Result<(), PipelineError> {
    let stamped = format!("# config_hash: {input_stamp}\n{body}");
    std::fs::write(path, stamped).map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

fn load_scores(path: &Path) -> Result<ScoresDoc, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| io_err(&format!("parsing {}", path.display()), e))
}

/// Length-vs-score correlation at one interaction, from stored transcripts.
pub fn cmd_verbosity(
    transcripts: &Path,
    interaction: usize,
    out: &Path,
) -> Result<Correlation, PipelineError> {
    let records =
        read_transcripts(transcripts).map_err(|e| io_err("reading transcripts", e))?;
    let correlation = verbosity_correlation(&records, interaction)
        .map_err(|e| PipelineError::Artifacts(format!("verbosity analysis: {e}")))?;
    let points = verbosity_points(&records, interaction);
    let stamp = records.first().map(|r| r.config_hash.clone()).unwrap_or_default();
    let dir = analysis_dir(out)?;
    write_csv(
        &dir.join(format!("verbosity_at_{interaction}.csv")),
        &stamp,
        &verbosity_csv(&points, &correlation),
    )?;
    Ok(correlation)
}

#[derive(Debug, Deserialize)]
pub struct SelfCellSpec {
    pub interviewer: String,
    pub interviewee: String,
    /// Path to that run's scores.json, relative to the cells file.
    pub scores: PathBuf,
}

/// Interviewer-by-interviewee matrix from a JSON list of
/// {interviewer, interviewee, scores} cells.
pub fn cmd_self_enhancement(
    cells_path: &Path,
    interaction: usize,
    out: &Path,
) -> Result<SelfEnhancement, PipelineError> {
    let text = std::fs::read_to_string(cells_path)
        .map_err(|e| io_err("reading cells spec", e))?;
    let specs: Vec<SelfCellSpec> =
        serde_json::from_str(&text).map_err(|e| io_err("parsing cells spec", e))?;
    let base = cells_path.parent().unwrap_or(Path::new("."));

    let mut cells: BTreeMap<(String, String), ScoreTable> = BTreeMap::new();
    let mut stamp_parts = Vec::new();
    for spec in specs {
        let path = if spec.scores.is_absolute() { spec.scores.clone() } else { base.join(&spec.scores) };
        let doc = load_scores(&path)?;
        stamp_parts.push(doc.config_hash.clone());
        cells.insert((spec.interviewer, spec.interviewee), doc.table);
    }
    let result = self_enhancement_matrix(&cells, interaction)
        .map_err(|e| PipelineError::Artifacts(format!("self-enhancement analysis: {e}")))?;
    let dir = analysis_dir(out)?;
    write_csv(
        &dir.join(format!("self_enhancement_at_{interaction}.csv")),
        &fingerprint(&stamp_parts.join("+")),
        &self_enhancement_csv(&result),
    )?;
    Ok(result)
}

#[derive(Debug, Deserialize)]
pub struct RobustnessSpec {
    pub setting: String,
    /// scores.json of each repetition, relative to the runs file.
    pub scores: Vec<PathBuf>,
}

/// Per-setting standard deviation over repeated runs.
pub fn cmd_robustness(
    runs_path: &Path,
    interaction: usize,
    out: &Path,
) -> Result<Robustness, PipelineError> {
    let text =
        std::fs::read_to_string(runs_path).map_err(|e| io_err("reading runs spec", e))?;
    let specs: Vec<RobustnessSpec> =
        serde_json::from_str(&text).map_err(|e| io_err("parsing runs spec", e))?;
    let base = runs_path.parent().unwrap_or(Path::new("."));

    let mut settings = Vec::new();
    let mut stamp_parts = Vec::new();
    for spec in specs {
        let mut tables = Vec::new();
        for path in &spec.scores {
            let path = if path.is_absolute() { path.clone() } else { base.join(path) };
            let doc = load_scores(&path)?;
            stamp_parts.push(doc.config_hash.clone());
            tables.push(doc.table);
        }
        settings.push((spec.setting, tables));
    }
    let result = robustness_std(&settings, interaction)
        .map_err(|e| PipelineError::Artifacts(format!("robustness analysis: {e}")))?;
    let dir = analysis_dir(out)?;
    write_csv(
        &dir.join(format!("robustness_at_{interaction}.csv")),
        &fingerprint(&stamp_parts.join("+")),
        &robustness_csv(&result),
    )?;
    Ok(result)
}

#[derive(Debug, Deserialize)]
pub struct ContaminationSpec {
    /// setting id -> judge-mode score
    pub judge: BTreeMap<String, f64>,
    /// setting id -> interview-mode score
    pub interview: BTreeMap<String, f64>,
    pub uncontaminated: Vec<String>,
    pub contaminated: Vec<String>,
}

/// Judge-vs-interview contamination comparison from a JSON spec of setting
/// scores and the group partition.
pub fn cmd_contamination(
    input_path: &Path,
    out: &Path,
) -> Result<ContaminationComparison, PipelineError> {
    let text = std::fs::read_to_string(input_path)
        .map_err(|e| io_err("reading comparison spec", e))?;
    let spec: ContaminationSpec =
        serde_json::from_str(&text).map_err(|e| io_err("parsing comparison spec", e))?;
    let result = contamination_compare(
        &spec.judge,
        &spec.interview,
        &spec.uncontaminated,
        &spec.contaminated,
    )
    .map_err(|e| PipelineError::Artifacts(format!("contamination analysis: {e}")))?;
    let dir = analysis_dir(out)?;
    write_csv(
        &dir.join("contamination.csv"),
        &fingerprint(&text),
        &contamination_csv(&result),
    )?;
    Ok(result)
}
