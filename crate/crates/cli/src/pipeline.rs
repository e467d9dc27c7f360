//! End-to-end pipeline commands: run/judge (seed preparation, batch
//! interviews, metrics, report), plus metrics and report recomputation from
//! stored transcripts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use interview_core::domain::{
    InterviewTranscript, Mode, ModifiedProblem, Problem, ScoreTable, Termination,
    TranscriptRecord,
};
use interview_core::engine::run_batch_with;
use interview_core::metrics::{attrition_count, build_score_table, error_frequencies, render_score_table};
use interview_core::prompts::GradingKind;
use interview_core::report::{
    build_report, pick_examples, quality_means, render_report_text, summarize_all,
    summarize_session, InterviewReport,
};
use interview_core::seedprep::{prepare_seed, ModificationCache};
use interview_core::store::{read_transcripts, TranscriptWriter};

use crate::config::{resolve, ConfigError, Overrides, Settings};
use crate::dataset::{load_dataset, DatasetError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("artifact problem: {0}")]
    Artifacts(String),
    #[error("{failed} of {total} sessions failed, above the attrition cap {cap}")]
    Attrition { failed: usize, total: usize, cap: f64 },
}

impl PipelineError {
    /// Process exit code: 1 for invalid config/dataset/artifacts, 2 for
    /// agent-failure attrition.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Attrition { .. } => 2,
            _ => 1,
        }
    }
}

pub struct RunArgs {
    pub config: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub resume: bool,
    pub overrides: Overrides,
}

pub struct RunOutcome {
    pub transcripts_written: usize,
    pub transcripts_total: usize,
    pub skipped_resume: usize,
    pub attrition: usize,
    pub agent_calls_made: bool,
}

fn io_err(context: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Artifacts(format!("{context}: {e}"))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| io_err("serializing artifact", e))?;
    body.push('\n');
    write_text(path, &body)
}

/// scores.json: the score table stamped with the configuration hash.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScoresDoc {
    pub config_hash: String,
    #[serde(flatten)]
    pub table: ScoreTable,
}

/// report.json: the report document stamped with the configuration hash.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDoc {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: InterviewReport,
}

fn transcripts_path(out: &Path) -> PathBuf {
    out.join("transcripts.jsonl")
}

/// A placeholder transcript for a problem whose seed preparation failed:
/// the session never started, so it terminates as an agent error.
fn seed_failure_transcript(problem: &Problem, settings: &Settings, message: String) -> InterviewTranscript {
    InterviewTranscript {
        problem: problem.clone(),
        modified: None,
        mode: settings.run.mode,
        interactions: Vec::new(),
        score_at: vec![0.0; settings.run.max_attempts() as usize],
        followups: Vec::new(),
        termination: Termination::AgentError,
        failure: Some(message),
    }
}

/// Already-completed problem ids to skip on resume. Refuses transcripts
/// produced under a different configuration hash.
fn resumable_ids(
    path: &Path,
    settings: &Settings,
) -> Result<(Vec<TranscriptRecord>, BTreeSet<String>), PipelineError> {
    if !path.is_file() {
        return Ok((Vec::new(), BTreeSet::new()));
    }
    let records = read_transcripts(path).map_err(|e| io_err("reading transcripts", e))?;
    let mut done = BTreeSet::new();
    for r in &records {
        if r.config_hash != settings.config_hash {
            return Err(PipelineError::Artifacts(format!(
                "transcript file {} holds records for configuration {} but the current \
                 configuration hashes to {}; refusing to mix artifacts",
                path.display(),
                r.config_hash,
                settings.config_hash
            )));
        }
        if r.mode == settings.run.mode.as_str() {
            done.insert(r.problem_id.clone());
        }
    }
    Ok((records, done))
}

/// Execute a full run: seed preparation (interview mode), batch interviews
/// with incremental transcript persistence, metrics, and the report.
pub fn cmd_run(args: &RunArgs) -> Result<RunOutcome, PipelineError> {
    let settings = resolve(&args.config, &args.overrides)?;
    let problems = load_dataset(&args.dataset, settings.profile.grading_kind.task_kind())?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_err("creating output directory", e))?;
    let transcripts = transcripts_path(&args.out);

    let (existing, done) = if args.resume {
        let (existing, done) = resumable_ids(&transcripts, &settings)?;
        if transcripts.is_file() {
            // Heal an interrupted write: rewrite the stream from the valid
            // records so a torn trailing line cannot corrupt appends.
            let mut body = String::new();
            for r in &existing {
                body.push_str(&interview_core::store::to_line(r));
            }
            std::fs::write(&transcripts, body)
                .map_err(|e| io_err("repairing transcripts", e))?;
        }
        (existing, done)
    } else {
        if transcripts.exists() {
            std::fs::remove_file(&transcripts)
                .map_err(|e| io_err("clearing previous transcripts", e))?;
        }
        (Vec::new(), BTreeSet::new())
    };

    let pending: Vec<&Problem> = problems.iter().filter(|p| !done.contains(&p.id)).collect();
    let skipped_resume = problems.len() - pending.len();

    // A completed run being resumed: everything is already on disk, so no
    // agent is contacted at all.
    if pending.is_empty()
        && args.out.join("scores.json").is_file()
        && args.out.join("report.json").is_file()
    {
        return Ok(RunOutcome {
            transcripts_written: 0,
            transcripts_total: existing.len(),
            skipped_resume,
            attrition: attrition_count(&existing),
            agent_calls_made: false,
        });
    }

    // Seed preparation (interview mode only), cached across runs.
    let mut modifications: Vec<Option<ModifiedProblem>> = vec![None; pending.len()];
    let mut seed_failures: Vec<(usize, String)> = Vec::new();
    let mut agent_calls_made = false;
    if settings.run.mode == Mode::Interview && !pending.is_empty() {
        let cache = ModificationCache::open(args.out.join(&settings.modification_cache_name))
            .map_err(|e| io_err("opening modification cache", e))?;
        for (i, problem) in pending.iter().enumerate() {
            let before = cache.len();
            match prepare_seed(
                problem,
                &settings.agents.interviewer,
                &settings.profile,
                Some(&cache),
                settings.run.random_seed,
            ) {
                Ok(m) => {
                    if cache.len() != before {
                        agent_calls_made = true;
                    }
                    modifications[i] = Some(m);
                }
                Err(e) => seed_failures.push((i, format!("seed preparation failed: {e}"))),
            }
        }
    }

    // Problems whose seeds failed skip the interview; their placeholder
    // transcripts are interleaved at the right positions below.
    let failed_set: BTreeSet<usize> = seed_failures.iter().map(|(i, _)| *i).collect();
    let runnable: Vec<Problem> = pending
        .iter()
        .enumerate()
        .filter(|(i, _)| !failed_set.contains(i))
        .map(|(_, p)| (*p).clone())
        .collect();
    let runnable_mods: Vec<Option<ModifiedProblem>> = modifications
        .iter()
        .enumerate()
        .filter(|(i, _)| !failed_set.contains(i))
        .map(|(_, m)| m.clone())
        .collect();
    let runnable_global: Vec<usize> =
        (0..pending.len()).filter(|i| !failed_set.contains(i)).collect();

    // Writes transcripts in strict pending order, splicing the placeholder
    // transcripts for failed seeds in at their original positions.
    struct OrderedWriter<'a> {
        writer: TranscriptWriter,
        failures: std::iter::Peekable<std::slice::Iter<'a, (usize, String)>>,
        pending: &'a [&'a Problem],
        settings: &'a Settings,
        written: usize,
        error: Option<String>,
    }
    impl OrderedWriter<'_> {
        fn write(&mut self, t: &InterviewTranscript) {
            if self.error.is_some() {
                return;
            }
            let record = TranscriptRecord::from_transcript(t, &self.settings.config_hash);
            if let Err(e) = self.writer.write(&record) {
                self.error = Some(e.to_string());
            } else {
                self.written += 1;
            }
        }
        fn flush_failures_before(&mut self, bound: usize) {
            while let Some((g, message)) = self.failures.peek() {
                if *g >= bound {
                    break;
                }
                let t = seed_failure_transcript(self.pending[*g], self.settings, message.clone());
                self.write(&t);
                self.failures.next();
            }
        }
    }

    let mut ordered = OrderedWriter {
        writer: TranscriptWriter::append(&transcripts)
            .map_err(|e| io_err("opening transcripts", e))?,
        failures: seed_failures.iter().peekable(),
        pending: &pending,
        settings: &settings,
        written: 0,
        error: None,
    };
    if !runnable.is_empty() {
        agent_calls_made = true;
    }
    run_batch_with(
        &runnable,
        &runnable_mods,
        &settings.agents,
        &settings.profile,
        &settings.run,
        |sub_i, t| {
            ordered.flush_failures_before(runnable_global[sub_i]);
            ordered.write(t);
        },
    )
    .map_err(|e| PipelineError::Artifacts(format!("batch run rejected: {e}")))?;
    ordered.flush_failures_before(usize::MAX);
    if let Some(e) = ordered.error {
        return Err(io_err("writing transcripts", e));
    }
    let written = ordered.written;

    // Recompute everything from the stored stream so `run` and `metrics`
    // share one code path.
    let all_records = read_transcripts(&transcripts).map_err(|e| io_err("re-reading transcripts", e))?;
    debug_assert_eq!(all_records.len(), existing.len() + written);

    let failed = attrition_count(&all_records);
    let total = all_records.len();

    let scores_written = write_scores(&args.out, &settings.config_hash, &all_records)?;
    if scores_written {
        write_report_artifacts(&args.out, &settings, &problems, &all_records)?;
    }

    if total > 0 && (failed as f64 / total as f64) > settings.attrition_cap {
        return Err(PipelineError::Attrition { failed, total, cap: settings.attrition_cap });
    }
    if !scores_written {
        return Err(PipelineError::Attrition { failed, total, cap: settings.attrition_cap });
    }

    Ok(RunOutcome {
        transcripts_written: written,
        transcripts_total: total,
        skipped_resume,
        attrition: failed,
        agent_calls_made,
    })
}

fn write_scores(
    out: &Path,
    config_hash: &str,
    records: &[TranscriptRecord],
) -> Result<bool, PipelineError> {
    match build_score_table(records) {
        Ok(table) => {
            write_json(
                &out.join("scores.json"),
                &ScoresDoc { config_hash: config_hash.to_string(), table: table.clone() },
            )?;
            write_text(
                &out.join("scores.txt"),
                &format!("# config_hash: {config_hash}\n{}", render_score_table(&table, "run")),
            )?;
            Ok(true)
        }
        Err(_) => Ok(false),
    }
}

fn write_report_artifacts(
    out: &Path,
    settings: &Settings,
    problems: &[Problem],
    records: &[TranscriptRecord],
) -> Result<(), PipelineError> {
    let table = build_score_table(records)
        .map_err(|e| PipelineError::Artifacts(format!("metrics failed: {e}")))?;

    let freqs_by_name: BTreeMap<String, f64> = match settings.profile.grading_kind {
        GradingKind::Binary => error_frequencies(records)
            .into_iter()
            .map(|(k, v)| (k.as_str().to_string(), v))
            .collect(),
        GradingKind::FactPrecision => BTreeMap::new(),
    };
    let questions: BTreeMap<String, String> =
        problems.iter().map(|p| (p.id.clone(), p.question.clone())).collect();
    let examples = pick_examples(records, settings.examples_per_type, &questions);
    let quality = quality_means(records);

    let mut summaries = Vec::with_capacity(records.len());
    for record in records {
        let summary =
            summarize_session(record, &settings.agents.interviewer, &settings.profile)
                .map_err(|e| PipelineError::Artifacts(format!("session summary failed: {e}")))?;
        summaries.push(summary);
    }
    let summary = summarize_all(
        &summaries,
        &settings.agents.interviewer,
        &settings.profile,
        settings.summary_chunk_size,
    )
    .map_err(|e| PipelineError::Artifacts(format!("report summary failed: {e}")))?;

    let report = build_report(
        &table,
        &freqs_by_name,
        &examples,
        summary,
        quality,
        attrition_count(records),
    )
    .map_err(|e| PipelineError::Artifacts(format!("report assembly failed: {e}")))?;

    write_json(
        &out.join("report.json"),
        &ReportDoc { config_hash: settings.config_hash.clone(), report: report.clone() },
    )?;
    write_text(
        &out.join("report.txt"),
        &format!(
            "# config_hash: {}\n{}",
            settings.config_hash,
            render_report_text(&report, &settings.profile.name)
        ),
    )?;
    Ok(())
}

/// Verify every record carries one configuration hash and return it.
fn single_hash(records: &[TranscriptRecord]) -> Result<String, PipelineError> {
    let mut hashes: BTreeSet<&str> = BTreeSet::new();
    for r in records {
        hashes.insert(&r.config_hash);
    }
    match hashes.len() {
        0 => Err(PipelineError::Artifacts("transcript file is empty".into())),
        1 => Ok(hashes.into_iter().next().unwrap().to_string()),
        n => Err(PipelineError::Artifacts(format!(
            "transcript file mixes {n} configuration hashes"
        ))),
    }
}

/// Recompute scores.json from a stored transcript stream. Pure function of
/// the file: no agent calls, byte-identical output across invocations.
pub fn cmd_metrics(out: &Path) -> Result<ScoreTable, PipelineError> {
    let records = read_transcripts(&transcripts_path(out))
        .map_err(|e| io_err("reading transcripts", e))?;
    let config_hash = single_hash(&records)?;
    let table = build_score_table(&records)
        .map_err(|e| PipelineError::Artifacts(format!("metrics failed: {e}")))?;
    write_json(
        &out.join("scores.json"),
        &ScoresDoc { config_hash: config_hash.clone(), table: table.clone() },
    )?;
    write_text(
        &out.join("scores.txt"),
        &format!("# config_hash: {config_hash}\n{}", render_score_table(&table, "run")),
    )?;
    Ok(table)
}

/// Rebuild report.json / report.txt from stored transcripts. Summaries are
/// the one place this command calls the interviewer agent.
pub fn cmd_report(config: &Path, dataset: &Path, out: &Path) -> Result<(), PipelineError> {
    let settings = resolve(config, &Overrides::default())?;
    let problems = load_dataset(dataset, settings.profile.grading_kind.task_kind())?;
    let records = read_transcripts(&transcripts_path(out))
        .map_err(|e| io_err("reading transcripts", e))?;
    let stored_hash = single_hash(&records)?;
    if stored_hash != settings.config_hash {
        return Err(PipelineError::Artifacts(format!(
            "transcripts were produced under configuration {stored_hash}, but the given \
             config hashes to {}; refusing to mix artifacts",
            settings.config_hash
        )));
    }
    write_report_artifacts(out, &settings, &problems, &records)
}

/// cmd_run with the mode forced to judge: unmodified questions, one turn,
/// no follow-ups.
pub fn cmd_judge(args: &RunArgs) -> Result<RunOutcome, PipelineError> {
    let mut args = RunArgs {
        config: args.config.clone(),
        dataset: args.dataset.clone(),
        out: args.out.clone(),
        resume: args.resume,
        overrides: args.overrides.clone(),
    };
    args.overrides.mode = Some(Mode::Judge);
    cmd_run(&args)
}
