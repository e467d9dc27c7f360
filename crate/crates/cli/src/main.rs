use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use interview_cli::analyze;
use interview_cli::config::Overrides;
use interview_cli::dataset::{load_dataset, sample_stratified};
use interview_cli::pipeline::{cmd_judge, cmd_metrics, cmd_report, cmd_run, PipelineError, RunArgs};
use interview_core::domain::{Mode, TaskKind};
use interview_core::metrics::render_score_table;

#[derive(Parser)]
#[command(
    name = "interview",
    version,
    about = "Interview-style evaluation of chat models: modified seed questions, \
             feedback-and-revision loops, typed follow-ups, grading, and reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunFlags {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// JSONL dataset, one problem per line
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for all artifacts
    #[arg(long)]
    out: PathBuf,
    /// Skip problems whose transcripts already exist in the output
    #[arg(long)]
    resume: bool,
    /// Override the configured mode (judge|interview)
    #[arg(long)]
    mode: Option<String>,
    /// Override the configured parallelism
    #[arg(long, value_name = "K")]
    parallelism: Option<usize>,
    /// Override the configured random seed
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Override the configured retry budget
    #[arg(long, value_name = "M")]
    max_retries: Option<u32>,
    /// Override the configured follow-ups per interview
    #[arg(long, value_name = "F")]
    followups: Option<u32>,
}

impl RunFlags {
    fn into_args(self) -> Result<RunArgs, String> {
        let mode = match self.mode.as_deref() {
            None => None,
            Some(raw) => {
                Some(Mode::parse(raw).ok_or_else(|| format!("unknown mode \"{raw}\""))?)
            }
        };
        Ok(RunArgs {
            config: self.config,
            dataset: self.dataset,
            out: self.out,
            resume: self.resume,
            overrides: Overrides {
                mode,
                parallelism: self.parallelism,
                seed: self.seed,
                max_retries: self.max_retries,
                followups: self.followups,
            },
        })
    }
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Answer-length vs score correlation at one interaction
    Verbosity {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long, default_value_t = 1)]
        interaction: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interviewer-by-interviewee score matrix with self-deltas
    SelfEnhancement {
        /// JSON list of {interviewer, interviewee, scores} cells
        #[arg(long)]
        cells: PathBuf,
        #[arg(long, default_value_t = 1)]
        interaction: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Standard deviation across repeated runs per setting
    Robustness {
        /// JSON list of {setting, scores: [paths]} entries
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value_t = 1)]
        interaction: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Judge-vs-interview comparison over contaminated/uncontaminated settings
    Contamination {
        /// JSON spec with judge/interview score maps and the group partition
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Command {
    /// Full interview run: seed modification, interviews, metrics, report
    Run(RunFlags),
    /// Single-turn baseline on unmodified questions
    Judge(RunFlags),
    /// Recompute scores.json from stored transcripts (no agent calls)
    Metrics {
        /// Output directory holding transcripts.jsonl
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild report.json/report.txt from stored transcripts
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reliability and contamination analyses over stored artifacts
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Seeded difficulty-stratified sample of a dataset
    Sample {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Task kind when the dataset does not carry one (deterministic|open_ended)
        #[arg(long, default_value = "deterministic")]
        task_kind: String,
    },
}

fn fail(message: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn pipeline_exit(e: PipelineError) -> ExitCode {
    fail(&e, e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(flags) => {
            let args = match flags.into_args() {
                Ok(a) => a,
                Err(m) => return fail(m, 1),
            };
            match cmd_run(&args) {
                Ok(outcome) => {
                    println!(
                        "completed: {} transcripts ({} new, {} resumed, {} failed sessions)",
                        outcome.transcripts_total,
                        outcome.transcripts_written,
                        outcome.skipped_resume,
                        outcome.attrition
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => pipeline_exit(e),
            }
        }
        Command::Judge(flags) => {
            let args = match flags.into_args() {
                Ok(a) => a,
                Err(m) => return fail(m, 1),
            };
            match cmd_judge(&args) {
                Ok(outcome) => {
                    println!(
                        "completed: {} transcripts ({} new, {} resumed, {} failed sessions)",
                        outcome.transcripts_total,
                        outcome.transcripts_written,
                        outcome.skipped_resume,
                        outcome.attrition
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => pipeline_exit(e),
            }
        }
        Command::Metrics { out } => match cmd_metrics(&out) {
            Ok(table) => {
                print!("{}", render_score_table(&table, "run"));
                ExitCode::SUCCESS
            }
            Err(e) => pipeline_exit(e),
        },
        Command::Report { config, dataset, out } => {
            match cmd_report(&config, &dataset, &out) {
                Ok(()) => {
                    println!("report written to {}", out.join("report.json").display());
                    ExitCode::SUCCESS
                }
                Err(e) => pipeline_exit(e),
            }
        }
        Command::Analyze { what } => {
            let result = match what {
                AnalyzeCommand::Verbosity { transcripts, interaction, out } => {
                    analyze::cmd_verbosity(&transcripts, interaction, &out).map(|c| {
                        println!("r = {:.6}, p = {:.6}, n = {}", c.r, c.p, c.count);
                    })
                }
                AnalyzeCommand::SelfEnhancement { cells, interaction, out } => {
                    analyze::cmd_self_enhancement(&cells, interaction, &out).map(|m| {
                        for (model, delta) in &m.self_delta {
                            println!("self-delta {model}: {delta:+.4}");
                        }
                    })
                }
                AnalyzeCommand::Robustness { runs, interaction, out } => {
                    analyze::cmd_robustness(&runs, interaction, &out).map(|r| {
                        for row in &r.rows {
                            println!(
                                "{}: std {:.6} over {} runs",
                                row.setting, row.std, row.repetitions
                            );
                        }
                        println!("grand mean std: {:.6}", r.grand_mean_std);
                    })
                }
                AnalyzeCommand::Contamination { input, out } => {
                    analyze::cmd_contamination(&input, &out).map(|c| {
                        println!(
                            "judge gap: {:.4} -> interview gap: {:.4}",
                            c.judge_gap, c.interview_gap
                        );
                    })
                }
            };
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => pipeline_exit(e),
            }
        }
        Command::Sample { dataset, count, seed, out, task_kind } => {
            let kind = match task_kind.as_str() {
                "deterministic" => TaskKind::DeterministicAnswer,
                "open_ended" => TaskKind::OpenEnded,
                other => return fail(format!("unknown task kind \"{other}\""), 1),
            };
            let problems = match load_dataset(&dataset, kind) {
                Ok(p) => p,
                Err(e) => return fail(e, 1),
            };
            let sampled = match sample_stratified(&problems, count, seed) {
                Ok(s) => s,
                Err(e) => return fail(e, 1),
            };
            let mut body = String::new();
            for p in &sampled {
                body.push_str(&serde_json::to_string(p).expect("problem serializes"));
                body.push('\n');
            }
            if let Err(e) = std::fs::write(&out, body) {
                return fail(e, 1);
            }
            println!("sampled {} problems into {}", sampled.len(), out.display());
            ExitCode::SUCCESS
        }
    }
}
