//! Run configuration: a sectioned TOML document resolving to agents, run
//! parameters, a task profile, and paths. The resolved settings are
//! fingerprinted and that hash is stamped into every output artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use interview_core::agents::{AgentHandle, AgentSpec, HttpAgent, ScriptSpec, ScriptedAgent};
use interview_core::domain::{fingerprint, Mode, RunConfig};
use interview_core::engine::AgentPair;
use interview_core::prompts::{PromptKind, TaskProfile};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn default_kind() -> String {
    "http".into()
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout() -> u64 {
    120
}
fn default_net_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    250
}

/// One agent section: an HTTP endpoint or a scripted stand-in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_net_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub in_flight_cap: Option<usize>,
    /// JSON script file for `kind = "scripted"`, relative to the config file.
    #[serde(default)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentsSection {
    pub interviewer: AgentConfig,
    pub interviewee: AgentConfig,
}

fn default_mode() -> String {
    "interview".into()
}
fn default_max_questions() -> u32 {
    2
}
fn default_followups() -> u32 {
    1
}
fn default_interviewee_temperature() -> f64 {
    1.0
}
fn default_parallelism() -> usize {
    1
}
fn default_attrition_cap() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default = "default_followups")]
    pub followups_per_interview: u32,
    #[serde(default = "default_max_questions")]
    pub max_questions: u32,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_followups")]
    pub max_retries: u32,
    #[serde(default)]
    pub interviewer_temperature: f64,
    #[serde(default = "default_interviewee_temperature")]
    pub interviewee_temperature: f64,
    #[serde(default)]
    pub random_seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Abort threshold: exit 2 when the failed-session fraction exceeds this.
    #[serde(default = "default_attrition_cap")]
    pub attrition_cap: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            followups_per_interview: default_followups(),
            max_questions: default_max_questions(),
            mode: default_mode(),
            max_retries: 2,
            interviewer_temperature: 0.0,
            interviewee_temperature: default_interviewee_temperature(),
            random_seed: 0,
            parallelism: default_parallelism(),
            attrition_cap: default_attrition_cap(),
        }
    }
}

fn default_profile() -> String {
    "math".into()
}
fn default_quality_threshold() -> f64 {
    0.8
}
fn default_true() -> bool {
    true
}
fn default_chunk_size() -> usize {
    20
}
fn default_examples_per_type() -> usize {
    2
}
fn default_parse_retries() -> u32 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSection {
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default = "default_quality_threshold")]
    pub quality_threshold: f64,
    #[serde(default = "default_true")]
    pub exact_match_fast_path: bool,
    /// Session summaries per chunk in the two-stage report summarization.
    #[serde(default = "default_chunk_size")]
    pub summary_chunk_size: usize,
    #[serde(default = "default_examples_per_type")]
    pub examples_per_type: usize,
    /// Corrective re-asks per structured interviewer call.
    #[serde(default = "default_parse_retries")]
    pub max_parse_retries: u32,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            profile: default_profile(),
            templates_dir: None,
            quality_threshold: default_quality_threshold(),
            exact_match_fast_path: true,
            summary_chunk_size: default_chunk_size(),
            examples_per_type: default_examples_per_type(),
            max_parse_retries: default_parse_retries(),
        }
    }
}

fn default_cache_name() -> String {
    "modifications.jsonl".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsSection {
    /// Modification cache file name, relative to the output directory.
    #[serde(default = "default_cache_name")]
    pub modification_cache: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection { modification_cache: default_cache_name() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    pub agents: AgentsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub task: TaskSection,
    #[serde(default)]
    pub paths: PathsSection,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    pub max_retries: Option<u32>,
    pub followups: Option<u32>,
}

/// Fully resolved settings for one run.
pub struct Settings {
    pub agents: AgentPair,
    pub run: RunConfig,
    pub profile: TaskProfile,
    pub attrition_cap: f64,
    pub summary_chunk_size: usize,
    pub examples_per_type: usize,
    pub modification_cache_name: String,
    pub config_hash: String,
}

fn build_agent(
    section: &AgentConfig,
    temperature: f64,
    base_dir: &Path,
) -> Result<AgentHandle, ConfigError> {
    match section.kind.as_str() {
        "http" => {
            let spec = AgentSpec {
                endpoint: section.endpoint.clone(),
                model: section.model.clone(),
                temperature,
                max_tokens: section.max_tokens,
                timeout_secs: section.timeout_secs,
                max_retries: section.max_retries,
                credential_env: section.credential_env.clone(),
                backoff_base_ms: section.backoff_base_ms,
                in_flight_cap: section.in_flight_cap,
            };
            let agent = HttpAgent::new(spec)
                .map_err(|e| ConfigError::Invalid(format!("agent spec: {e}")))?;
            Ok(AgentHandle::http(agent))
        }
        "scripted" => {
            let script = section
                .script
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("scripted agent needs a script path".into()))?;
            let path =
                if script.is_absolute() { script.clone() } else { base_dir.join(script) };
            let text = std::fs::read_to_string(&path)
                .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            let spec: ScriptSpec = serde_json::from_str(&text)
                .map_err(|e| ConfigError::Parse { path, message: e.to_string() })?;
            Ok(AgentHandle::scripted(ScriptedAgent::from_spec(spec)))
        }
        other => Err(ConfigError::Invalid(format!("unknown agent kind \"{other}\""))),
    }
}

/// Canonical serialization of everything that affects results, fingerprinted
/// into the config hash. Template text is included so editing a prompt
/// invalidates resume.
fn settings_fingerprint(file: &ConfigFile, run: &RunConfig, profile: &TaskProfile) -> String {
    let canonical = serde_json::json!({
        "interviewer": &file.agents.interviewer,
        "interviewee": &file.agents.interviewee,
        "run": run,
        "task": {
            "profile": profile.name,
            "quality_threshold": profile.quality_threshold,
            "exact_match_fast_path": profile.exact_match_fast_path,
            "max_parse_retries": profile.max_parse_retries,
        },
    });
    let mut text = canonical.to_string();
    for kind in PromptKind::ALL {
        if let Ok(template) = profile.prompts.get(kind) {
            text.push_str(template);
        }
    }
    fingerprint(&text)
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    toml::from_str(&text)
        .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

/// Load, apply overrides, build agents, and fingerprint.
pub fn resolve(path: &Path, overrides: &Overrides) -> Result<Settings, ConfigError> {
    let mut file = load_config_file(path)?;

    if let Some(mode) = overrides.mode {
        file.run.mode = mode.as_str().to_string();
    }
    if let Some(p) = overrides.parallelism {
        file.run.parallelism = p;
    }
    if let Some(s) = overrides.seed {
        file.run.random_seed = s;
    }
    if let Some(m) = overrides.max_retries {
        file.run.max_retries = m;
    }
    if let Some(f) = overrides.followups {
        file.run.followups_per_interview = f;
    }

    let mode = Mode::parse(&file.run.mode)
        .ok_or_else(|| ConfigError::Invalid(format!("unknown mode \"{}\"", file.run.mode)))?;
    let mut run = RunConfig {
        max_retries: file.run.max_retries,
        max_questions: file.run.max_questions,
        followups_per_interview: file.run.followups_per_interview,
        mode,
        interviewer_temperature: file.run.interviewer_temperature,
        interviewee_temperature: file.run.interviewee_temperature,
        random_seed: file.run.random_seed,
        parallelism: file.run.parallelism,
    };
    if mode == Mode::Judge {
        // judge mode is the single-turn baseline: no revision, no follow-ups
        run.max_retries = 0;
        run.followups_per_interview = 0;
    }
    run.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let mut profile = TaskProfile::by_name(&file.task.profile)
        .ok_or_else(|| ConfigError::Invalid(format!("unknown profile \"{}\"", file.task.profile)))?;
    profile.quality_threshold = file.task.quality_threshold;
    profile.exact_match_fast_path = file.task.exact_match_fast_path;
    profile.max_parse_retries = file.task.max_parse_retries;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    if let Some(dir) = &file.task.templates_dir {
        let dir = if dir.is_absolute() { dir.clone() } else { base_dir.join(dir) };
        profile
            .load_overrides(&dir)
            .map_err(|source| ConfigError::Io { path: dir, source })?;
    }
    profile.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let agents = AgentPair {
        interviewer: build_agent(
            &file.agents.interviewer,
            run.interviewer_temperature,
            base_dir,
        )?,
        interviewee: build_agent(
            &file.agents.interviewee,
            run.interviewee_temperature,
            base_dir,
        )?,
    };

    let config_hash = settings_fingerprint(&file, &run, &profile);
    Ok(Settings {
        agents,
        run,
        profile,
        attrition_cap: file.run.attrition_cap,
        summary_chunk_size: file.task.summary_chunk_size.max(1),
        examples_per_type: file.task.examples_per_type,
        modification_cache_name: file.paths.modification_cache.clone(),
        config_hash,
    })
}
