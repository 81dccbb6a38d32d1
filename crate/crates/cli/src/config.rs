//! Study configuration file. One TOML file describes a study end to end;
//! command-line flags override individual values. Relative paths resolve
//! against the directory holding the config file.

use oversight_core::analysis::ReportOptions;
use oversight_core::evidence::WikiPattern;
use oversight_core::pipeline::{AnswerVariant, PipelineConfig, SystemSpec};
use oversight_core::service::{AssistanceMode, SimulationSpec, TaskFlow};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub providers: Vec<ProviderConfig>,
    pub llm: LlmConfig,
    pub corpus: CorpusConfig,
    pub pipeline: PipelineSection,
    pub study: StudySection,
    pub analysis: AnalysisSection,
    pub validate: ValidateSection,
    pub simulation: SimulationSpec,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            out_dir: PathBuf::from("out"),
            providers: Vec::new(),
            llm: LlmConfig::default(),
            corpus: CorpusConfig::default(),
            pipeline: PipelineSection::default(),
            study: StudySection::default(),
            analysis: AnalysisSection::default(),
            validate: ValidateSection::default(),
            simulation: SimulationSpec::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// OpenAI-style chat-completions and embeddings endpoint.
    Openai,
    /// Scripted replies from a JSON rule file, for offline runs.
    Scripted,
    /// Deterministic hashing embedder.
    HashEmbedder,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub id: String,
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub embedding_model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub script: Option<PathBuf>,
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub cache_dir: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub max_attempts: u32,
    pub retry_base_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig { cache_dir: None, audit_log: None, max_attempts: 3, retry_base_ms: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    None,
    Keyword,
    Prompt,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Question file: plain lines (optionally tab + source tag) or question JSON lines.
    pub input: Option<PathBuf>,
    pub id_prefix: String,
    pub per_cell: usize,
    pub filters: ClassifierMode,
    pub labels: ClassifierMode,
    pub classifier_provider: Option<String>,
    pub embedding_provider: Option<String>,
    pub dedup_threshold: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            input: None,
            id_prefix: "q".into(),
            per_cell: 6,
            filters: ClassifierMode::None,
            labels: ClassifierMode::Keyword,
            classifier_provider: None,
            embedding_provider: None,
            dedup_threshold: oversight_core::corpus::DEDUP_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    /// Question JSON lines; defaults to the corpus sample in `out_dir`.
    pub questions: Option<PathBuf>,
    pub systems: Vec<SystemSpec>,
    pub aux_provider: String,
    pub variant: AnswerVariant,
    pub assistance: bool,
    pub width: usize,
    pub min_paragraph_chars: usize,
    pub wiki: WikiPattern,
    pub article_cache: Option<PathBuf>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        PipelineSection {
            questions: None,
            systems: Vec::new(),
            aux_provider: d.aux_provider,
            variant: d.variant,
            assistance: d.assistance,
            width: d.width,
            min_paragraph_chars: d.min_paragraph_chars,
            wiki: d.wiki,
            article_cache: None,
        }
    }
}

impl PipelineSection {
    pub fn to_config(&self) -> PipelineConfig {
        PipelineConfig {
            aux_provider: self.aux_provider.clone(),
            variant: self.variant,
            assistance: self.assistance,
            width: self.width,
            min_paragraph_chars: self.min_paragraph_chars,
            wiki: self.wiki.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub id: String,
    pub name: Option<String>,
    pub assistance: AssistanceMode,
    pub raters_per_answer: usize,
    pub flow: TaskFlow,
    pub expiry_secs: u64,
    pub screening_questions: Option<Vec<String>>,
    /// Answer-bundle manifest; defaults to `out_dir/manifest.jsonl`.
    pub manifest: Option<PathBuf>,
    /// Event log; defaults to `out_dir/events.jsonl`.
    pub event_log: Option<PathBuf>,
    /// TOML table mapping bearer token to rater id.
    pub tokens: Option<PathBuf>,
    /// Raters admitted without tutorial and admission test.
    pub admitted: Vec<String>,
    pub bind: String,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            id: "study".into(),
            name: None,
            assistance: AssistanceMode::Shown,
            raters_per_answer: oversight_core::service::DEFAULT_RATERS_PER_ANSWER,
            flow: TaskFlow::Rating,
            expiry_secs: oversight_core::service::DEFAULT_EXPIRY_SECS,
            screening_questions: None,
            manifest: None,
            event_log: None,
            tokens: None,
            admitted: Vec::new(),
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Studies to include; empty means every study in the log.
    pub studies: Vec<String>,
    pub report: ReportOptions,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    /// JSON array of seeded items (answer_id, dimension, issue).
    pub seeded: Option<PathBuf>,
    pub studies: Vec<String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut config: Config = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut ids = std::collections::BTreeSet::new();
        for p in &self.providers {
            if !ids.insert(p.id.as_str()) {
                return Err(format!("duplicate provider id `{}`", p.id));
            }
            if p.concurrency == 0 {
                return Err(format!("provider `{}`: concurrency must be at least 1", p.id));
            }
            match p.kind {
                ProviderKind::Openai if p.endpoint.is_none() || p.model.is_none() => {
                    return Err(format!("provider `{}`: openai providers need endpoint and model", p.id))
                }
                ProviderKind::Scripted if p.script.is_none() => {
                    return Err(format!("provider `{}`: scripted providers need a script file", p.id))
                }
                _ => {}
            }
        }
        if self.llm.max_attempts == 0 {
            return Err("llm.max_attempts must be at least 1".into());
        }
        if self.corpus.per_cell == 0 {
            return Err("corpus.per_cell must be at least 1".into());
        }
        if self.study.raters_per_answer == 0 {
            return Err("study.raters_per_answer must be at least 1".into());
        }
        if self.pipeline.width == 0 {
            return Err("pipeline.width must be at least 1".into());
        }
        if self.analysis.report.resamples == 0 {
            return Err("analysis.report.resamples must be at least 1".into());
        }
        Ok(())
    }

    /// Resolves a configured path against the config file's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn event_log(&self) -> PathBuf {
        self.study.event_log.as_ref().map_or_else(|| self.out_dir().join("events.jsonl"), |p| self.resolve(p))
    }

    pub fn manifest(&self) -> PathBuf {
        self.study.manifest.as_ref().map_or_else(|| self.out_dir().join("manifest.jsonl"), |p| self.resolve(p))
    }

    pub fn questions(&self) -> PathBuf {
        self.pipeline.questions.as_ref().map_or_else(|| self.out_dir().join("sample.jsonl"), |p| self.resolve(p))
    }
}
