use crate::config::{ClassifierMode, Config, ProviderKind};
use anyhow::{anyhow, Context};
use oversight_core::analysis::{build_report_from_events, detection_rates, render_text, SeededItem};
use oversight_core::corpus::{
    import_questions, label_strata, stratified_sample, BinaryClassifier, Cascade, ClassifierId, KeywordClassifier,
    KeywordTopicClassifier, PromptClassifier, TopicClassifier,
};
use oversight_core::domain::{Question, RaterId, StudyId};
use oversight_core::evidence::ArticleFetcher;
use oversight_core::llm::{
    AuditLog, Gateway, HashEmbedder, OpenAiCompatibleProvider, Provider, ResponseCache, RetryPolicy, ScriptSpec,
    ScriptedProvider,
};
use oversight_core::pipeline::{
    answer_id_for, read_manifest, run_study_pipeline, write_manifest, AnswerVariant, BundleStatus, Pipeline,
};
use oversight_core::service::{
    read_events, simulate_study, write_events, AssistanceMode, RatingService, ServiceState, StudyConfig, SystemClock,
};
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

/// Why a command stopped. Configuration problems exit with 2, everything
/// else with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failed(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_invalid",
            CliError::Failed(_) => "subcommand_failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => f.write_str(m),
            CliError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// What a command produced, recorded in its status manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub details: Value,
    /// Set when outputs were written but the command must still fail.
    pub failure: Option<String>,
}

#[derive(Serialize)]
struct StatusManifest<'a> {
    command: &'a str,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    outputs: Vec<String>,
    details: &'a Value,
}

/// Writes `out_dir/status/<command>.json`. Never fails the command itself.
pub fn write_status(out_dir: &Path, command: &str, result: &Result<Outcome, CliError>) {
    let empty = Value::Null;
    let (ok, error, outputs, details) = match result {
        Ok(o) => (
            o.failure.is_none(),
            o.failure.clone(),
            o.outputs.iter().map(|p| p.display().to_string()).collect(),
            &o.details,
        ),
        Err(e) => (false, Some(format!("{}: {e}", e.code())), Vec::new(), &empty),
    };
    let manifest = StatusManifest { command, ok, error, outputs, details };
    let dir = out_dir.join("status");
    let written = std::fs::create_dir_all(&dir).and_then(|_| {
        let text = serde_json::to_string_pretty(&manifest).expect("status serializes") + "\n";
        std::fs::write(dir.join(format!("{}.json", command.replace(' ', "_"))), text)
    });
    if let Err(e) = written {
        tracing::warn!(%e, "could not write status manifest");
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(CliError::Failed)
}

pub fn build_gateway(config: &Config) -> Result<Gateway, CliError> {
    let retry = RetryPolicy {
        max_attempts: config.llm.max_attempts,
        base_delay: Duration::from_millis(config.llm.retry_base_ms),
    };
    let mut gateway = Gateway::new().with_retry(retry);
    for p in &config.providers {
        let provider: Arc<dyn Provider> = match p.kind {
            ProviderKind::Openai => {
                let api_key = match &p.api_key_env {
                    Some(var) => Some(
                        std::env::var(var)
                            .map_err(|_| config_err(format!("provider `{}`: environment variable {var} is not set", p.id)))?,
                    ),
                    None => None,
                };
                Arc::new(OpenAiCompatibleProvider::new(
                    p.endpoint.clone().unwrap_or_default(),
                    p.model.clone().unwrap_or_default(),
                    p.embedding_model.clone(),
                    api_key,
                    Duration::from_secs(p.timeout_secs),
                ))
            }
            ProviderKind::Scripted => {
                let path = config.resolve(p.script.as_deref().expect("validated"));
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| config_err(format!("provider `{}`: {}: {e}", p.id, path.display())))?;
                let spec: ScriptSpec = serde_json::from_str(&text)
                    .map_err(|e| config_err(format!("provider `{}`: {}: {e}", p.id, path.display())))?;
                Arc::new(ScriptedProvider::from_spec(&spec))
            }
            ProviderKind::HashEmbedder => Arc::new(HashEmbedder::default()),
        };
        gateway = gateway.with_provider(p.id.clone(), provider, p.concurrency);
    }
    if let Some(dir) = &config.llm.cache_dir {
        let cache = ResponseCache::on_disk(config.resolve(dir)).context("opening the LLM cache")?;
        gateway = gateway.with_cache(cache);
    }
    if let Some(path) = &config.llm.audit_log {
        let audit = AuditLog::to_file(config.resolve(path)).context("opening the audit log")?;
        gateway = gateway.with_audit(audit);
    }
    Ok(gateway)
}

fn require_provider(gateway: &Gateway, id: Option<&String>, what: &str) -> Result<String, CliError> {
    let id = id.ok_or_else(|| config_err(format!("{what} requires a provider id")))?;
    if !gateway.has_provider(id) {
        return Err(config_err(format!("{what}: provider `{id}` is not configured")));
    }
    Ok(id.clone())
}

pub fn corpus_build(config: &Config, seed: u64) -> Result<Outcome, CliError> {
    let c = &config.corpus;
    let input = c.input.as_ref().ok_or_else(|| config_err("corpus.input is not set"))?;
    let input = config.resolve(input);
    let text = std::fs::read_to_string(&input).map_err(|e| config_err(format!("{}: {e}", input.display())))?;
    let imported = import_questions(&text, &c.id_prefix).map_err(|e| config_err(format!("{}: {e}", input.display())))?;
    let input_count = imported.len();
    let gateway = build_gateway(config)?;

    let keyword = (
        KeywordClassifier::climate_default(),
        KeywordClassifier::context_default(),
        KeywordClassifier::specific_default(),
    );
    let prompt_provider = match (c.filters, c.labels) {
        (ClassifierMode::Prompt, _) | (_, ClassifierMode::Prompt) => {
            Some(require_provider(&gateway, c.classifier_provider.as_ref(), "prompt classifiers")?)
        }
        _ => None,
    };
    let prompted = prompt_provider.as_ref().map(|p| {
        (
            PromptClassifier::new(ClassifierId::ClimateRelated, &gateway, p.clone()),
            PromptClassifier::new(ClassifierId::ContextDependent, &gateway, p.clone()),
            PromptClassifier::new(ClassifierId::Specific, &gateway, p.clone()),
        )
    });
    let embedding = match &c.embedding_provider {
        Some(_) => Some(require_provider(&gateway, c.embedding_provider.as_ref(), "deduplication")?),
        None => None,
    };
    let filters: Option<[&dyn BinaryClassifier; 3]> = match c.filters {
        ClassifierMode::None => None,
        ClassifierMode::Keyword => Some([&keyword.0, &keyword.1, &keyword.2]),
        ClassifierMode::Prompt => prompted.as_ref().map(|p| [&p.0 as &dyn BinaryClassifier, &p.1, &p.2]),
    };
    let cascade = Cascade {
        climate: filters.map(|f| f[0]),
        dedup: embedding.as_deref().map(|p| (&gateway, p, c.dedup_threshold)),
        context: filters.map(|f| f[1]),
        specific: filters.map(|f| f[2]),
    };
    let mut outcome = cascade.run(imported);

    let keyword_topic = KeywordTopicClassifier::default();
    let keyword_causal = KeywordClassifier::causal_default();
    let prompt_labels = prompt_provider.as_ref().map(|p| {
        (
            PromptClassifier::new(ClassifierId::Topic, &gateway, p.clone()),
            PromptClassifier::new(ClassifierId::Causal, &gateway, p.clone()),
        )
    });
    let label_warnings = match (c.labels, &prompt_labels) {
        (ClassifierMode::None, _) => Vec::new(),
        (ClassifierMode::Prompt, Some((t, k))) => label_strata(&mut outcome.survivors, t as &dyn TopicClassifier, k),
        _ => label_strata(&mut outcome.survivors, &keyword_topic, &keyword_causal),
    };
    let sample = stratified_sample(&outcome.survivors, c.per_cell, seed);

    let out = config.out_dir();
    ensure_dir(&out)?;
    let sample_path = out.join("sample.jsonl");
    let questions: Vec<Question> = sample.questions.iter().map(|q| q.to_question()).collect();
    write_jsonl(&sample_path, &questions)?;
    let removed_path = out.join("removed.jsonl");
    write_jsonl(&removed_path, &outcome.removed)?;
    let report_path = out.join("corpus.json");
    let details = json!({
        "seed": seed,
        "per_cell": c.per_cell,
        "input": input_count,
        "survivors": outcome.survivors.len(),
        "removed_per_filter": outcome.removed_per_filter,
        "fail_open": outcome.fail_open,
        "sampled": questions.len(),
        "unlabeled": sample.unlabeled,
        "cells": sample.cells,
        "warnings": outcome.warnings.iter().chain(&label_warnings).chain(&sample.warnings).collect::<Vec<_>>(),
    });
    write_json(&report_path, &details)?;
    println!("sampled {} of {} questions into {}", questions.len(), input_count, sample_path.display());
    Ok(Outcome { outputs: vec![sample_path, removed_path, report_path], details, failure: None })
}

fn load_questions(config: &Config) -> Result<Vec<Question>, CliError> {
    let path = config.questions();
    let text = std::fs::read_to_string(&path).map_err(|e| config_err(format!("questions {}: {e}", path.display())))?;
    let imported =
        import_questions(&text, &config.corpus.id_prefix).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ok(imported.iter().map(|q| q.to_question()).collect())
}

fn require_systems(config: &Config) -> Result<(), CliError> {
    if config.pipeline.systems.is_empty() {
        return Err(config_err("pipeline.systems is empty"));
    }
    Ok(())
}

pub fn answers_generate(config: &Config, variant: AnswerVariant) -> Result<Outcome, CliError> {
    require_systems(config)?;
    let questions = load_questions(config)?;
    let gateway = build_gateway(config)?;
    for s in &config.pipeline.systems {
        if !gateway.has_provider(&s.provider_id) {
            return Err(config_err(format!("system `{}` uses unknown provider `{}`", s.id, s.provider_id)));
        }
    }
    let pipeline = Pipeline::new(&gateway, config.pipeline.aux_provider.clone());
    let mut rows = Vec::new();
    let mut failed = 0;
    for q in &questions {
        for s in &config.pipeline.systems {
            let answer_id = answer_id_for(&q.id, &s.id);
            let row = match pipeline.generate_answer(&s.provider_id, &q.text, variant, s.temperature) {
                Ok(a) => json!({"answer_id": answer_id, "question_id": q.id, "system_id": s.id, "answer": a}),
                Err(e) => {
                    failed += 1;
                    json!({"answer_id": answer_id, "question_id": q.id, "system_id": s.id,
                           "error": {"code": e.code(), "message": e.to_string()}})
                }
            };
            rows.push(row);
        }
    }
    let out = config.out_dir();
    ensure_dir(&out)?;
    let path = out.join("answers.jsonl");
    write_jsonl(&path, &rows)?;
    let details = json!({"answers": rows.len(), "failed": failed, "variant": variant});
    println!("wrote {} answers ({} failed) to {}", rows.len(), failed, path.display());
    let failure = (failed > 0).then(|| format!("{failed} of {} answers failed", rows.len()));
    Ok(Outcome { outputs: vec![path], details, failure })
}

pub fn pipeline_run(config: &Config, variant: AnswerVariant) -> Result<Outcome, CliError> {
    require_systems(config)?;
    let questions = load_questions(config)?;
    let gateway = build_gateway(config)?;
    let mut pipeline_config = config.pipeline.to_config();
    pipeline_config.variant = variant;
    let mut fetcher = ArticleFetcher::new(pipeline_config.wiki.clone()).with_retry(RetryPolicy {
        max_attempts: config.llm.max_attempts,
        base_delay: Duration::from_millis(config.llm.retry_base_ms),
    });
    if let Some(dir) = &config.pipeline.article_cache {
        fetcher = fetcher.with_cache_dir(config.resolve(dir)).context("opening the article cache")?;
    }
    let bundles = run_study_pipeline(&gateway, &fetcher, &questions, &config.pipeline.systems, &pipeline_config)
        .map_err(config_err)?;

    let out = config.out_dir();
    ensure_dir(&out)?;
    let manifest = config.manifest();
    if let Some(parent) = manifest.parent() {
        ensure_dir(parent)?;
    }
    write_manifest(&manifest, &bundles).with_context(|| format!("writing {}", manifest.display()))?;
    let per_bundle: Vec<Value> = bundles
        .iter()
        .map(|b| {
            json!({
                "answer_id": b.answer_id,
                "status": b.status,
                "stages": b.stages,
                "warnings": b.warnings.iter().map(|w| format!("{:?}:{}", w.stage, w.code).to_lowercase()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let count = |s: BundleStatus| bundles.iter().filter(|b| b.status == s).count();
    let failed = count(BundleStatus::Failed);
    let details = json!({
        "bundles": bundles.len(),
        "complete": count(BundleStatus::Complete),
        "partial": count(BundleStatus::Partial),
        "failed": failed,
        "variant": variant,
        "per_bundle": per_bundle,
    });
    let status_path = out.join("pipeline.json");
    write_json(&status_path, &details)?;
    println!(
        "wrote {} bundles to {} ({} complete, {} partial, {} failed)",
        bundles.len(),
        manifest.display(),
        count(BundleStatus::Complete),
        count(BundleStatus::Partial),
        failed
    );
    let failure = (failed > 0).then(|| format!("{failed} of {} bundles failed", bundles.len()));
    Ok(Outcome { outputs: vec![manifest, status_path], details, failure })
}

/// Opens the event log and makes sure the configured study and pre-admitted
/// raters exist. Safe to call repeatedly.
pub fn prepare_service(config: &Config, assistance: AssistanceMode) -> Result<RatingService, CliError> {
    let log = config.event_log();
    if let Some(parent) = log.parent() {
        ensure_dir(parent)?;
    }
    let mut service = RatingService::open(&log, SystemClock).with_context(|| format!("opening {}", log.display()))?;
    let study_id = StudyId(config.study.id.clone());
    match service.state().studies.get(&study_id) {
        Some(existing) if existing.config.assistance_mode != assistance => {
            return Err(config_err(format!(
                "study `{study_id}` already exists with assistance mode {:?}; the mode is fixed for its lifetime",
                existing.config.assistance_mode
            )));
        }
        Some(_) => {}
        None => {
            let manifest = config.manifest();
            let bundles =
                read_manifest(&manifest).map_err(|e| config_err(format!("manifest {}: {e}", manifest.display())))?;
            let mut study = StudyConfig::new(study_id.clone(), assistance);
            study.name = config.study.name.clone().unwrap_or_else(|| study_id.to_string());
            study.raters_per_answer = config.study.raters_per_answer;
            study.flow = config.study.flow;
            study.expiry_secs = config.study.expiry_secs;
            if let Some(q) = &config.study.screening_questions {
                study.screening_questions = q.clone();
            }
            service.create_study(study, bundles).map_err(|e| CliError::Failed(anyhow!(e)))?;
        }
    }
    for rater in &config.study.admitted {
        let id = RaterId(rater.clone());
        if !service.state().raters.get(&id).is_some_and(|r| r.admitted) {
            service.admit_rater(&id).map_err(|e| CliError::Failed(anyhow!(e)))?;
        }
    }
    Ok(service)
}

pub fn load_tokens(config: &Config) -> Result<oversight_server::Tokens, CliError> {
    let path = config.study.tokens.as_ref().ok_or_else(|| config_err("study.tokens is not set"))?;
    let path = config.resolve(path);
    let text = std::fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let table: std::collections::HashMap<String, String> =
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ok(table.into_iter().map(|(token, rater)| (token, RaterId(rater))).collect())
}

pub fn serve(config: &Config, assistance: AssistanceMode, bind: Option<&str>) -> Result<Outcome, CliError> {
    let tokens = load_tokens(config)?;
    let service = prepare_service(config, assistance)?;
    let bind = bind.unwrap_or(&config.study.bind);
    let addr: std::net::SocketAddr = bind.parse().map_err(|e| config_err(format!("bind address `{bind}`: {e}")))?;
    let state = oversight_server::AppState::new(service, tokens);
    let runtime = tokio::runtime::Runtime::new().context("starting the runtime")?;
    runtime.block_on(oversight_server::serve(addr, state)).context("serving")?;
    Ok(Outcome::default())
}

fn study_ids(names: &[String]) -> Vec<StudyId> {
    names.iter().map(|s| StudyId(s.clone())).collect()
}

fn load_events(config: &Config) -> Result<Vec<oversight_core::service::Event>, CliError> {
    let log = config.event_log();
    read_events(&log).map_err(|e| CliError::Failed(anyhow!("reading {}: {e}", log.display())))
}

pub fn analyze(config: &Config, seed: u64, resamples: Option<usize>) -> Result<Outcome, CliError> {
    let events = load_events(config)?;
    let mut options = config.analysis.report.clone();
    options.seed = seed;
    if let Some(n) = resamples {
        if n == 0 {
            return Err(config_err("--resamples must be at least 1"));
        }
        options.resamples = n;
    }
    let report = build_report_from_events(&events, &study_ids(&config.analysis.studies), &options)
        .map_err(|e| CliError::Failed(anyhow!("{}: {e}", e.code())))?;
    let out = config.out_dir();
    ensure_dir(&out)?;
    let json_path = out.join("report.json");
    std::fs::write(&json_path, report.to_json()).context("writing report.json")?;
    let text_path = out.join("report.txt");
    std::fs::write(&text_path, render_text(&report)).context("writing report.txt")?;
    println!("wrote {} and {}", json_path.display(), text_path.display());
    let details = json!({"records": report.records, "systems": report.systems, "warnings": report.warnings.len()});
    Ok(Outcome { outputs: vec![json_path, text_path], details, failure: None })
}

pub fn validate(config: &Config) -> Result<Outcome, CliError> {
    let path = config.validate.seeded.as_ref().ok_or_else(|| config_err("validate.seeded is not set"))?;
    let path = config.resolve(path);
    let text = std::fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let seeded: Vec<SeededItem> =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let events = load_events(config)?;
    let state = ServiceState::replay(&events).map_err(|e| CliError::Failed(anyhow!(e)))?;
    let studies = if config.validate.studies.is_empty() {
        state.study_order.clone()
    } else {
        study_ids(&config.validate.studies)
    };
    let mut records = Vec::new();
    for s in &studies {
        records.extend(state.records(s));
    }
    let rates = detection_rates(&seeded, &records).map_err(|e| CliError::Failed(anyhow!("{}: {e}", e.code())))?;
    let out = config.out_dir();
    ensure_dir(&out)?;
    let out_path = out.join("validation.json");
    let details = json!({
        "items": rates.items,
        "any": rates.any,
        "majority": rates.majority,
        "all": rates.all,
        "table": {
            "any": format!("{:.2}", rates.any),
            "majority": format!("{:.2}", rates.majority),
            "all": format!("{:.2}", rates.all),
        },
    });
    write_json(&out_path, &details)?;
    println!(
        "detection over {} seeded items: any {:.2}%, majority {:.2}%, all {:.2}%",
        rates.items, rates.any, rates.majority, rates.all
    );
    Ok(Outcome { outputs: vec![out_path], details, failure: None })
}

pub fn simulate(config: &Config, seed: Option<u64>, assistance: Option<AssistanceMode>) -> Result<Outcome, CliError> {
    let mut spec = config.simulation.clone();
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(a) = assistance {
        spec.assistance_mode = a;
    }
    if spec.systems.is_empty() || spec.questions == 0 || spec.raters < spec.raters_per_answer || spec.raters_per_answer == 0 {
        return Err(config_err("simulation needs systems, questions and at least raters_per_answer raters"));
    }
    let service = simulate_study(&spec).map_err(|e| CliError::Failed(anyhow!(e)))?;
    let log = config.event_log();
    if let Some(parent) = log.parent() {
        ensure_dir(parent)?;
    }
    write_events(&log, service.events()).with_context(|| format!("writing {}", log.display()))?;
    println!("wrote {} events to {}", service.events().len(), log.display());
    let details = json!({"events": service.events().len(), "seed": spec.seed, "studies": service.state().study_order});
    Ok(Outcome { outputs: vec![log], details, failure: None })
}
