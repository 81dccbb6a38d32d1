//! Shared fixtures: a local wiki server and the scripted two-question
//! pipeline run used by the golden manifest checks.

#![allow(dead_code)]

use oversight_core::domain::{Dimension, Question};
use oversight_core::evidence::{ArticleFetcher, WikiPattern};
use oversight_core::llm::{Gateway, ResponseCache, RetryPolicy, ScriptedProvider};
use oversight_core::pipeline::{run_study_pipeline, write_manifest, AnswerVariant, PipelineConfig, SystemSpec};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;

/// Minimal HTTP/1.1 server answering GET requests from a path → HTML map.
pub struct WikiServer {
    pub base: String,
}

impl WikiServer {
    pub fn start(pages: HashMap<String, String>) -> WikiServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind fixture server");
        let base = format!("http://{}", listener.local_addr().unwrap());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let mut line = String::new();
                while reader.read_line(&mut line).is_ok_and(|n| n > 0) && line != "\r\n" {
                    line.clear();
                }
                let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let (status, body) = match pages.get(&path) {
                    Some(html) => ("200 OK", html.clone()),
                    None => ("404 Not Found", "<html><body><p>missing</p></body></html>".to_string()),
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Type: text/html; charset=utf-8\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        WikiServer { base }
    }
}

pub const Q1: &str = "Why are sea levels rising?";
pub const Q2: &str = "How does climate change affect coral reefs?";
pub const A1: &str = "Sea levels are rising because oceans warm and expand. Melting glaciers add water to the oceans. The rate has accelerated in recent decades.";
pub const A2: &str = "Warmer water causes coral bleaching. Ocean acidification slows reef growth.";
pub const KP1: &str = "Sea levels are rising because oceans warm and expand.";
pub const KP2: &str = "Melting glaciers add water to the oceans.";

pub const PARAGRAPHS: [&str; 5] = [
    "Global mean sea level has risen by about 20 centimetres since 1900, mostly through thermal expansion of warming seawater.",
    "Meltwater from glaciers and ice sheets adds mass to the ocean and is now the largest contributor to the rise.",
    "Warmer water occupies more volume, so ocean heat uptake translates directly into higher sea levels.",
    "Thermal expansion of the oceans as they warm is a principal cause of rising sea levels.",
    "The article also describes early tide gauge records kept in Amsterdam.",
];

/// Passage scores per keypoint. Ties at 80 and 30 exercise the earlier-index
/// tie-break; "useful" is unparseable and scores 0 with a warning.
pub const SCORES: [[&str; 5]; 2] = [["80", "20", "80", "95", "10"], ["30", "90", "30", "30", "useful"]];

pub fn article_html() -> String {
    let mut html = String::from(
        "<html><head><title>Sea level rise</title></head><body><div id=\"mw-content-text\">\
         <table class=\"infobox\"><tr><td><p>Infobox text that must be dropped.</p></td></tr></table>",
    );
    for p in PARAGRAPHS {
        html.push_str(&format!("<p>{p}</p>\n"));
    }
    html.push_str("</div></body></html>");
    html
}

pub fn script(base: &str) -> ScriptedProvider {
    let mut p = ScriptedProvider::new()
        .rule(["Answer each question", &format!("Question: {Q1}")], &[A1])
        .rule(["Answer each question", &format!("Question: {Q2}")], &[A2])
        .rule(
            ["Mention 1 to 3 key statements", &format!("Question: {Q1}")],
            &[&format!("{KP1}\nGlaciers are growing everywhere."), &format!("1. {KP1}\n2. {KP2}")],
        )
        .rule(["Mention 1 to 3 key statements", &format!("Question: {Q2}")], &["Warmer water causes coral bleaching."])
        .rule(["Please provide a Wikipedia article", &format!("Question: {Q1}")], &[&format!("{base}/wiki/Sea_level_rise")])
        .rule(["Please provide a Wikipedia article", &format!("Question: {Q2}")], &["No URL"]);
    for (kp, scores) in [KP1, KP2].iter().zip(SCORES) {
        for (para, score) in PARAGRAPHS.iter().zip(scores) {
            p = p.rule([format!("Statement: {kp} Passage: {para}")], &[score]);
        }
    }
    p.rule(
        ["express your disagreement", &format!("Question: {Q1}"), &format!("Statement: {}", Dimension::Style.assistance_statement())],
        &["No Critique"],
    )
    .rule(
        ["express your disagreement", &format!("Question: {Q1}"), "Paragraphs:"],
        &[&format!("The answer omits that \"{}\"", PARAGRAPHS[1])],
    )
    .rule(["express your disagreement", &format!("Question: {Q1}")], &["The final sentence gives no figure for the acceleration."])
    .fallback("No Critique")
}

pub fn questions() -> Vec<Question> {
    vec![Question::new("q1", Q1), Question::new("q2", Q2)]
}

pub struct GoldenRun {
    pub manifest: String,
    pub base: String,
    pub provider_calls: usize,
}

/// Runs the two-question, one-system study against the fixture wiki and the
/// scripted model, with the LLM cache in `cache_dir`.
pub fn golden_run(server: &WikiServer, cache_dir: &Path, out: &Path) -> GoldenRun {
    let provider = Arc::new(script(&server.base));
    let gateway = Gateway::new()
        .with_provider("mock", provider.clone(), 4)
        .with_cache(ResponseCache::on_disk(cache_dir).unwrap())
        .with_retry(RetryPolicy::immediate());
    let pattern = WikiPattern::for_host("127.0.0.1");
    let fetcher = ArticleFetcher::new(pattern.clone()).with_retry(RetryPolicy::immediate());
    let systems = [SystemSpec { id: "mock-system".into(), provider_id: "mock".into(), temperature: 0.0 }];
    let config = PipelineConfig {
        aux_provider: "mock".into(),
        variant: AnswerVariant::Basic,
        width: 2,
        wiki: pattern,
        ..Default::default()
    };
    let bundles = run_study_pipeline(&gateway, &fetcher, &questions(), &systems, &config).unwrap();
    write_manifest(out, &bundles).unwrap();
    GoldenRun {
        manifest: std::fs::read_to_string(out).unwrap(),
        base: server.base.clone(),
        provider_calls: provider.calls(),
    }
}

pub fn start_wiki() -> WikiServer {
    WikiServer::start(HashMap::from([("/wiki/Sea_level_rise".to_string(), article_html())]))
}

pub const GOLDEN_MANIFEST: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/pipeline_manifest.jsonl");
pub const BASE_PLACEHOLDER: &str = "{WIKI}";

/// The golden manifest with the placeholder replaced by this run's server base.
pub fn expected_manifest(base: &str) -> String {
    std::fs::read_to_string(GOLDEN_MANIFEST).expect("golden manifest").replace(BASE_PLACEHOLDER, base)
}
