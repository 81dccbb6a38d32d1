mod common;

use common::*;
use oversight_core::pipeline::{AnswerBundle, BundleStatus, Critique, StageStatus, NO_CRITIQUE};
use oversight_core::domain::Dimension;

fn bundles(manifest: &str) -> Vec<AnswerBundle> {
    manifest.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn manifest_matches_golden_and_reruns_from_cache() {
    let server = start_wiki();
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("llm");
    let first = golden_run(&server, &cache, &dir.path().join("a.jsonl"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(GOLDEN_MANIFEST, first.manifest.replace(&first.base, BASE_PLACEHOLDER)).unwrap();
    }
    assert_eq!(first.manifest, expected_manifest(&first.base));

    let second = golden_run(&server, &cache, &dir.path().join("b.jsonl"));
    assert_eq!(second.manifest, first.manifest);
    assert_eq!(second.provider_calls, 0, "rerun must be served from the cache");
}

#[test]
fn golden_bundle_contents() {
    let server = start_wiki();
    let dir = tempfile::tempdir().unwrap();
    let run = golden_run(&server, &dir.path().join("llm"), &dir.path().join("m.jsonl"));
    let b = bundles(&run.manifest);
    assert_eq!(b.len(), 2);

    let sea = &b[0];
    assert_eq!(sea.status, BundleStatus::Complete);
    let kps: Vec<&str> = sea.keypoints.iter().map(|k| k.text.as_str()).collect();
    assert_eq!(kps, [KP1, KP2]);
    assert!(sea.warnings.iter().any(|w| w.code == "not_verbatim" && w.detail.contains("Glaciers are growing")));
    let top: Vec<Vec<usize>> =
        sea.evidence.iter().map(|e| e.passages.iter().map(|p| p.paragraph_index).collect()).collect();
    assert_eq!(top, [vec![3, 0, 2], vec![1, 0, 2]]);
    assert!(sea.warnings.iter().any(|w| w.code == "non_numeric_score"));
    assert!(!run.manifest.contains("Infobox text"));
    assert_eq!(sea.article.as_ref().unwrap().title, "Sea level rise");
    let style = sea.assistance_for(Dimension::Style).unwrap();
    assert_eq!(style.critique, Critique::NoCritique);
    let accuracy = sea.assistance_for(Dimension::Accuracy).unwrap();
    assert!(accuracy.grounded);
    assert!(accuracy.critique.text().unwrap().contains(PARAGRAPHS[1]));
    assert!(!sea.assistance_for(Dimension::Tone).unwrap().grounded);

    let coral = &b[1];
    assert_eq!(coral.stages.fetch, StageStatus::Skipped);
    assert!(coral.evidence.is_empty());
    assert!(coral.assistance.iter().all(|a| a.critique == Critique::NoCritique));
    assert_eq!(run.manifest.matches("\"critique\":\"no_critique\"").count(), 9);
    assert!(!run.manifest.contains(NO_CRITIQUE), "the sentinel is stored as a marker, never as critique text");
}
