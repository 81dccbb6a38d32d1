//! Acceptance gate: one PASS/FAIL line per criterion, each with its own
//! runtime budget. Runs without the test harness so the lines always print.

mod common;

use oversight_core::analysis::{
    aggregate_ais, bootstrap_mean_ci, build_report_from_events, detection_rates, krippendorff_alpha,
    mean_pairwise_distance, welch_t_test, Metric, RatingMatrix, ReportOptions, SeededItem, Symbol,
};
use oversight_core::corpus::{stratified_sample, CandidateQuestion, Topic};
use oversight_core::domain::{
    catalog, validate_rating, AnswerId, AnswerSupport, Dimension, DimensionRating, KeypointSupport, LikertValue,
    RaterId, RatingRecord, ScreeningResult, OTHER_TEXT_MAX_CHARS,
};
use oversight_core::service::{read_events, simulate_study, write_events, AssistanceMode, ServiceState, SimulationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 10] = [
        ("ais_aggregation", 1, ais_aggregation),
        ("alpha_matches_oracle", 30, alpha_matches_oracle),
        ("mean_pairwise_distance", 30, mean_pairwise),
        ("welch_symbol_mapping", 30, welch_symbols),
        ("bootstrap_ci", 60, bootstrap),
        ("detection_rates", 30, detection),
        ("pipeline_golden_path", 10, pipeline_golden),
        ("rating_validation", 60, rating_validation),
        ("event_sourcing_round_trip", 60, event_sourcing),
        ("stratified_sampler_108", 30, sampler),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let elapsed = start.elapsed();
        let result = result.and_then(|_| {
            if elapsed > Duration::from_secs(budget) {
                Err(format!("took {elapsed:?}, budget {budget} s"))
            } else {
                Ok(())
            }
        });
        match result {
            Ok(()) => println!("PASS {name} ({} ms)", elapsed.as_millis()),
            Err(e) => {
                failed += 1;
                println!("FAIL {name} ({} ms): {e}", elapsed.as_millis());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// --- attribution -----------------------------------------------------------

fn ais_rule(labels: &[KeypointSupport]) -> AnswerSupport {
    let supported = |l: &KeypointSupport| *l == KeypointSupport::Fully;
    let unsupported = |l: &KeypointSupport| matches!(l, KeypointSupport::NotSupported | KeypointSupport::Contradicts);
    if labels.iter().all(supported) {
        AnswerSupport::Fully
    } else if labels.iter().all(unsupported) {
        AnswerSupport::NotSupported
    } else {
        AnswerSupport::Partially
    }
}

fn multisets(len: usize, from: usize, prefix: &mut Vec<KeypointSupport>, out: &mut Vec<Vec<KeypointSupport>>) {
    if prefix.len() == len {
        out.push(prefix.clone());
        return;
    }
    for i in from..KeypointSupport::ALL.len() {
        prefix.push(KeypointSupport::ALL[i]);
        multisets(len, i, prefix, out);
        prefix.pop();
    }
}

fn ais_aggregation() -> Check {
    use KeypointSupport::*;
    let fixture = aggregate_ais(&[NotSupported, Fully, Fully]).map_err(|e| e.to_string())?;
    ensure!(fixture == AnswerSupport::Partially, "fixture aggregated to {fixture:?}");
    let mut all = Vec::new();
    for len in 1..=4 {
        multisets(len, 0, &mut Vec::new(), &mut all);
    }
    ensure!(all.len() == 4 + 10 + 20 + 35, "enumerated {} multisets", all.len());
    for labels in &all {
        let got = aggregate_ais(labels).map_err(|e| e.to_string())?;
        ensure!(got == ais_rule(labels), "{labels:?}: {got:?} vs {:?}", ais_rule(labels));
    }
    ensure!(aggregate_ais(&[]).is_err(), "empty label list accepted");
    Ok(())
}

// --- agreement -------------------------------------------------------------

/// Pairwise-sum form of alpha: observed disagreement averaged over ordered
/// within-unit pairs, expected over all ordered pairs of pairable values.
fn alpha_oracle(cells: &[Vec<Option<f64>>], metric: Metric) -> Option<Option<f64>> {
    let units: Vec<Vec<f64>> =
        cells.iter().map(|r| r.iter().flatten().copied().collect::<Vec<_>>()).filter(|u| u.len() >= 2).collect();
    let pool: Vec<f64> = units.iter().flatten().copied().collect();
    if pool.is_empty() {
        return None;
    }
    let n = pool.len() as f64;
    let count = |v: f64| pool.iter().filter(|&&x| x == v).count() as f64;
    let delta = |a: f64, b: f64| -> f64 {
        match metric {
            Metric::Nominal => f64::from(u8::from(a != b)),
            Metric::Interval => (a - b).powi(2),
            Metric::Ordinal => {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let mut distinct: Vec<f64> = pool.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                let between: f64 = distinct.iter().map(|&g| count(g)).sum();
                (between - (count(lo) + count(hi)) / 2.0).powi(2)
            }
        }
    };
    let mut observed = 0.0;
    for u in &units {
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    s += delta(u[i], u[j]);
                }
            }
        }
        observed += s / (u.len() - 1) as f64;
    }
    observed /= n;
    let mut expected = 0.0;
    for i in 0..pool.len() {
        for j in 0..pool.len() {
            if i != j {
                expected += delta(pool[i], pool[j]);
            }
        }
    }
    expected /= n * (n - 1.0);
    Some((expected > 0.0).then(|| 1.0 - observed / expected))
}

fn random_grid(rng: &mut ChaCha8Rng) -> Vec<Vec<Option<f64>>> {
    let items = rng.random_range(1..=6);
    let raters = rng.random_range(1..=4);
    (0..items)
        .map(|_| {
            (0..raters)
                .map(|_| rng.random_bool(0.75).then(|| f64::from(rng.random_range(1u8..=5))))
                .collect()
        })
        .collect()
}

fn alpha_matches_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    for case in 0..1000 {
        let cells = random_grid(&mut rng);
        let metric = [Metric::Nominal, Metric::Ordinal, Metric::Interval][case % 3];
        let matrix = RatingMatrix::from_rows(cells.clone());
        let got = krippendorff_alpha(&matrix, metric).ok().map(|r| r.alpha);
        let want = alpha_oracle(&cells, metric);
        match (got, want) {
            (Some(Some(a)), Some(Some(b))) => {
                ensure!((a - b).abs() <= 1e-9, "case {case} {metric:?}: {a} vs oracle {b} on {cells:?}");
                compared += 1;
            }
            (Some(None), Some(None)) | (None, None) => {}
            (g, w) => return Err(format!("case {case} {metric:?}: {g:?} vs oracle {w:?} on {cells:?}")),
        }
    }
    ensure!(compared > 500, "only {compared} grids had a defined alpha");
    Ok(())
}

fn mean_pairwise() -> Check {
    let single = RatingMatrix::from_rows(vec![vec![Some(1.0), Some(3.0), Some(5.0)]]);
    let mpd = mean_pairwise_distance(&single).map_err(|e| e.to_string())?;
    ensure!((mpd - 8.0 / 3.0).abs() <= 1e-9, "mpd(1,3,5) = {mpd}");
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..1000 {
        let cells = random_grid(&mut rng);
        let shift = f64::from(rng.random_range(-10i8..=10));
        let shifted: Vec<Vec<Option<f64>>> =
            cells.iter().map(|r| r.iter().map(|v| v.map(|x| x + shift)).collect()).collect();
        let a = mean_pairwise_distance(&RatingMatrix::from_rows(cells.clone())).ok();
        let b = mean_pairwise_distance(&RatingMatrix::from_rows(shifted)).ok();
        match (a, b) {
            (Some(a), Some(b)) => ensure!((a - b).abs() <= 1e-9, "case {case}: {a} vs {b} after shift {shift}"),
            (None, None) => {}
            (a, b) => return Err(format!("case {case}: {a:?} vs {b:?}")),
        }
    }
    Ok(())
}

// --- significance and intervals ---------------------------------------------

fn welch_symbols() -> Check {
    let cases = [
        (0.004, 1.0, Symbol::MuchBetter),
        (0.004, -1.0, Symbol::MuchWorse),
        (0.03, 0.5, Symbol::Better),
        (0.03, -0.5, Symbol::Worse),
        (0.2, 2.0, Symbol::Same),
        (0.2, -2.0, Symbol::Same),
        (0.01, 1.0, Symbol::Better),
        (0.01, -1.0, Symbol::Worse),
        (0.05, 1.0, Symbol::Same),
        (0.009_999, 1.0, Symbol::MuchBetter),
        (0.049_999, -1.0, Symbol::Worse),
    ];
    for (p, diff, want) in cases {
        let got = Symbol::from_test(p, diff);
        ensure!(got == want, "p={p}, diff={diff}: {got:?}, want {want:?}");
    }
    for sample in [vec![3.0, 4.0, 5.0, 2.0], vec![4.0, 4.0, 4.0]] {
        let w = welch_t_test(&sample, &sample).map_err(|e| e.to_string())?;
        let s = Symbol::from_test(w.p_value, w.mean_diff);
        ensure!(s == Symbol::Same, "identical samples {sample:?} gave {s:?}");
    }
    let w = welch_t_test(&[5.0, 5.0, 4.0, 5.0, 5.0, 4.0], &[1.0, 2.0, 1.0, 1.0, 2.0, 1.0]).map_err(|e| e.to_string())?;
    ensure!(Symbol::from_test(w.p_value, w.mean_diff) == Symbol::MuchBetter, "clear difference gave p={}", w.p_value);
    Ok(())
}

fn bootstrap() -> Check {
    let ci = bootstrap_mean_ci(&[3.0; 12], 500, 1).map_err(|e| e.to_string())?;
    ensure!(ci.lo == 3.0 && ci.hi == 3.0 && ci.mean == 3.0, "constant input gave {ci:?}");

    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(95);
    let mut covered = 0;
    for i in 0..1000u64 {
        let sample: Vec<f64> = (0..40).map(|_| normal.sample(&mut rng)).collect();
        let ci = bootstrap_mean_ci(&sample, 1000, i).map_err(|e| e.to_string())?;
        if ci.lo <= 0.0 && 0.0 <= ci.hi {
            covered += 1;
        }
    }
    let coverage = f64::from(covered) / 1000.0;
    ensure!((0.92..=0.98).contains(&coverage), "coverage {coverage}");

    let sample = [1.0, 4.0, 2.0, 5.0, 5.0, 3.0, 2.0];
    let a = bootstrap_mean_ci(&sample, 2000, 42).map_err(|e| e.to_string())?;
    let b = bootstrap_mean_ci(&sample, 2000, 42).map_err(|e| e.to_string())?;
    ensure!(a == b, "same seed gave {a:?} and {b:?}");
    Ok(())
}

// --- detection -------------------------------------------------------------

fn detection() -> Check {
    // 10 items found by all three raters, 8 by two, 7 by one, 5 by none.
    let pattern: Vec<usize> =
        [(3, 10), (2, 8), (1, 7), (0, 5)].iter().flat_map(|&(found, n)| std::iter::repeat_n(found, n)).collect();
    let mut seeded = Vec::new();
    let mut records = Vec::new();
    for (i, &found) in pattern.iter().enumerate() {
        let answer = AnswerId(format!("seeded{i:02}"));
        seeded.push(SeededItem { answer_id: answer.clone(), dimension: Dimension::Accuracy, issue: "incorrect".into() });
        for r in 0..3 {
            let rating = if r < found {
                DimensionRating::new(Dimension::Accuracy, LikertValue::score(2).unwrap()).with_issues(["incorrect"])
            } else {
                DimensionRating::new(Dimension::Accuracy, LikertValue::score(4).unwrap())
            };
            records.push(RatingRecord {
                study_id: "validation".into(),
                question_id: format!("vq{i:02}").into(),
                answer_id: answer.clone(),
                system_id: "seeded".into(),
                rater_id: RaterId(format!("r{r}")),
                screening: ScreeningResult::from_answers(vec![true, true, true], 1000),
                dimension_ratings: vec![rating],
                created_at: Default::default(),
            });
        }
    }
    let rates = detection_rates(&seeded, &records).map_err(|e| e.to_string())?;
    let shown = (format!("{:.2}", rates.any), format!("{:.2}", rates.majority), format!("{:.2}", rates.all));
    ensure!(rates.items == 30, "{} items", rates.items);
    ensure!(shown == ("83.33".into(), "60.00".into(), "33.33".into()), "got {shown:?}");
    Ok(())
}

// --- pipeline --------------------------------------------------------------

fn pipeline_golden() -> Check {
    let server = common::start_wiki();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = common::golden_run(&server, &dir.path().join("llm"), &dir.path().join("manifest.jsonl"));
    ensure!(run.manifest == common::expected_manifest(&run.base), "manifest differs from the golden file");
    let again = common::golden_run(&server, &dir.path().join("llm"), &dir.path().join("again.jsonl"));
    ensure!(again.manifest == run.manifest, "rerun produced a different manifest");
    ensure!(again.provider_calls == 0, "rerun made {} provider calls", again.provider_calls);
    Ok(())
}

// --- rating validation ------------------------------------------------------

fn oracle_accepts(r: &DimensionRating) -> bool {
    let cat = catalog();
    let own: BTreeSet<&str> = cat.issues.iter().filter(|i| i.dimension == r.dimension).map(|i| i.id).collect();
    let entry = cat.dimensions.iter().find(|d| d.id == r.dimension).unwrap();
    let low = matches!(r.score, LikertValue::Score(s) if s.get() <= 2);
    let invariants = (!low || !r.issues.is_empty())
        && (low || r.issues.is_empty())
        && r.issues.iter().all(|i| own.contains(i.as_str()))
        && (r.assistance_helpfulness.is_none() || r.assistance_shown);
    let scales = (r.score != LikertValue::DontKnow || entry.allows_dont_know)
        && r.assistance_helpfulness != Some(LikertValue::DontKnow);
    let free_text =
        r.other_text.as_ref().is_none_or(|t| r.issues.contains("other") && t.chars().count() <= OTHER_TEXT_MAX_CHARS);
    invariants && scales && free_text
}

fn random_likert(rng: &mut ChaCha8Rng) -> LikertValue {
    match rng.random_range(0u8..=5) {
        0 => LikertValue::DontKnow,
        s => LikertValue::score(s).unwrap(),
    }
}

fn random_rating(rng: &mut ChaCha8Rng, pool: &[String]) -> DimensionRating {
    let dimension = Dimension::ALL[rng.random_range(0..Dimension::ALL.len())];
    let mut r = DimensionRating::new(dimension, random_likert(rng));
    if rng.random_bool(0.5) {
        let own: Vec<&str> = dimension.issues().map(|i| i.id).collect();
        r.issues.insert(own[rng.random_range(0..own.len())].to_string());
    }
    if rng.random_bool(0.25) {
        r.issues.insert(pool[rng.random_range(0..pool.len())].clone());
    }
    r.other_text = match rng.random_range(0..10) {
        0 => Some("see notes".into()),
        1 => Some("z".repeat(OTHER_TEXT_MAX_CHARS + 1)),
        _ => None,
    };
    r.assistance_shown = rng.random_bool(0.5);
    r.assistance_helpfulness = rng.random_bool(0.3).then(|| random_likert(rng));
    r
}

fn rating_validation() -> Check {
    let pool: Vec<String> = catalog().issues.iter().map(|i| i.id.to_string()).chain(["not_a_tag".into()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut accepted = 0;
    for case in 0..10_000 {
        let r = random_rating(&mut rng, &pool);
        let ok = validate_rating(&r).is_ok();
        ensure!(ok == oracle_accepts(&r), "case {case}: validator {ok} on {r:?}");
        accepted += usize::from(ok);
        let mut low = r.clone();
        low.score = LikertValue::score(rng.random_range(1..=2)).unwrap();
        low.issues.clear();
        ensure!(validate_rating(&low).is_err(), "case {case}: low score without issues accepted: {low:?}");
    }
    ensure!(accepted > 1000, "only {accepted} ratings accepted; generator too narrow");
    Ok(())
}

// --- event sourcing ---------------------------------------------------------

fn event_sourcing() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let options = ReportOptions { resamples: 500, ..Default::default() };
    for seed in 0..6 {
        for mode in [AssistanceMode::Shown, AssistanceMode::Hidden] {
            let spec = SimulationSpec { seed, assistance_mode: mode, ..Default::default() };
            let live = simulate_study(&spec).map_err(|e| e.to_string())?;
            let path = dir.path().join(format!("events-{seed}-{mode:?}.jsonl"));
            write_events(&path, live.events()).map_err(|e| e.to_string())?;
            let events = read_events(&path).map_err(|e| e.to_string())?;
            ensure!(events == live.events(), "seed {seed}: log changed on disk");
            let replayed = ServiceState::replay(&events).map_err(|e| e.to_string())?;
            ensure!(&replayed == live.state(), "seed {seed} {mode:?}: replayed state differs");
            let a = build_report_from_events(live.events(), &[], &options).map_err(|e| e.to_string())?.to_json();
            let b = build_report_from_events(&events, &[], &options).map_err(|e| e.to_string())?.to_json();
            ensure!(a == b, "seed {seed} {mode:?}: report bytes differ");
        }
    }
    Ok(())
}

// --- sampling --------------------------------------------------------------

fn sampler() -> Check {
    let mut pool = Vec::new();
    let mut n = 0;
    for (t, topic) in Topic::ALL.iter().enumerate() {
        for causal in [false, true] {
            for _ in 0..6 + (t + usize::from(causal)) % 4 {
                n += 1;
                let mut q = CandidateQuestion::imported(format!("q{n:04}"), format!("question {n}?"));
                q.topic = Some(*topic);
                q.causal = Some(causal);
                pool.push(q);
            }
        }
    }
    let a = stratified_sample(&pool, 6, 9);
    ensure!(a.questions.len() == 108, "sampled {}", a.questions.len());
    ensure!(a.cells.len() == 18, "{} cells", a.cells.len());
    let b = stratified_sample(&pool, 6, 9);
    ensure!(a.questions == b.questions, "same seed gave different samples");
    let c = stratified_sample(&pool, 6, 10);
    ensure!(c.questions.len() == 108, "seed 10 sampled {}", c.questions.len());
    ensure!(a.questions != c.questions, "different seeds gave identical samples");
    Ok(())
}
