use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::corpus::{parse_conll, to_conll_string, RepairPolicy};
use crate::metrics::sentence_from_pairs;

fn sparse(tag: &str) -> Sentence {
    let mut pairs = vec![
        ("they", "O"),
        ("said", "O"),
        ("the", "O"),
        ("big", "O"),
        ("meeting", "O"),
        ("near", "O"),
    ];
    pairs.push((tag, "B-loc"));
    pairs.extend([("went", "O"), ("well", "O"), ("for", "O"), ("most", "O"), ("people", "O")]);
    sentence_from_pairs(0, &pairs)
}

fn sparse_multi() -> Sentence {
    sentence_from_pairs(
        0,
        &[
            ("visitors", "O"),
            ("from", "O"),
            ("Empire", "B-org"),
            ("Holdings", "I-org"),
            ("staff", "O"),
            ("will", "O"),
            ("buy", "O"),
            ("small", "O"),
            ("gifts", "O"),
            ("at", "O"),
            ("the", "O"),
            ("shop", "O"),
        ],
    )
}

fn plain() -> Sentence {
    let words = "nothing much happened here on that quiet day and the town slept until late evening again";
    let pairs: Vec<(&str, &str)> = words.split(' ').map(|w| (w, "O")).collect();
    sentence_from_pairs(0, &pairs)
}

fn dense(a: &str, b: &str) -> Sentence {
    sentence_from_pairs(0, &[(a, "B-per"), ("visited", "O"), (b, "B-loc")])
}

fn barren_window(tag: &str) -> Vec<Sentence> {
    vec![sparse(tag), plain(), sparse_multi(), plain(), plain()]
}

fn dense_window() -> Vec<Sentence> {
    vec![
        dense("Alice", "Paris"),
        dense("Bob", "Rome"),
        dense("Carol", "Oslo"),
        dense("Dan", "Lima"),
        dense("Eve", "Kyiv"),
    ]
}

/// Windows of five: barren, dense, barren, dense.
fn fixture() -> Corpus {
    let mut s = barren_window("Berlin");
    s.extend(dense_window());
    s.extend(barren_window("Madrid"));
    s.extend(dense_window());
    Corpus::from_sentences(s, "fixture")
}

fn cfg(w: usize) -> WomConfig {
    WomConfig {
        window_size: w,
        backoff_ms: 0,
        ..Default::default()
    }
}

fn mock(behavior: MockBehavior) -> MockBackend {
    MockBackend::new(behavior, 7)
}

/// NED restated from its definition.
fn ned_oracle(sentences: &[Sentence]) -> f64 {
    let et: usize = sentences.iter().map(|s| s.entity_token_count()).sum();
    let tt: usize = sentences.iter().map(|s| s.len()).sum();
    let tt_sl: usize = sentences.iter().filter(|s| s.has_entities()).map(|s| s.len()).sum();
    if et == 0 {
        return 0.0;
    }
    et as f64 / tt as f64 * (1.0 + (tt_sl as f64).ln() * 0.1)
}

#[test]
fn partition_sizes() {
    let c = Corpus::from_sentences((0..7).map(|_| plain()), "");
    let (w, _) = segment_windows(&c, &cfg(3), &FeatureConfig::default()).unwrap();
    let sizes: Vec<usize> = w.iter().map(|w| w.sentence_ids.len()).collect();
    assert_eq!(sizes, [3, 3, 1]);
}

#[test]
fn all_outside_window_is_barren() {
    let c = Corpus::from_sentences((0..4).map(|_| plain()), "");
    let config = WomConfig { threshold: 1e-9, ..cfg(4) };
    let (w, _) = segment_windows(&c, &config, &FeatureConfig::default()).unwrap();
    assert_eq!(w[0].density, 0.0);
    assert!(w[0].barren);
}

#[test]
fn barren_flags_match_hand_computed_density() {
    let s = vec![sparse("Ulm"), plain(), dense("Al", "Bo"), plain(), plain(), plain(), sparse_multi(), dense("Cy", "Di")];
    let c = Corpus::from_sentences(s, "");
    let (windows, t) = segment_windows(&c, &cfg(2), &FeatureConfig::default()).unwrap();
    assert_eq!(t, 0.07);
    assert_eq!(windows.len(), 4);
    for w in &windows {
        let oracle = ned_oracle(&c.sentences()[w.sentence_ids.clone()]);
        assert!((w.density - oracle).abs() < 1e-12);
        assert_eq!(w.barren, oracle <= 0.07, "window {}", w.index);
    }
    let flags: Vec<bool> = windows.iter().map(|w| w.barren).collect();
    assert_eq!(flags, [true, false, true, false]);
}

#[test]
fn adaptive_threshold_is_fraction_of_mean() {
    let c = fixture();
    let config = WomConfig {
        threshold_mode: ThresholdMode::Adaptive,
        ..cfg(5)
    };
    let (w, t) = segment_windows(&c, &config, &FeatureConfig::default()).unwrap();
    let mean = w.iter().map(|w| w.density).sum::<f64>() / w.len() as f64;
    assert!((t - 0.8 * mean).abs() < 1e-12);
    assert!(w.iter().all(|w| w.barren == (w.density <= t)));
}

#[test]
fn fixture_has_two_barren_windows() {
    let (w, _) = segment_windows(&fixture(), &cfg(5), &FeatureConfig::default()).unwrap();
    let flags: Vec<bool> = w.iter().map(|w| w.barren).collect();
    assert_eq!(flags, [true, false, true, false]);
}

#[test]
fn only_barren_window_sentences_reach_backend() {
    let c = fixture();
    let log = CallLog::new(mock(MockBehavior::Paraphrase));
    let config = cfg(5);
    let (_, report) = run_wom(&c, &config, &FeatureConfig::default(), &log).unwrap();
    let mut allowed = BTreeSet::new();
    for w in report.windows.iter().filter(|w| w.barren) {
        for s in &c.sentences()[w.sentence_ids.clone()] {
            if s.has_entities() {
                allowed.insert(placeholder_encode(s, &config.placeholder).unwrap().placeholdered_text);
            }
        }
    }
    let forward: Vec<Call> = log.calls().into_iter().filter(|c| c.target_lang == "zh").collect();
    assert_eq!(forward.len(), 4);
    for call in forward {
        assert!(allowed.contains(&call.text), "unexpected {:?}", call.text);
    }
}

#[test]
fn accepted_sentences_conserve_entities() {
    let c = fixture();
    let (_, report) = run_wom(&c, &cfg(5), &FeatureConfig::default(), &mock(MockBehavior::Paraphrase)).unwrap();
    assert_eq!(report.accepted(), 4);
    for a in report.results.iter().flat_map(|r| &r.accepted) {
        let src = &c.sentences()[a.source_id];
        let got: Vec<(&str, &str)> = a.sentence.spans().iter().map(|s| (s.surface.as_str(), s.category.as_str())).collect();
        let want: Vec<(&str, &str)> = src.spans().iter().map(|s| (s.surface.as_str(), s.category.as_str())).collect();
        assert_eq!(got, want);
        assert!(!a.sentence.same_content(src), "paraphrase should differ");
    }
}

#[test]
fn augmented_windows_get_denser() {
    let c = fixture();
    let metric = FeatureConfig::default();
    let (out, report) = run_wom(&c, &cfg(5), &metric, &mock(MockBehavior::Paraphrase)).unwrap();
    assert_eq!(report.results.len(), 2);
    for r in &report.results {
        assert!(!r.accepted.is_empty());
        assert!(r.density_after > r.density_before, "{r:?}");
        let window = &report.windows[r.window_index];
        assert!((r.density_before - ned_oracle(&c.sentences()[window.sentence_ids.clone()])).abs() < 1e-12);
    }
    // Recompute from the output corpus: window 0 now spans 5 + 2 sentences.
    let first = &out.sentences()[..7];
    assert!((ned_oracle(first) - report.results[0].density_after).abs() < 1e-12);
}

#[test]
fn output_layout_and_strict_parse() {
    let c = fixture();
    let (out, report) = run_wom(&c, &cfg(5), &FeatureConfig::default(), &mock(MockBehavior::Paraphrase)).unwrap();
    assert_eq!(out.len(), c.len() + 4);
    assert_eq!(report.sentences_out, out.len());
    // Originals of window 0, its two augments, then window 1 untouched.
    for i in 0..5 {
        assert!(out.sentences()[i].same_content(&c.sentences()[i]));
    }
    assert!(out.sentences()[5].has_entities() && out.sentences()[6].has_entities());
    for i in 0..5 {
        assert!(out.sentences()[7 + i].same_content(&c.sentences()[5 + i]));
    }
    let text = to_conll_string(&out).unwrap();
    let parsed = parse_conll(text.as_bytes(), RepairPolicy::Strict).unwrap();
    assert_eq!(parsed.corpus.len(), out.len());
    assert_eq!(parsed.repairs, 0);
}

#[test]
fn global_augment_touches_more() {
    let c = fixture();
    let metric = FeatureConfig::default();
    let backend = mock(MockBehavior::Paraphrase);
    let (_, wom) = run_wom(&c, &cfg(5), &metric, &backend).unwrap();
    let ga_cfg = WomConfig {
        mode: WomMode::GlobalAugment,
        ..cfg(5)
    };
    let (out, ga) = run_wom(&c, &ga_cfg, &metric, &backend).unwrap();
    assert!(ga.candidates() > wom.candidates());
    let wom_ids: BTreeSet<usize> = wom.results.iter().flat_map(|r| r.accepted.iter().map(|a| a.source_id)).collect();
    let ga_ids: BTreeSet<usize> = ga.results.iter().flat_map(|r| r.accepted.iter().map(|a| a.source_id)).collect();
    assert!(wom_ids.is_subset(&ga_ids) && ga_ids.len() > wom_ids.len());
    // Originals first, augments appended.
    for (a, b) in out.sentences().iter().zip(c.sentences()) {
        assert!(a.same_content(b));
    }
    assert_eq!(out.len(), c.len() + ga.accepted());
}

#[test]
fn deterministic_across_runs_and_in_flight() {
    let c = fixture();
    let metric = FeatureConfig::default();
    let render = |in_flight| {
        let config = WomConfig { in_flight, ..cfg(5) };
        let (out, report) = run_wom(&c, &config, &metric, &mock(MockBehavior::Paraphrase)).unwrap();
        (to_conll_string(&out).unwrap(), serde_json::to_string(&report).unwrap())
    };
    let a = render(1);
    assert_eq!(a, render(1));
    assert_eq!(a, render(4));
}

#[test]
fn no_barren_windows_is_identity() {
    let c = Corpus::from_sentences(dense_window(), "");
    let (out, report) = run_wom(&c, &cfg(5), &FeatureConfig::default(), &mock(MockBehavior::Paraphrase)).unwrap();
    assert_eq!(to_conll_string(&out).unwrap(), to_conll_string(&c).unwrap());
    assert!(report.results.is_empty());
}

#[test]
fn off_mode_is_identity() {
    let c = fixture();
    let log = CallLog::new(mock(MockBehavior::Paraphrase));
    let config = WomConfig { mode: WomMode::Off, ..cfg(5) };
    let (out, report) = run_wom(&c, &config, &FeatureConfig::default(), &log).unwrap();
    assert_eq!(to_conll_string(&out).unwrap(), to_conll_string(&c).unwrap());
    assert!(report.results.is_empty() && log.calls().is_empty());
}

#[test]
fn single_barren_window_two_accepted() {
    let c = Corpus::from_sentences(barren_window("Turin"), "");
    let (out, report) = run_wom(&c, &cfg(5), &FeatureConfig::default(), &mock(MockBehavior::Paraphrase)).unwrap();
    assert_eq!(out.len(), c.len() + 2);
    let r = &report.results[0];
    assert_eq!(r.accepted.len(), 2);
    assert!(r.density_after > r.density_before);
    assert!((r.density_after - ned_oracle(out.sentences())).abs() < 1e-12);
}

#[test]
fn identity_backtranslation_is_unchanged() {
    let s = sparse_multi();
    let config = cfg(5);
    let c = placeholder_encode(&s, &config.placeholder).unwrap();
    let out = backtranslate(&c, &mock(MockBehavior::Identity), &config).unwrap();
    assert_eq!(out, c.placeholdered_text);
}

#[test]
fn cassette_replay_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("tape.json");
    let c = fixture();
    let metric = FeatureConfig::default();
    let rec = Cassette::record(&tape, Box::new(mock(MockBehavior::Paraphrase))).unwrap();
    let (live, _) = run_wom(&c, &cfg(5), &metric, &rec).unwrap();
    rec.finish().unwrap();
    let replay = Cassette::replay(&tape).unwrap();
    let (again, _) = run_wom(&c, &cfg(5), &metric, &replay).unwrap();
    assert_eq!(to_conll_string(&live).unwrap(), to_conll_string(&again).unwrap());
}

#[test]
fn faulty_backends_produce_reject_reasons() {
    let c = fixture();
    let metric = FeatureConfig::default();
    let cases = [
        (MockBehavior::DropPlaceholder, RejectReason::PlaceholderLost),
        (MockBehavior::DuplicatePlaceholder, RejectReason::PlaceholderDuplicated),
        (MockBehavior::MangleGlyph, RejectReason::EntityMutated),
    ];
    for (behavior, reason) in cases {
        let (out, report) = run_wom(&c, &cfg(5), &metric, &mock(behavior)).unwrap();
        assert_eq!(report.accepted(), 0);
        assert_eq!(report.reject_tally.get(&reason), Some(&4), "{behavior:?}");
        assert_eq!(out.len(), c.len());
        for r in &report.results {
            assert_eq!(r.density_after, r.density_before);
        }
    }
}

#[test]
fn retries_absorb_transient_failures() {
    let c = fixture();
    let metric = FeatureConfig::default();
    let (_, ok) = run_wom(&c, &cfg(5), &metric, &mock(MockBehavior::Flaky(2))).unwrap();
    assert_eq!(ok.accepted(), 4);
    let lenient = WomConfig { failure_limit: 1.0, ..cfg(5) };
    let (_, bad) = run_wom(&c, &lenient, &metric, &mock(MockBehavior::Flaky(3))).unwrap();
    // Both windows send the same two placeholdered texts, so the flaky
    // counters are exhausted by the time window 2 runs.
    assert_eq!(bad.results[0].rejected.len(), 2);
    assert!(bad.results[0].rejected.iter().all(|r| r.reason == RejectReason::BackendError && r.stage == Some(Stage::Forward)));
    assert_eq!(bad.results[1].accepted.len(), 2);
}

#[test]
fn failure_rate_aborts_with_partial_report() {
    let c = fixture();
    let config = WomConfig {
        failure_min_attempts: 2,
        ..cfg(5)
    };
    match run_wom(&c, &config, &FeatureConfig::default(), &mock(MockBehavior::Fail)) {
        Err(WomError::Aborted { rate, report, .. }) => {
            assert_eq!(rate, 1.0);
            assert_eq!(report.results.len(), 1);
            assert!(report.aborted.is_some());
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn invalid_config_rejected() {
    let c = fixture();
    let metric = FeatureConfig::default();
    let backend = mock(MockBehavior::Identity);
    for bad in [
        WomConfig { window_size: 0, ..cfg(5) },
        WomConfig { threshold: -0.1, ..cfg(5) },
        WomConfig { in_flight: 0, ..cfg(5) },
        WomConfig {
            pivot_language: "en".into(),
            ..cfg(5)
        },
    ] {
        assert!(matches!(run_wom(&c, &bad, &metric, &backend), Err(WomError::Config(_))));
    }
}

#[test]
fn threshold_sweep_is_monotone() {
    let c = fixture();
    let grid: Vec<(usize, f64)> = (3..=8).map(|t| (5, t as f64 / 100.0)).collect();
    let rows = sweep(&c, &cfg(5), &FeatureConfig::default(), &mock(MockBehavior::Paraphrase), &grid).unwrap();
    assert_eq!(rows.len(), 6);
    for pair in rows.windows(2) {
        assert!(pair[1].barren_windows >= pair[0].barren_windows);
        assert!(pair[1].candidates >= pair[0].candidates);
        assert!(pair[1].accepted >= pair[0].accepted);
    }
}

fn arb_sentence() -> impl Strategy<Value = Sentence> {
    prop::collection::vec((0u8..4, 0u8..3), 1..10).prop_map(|cells| {
        let mut pairs = Vec::new();
        let mut prev_entity = false;
        for (i, (kind, word)) in cells.iter().enumerate() {
            let text = ["alpha", "beta", "gamma"][*word as usize];
            let label = match kind {
                0 | 1 => "O",
                2 => "B-x",
                _ if prev_entity => "I-x",
                _ => "B-x",
            };
            prev_entity = label != "O";
            let _ = i;
            pairs.push((text, label));
        }
        sentence_from_pairs(0, &pairs)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn windows_partition_in_order(
        sentences in prop::collection::vec(arb_sentence(), 1..40),
        w in 1usize..12,
        t in 0.0f64..0.5,
    ) {
        let c = Corpus::from_sentences(sentences, "");
        let config = WomConfig { threshold: t, ..cfg(w) };
        let (windows, _) = segment_windows(&c, &config, &FeatureConfig::default()).unwrap();
        prop_assert_eq!(windows.len(), c.len().div_ceil(w));
        let mut next = 0;
        for (i, win) in windows.iter().enumerate() {
            prop_assert_eq!(win.index, i);
            prop_assert_eq!(win.sentence_ids.start, next);
            prop_assert!(!win.sentence_ids.is_empty() && win.sentence_ids.len() <= w);
            prop_assert_eq!(win.barren, win.density <= t);
            next = win.sentence_ids.end;
        }
        prop_assert_eq!(next, c.len());
    }

    #[test]
    fn output_is_strictly_parseable_and_conserves_entities(
        sentences in prop::collection::vec(arb_sentence(), 1..25),
        w in 1usize..8,
        seed in 0u64..1000,
    ) {
        let c = Corpus::from_sentences(sentences, "");
        let config = WomConfig { threshold: 0.3, in_flight: 2, ..cfg(w) };
        let backend = MockBackend::new(MockBehavior::Paraphrase, seed);
        let (out, report) = run_wom(&c, &config, &FeatureConfig::default(), &backend).unwrap();
        let text = to_conll_string(&out).unwrap();
        let parsed = parse_conll(text.as_bytes(), RepairPolicy::Strict).unwrap();
        prop_assert_eq!(parsed.corpus.len(), c.len() + report.accepted());
        for a in report.results.iter().flat_map(|r| &r.accepted) {
            let src = &c.sentences()[a.source_id];
            let got: Vec<_> = a.sentence.spans().iter().map(|s| (&s.surface, &s.category)).collect();
            let want: Vec<_> = src.spans().iter().map(|s| (&s.surface, &s.category)).collect();
            prop_assert_eq!(got, want);
            prop_assert_eq!(a.sentence.len(), src.len());
        }
    }
}
