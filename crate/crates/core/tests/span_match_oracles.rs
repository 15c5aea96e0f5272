mod common;

use std::collections::BTreeMap;

use spanqe::span_match::{oc_score, sim_score, threshold_sweep, Criterion};
use spanqe::{AnnotationSet, Corpus, ErrorSpan, MqmLabel, Segment, Severity, Side};

fn corpus() -> Corpus {
    let seg = |id: &str, lang: &str, text: &str| Segment {
        segment_id: id.into(),
        item_id: None,
        dataset: "toy".into(),
        language: lang.into(),
        source_text: "source".into(),
        target_text: text.into(),
    };
    Corpus::new(vec![
        seg("a", "da", "Kommissionen afviste forslaget i går med stort flertal"),
        seg("b", "da", "Rådet vedtog en ny strategi for energi og klima"),
        seg("c", "de", "Der Ausschuss hat den Bericht gestern ohne Aussprache angenommen"),
    ])
    .unwrap()
}

fn span(text: &str, s: usize, e: usize) -> ErrorSpan {
    let t: String = text.chars().skip(s).take(e - s).collect();
    ErrorSpan::new(Side::Target, t, MqmLabel::Mistranslation, Severity::Major).with_offsets(s, e)
}

fn sets(who: &str, plan: &[(&str, &[(usize, usize)])]) -> Vec<AnnotationSet> {
    let c = corpus();
    plan.iter()
        .map(|(seg, spans)| AnnotationSet {
            annotator_id: who.into(),
            segment_id: seg.to_string(),
            spans: spans
                .iter()
                .map(|&(s, e)| span(&c.get(seg).unwrap().target_text, s, e))
                .collect(),
        })
        .collect()
}

/// Oracle: per segment, maximum matching over pairs scoring at or above the
/// threshold; then pooled and per-language-mean F1.
fn oracle(gold: &[AnnotationSet], pred: &[AnnotationSet], criterion: Criterion, t: f64) -> (usize, f64, f64) {
    let c = corpus();
    let mut per_lang: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for seg in c.iter() {
        let grab = |sets: &[AnnotationSet]| -> Vec<ErrorSpan> {
            sets.iter()
                .filter(|s| s.segment_id == seg.segment_id)
                .flat_map(|s| s.ground(&c).unwrap().spans)
                .collect()
        };
        let (g, p) = (grab(gold), grab(pred));
        let eligible: Vec<Vec<bool>> = g
            .iter()
            .map(|a| {
                p.iter()
                    .map(|b| {
                        let score = match criterion {
                            Criterion::Oc => oc_score(a.interval().unwrap(), b.interval().unwrap()).unwrap(),
                            Criterion::Sim => sim_score(&a.text, &b.text).unwrap(),
                        };
                        score >= t
                    })
                    .collect()
            })
            .collect();
        let tp = common::max_matching(&eligible);
        let cell = per_lang.entry(seg.language.clone()).or_default();
        cell.0 += tp;
        cell.1 += g.len();
        cell.2 += p.len();
    }
    let f1 = |tp: usize, g: usize, p: usize| if g + p == 0 { 0.0 } else { 2.0 * tp as f64 / (g + p) as f64 };
    let tp: usize = per_lang.values().map(|v| v.0).sum();
    let g: usize = per_lang.values().map(|v| v.1).sum();
    let p: usize = per_lang.values().map(|v| v.2).sum();
    let mean = per_lang.values().map(|&(a, b, c)| f1(a, b, c)).sum::<f64>() / per_lang.len() as f64;
    (tp, f1(tp, g, p), mean)
}

#[test]
fn sweep_matches_brute_force_on_toy_corpus() {
    let gold = sets(
        "gold",
        &[("a", &[(0, 12), (13, 20), (40, 53)]), ("b", &[(6, 13)]), ("c", &[(14, 24), (34, 44)])],
    );
    let pred = sets(
        "pred",
        &[("a", &[(0, 10), (13, 29)]), ("b", &[(6, 13), (29, 35)]), ("c", &[(18, 28), (34, 47), (48, 62)])],
    );
    for criterion in [Criterion::Oc, Criterion::Sim] {
        let report = threshold_sweep(&gold, &pred, &corpus(), criterion).unwrap();
        for point in &report.points {
            let (tp, pooled, mean) = oracle(&gold, &pred, criterion, point.threshold);
            assert_eq!(point.tp, tp, "{criterion:?} at {}", point.threshold);
            assert!((point.pooled_f1 - pooled).abs() < 1e-12);
            assert!((point.mean_f1 - mean).abs() < 1e-12);
        }
        let tps: Vec<usize> = report.points.iter().map(|p| p.tp).collect();
        assert!(tps.windows(2).all(|w| w[1] <= w[0]));
    }
}
