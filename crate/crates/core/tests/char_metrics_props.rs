use proptest::prelude::*;
use spanqe::char_metrics::{build_mask, char_ci, char_f1, char_f1w, CharMask, CharMetric};
use spanqe::{ErrorSpan, MqmLabel, Severity, Side};

const LEN: usize = 30;

fn severity() -> impl Strategy<Value = Severity> {
    prop_oneof![
        Just(Severity::Major),
        Just(Severity::Minor),
        Just(Severity::Critical),
        Just(Severity::Unknown)
    ]
}

fn spans() -> impl Strategy<Value = Vec<(usize, usize, Severity)>> {
    prop::collection::vec((0..LEN - 1, 1usize..8, severity()), 0..5)
}

fn mask(id: &str, spans: &[(usize, usize, Severity)]) -> CharMask {
    let spans: Vec<ErrorSpan> = spans
        .iter()
        .map(|&(s, l, sev)| {
            let e = (s + l).min(LEN);
            let mut span = ErrorSpan::new(Side::Target, "x", MqmLabel::Mistranslation, sev).with_offsets(s, e);
            span.offsets_valid = true;
            span
        })
        .collect();
    build_mask(id, LEN, &spans).mask
}

fn corpus_masks(raw: &[Vec<(usize, usize, Severity)>]) -> Vec<CharMask> {
    raw.iter().enumerate().map(|(i, s)| mask(&format!("s{i}"), s)).collect()
}

fn pair() -> impl Strategy<Value = (Vec<CharMask>, Vec<CharMask>)> {
    (1usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(spans(), n),
            prop::collection::vec(spans(), n),
        )
            .prop_map(|(g, p)| (corpus_masks(&g), corpus_masks(&p)))
    })
}

fn same_positions(a: &[CharMask], b: &[CharMask]) -> bool {
    a.iter().zip(b).all(|(x, y)| (0..LEN).all(|i| x.is_error(i) == y.is_error(i)))
}

fn same_known_severities(a: &[CharMask], b: &[CharMask]) -> bool {
    use spanqe::char_metrics::MaskSeverity;
    a.iter().zip(b).all(|(x, y)| {
        (0..LEN).all(|i| match (x.severity_at(i), y.severity_at(i)) {
            (None, None) => true,
            (Some(s), Some(t)) => s == t && s != MaskSeverity::Unknown,
            _ => false,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weighted_never_exceeds_unweighted((g, p) in pair()) {
        let f = char_f1(&g, &p).unwrap();
        let w = char_f1w(&g, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((0.0..=1.0).contains(&w));
        prop_assert!(w <= f + 1e-12);
    }

    #[test]
    fn perfect_score_iff_identical((g, p) in pair()) {
        let f = char_f1(&g, &p).unwrap();
        let w = char_f1w(&g, &p).unwrap();
        prop_assert_eq!(f == 1.0, same_positions(&g, &p));
        prop_assert_eq!(w == 1.0, same_known_severities(&g, &p));
        prop_assert_eq!(char_f1(&g, &g).unwrap(), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bootstrap_is_deterministic((g, p) in pair(), seed in any::<u64>()) {
        for metric in [CharMetric::CharF1, CharMetric::CharF1w] {
            let a = char_ci(&g, &p, metric, 200, seed).unwrap();
            let b = char_ci(&g, &p, metric, 200, seed).unwrap();
            prop_assert_eq!(a, b);
            let point = match metric {
                CharMetric::CharF1 => char_f1(&g, &p).unwrap(),
                CharMetric::CharF1w => char_f1w(&g, &p).unwrap(),
            };
            prop_assert_eq!(a.point, point);
        }
    }
}
