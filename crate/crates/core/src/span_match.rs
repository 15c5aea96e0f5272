//! Span-level agreement between two annotators.
//!
//! Two pair scores are supported: the overlap coefficient (OC) on character
//! offsets and SIM, the Sørensen–Dice similarity of raw character-trigram
//! multisets. Pairs at or above a threshold are matched greedily one-to-one in
//! descending score order; TP/FP/FN are summed per language (micro averaging).
//!
//! Only target-side spans take part. Under OC, spans without validated offsets
//! can never match and therefore always end up as FP or FN. Under SIM, each
//! side is first deduplicated by exact span text, keeping the first occurrence.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    merge_intervals, AnnotationSet, Corpus, ErrorSpan, Interval, Side, SourceAnomaly,
};
use crate::stats;

pub const DEFAULT_OC_THRESHOLD: f64 = 0.8;
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.6;
pub const OC_SWEEP: [f64; 3] = [0.7, 0.8, 0.9];
pub const SIM_SWEEP: [f64; 3] = [0.4, 0.5, 0.6];
/// OC needed for an annotator span to count as overlapping a source anomaly anchor.
pub const SOURCE_OVERLAP_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    Oc,
    Sim,
}

impl Criterion {
    pub fn sweep(&self) -> [f64; 3] {
        match self {
            Criterion::Oc => OC_SWEEP,
            Criterion::Sim => SIM_SWEEP,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Oc => "OC",
            Criterion::Sim => "SIM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub criterion: Criterion,
    pub threshold: f64,
    pub dedup_by_text: bool,
}

impl MatchConfig {
    pub fn oc() -> Self {
        Self {
            criterion: Criterion::Oc,
            threshold: DEFAULT_OC_THRESHOLD,
            dedup_by_text: false,
        }
    }

    pub fn sim() -> Self {
        Self {
            criterion: Criterion::Sim,
            threshold: DEFAULT_SIM_THRESHOLD,
            dedup_by_text: true,
        }
    }

    pub fn for_criterion(criterion: Criterion) -> Self {
        match criterion {
            Criterion::Oc => Self::oc(),
            Criterion::Sim => Self::sim(),
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::parameter(format!(
                "threshold {threshold} outside (0, 1]"
            )));
        }
        self.threshold = threshold;
        Ok(self)
    }
}

/// Overlap length divided by the shorter interval's length.
pub fn oc_score(a: Interval, b: Interval) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::precondition(format!(
            "OC is undefined for empty interval ({a} vs {b})"
        )));
    }
    Ok(a.overlap(&b) as f64 / a.len().min(b.len()) as f64)
}

fn ngram_counts(chars: &[char]) -> HashMap<&[char], usize> {
    // texts shorter than three characters act as a single gram of their own length
    let n = chars.len().min(3);
    let mut counts = HashMap::new();
    for gram in chars.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Dice similarity over raw character-trigram multisets, no normalization.
pub fn sim_score(a: &str, b: &str) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::precondition("SIM is undefined for empty text"));
    }
    let ca: Vec<char> = a.chars().collect();
    let cb: Vec<char> = b.chars().collect();
    let ga = ngram_counts(&ca);
    let gb = ngram_counts(&cb);
    let total: usize = ga.values().sum::<usize>() + gb.values().sum::<usize>();
    let shared: usize = ga
        .iter()
        .map(|(g, &n)| n.min(gb.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(2.0 * shared as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        stats::ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> f64 {
        stats::ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    pub fn f1(&self) -> f64 {
        stats::f1(self.precision(), self.recall())
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    /// Index into the gold span list as given.
    pub gold: usize,
    /// Index into the predicted span list as given.
    pub pred: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFragment {
    pub counts: Counts,
    pub pairs: Vec<MatchedPair>,
}

struct Candidate<'a> {
    index: usize,
    interval: Option<Interval>,
    text: &'a str,
}

fn candidates<'a>(spans: &'a [ErrorSpan], dedup: bool) -> Vec<Candidate<'a>> {
    let mut seen = HashSet::new();
    spans
        .iter()
        .enumerate()
        .filter(|(_, s)| s.side == Side::Target)
        .filter(|(_, s)| !dedup || seen.insert(s.text.as_str()))
        .map(|(index, s)| Candidate {
            index,
            interval: s.interval(),
            text: &s.text,
        })
        .collect()
}

fn pair_score(cfg: &MatchConfig, g: &Candidate, p: &Candidate) -> Option<f64> {
    match cfg.criterion {
        Criterion::Oc => oc_score(g.interval?, p.interval?).ok(),
        Criterion::Sim => sim_score(g.text, p.text).ok(),
    }
}

/// Greedy one-to-one matching of one segment's gold and predicted spans.
///
/// Equal scores are ordered by gold start offset, then predicted start offset
/// (spans without offsets last), then input order.
pub fn greedy_match(gold: &[ErrorSpan], pred: &[ErrorSpan], cfg: &MatchConfig) -> MatchFragment {
    let gold_c = candidates(gold, cfg.dedup_by_text);
    let pred_c = candidates(pred, cfg.dedup_by_text);

    let mut scored = Vec::new();
    for (gi, g) in gold_c.iter().enumerate() {
        for (pi, p) in pred_c.iter().enumerate() {
            if let Some(score) = pair_score(cfg, g, p) {
                if score >= cfg.threshold {
                    scored.push((score, gi, pi));
                }
            }
        }
    }
    let start_of = |c: &Candidate| c.interval.map_or(usize::MAX, |iv| iv.start);
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| start_of(&gold_c[a.1]).cmp(&start_of(&gold_c[b.1])))
            .then_with(|| start_of(&pred_c[a.2]).cmp(&start_of(&pred_c[b.2])))
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut gold_used = vec![false; gold_c.len()];
    let mut pred_used = vec![false; pred_c.len()];
    let mut pairs = Vec::new();
    for (score, gi, pi) in scored {
        if gold_used[gi] || pred_used[pi] {
            continue;
        }
        gold_used[gi] = true;
        pred_used[pi] = true;
        pairs.push(MatchedPair {
            gold: gold_c[gi].index,
            pred: pred_c[pi].index,
            score,
        });
    }
    let tp = pairs.len();
    MatchFragment {
        counts: Counts::new(tp, pred_c.len() - tp, gold_c.len() - tp),
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub segment_id: String,
    pub language: String,
    pub fragment: MatchFragment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub segments: usize,
}

impl GroupScore {
    fn from_counts(counts: Counts, segments: usize) -> Self {
        Self {
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            segments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub segment_id: String,
    pub gold: usize,
    pub pred: usize,
    pub score: f64,
}

/// Micro-averaged agreement, per language and pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pooled: GroupScore,
    pub per_language: BTreeMap<String, GroupScore>,
    /// Unweighted means of per-language precision, recall and F1.
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    /// Min and max per-language F1.
    pub f1_range: Option<(f64, f64)>,
    pub matched_pairs: Vec<PairRecord>,
}

pub fn micro_aggregate(fragments: &[SegmentMatch]) -> MatchReport {
    if fragments.is_empty() {
        log::warn!("aggregating an empty set of match fragments");
    }
    let mut pooled = Counts::default();
    let mut per_lang: BTreeMap<String, (Counts, usize)> = BTreeMap::new();
    let mut matched_pairs = Vec::new();
    for frag in fragments {
        pooled += frag.fragment.counts;
        let entry = per_lang.entry(frag.language.clone()).or_default();
        entry.0 += frag.fragment.counts;
        entry.1 += 1;
        matched_pairs.extend(frag.fragment.pairs.iter().map(|p| PairRecord {
            segment_id: frag.segment_id.clone(),
            gold: p.gold,
            pred: p.pred,
            score: p.score,
        }));
    }
    let per_language: BTreeMap<String, GroupScore> = per_lang
        .into_iter()
        .map(|(lang, (c, n))| (lang, GroupScore::from_counts(c, n)))
        .collect();
    let collect = |f: fn(&GroupScore) -> f64| per_language.values().map(f).collect::<Vec<_>>();
    let f1s = collect(|g| g.f1);
    let f1_range = f1s
        .iter()
        .copied()
        .fold(None, |acc: Option<(f64, f64)>, v| {
            Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
        });
    MatchReport {
        pooled: GroupScore::from_counts(pooled, fragments.len()),
        mean_precision: stats::mean(&collect(|g| g.precision)).unwrap_or(0.0),
        mean_recall: stats::mean(&collect(|g| g.recall)).unwrap_or(0.0),
        mean_f1: stats::mean(&f1s).unwrap_or(0.0),
        f1_range,
        per_language,
        matched_pairs,
    }
}

/// Target-side spans of one annotator, grouped by segment id.
fn spans_by_segment(sets: &[AnnotationSet]) -> BTreeMap<&str, Vec<ErrorSpan>> {
    let mut out: BTreeMap<&str, Vec<ErrorSpan>> = BTreeMap::new();
    for set in sets {
        out.entry(set.segment_id.as_str())
            .or_default()
            .extend(set.spans.iter().cloned());
    }
    out
}

/// Grounds both annotators against the corpus and matches every segment that
/// either of them annotated. A segment missing on one side counts as empty.
pub fn compare(
    gold: &[AnnotationSet],
    pred: &[AnnotationSet],
    corpus: &Corpus,
    cfg: &MatchConfig,
) -> Result<Vec<SegmentMatch>> {
    let gold = crate::io::ground_all(gold, corpus)?;
    let pred = crate::io::ground_all(pred, corpus)?;
    Ok(compare_grounded(&gold, &pred, corpus, cfg))
}

fn compare_grounded(
    gold: &[AnnotationSet],
    pred: &[AnnotationSet],
    corpus: &Corpus,
    cfg: &MatchConfig,
) -> Vec<SegmentMatch> {
    let gold = spans_by_segment(gold);
    let pred = spans_by_segment(pred);
    let ids: Vec<&str> = gold
        .keys()
        .chain(pred.keys())
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let empty = Vec::new();
    ids.par_iter()
        .map(|id| SegmentMatch {
            segment_id: id.to_string(),
            language: corpus.language_of(id).unwrap_or_default().to_string(),
            fragment: greedy_match(
                gold.get(id).unwrap_or(&empty),
                pred.get(id).unwrap_or(&empty),
                cfg,
            ),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub tp: usize,
    pub pooled_f1: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub criterion: Criterion,
    pub points: Vec<SweepPoint>,
    /// Min and max of pooled F1 over the sweep.
    pub f1_range: (f64, f64),
}

/// Evaluates the fixed threshold set of `criterion`.
pub fn threshold_sweep(
    gold: &[AnnotationSet],
    pred: &[AnnotationSet],
    corpus: &Corpus,
    criterion: Criterion,
) -> Result<SweepReport> {
    let gold = crate::io::ground_all(gold, corpus)?;
    let pred = crate::io::ground_all(pred, corpus)?;
    let points: Vec<SweepPoint> = criterion
        .sweep()
        .iter()
        .map(|&t| {
            let cfg = MatchConfig {
                threshold: t,
                ..MatchConfig::for_criterion(criterion)
            };
            let report = micro_aggregate(&compare_grounded(&gold, &pred, corpus, &cfg));
            SweepPoint {
                threshold: t,
                tp: report.pooled.counts.tp,
                pooled_f1: report.pooled.f1,
                mean_f1: report.mean_f1,
            }
        })
        .collect();
    let lo = points.iter().map(|p| p.pooled_f1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.pooled_f1).fold(f64::NEG_INFINITY, f64::max);
    Ok(SweepReport {
        criterion,
        points,
        f1_range: (lo, hi),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageStats {
    pub segments: usize,
    pub spans_per_sample: f64,
    pub median_span_length: Option<f64>,
    pub coverage: f64,
}

/// Descriptive statistics of one annotator's target-side spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorStats {
    pub spans_per_sample: f64,
    /// Mean over languages of the per-language median span length in
    /// characters; 0 when no language has a valid span.
    pub median_span_length: f64,
    pub median_defined: bool,
    pub coverage: f64,
    /// Target spans whose offsets could not be grounded.
    pub unlinked_spans: usize,
    pub per_language: BTreeMap<String, LanguageStats>,
}

/// Span counts, median span length and union coverage, each averaged over
/// languages. Every annotation set is one sample.
pub fn annotator_stats(sets: &[AnnotationSet], corpus: &Corpus) -> Result<AnnotatorStats> {
    let sets = crate::io::ground_all(sets, corpus)?;
    let by_segment = spans_by_segment(&sets);

    #[derive(Default)]
    struct Acc {
        counts: Vec<f64>,
        lengths: Vec<f64>,
        coverage: Vec<f64>,
    }
    let mut per_lang: BTreeMap<String, Acc> = BTreeMap::new();
    let mut unlinked = 0;
    for (id, spans) in &by_segment {
        let segment = corpus.require(id)?;
        let acc = per_lang.entry(segment.language.clone()).or_default();
        let target: Vec<&ErrorSpan> = spans.iter().filter(|s| s.side == Side::Target).collect();
        acc.counts.push(target.len() as f64);
        let intervals: Vec<Interval> = target.iter().filter_map(|s| s.interval()).collect();
        unlinked += target.len() - intervals.len();
        acc.lengths.extend(intervals.iter().map(|iv| iv.len() as f64));
        let covered: usize = merge_intervals(intervals).iter().map(Interval::len).sum();
        let len = crate::model::char_len(&segment.target_text);
        acc.coverage.push(stats::ratio(covered as f64, len as f64));
    }

    let per_language: BTreeMap<String, LanguageStats> = per_lang
        .into_iter()
        .map(|(lang, acc)| {
            let stats = LanguageStats {
                segments: acc.counts.len(),
                spans_per_sample: stats::mean(&acc.counts).unwrap_or(0.0),
                median_span_length: stats::median(&acc.lengths),
                coverage: stats::mean(&acc.coverage).unwrap_or(0.0),
            };
            (lang, stats)
        })
        .collect();
    let medians: Vec<f64> = per_language
        .values()
        .filter_map(|l| l.median_span_length)
        .collect();
    let over = |f: fn(&LanguageStats) -> f64| {
        stats::mean(&per_language.values().map(f).collect::<Vec<_>>()).unwrap_or(0.0)
    };
    Ok(AnnotatorStats {
        spans_per_sample: over(|l| l.spans_per_sample),
        median_span_length: stats::mean(&medians).unwrap_or(0.0),
        median_defined: !medians.is_empty(),
        coverage: over(|l| l.coverage),
        unlinked_spans: unlinked,
        per_language,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCell {
    pub spans: usize,
    pub overlapping: usize,
    /// `None` when the annotator has no valid target span in this language.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub per_language: BTreeMap<String, OverlapCell>,
    pub mean: Option<f64>,
    pub range: Option<(f64, f64)>,
    /// Anomalies whose target anchor is missing or could not be grounded.
    pub unlinked_anomalies: usize,
}

/// Fraction of an annotator's valid target spans whose best OC against any
/// anomaly-linked target region reaches [`SOURCE_OVERLAP_THRESHOLD`].
pub fn source_overlap_rate(
    sets: &[AnnotationSet],
    anomalies: &[SourceAnomaly],
    corpus: &Corpus,
) -> Result<OverlapReport> {
    let sets = crate::io::ground_all(sets, corpus)?;
    let mut anchors: HashMap<&str, Vec<Interval>> = HashMap::new();
    let mut unlinked_anomalies = 0;
    let grounded: Vec<SourceAnomaly> = anomalies
        .iter()
        .map(|a| a.ground(corpus))
        .collect::<Result<_>>()?;
    for a in &grounded {
        match a.linked_target() {
            Some(iv) => anchors.entry(a.segment_id.as_str()).or_default().push(iv),
            None => unlinked_anomalies += 1,
        }
    }

    let mut per_language: BTreeMap<String, OverlapCell> = BTreeMap::new();
    for (id, spans) in spans_by_segment(&sets) {
        let segment = corpus.require(id)?;
        let cell = per_language
            .entry(segment.language.clone())
            .or_insert(OverlapCell {
                spans: 0,
                overlapping: 0,
                rate: None,
            });
        let seg_anchors = anchors.get(id).map(Vec::as_slice).unwrap_or(&[]);
        for iv in spans
            .iter()
            .filter(|s| s.side == Side::Target)
            .filter_map(ErrorSpan::interval)
        {
            cell.spans += 1;
            let best = seg_anchors
                .iter()
                .filter_map(|a| oc_score(iv, *a).ok())
                .fold(0.0, f64::max);
            if best >= SOURCE_OVERLAP_THRESHOLD {
                cell.overlapping += 1;
            }
        }
    }
    for cell in per_language.values_mut() {
        cell.rate = (cell.spans > 0).then(|| cell.overlapping as f64 / cell.spans as f64);
    }
    let rates: Vec<f64> = per_language.values().filter_map(|c| c.rate).collect();
    let range = rates.iter().copied().fold(None, |acc: Option<(f64, f64)>, v| {
        Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
    });
    Ok(OverlapReport {
        mean: stats::mean(&rates),
        range,
        per_language,
        unlinked_anomalies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MqmLabel, Segment, Severity};

    fn iv(a: usize, b: usize) -> Interval {
        Interval { start: a, end: b }
    }

    fn tspan(a: usize, b: usize) -> ErrorSpan {
        let mut s = ErrorSpan::new(
            Side::Target,
            format!("t{a}-{b}"),
            MqmLabel::Mistranslation,
            Severity::Major,
        )
        .with_offsets(a, b);
        s.offsets_valid = true;
        s
    }

    fn text_span(text: &str) -> ErrorSpan {
        ErrorSpan::new(Side::Target, text, MqmLabel::Awkward, Severity::Minor)
    }

    #[test]
    fn oc_worked_example() {
        assert_eq!(oc_score(iv(811, 871), iv(805, 845)).unwrap(), 0.85);
        assert_eq!(oc_score(iv(3, 9), iv(3, 9)).unwrap(), 1.0);
        assert_eq!(oc_score(iv(0, 3), iv(5, 9)).unwrap(), 0.0);
        assert!(oc_score(iv(3, 3), iv(0, 4)).is_err());
    }

    #[test]
    fn sim_worked_example() {
        let a = "sich stärker verfestigen";
        let b = "die Mitglieder der Gruppe A sich stärker verfestigen";
        assert!((sim_score(a, b).unwrap() - 44.0 / 72.0).abs() < 1e-12);
        assert_eq!(sim_score(a, a).unwrap(), 1.0);
        assert_eq!(sim_score("abcdef", "uvwxyz").unwrap(), 0.0);
    }

    #[test]
    fn sim_short_strings() {
        assert_eq!(sim_score("ab", "ab").unwrap(), 1.0);
        assert_eq!(sim_score("ab", "cd").unwrap(), 0.0);
        assert_eq!(sim_score("ab", "abc").unwrap(), 0.0);
        assert!(sim_score("", "abc").is_err());
    }

    #[test]
    fn sim_is_case_sensitive() {
        assert!(sim_score("Haus", "haus").unwrap() < 1.0);
    }

    #[test]
    fn identity_match() {
        let f = greedy_match(&[tspan(0, 10)], &[tspan(0, 10)], &MatchConfig::oc());
        assert_eq!(f.counts, Counts::new(1, 0, 0));
    }

    #[test]
    fn tie_goes_to_earlier_gold() {
        let gold = [tspan(20, 30), tspan(0, 10)];
        let f = greedy_match(&gold, &[tspan(0, 30)], &MatchConfig::oc());
        assert_eq!(f.counts, Counts::new(1, 0, 1));
        assert_eq!(f.pairs[0].gold, 1);
    }

    #[test]
    fn offsetless_gold_is_false_negative_under_oc() {
        let gold = [text_span("nowhere")];
        let f = greedy_match(&gold, &[tspan(0, 5)], &MatchConfig::oc());
        assert_eq!(f.counts, Counts::new(0, 1, 1));
    }

    #[test]
    fn sim_deduplicates_by_text() {
        let gold = [text_span("gleiche Worte"), text_span("gleiche Worte")];
        let pred = [text_span("gleiche Worte")];
        let f = greedy_match(&gold, &pred, &MatchConfig::sim());
        assert_eq!(f.counts, Counts::new(1, 0, 0));
        // without dedup the duplicate is a miss
        let cfg = MatchConfig {
            dedup_by_text: false,
            ..MatchConfig::sim()
        };
        assert_eq!(greedy_match(&gold, &pred, &cfg).counts, Counts::new(1, 0, 1));
    }

    #[test]
    fn source_spans_are_ignored() {
        let mut s = tspan(0, 5);
        s.side = Side::Source;
        let f = greedy_match(&[s], &[tspan(0, 5)], &MatchConfig::oc());
        assert_eq!(f.counts, Counts::new(0, 1, 0));
    }

    fn frag(lang: &str, c: Counts) -> SegmentMatch {
        SegmentMatch {
            segment_id: format!("{lang}-{}", c.tp),
            language: lang.into(),
            fragment: MatchFragment {
                counts: c,
                pairs: vec![],
            },
        }
    }

    #[test]
    fn aggregate_single_language() {
        let r = micro_aggregate(&[frag("de", Counts::new(1, 0, 0)), frag("de", Counts::new(0, 1, 1))]);
        assert_eq!(r.pooled.counts, Counts::new(1, 1, 1));
        assert_eq!((r.pooled.precision, r.pooled.recall, r.pooled.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn aggregate_mean_and_range() {
        // F1 0.4 and 0.6
        let r = micro_aggregate(&[frag("da", Counts::new(2, 3, 3)), frag("de", Counts::new(3, 2, 2))]);
        assert!((r.per_language["da"].f1 - 0.4).abs() < 1e-12);
        assert!((r.mean_f1 - 0.5).abs() < 1e-12);
        let (lo, hi) = r.f1_range.unwrap();
        assert!((lo - 0.4).abs() < 1e-12 && (hi - 0.6).abs() < 1e-12);
    }

    #[test]
    fn aggregate_empty() {
        let r = micro_aggregate(&[]);
        assert_eq!(r.pooled.counts, Counts::default());
        assert_eq!(r.pooled.f1, 0.0);
        assert_eq!(r.f1_range, None);
    }

    fn corpus(segs: &[(&str, &str, &str)]) -> Corpus {
        Corpus::new(
            segs.iter()
                .map(|(id, lang, text)| Segment {
                    segment_id: id.to_string(),
                    item_id: None,
                    dataset: "toy".into(),
                    language: lang.to_string(),
                    source_text: "src".into(),
                    target_text: text.to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn set(annotator: &str, seg: &str, spans: Vec<ErrorSpan>) -> AnnotationSet {
        AnnotationSet {
            annotator_id: annotator.into(),
            segment_id: seg.into(),
            spans,
        }
    }

    fn raw(a: usize, b: usize, text: &str, sev: Severity) -> ErrorSpan {
        ErrorSpan::new(Side::Target, text, MqmLabel::Grammar, sev).with_offsets(a, b)
    }

    #[test]
    fn stats_examples() {
        let text = "x".repeat(100);
        let c = corpus(&[("s1", "de", &text), ("s2", "de", &text)]);
        let a = "x".repeat(10);
        let b = "x".repeat(15);
        let sets = [
            set("h", "s1", vec![raw(0, 10, &a, Severity::Minor), raw(5, 20, &b, Severity::Major)]),
            set(
                "h",
                "s2",
                vec![
                    raw(0, 10, &a, Severity::Minor),
                    raw(20, 30, &a, Severity::Minor),
                    raw(40, 50, &a, Severity::Minor),
                    raw(60, 70, &a, Severity::Minor),
                ],
            ),
        ];
        let s = annotator_stats(&sets[..1], &c).unwrap();
        assert!((s.coverage - 0.20).abs() < 1e-12);
        let s = annotator_stats(&sets, &c).unwrap();
        assert_eq!(s.spans_per_sample, 3.0);
        assert_eq!(s.median_span_length, 10.0);
    }

    #[test]
    fn stats_without_spans() {
        let c = corpus(&[("s1", "de", "abc")]);
        let s = annotator_stats(&[set("h", "s1", vec![])], &c).unwrap();
        assert_eq!(s.spans_per_sample, 0.0);
        assert_eq!(s.median_span_length, 0.0);
        assert!(!s.median_defined);
        assert_eq!(s.coverage, 0.0);
    }

    fn anomaly(seg: &str, anchor: Option<ErrorSpan>) -> SourceAnomaly {
        SourceAnomaly {
            segment_id: seg.into(),
            source_span: ErrorSpan::new(Side::Source, "src", MqmLabel::OtherUnknown, Severity::Major),
            target_anchor: anchor,
            category: "typo".into(),
            severity: Severity::Major,
        }
    }

    #[test]
    fn source_overlap_counts_each_span_once() {
        let text = "abcdefghijklmnopqrstuvwxyz";
        let c = corpus(&[("s1", "da", text)]);
        let sets = [set(
            "m",
            "s1",
            vec![raw(0, 10, &text[0..10], Severity::Major), raw(20, 24, &text[20..24], Severity::Minor)],
        )];
        let anomalies = [
            anomaly("s1", Some(raw(0, 9, &text[0..9], Severity::Major))),
            anomaly("s1", Some(raw(0, 10, &text[0..10], Severity::Major))),
            anomaly("s1", None),
        ];
        let r = source_overlap_rate(&sets, &anomalies, &c).unwrap();
        let cell = &r.per_language["da"];
        assert_eq!((cell.spans, cell.overlapping), (2, 1));
        assert_eq!(cell.rate, Some(0.5));
        assert_eq!(r.unlinked_anomalies, 1);
        assert_eq!(r.mean, Some(0.5));
    }

    #[test]
    fn unknown_segment_is_validation_error() {
        let c = corpus(&[("s1", "da", "abc")]);
        let err = compare(&[], &[set("m", "zz", vec![])], &c, &MatchConfig::oc()).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("zz")));
    }
}
