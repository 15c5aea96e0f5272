//! Threshold-free character-overlap metrics on target-side error masks.
//!
//! Char-F1 compares binary masks. Char-F1w additionally compares per-character
//! severity: an overlapping character earns 1.0 when severities agree and 0.5
//! otherwise, and that weighted TP replaces the raw TP in both precision and
//! recall while the denominators stay the unweighted character totals.
//! Both are global micro scores over all segments.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{char_len, merge_intervals, AnnotationSet, Corpus, ErrorSpan, Interval, Severity, Side};
use crate::stats::{self, Estimate};

pub const DEFAULT_REPLICATES: usize = 2_500;
pub const MISMATCH_CREDIT: f64 = 0.5;

/// Severity carried by a masked character. Critical folds into major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSeverity {
    Major,
    Minor,
    Unknown,
}

impl MaskSeverity {
    fn rank(self) -> u8 {
        match self {
            MaskSeverity::Major => 2,
            MaskSeverity::Minor => 1,
            MaskSeverity::Unknown => 0,
        }
    }
}

impl From<Severity> for MaskSeverity {
    fn from(s: Severity) -> Self {
        match s {
            Severity::Major | Severity::Critical => MaskSeverity::Major,
            Severity::Minor => MaskSeverity::Minor,
            Severity::Unknown => MaskSeverity::Unknown,
        }
    }
}

/// Binary error mask over one segment's target text with per-character severity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharMask {
    pub segment_id: String,
    pub length: usize,
    pub error_chars: Vec<Interval>,
    severity: Vec<Option<MaskSeverity>>,
}

impl CharMask {
    pub fn empty(segment_id: impl Into<String>, length: usize) -> Self {
        Self {
            segment_id: segment_id.into(),
            length,
            error_chars: Vec::new(),
            severity: vec![None; length],
        }
    }

    pub fn severity_at(&self, pos: usize) -> Option<MaskSeverity> {
        self.severity.get(pos).copied().flatten()
    }

    pub fn is_error(&self, pos: usize) -> bool {
        self.severity_at(pos).is_some()
    }

    pub fn error_count(&self) -> usize {
        self.error_chars.iter().map(Interval::len).sum()
    }

    pub fn has_errors(&self) -> bool {
        !self.error_chars.is_empty()
    }
}

/// Result of [`build_mask`]: the mask plus how many spans had to be left out.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBuild {
    pub mask: CharMask,
    pub excluded_spans: usize,
}

/// Builds a mask from target-side spans. A character covered by several spans
/// takes the highest severity among them (major > minor > unknown).
/// Spans without valid offsets, or reaching past `length`, are excluded.
pub fn build_mask(segment_id: &str, length: usize, spans: &[ErrorSpan]) -> MaskBuild {
    let mut mask = CharMask::empty(segment_id, length);
    let mut intervals = Vec::new();
    let mut excluded_spans = 0;
    for span in spans.iter().filter(|s| s.side == Side::Target) {
        let Some(iv) = span.interval().filter(|iv| iv.end <= length) else {
            excluded_spans += 1;
            continue;
        };
        let sev = MaskSeverity::from(span.severity);
        for slot in &mut mask.severity[iv.start..iv.end] {
            if slot.is_none_or(|cur| sev.rank() > cur.rank()) {
                *slot = Some(sev);
            }
        }
        intervals.push(iv);
    }
    mask.error_chars = merge_intervals(intervals);
    MaskBuild {
        mask,
        excluded_spans,
    }
}

/// Grounds one annotator's sets and builds a mask for every segment in
/// `segment_ids`; segments without a set get an empty mask.
pub fn masks_for_annotator(
    sets: &[AnnotationSet],
    corpus: &Corpus,
    segment_ids: &[String],
) -> Result<(Vec<CharMask>, usize)> {
    let mut spans: HashMap<&str, Vec<ErrorSpan>> = HashMap::new();
    for set in crate::io::ground_all(sets, corpus)? {
        spans
            .entry(corpus.require(&set.segment_id)?.segment_id.as_str())
            .or_default()
            .extend(set.spans);
    }
    let mut excluded = 0;
    let masks = segment_ids
        .iter()
        .map(|id| {
            let seg = corpus.require(id)?;
            let built = build_mask(
                id,
                char_len(&seg.target_text),
                spans.get(id.as_str()).map(Vec::as_slice).unwrap_or(&[]),
            );
            excluded += built.excluded_spans;
            Ok(built.mask)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((masks, excluded))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CharMetric {
    CharF1,
    CharF1w,
}

impl CharMetric {
    pub fn name(&self) -> &'static str {
        match self {
            CharMetric::CharF1 => "Char-F1",
            CharMetric::CharF1w => "Char-F1w",
        }
    }
}

/// Per-segment character tallies; summing them gives the global scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CharTally {
    pub tp: usize,
    pub weighted_tp: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for CharTally {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.weighted_tp += rhs.weighted_tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

impl CharTally {
    fn between(gold: &CharMask, pred: &CharMask) -> Self {
        let mut t = CharTally::default();
        for pos in 0..gold.length {
            match (gold.severity_at(pos), pred.severity_at(pos)) {
                (Some(g), Some(p)) => {
                    t.tp += 1;
                    t.weighted_tp += if g == p && g != MaskSeverity::Unknown {
                        1.0
                    } else {
                        MISMATCH_CREDIT
                    };
                }
                (Some(_), None) => t.fn_ += 1,
                (None, Some(_)) => t.fp += 1,
                (None, None) => {}
            }
        }
        t
    }

    /// Scores for `metric`. With no error character on either side the masks
    /// agree completely and every score is 1.
    pub fn scores(&self, metric: CharMetric) -> CharScore {
        if self.tp + self.fp + self.fn_ == 0 {
            return CharScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let tp = match metric {
            CharMetric::CharF1 => self.tp as f64,
            CharMetric::CharF1w => self.weighted_tp,
        };
        let precision = stats::ratio(tp, (self.tp + self.fp) as f64);
        let recall = stats::ratio(tp, (self.tp + self.fn_) as f64);
        CharScore {
            precision,
            recall,
            f1: stats::f1(precision, recall),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Pairs masks by segment id and tallies each segment.
pub fn segment_tallies(gold: &[CharMask], pred: &[CharMask]) -> Result<Vec<CharTally>> {
    let pred_by_id: BTreeMap<&str, &CharMask> =
        pred.iter().map(|m| (m.segment_id.as_str(), m)).collect();
    if pred_by_id.len() != pred.len() {
        return Err(Error::validation("duplicate segment in predicted masks"));
    }
    let mut gold_ids = std::collections::HashSet::new();
    let tallies = gold
        .iter()
        .map(|g| {
            if !gold_ids.insert(g.segment_id.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate segment {} in gold masks",
                    g.segment_id
                )));
            }
            let p = pred_by_id.get(g.segment_id.as_str()).ok_or_else(|| {
                Error::validation(format!("segment {} has no predicted mask", g.segment_id))
            })?;
            if p.length != g.length {
                return Err(Error::validation(format!(
                    "segment {}: mask lengths differ ({} vs {})",
                    g.segment_id, g.length, p.length
                )));
            }
            Ok(CharTally::between(g, p))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = pred_by_id.keys().find(|id| !gold_ids.contains(*id)) {
        return Err(Error::validation(format!(
            "segment {extra} has no gold mask"
        )));
    }
    Ok(tallies)
}

fn total(tallies: &[CharTally]) -> CharTally {
    let mut t = CharTally::default();
    for x in tallies {
        t += *x;
    }
    t
}

pub fn char_score(gold: &[CharMask], pred: &[CharMask], metric: CharMetric) -> Result<CharScore> {
    Ok(total(&segment_tallies(gold, pred)?).scores(metric))
}

pub fn char_f1(gold: &[CharMask], pred: &[CharMask]) -> Result<f64> {
    Ok(char_score(gold, pred, CharMetric::CharF1)?.f1)
}

pub fn char_f1w(gold: &[CharMask], pred: &[CharMask]) -> Result<f64> {
    Ok(char_score(gold, pred, CharMetric::CharF1w)?.f1)
}

/// Segment-resampling percentile bootstrap of a global character metric.
pub fn char_ci(
    gold: &[CharMask],
    pred: &[CharMask],
    metric: CharMetric,
    replicates: usize,
    seed: u64,
) -> Result<Estimate> {
    if replicates == 0 {
        return Err(Error::parameter("bootstrap needs at least one replicate"));
    }
    let tallies = segment_tallies(gold, pred)?;
    let point = total(&tallies).scores(metric).f1;
    if tallies.is_empty() {
        return Err(Error::validation("no segments to resample"));
    }
    let n = tallies.len();
    let values: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stats::replicate_rng(seed, r);
            let mut t = CharTally::default();
            for _ in 0..n {
                t += tallies[rng.random_range(0..n)];
            }
            t.scores(metric).f1
        })
        .collect();
    Ok(stats::percentile_interval(point, &values).expect("replicates > 0"))
}

/// Segment-level error/no-error agreement: binary F1 treating "mask has at
/// least one error character" as the positive class.
pub fn any_error_f1(gold: &[CharMask], pred: &[CharMask]) -> Result<f64> {
    segment_tallies(gold, pred)?;
    let pred_by_id: HashMap<&str, &CharMask> =
        pred.iter().map(|m| (m.segment_id.as_str(), m)).collect();
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for g in gold {
        match (g.has_errors(), pred_by_id[g.segment_id.as_str()].has_errors()) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    Ok(stats::f1(stats::ratio(tp, tp + fp), stats::ratio(tp, tp + fn_)))
}
