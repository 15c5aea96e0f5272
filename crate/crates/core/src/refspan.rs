//! Gold error spans projected from good/incorrect translation pairs.
//!
//! Each item carries a human reference plus a good and an incorrect
//! translation that differ in one targeted place. The good→incorrect token
//! diff is computed; if exactly one edit changes lexical content on the good
//! side, that good-side token sequence is looked up in the reference and, when
//! it occurs exactly once, becomes the gold span. Everything else is discarded
//! with a reason.
//!
//! Tokenization splits on whitespace and detaches leading and trailing
//! non-alphanumeric characters as single-character tokens. The same tokenizer
//! is used for all three texts, so diffs, projections and predictions share
//! one token space.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_SLACK: usize = 3;
pub const DEFAULT_CAP: usize = 25;

const BUILTIN_MAPPING: &str = include_str!("../data/phenomenon_mqm.tsv");

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let lead = chars.iter().take_while(|c| !c.is_alphanumeric()).count();
        if lead == chars.len() {
            tokens.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let trail = chars.iter().rev().take_while(|c| !c.is_alphanumeric()).count();
        tokens.extend(chars[..lead].iter().map(|c| c.to_string()));
        tokens.push(chars[lead..chars.len() - trail].iter().collect());
        tokens.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));
    }
    tokens
}

fn is_contentful(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// One contiguous replace/insert/delete between two token sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEdit {
    pub good: Range<usize>,
    pub incorrect: Range<usize>,
}

impl TokenEdit {
    pub fn is_insertion(&self) -> bool {
        self.good.is_empty()
    }
}

/// Edits from a longest-common-subsequence alignment; each maximal run of
/// unaligned tokens between two aligned ones is one edit. Comparison is
/// case-sensitive.
pub fn diff_tokens<T: AsRef<str>>(good: &[T], incorrect: &[T]) -> Vec<TokenEdit> {
    let (n, m) = (good.len(), incorrect.len());
    // suffix LCS lengths
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if good[i].as_ref() == incorrect[j].as_ref() {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut edits = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut open: Option<(usize, usize)> = None;
    while i < n || j < m {
        if i < n && j < m && good[i].as_ref() == incorrect[j].as_ref() {
            if let Some((gi, gj)) = open.take() {
                edits.push(TokenEdit {
                    good: gi..i,
                    incorrect: gj..j,
                });
            }
            i += 1;
            j += 1;
            continue;
        }
        open.get_or_insert((i, j));
        if j >= m || (i < n && lcs[i + 1][j] >= lcs[i][j + 1]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    if let Some((gi, gj)) = open {
        edits.push(TokenEdit {
            good: gi..n,
            incorrect: gj..m,
        });
    }
    edits
}

pub fn token_diff(good: &str, incorrect: &str) -> Vec<TokenEdit> {
    diff_tokens(&tokenize(good), &tokenize(incorrect))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcesItem {
    pub item_id: String,
    pub language: String,
    pub phenomenon: String,
    pub reference: String,
    pub good: String,
    pub incorrect: String,
}

impl AcesItem {
    pub fn validate(&self) -> Result<()> {
        if self.reference.trim().is_empty() || self.good.trim().is_empty() || self.incorrect.trim().is_empty() {
            return Err(Error::validation(format!(
                "item {} has an empty reference, good or incorrect text",
                self.item_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    MultipleDiffs,
    NonContentful,
    NoReferenceMatch,
    AmbiguousReferenceMatch,
}

/// Token interval `[start, end)` on the reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub token_start: usize,
    pub token_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedItem {
    pub item_id: String,
    pub language: String,
    pub phenomenon: String,
    pub reference_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_span: Option<GoldSpan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discarded: Option<DiscardReason>,
    /// Set when the only content change was a pure insertion on the incorrect side.
    pub zero_width: bool,
    /// Human-readable summary of the diff, e.g. `genehmigte → lehnte … ab`.
    pub edit: String,
}

impl ProjectedItem {
    pub fn is_kept(&self) -> bool {
        self.gold_span.is_some()
    }
}

fn occurrences<T: AsRef<str>>(haystack: &[T], needle: &[T]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| {
            haystack[i..i + needle.len()]
                .iter()
                .zip(needle)
                .all(|(a, b)| a.as_ref() == b.as_ref())
        })
        .collect()
}

fn summarize(edits: &[TokenEdit], good: &[String], incorrect: &[String]) -> String {
    let good_side: Vec<String> = edits
        .iter()
        .filter(|e| !e.good.is_empty())
        .map(|e| good[e.good.clone()].join(" "))
        .collect();
    let bad_side: Vec<String> = edits
        .iter()
        .filter(|e| !e.incorrect.is_empty())
        .map(|e| incorrect[e.incorrect.clone()].join(" "))
        .collect();
    format!("{} → {}", good_side.join(" … "), bad_side.join(" … "))
}

/// Derives the gold span for one item, or the reason it is discarded.
pub fn project(item: &AcesItem) -> ProjectedItem {
    let good = tokenize(&item.good);
    let incorrect = tokenize(&item.incorrect);
    let reference = tokenize(&item.reference);
    let edits = diff_tokens(&good, &incorrect);

    let contentful: Vec<&TokenEdit> = edits
        .iter()
        .filter(|e| good[e.good.clone()].iter().any(|t| is_contentful(t)))
        .collect();
    let content_insertion = edits
        .iter()
        .any(|e| e.is_insertion() && incorrect[e.incorrect.clone()].iter().any(|t| is_contentful(t)));

    let mut out = ProjectedItem {
        item_id: item.item_id.clone(),
        language: item.language.clone(),
        phenomenon: item.phenomenon.clone(),
        reference_tokens: reference.len(),
        gold_span: None,
        discarded: None,
        zero_width: false,
        edit: summarize(&edits, &good, &incorrect),
    };
    match contentful.as_slice() {
        [] if content_insertion => {
            out.zero_width = true;
            out.discarded = Some(DiscardReason::NoReferenceMatch);
        }
        [] => out.discarded = Some(DiscardReason::NonContentful),
        [edit] => {
            let needle = &good[edit.good.clone()];
            match occurrences(&reference, needle).as_slice() {
                [] => out.discarded = Some(DiscardReason::NoReferenceMatch),
                [start] => {
                    out.gold_span = Some(GoldSpan {
                        token_start: *start,
                        token_end: start + needle.len(),
                        text: needle.join(" "),
                    })
                }
                _ => out.discarded = Some(DiscardReason::AmbiguousReferenceMatch),
            }
        }
        _ => out.discarded = Some(DiscardReason::MultipleDiffs),
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub total: usize,
    pub kept: usize,
    pub discarded: BTreeMap<DiscardReason, usize>,
    pub zero_width: usize,
}

pub fn summarize_projection(items: &[ProjectedItem]) -> ProjectionSummary {
    let mut s = ProjectionSummary {
        total: items.len(),
        ..Default::default()
    };
    for item in items {
        match item.discarded {
            Some(reason) => *s.discarded.entry(reason).or_insert(0) += 1,
            None => s.kept += 1,
        }
        s.zero_width += usize::from(item.zero_width);
    }
    s
}

/// A predicted token span on the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub item_id: String,
    pub token_start: usize,
    pub token_end: usize,
}

/// Is `pred` a tolerant hit for `gold`: it contains the gold span and extends
/// at most `k` tokens beyond it on each side. With `k = 0` this is equality.
pub fn tolerant_hit(gold: &GoldSpan, pred: &TokenPrediction, k: usize) -> bool {
    pred.token_start <= gold.token_start
        && pred.token_end >= gold.token_end
        && gold.token_start - pred.token_start <= k
        && pred.token_end - gold.token_end <= k
}

pub fn classic_hit(gold: &GoldSpan, pred: &TokenPrediction) -> bool {
    pred.token_start == gold.token_start && pred.token_end == gold.token_end
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenomenonScore {
    pub phenomenon: String,
    /// Kept gold items.
    pub n: usize,
    pub predictions: usize,
    pub tp: usize,
    pub tp_tolerant: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_tolerant: f64,
    pub recall_tolerant: f64,
    pub f1_tolerant: f64,
}

impl PhenomenonScore {
    pub fn from_counts(phenomenon: impl Into<String>, n: usize, predictions: usize, tp: usize, tp_tolerant: usize) -> Self {
        let p = stats::ratio(tp as f64, predictions as f64);
        let r = stats::ratio(tp as f64, n as f64);
        let pt = stats::ratio(tp_tolerant as f64, predictions as f64);
        let rt = stats::ratio(tp_tolerant as f64, n as f64);
        Self {
            phenomenon: phenomenon.into(),
            n,
            predictions,
            tp,
            tp_tolerant,
            precision: p,
            recall: r,
            f1: stats::f1(p, r),
            precision_tolerant: pt,
            recall_tolerant: rt,
            f1_tolerant: stats::f1(pt, rt),
        }
    }
}

/// Classic and tolerant scores per phenomenon over kept items.
///
/// Each kept item has one gold span, so at most one of its predictions can be
/// a true positive; every other prediction is a false positive. Predictions
/// for discarded items are ignored.
pub fn score_spans(
    items: &[ProjectedItem],
    preds: &[TokenPrediction],
    k: usize,
) -> Result<Vec<PhenomenonScore>> {
    let by_id: HashMap<&str, &ProjectedItem> =
        items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let mut preds_by_item: HashMap<&str, Vec<&TokenPrediction>> = HashMap::new();
    for p in preds {
        let item = by_id.get(p.item_id.as_str()).ok_or_else(|| {
            Error::validation(format!("prediction for unknown item {}", p.item_id))
        })?;
        if p.token_start >= p.token_end || p.token_end > item.reference_tokens {
            return Err(Error::validation(format!(
                "prediction [{},{}) for item {} is outside its {} reference tokens",
                p.token_start, p.token_end, p.item_id, item.reference_tokens
            )));
        }
        preds_by_item.entry(p.item_id.as_str()).or_default().push(p);
    }

    let mut acc: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for item in items {
        let Some(gold) = &item.gold_span else { continue };
        let ps = preds_by_item.get(item.item_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let cell = acc.entry(item.phenomenon.as_str()).or_default();
        cell[0] += 1;
        cell[1] += ps.len();
        cell[2] += usize::from(ps.iter().any(|p| classic_hit(gold, p)));
        cell[3] += usize::from(ps.iter().any(|p| tolerant_hit(gold, p, k)));
    }
    Ok(acc
        .into_iter()
        .map(|(ph, [n, np, tp, tpt])| PhenomenonScore::from_counts(ph, n, np, tp, tpt))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub mqm_type: String,
    pub category: String,
}

/// Phenomenon → MQM type and coarse category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryMap {
    entries: BTreeMap<String, MappingEntry>,
}

impl CategoryMap {
    pub fn builtin() -> Self {
        Self::from_tsv(BUILTIN_MAPPING).expect("bundled mapping parses")
    }

    /// Three tab-separated columns per line; `#` starts a comment line.
    pub fn from_tsv(raw: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in raw.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [ph, ty, cat] = cols.as_slice() else {
                return Err(Error::validation(format!(
                    "mapping line {} needs 3 tab-separated columns",
                    i + 1
                )));
            };
            entries.insert(
                ph.trim().to_string(),
                MappingEntry {
                    mqm_type: ty.trim().to_string(),
                    category: cat.trim().to_string(),
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn get(&self, phenomenon: &str) -> Result<&MappingEntry> {
        self.entries.get(phenomenon).ok_or_else(|| {
            Error::validation(format!(
                "unknown phenomenon {phenomenon:?}; known phenomena: {}",
                self.entries.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn phenomena(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weight each phenomenon by its item count.
    MeanN,
    /// Weight by the item count capped at `C`.
    MeanCap(usize),
}

impl Weighting {
    fn weight(&self, n: usize) -> f64 {
        match *self {
            Weighting::MeanN => n as f64,
            Weighting::MeanCap(cap) => n.min(cap) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub weighting: Weighting,
    pub phenomena: usize,
    pub total_weight: f64,
    pub f1: f64,
    pub recall: f64,
    pub f1_tolerant: f64,
    pub recall_tolerant: f64,
}

/// Weighted mean of phenomenon scores within each coarse MQM category.
pub fn aggregate(
    scores: &[PhenomenonScore],
    map: &CategoryMap,
    weighting: Weighting,
) -> Result<Vec<CategoryScore>> {
    let mut acc: BTreeMap<&str, (usize, f64, [f64; 4])> = BTreeMap::new();
    for s in scores {
        let cat = map.get(&s.phenomenon)?.category.as_str();
        let w = weighting.weight(s.n);
        let cell = acc.entry(cat).or_default();
        cell.0 += 1;
        cell.1 += w;
        for (slot, v) in cell.2.iter_mut().zip([s.f1, s.recall, s.f1_tolerant, s.recall_tolerant]) {
            *slot += w * v;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(cat, (phenomena, total, sums))| {
            let avg = |v: f64| stats::ratio(v, total);
            CategoryScore {
                category: cat.to_string(),
                weighting,
                phenomena,
                total_weight: total,
                f1: avg(sums[0]),
                recall: avg(sums[1]),
                f1_tolerant: avg(sums[2]),
                recall_tolerant: avg(sums[3]),
            }
        })
        .collect())
}
