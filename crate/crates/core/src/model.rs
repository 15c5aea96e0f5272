//! Shared domain types, offset grounding and interval helpers.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Language tags that denote the English original rather than a translation.
pub const ENGLISH_MARKERS: [&str; 4] = ["en", "eng", "english", "en-us"];

pub fn is_english(language: &str) -> bool {
    ENGLISH_MARKERS
        .iter()
        .any(|m| m.eq_ignore_ascii_case(language.trim()))
}

/// Half-open character interval `[start, end)` in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::precondition(format!(
                "interval [{start},{end}) is empty"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &Interval) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Sorts and unions intervals into the minimal disjoint cover.
/// Touching intervals (`[0,2)` and `[2,4)`) are joined.
pub fn merge_intervals(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.retain(|iv| !iv.is_empty());
    intervals.sort_unstable();
    let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// Unions the offsets of grounded spans.
///
/// Every span must carry valid offsets; callers are expected to filter by side
/// and segment beforehand.
pub fn merge_overlapping(spans: &[ErrorSpan]) -> Result<Vec<Interval>> {
    let intervals = spans
        .iter()
        .map(|s| {
            s.interval().ok_or_else(|| {
                Error::precondition(format!("span {:?} has no valid offsets", s.text))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_intervals(intervals))
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by character offsets; `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(Some(text.len()));
    let lo = indices.nth(start)?;
    let hi = if end == start {
        lo
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[lo..hi])
}

macro_rules! string_enum_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

fn normalize_tag(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == '_' || c == ' ' { '-' } else { c })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Source => "source",
            Side::Target => "target",
        }
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match normalize_tag(s).as_str() {
            "source" | "src" => Ok(Side::Source),
            "target" | "tgt" => Ok(Side::Target),
            other => Err(format!("unknown span side {other:?}")),
        }
    }
}

string_enum_serde!(Side);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Major,
    Minor,
    Critical,
    Unknown,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Major => "major",
            Severity::Minor => "minor",
            Severity::Critical => "critical",
            Severity::Unknown => "unknown",
        }
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match normalize_tag(s).as_str() {
            "major" => Ok(Severity::Major),
            "minor" => Ok(Severity::Minor),
            "critical" => Ok(Severity::Critical),
            "unknown" | "" | "none" => Ok(Severity::Unknown),
            other => Err(format!("unknown severity {other:?}")),
        }
    }
}

string_enum_serde!(Severity);

/// Reduced MQM label inventory used for manual and automatic annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MqmLabel {
    Addition,
    Omission,
    Mistranslation,
    UnderTranslation,
    OverTranslation,
    Reordering,
    Untranslated,
    WrongLanguage,
    DoNotTranslate,
    Grammar,
    Spelling,
    Punctuation,
    Inconsistent,
    Awkward,
    Unintelligible,
    OtherUnknown,
}

impl MqmLabel {
    pub const ALL: [MqmLabel; 16] = [
        MqmLabel::Addition,
        MqmLabel::Omission,
        MqmLabel::Mistranslation,
        MqmLabel::UnderTranslation,
        MqmLabel::OverTranslation,
        MqmLabel::Reordering,
        MqmLabel::Untranslated,
        MqmLabel::WrongLanguage,
        MqmLabel::DoNotTranslate,
        MqmLabel::Grammar,
        MqmLabel::Spelling,
        MqmLabel::Punctuation,
        MqmLabel::Inconsistent,
        MqmLabel::Awkward,
        MqmLabel::Unintelligible,
        MqmLabel::OtherUnknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MqmLabel::Addition => "Addition",
            MqmLabel::Omission => "Omission",
            MqmLabel::Mistranslation => "Mistranslation",
            MqmLabel::UnderTranslation => "Under-translation",
            MqmLabel::OverTranslation => "Over-translation",
            MqmLabel::Reordering => "Reordering",
            MqmLabel::Untranslated => "Untranslated",
            MqmLabel::WrongLanguage => "Wrong language",
            MqmLabel::DoNotTranslate => "Do-not-translate",
            MqmLabel::Grammar => "Grammar",
            MqmLabel::Spelling => "Spelling",
            MqmLabel::Punctuation => "Punctuation",
            MqmLabel::Inconsistent => "Inconsistent",
            MqmLabel::Awkward => "Awkward",
            MqmLabel::Unintelligible => "Unintelligible",
            MqmLabel::OtherUnknown => "Other/Unknown",
        }
    }

    /// Accuracy labels as opposed to Fluency/Style ones.
    pub fn is_accuracy(&self) -> bool {
        (*self as usize) <= MqmLabel::DoNotTranslate as usize
    }
}

impl FromStr for MqmLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key = normalize_tag(s);
        if matches!(key.as_str(), "other" | "unknown" | "other/unknown" | "other-unknown") {
            return Ok(MqmLabel::OtherUnknown);
        }
        MqmLabel::ALL
            .iter()
            .copied()
            .find(|l| normalize_tag(l.as_str()) == key)
            .ok_or_else(|| format!("label {s:?} is not in the MQM inventory"))
    }
}

string_enum_serde!(MqmLabel);

/// One benchmark item rendered in one target language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    /// Underlying English item; falls back to `segment_id` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    pub dataset: String,
    pub language: String,
    pub source_text: String,
    pub target_text: String,
}

impl Segment {
    pub fn item_key(&self) -> &str {
        self.item_id.as_deref().unwrap_or(&self.segment_id)
    }

    pub fn text(&self, side: Side) -> &str {
        match side {
            Side::Source => &self.source_text,
            Side::Target => &self.target_text,
        }
    }
}

/// One annotated error region.
///
/// `start`/`end` hold whatever offsets were read; they are only trusted when
/// `offsets_valid` is set, which [`ground_span`] decides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpan {
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    pub text: String,
    pub label: MqmLabel,
    pub severity: Severity,
    #[serde(default, skip_deserializing)]
    pub offsets_valid: bool,
}

impl ErrorSpan {
    pub fn new(side: Side, text: impl Into<String>, label: MqmLabel, severity: Severity) -> Self {
        Self {
            side,
            start: None,
            end: None,
            text: text.into(),
            label,
            severity,
            offsets_valid: false,
        }
    }

    pub fn with_offsets(mut self, start: usize, end: usize) -> Self {
        self.start = Some(start);
        self.end = Some(end);
        self
    }

    /// Offsets, if they have been validated against the segment text.
    pub fn interval(&self) -> Option<Interval> {
        match (self.offsets_valid, self.start, self.end) {
            (true, Some(start), Some(end)) if start < end => Some(Interval { start, end }),
            _ => None,
        }
    }

    pub(crate) fn check_shape(&self) -> std::result::Result<(), String> {
        if self.text.is_empty() {
            return Err("span text is empty".into());
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s >= e {
                return Err(format!("span [{s},{e}) has zero length"));
            }
        }
        Ok(())
    }
}

fn find_unique(haystack: &str, needle: &str) -> Option<usize> {
    let mut found = None;
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let at = from + pos;
        if found.is_some() {
            return None;
        }
        found = Some(at);
        // step one character so overlapping occurrences are seen
        let step = haystack[at..].chars().next().map_or(1, char::len_utf8);
        from = at + step;
        if from > haystack.len() {
            break;
        }
    }
    found.map(|byte| haystack[..byte].chars().count())
}

/// Validates a span's offsets against `segment_text`, recovering them by exact
/// substring search when they are missing or inconsistent.
///
/// Recovery only succeeds when the span text occurs exactly once; otherwise the
/// span is returned unlinked (`offsets_valid = false`).
pub fn ground_span(span: &ErrorSpan, segment_text: &str) -> ErrorSpan {
    let mut out = span.clone();
    if let (Some(start), Some(end)) = (span.start, span.end) {
        if start < end && char_slice(segment_text, start, end) == Some(span.text.as_str()) {
            out.offsets_valid = true;
            return out;
        }
    }
    match (!span.text.is_empty())
        .then(|| find_unique(segment_text, &span.text))
        .flatten()
    {
        Some(start) => {
            out.start = Some(start);
            out.end = Some(start + char_len(&span.text));
            out.offsets_valid = true;
        }
        None => out.offsets_valid = false,
    }
    out
}

/// One annotator's spans for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub annotator_id: String,
    pub segment_id: String,
    #[serde(default)]
    pub spans: Vec<ErrorSpan>,
}

impl AnnotationSet {
    /// Grounds every span against the matching side of its segment.
    pub fn ground(&self, corpus: &Corpus) -> Result<AnnotationSet> {
        let segment = corpus.require(&self.segment_id)?;
        Ok(AnnotationSet {
            annotator_id: self.annotator_id.clone(),
            segment_id: self.segment_id.clone(),
            spans: self
                .spans
                .iter()
                .map(|s| ground_span(s, segment.text(s.side)))
                .collect(),
        })
    }

    pub fn target_spans(&self) -> impl Iterator<Item = &ErrorSpan> {
        self.spans.iter().filter(|s| s.side == Side::Target)
    }

    pub fn source_spans(&self) -> impl Iterator<Item = &ErrorSpan> {
        self.spans.iter().filter(|s| s.side == Side::Source)
    }
}

/// A source-side anomaly with its optional target-side anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceAnomaly {
    pub segment_id: String,
    pub source_span: ErrorSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_anchor: Option<ErrorSpan>,
    pub category: String,
    pub severity: Severity,
}

impl SourceAnomaly {
    pub fn ground(&self, corpus: &Corpus) -> Result<SourceAnomaly> {
        let segment = corpus.require(&self.segment_id)?;
        Ok(SourceAnomaly {
            segment_id: self.segment_id.clone(),
            source_span: ground_span(&self.source_span, &segment.source_text),
            target_anchor: self
                .target_anchor
                .as_ref()
                .map(|a| ground_span(a, &segment.target_text)),
            category: self.category.clone(),
            severity: self.severity,
        })
    }

    /// Target-side region this anomaly is linked to, if the anchor grounded.
    pub fn linked_target(&self) -> Option<Interval> {
        self.target_anchor.as_ref().and_then(ErrorSpan::interval)
    }
}

fn flexible_bool<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Bool(bool),
        Int(i64),
        Float(f64),
    }
    match Raw::deserialize(d)? {
        Raw::Bool(b) => Ok(b),
        Raw::Int(0) => Ok(false),
        Raw::Int(1) => Ok(true),
        Raw::Float(f) if f == 0.0 => Ok(false),
        Raw::Float(f) if f == 1.0 => Ok(true),
        _ => Err(serde::de::Error::custom("expected a boolean or 0/1")),
    }
}

/// Binary correctness of one evaluation model on one item in one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessRecord {
    pub item_id: String,
    pub language: String,
    pub dataset: String,
    pub eval_model: String,
    #[serde(deserialize_with = "flexible_bool")]
    pub correct: bool,
}

/// Segments indexed by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    segments: Vec<Segment>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(segments.len());
        for (i, seg) in segments.iter().enumerate() {
            if seg.source_text.is_empty() || seg.target_text.is_empty() {
                return Err(Error::validation(format!(
                    "segment {} has empty source or target text",
                    seg.segment_id
                )));
            }
            if by_id.insert(seg.segment_id.clone(), i).is_some() {
                return Err(Error::validation(format!(
                    "duplicate segment_id {}",
                    seg.segment_id
                )));
            }
        }
        Ok(Self { segments, by_id })
    }

    pub fn get(&self, segment_id: &str) -> Option<&Segment> {
        self.by_id.get(segment_id).map(|&i| &self.segments[i])
    }

    pub fn require(&self, segment_id: &str) -> Result<&Segment> {
        self.get(segment_id)
            .ok_or_else(|| Error::validation(format!("unknown segment_id {segment_id}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn language_of(&self, segment_id: &str) -> Option<&str> {
        self.get(segment_id).map(|s| s.language.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(text: &str) -> ErrorSpan {
        ErrorSpan::new(Side::Target, text, MqmLabel::Mistranslation, Severity::Major)
    }

    #[test]
    fn grounding_recovers_unique_substring() {
        let text = "Bremselængden er den afstand, der kræver kortere tid at stoppe.";
        let start = text.find("kortere tid").unwrap();
        let start = text[..start].chars().count();
        let g = ground_span(&span("kortere tid"), text);
        assert!(g.offsets_valid);
        assert_eq!(g.interval(), Some(Interval { start, end: start + 11 }));
        assert_eq!(char_slice(text, start, start + 11), Some("kortere tid"));
    }

    #[test]
    fn grounding_counts_offsets_in_scalar_values() {
        // 'æ' and 'ø' are two bytes each in UTF-8
        let text = "æøx kortere tid";
        let g = ground_span(&span("kortere tid"), text);
        assert_eq!(g.interval(), Some(Interval { start: 4, end: 15 }));
    }

    #[test]
    fn ambiguous_text_stays_unlinked() {
        let g = ground_span(&span("der"), "der og der");
        assert!(!g.offsets_valid);
        assert_eq!(g.interval(), None);
        // overlapping repeats are ambiguous too
        assert!(!ground_span(&span("aa"), "aaa").offsets_valid);
    }

    #[test]
    fn valid_offsets_are_kept_even_if_text_repeats() {
        let s = span("der").with_offsets(7, 10);
        let g = ground_span(&s, "der og der");
        assert!(g.offsets_valid);
        assert_eq!(g.start, Some(7));
    }

    #[test]
    fn inconsistent_offsets_fall_back_to_search() {
        let s = span("og").with_offsets(0, 2);
        let g = ground_span(&s, "der og der");
        assert_eq!(g.interval(), Some(Interval { start: 4, end: 6 }));
    }

    #[test]
    fn merge_cases() {
        let iv = |a, b| Interval { start: a, end: b };
        assert_eq!(merge_intervals(vec![iv(0, 5), iv(3, 8)]), vec![iv(0, 8)]);
        assert_eq!(
            merge_intervals(vec![iv(4, 6), iv(0, 2)]),
            vec![iv(0, 2), iv(4, 6)]
        );
        assert_eq!(merge_intervals(vec![]), vec![]);
        assert_eq!(merge_intervals(vec![iv(0, 2), iv(2, 4)]), vec![iv(0, 4)]);
    }

    #[test]
    fn merge_overlapping_rejects_unlinked() {
        let err = merge_overlapping(&[span("x")]).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn labels_parse_loosely() {
        assert_eq!("wrong_language".parse::<MqmLabel>(), Ok(MqmLabel::WrongLanguage));
        assert_eq!("Do not translate".parse::<MqmLabel>(), Ok(MqmLabel::DoNotTranslate));
        assert_eq!("Other".parse::<MqmLabel>(), Ok(MqmLabel::OtherUnknown));
        assert!("Terminology".parse::<MqmLabel>().is_err());
        assert!(MqmLabel::DoNotTranslate.is_accuracy());
        assert!(!MqmLabel::Grammar.is_accuracy());
    }

    #[test]
    fn corpus_rejects_duplicates() {
        let seg = Segment {
            segment_id: "s1".into(),
            item_id: None,
            dataset: "arc".into(),
            language: "da".into(),
            source_text: "a".into(),
            target_text: "b".into(),
        };
        let err = Corpus::new(vec![seg.clone(), seg]).unwrap_err();
        assert!(err.to_string().contains("s1"));
    }

    #[test]
    fn char_slice_bounds() {
        assert_eq!(char_slice("abc", 1, 3), Some("bc"));
        assert_eq!(char_slice("abc", 3, 3), Some(""));
        assert_eq!(char_slice("abc", 2, 4), None);
    }
}
