//! Multi-rater chance-corrected reliability (Krippendorff's alpha).
//!
//! Both coefficients are nominal alpha on binary values built from a
//! coincidence matrix: once with segments as units and "has any target error"
//! as the value, and once with every target character of every segment as a
//! unit and "inside an error span" as the value. The second one measures
//! agreement on span location and boundaries; it is not numerically the
//! 1995/2016 unit-distance formulation of unitized alpha.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::char_metrics::{build_mask, CharMask};
use crate::error::{Error, Result};
use crate::model::{char_len, AnnotationSet, Corpus, ErrorSpan};

/// Binary coincidence matrix. `o01` equals `o10` by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Coincidence {
    o00: f64,
    o01: f64,
    o11: f64,
}

impl Coincidence {
    /// Adds one unit rated by `raters` coders of whom `ones` chose value 1.
    /// Units with fewer than two values are not pairable and are skipped.
    fn add_unit(&mut self, ones: usize, raters: usize) {
        if raters < 2 {
            return;
        }
        let (k, m) = (ones as f64, raters as f64);
        let zeros = m - k;
        let w = 1.0 / (m - 1.0);
        self.o11 += k * (k - 1.0) * w;
        self.o00 += zeros * (zeros - 1.0) * w;
        self.o01 += k * zeros * w;
    }

    fn alpha(&self) -> Alpha {
        let n0 = self.o00 + self.o01;
        let n1 = self.o11 + self.o01;
        let n = n0 + n1;
        let observed = if n > 0.0 { 2.0 * self.o01 / n } else { 0.0 };
        let expected = if n > 1.0 {
            2.0 * n0 * n1 / (n * (n - 1.0))
        } else {
            0.0
        };
        Alpha {
            value: (expected > 0.0).then(|| 1.0 - observed / expected),
            observed_disagreement: observed,
            expected_disagreement: expected,
            pairable_values: n,
        }
    }
}

/// An alpha coefficient with its ingredients. `value` is `None` when there is
/// no variation in the data (expected disagreement is zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub value: Option<f64>,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    pub pairable_values: f64,
}

/// Complete segment × rater design.
#[derive(Debug, Clone, PartialEq)]
pub struct RaterGrid {
    pub segments: Vec<String>,
    pub languages: Vec<String>,
    pub raters: Vec<String>,
    /// `labels[segment][rater]`: rater marked at least one target error.
    pub labels: Vec<Vec<bool>>,
    /// `masks[segment][rater]`.
    pub masks: Vec<Vec<CharMask>>,
}

impl RaterGrid {
    /// Grid with segment-level labels only; character masks are left empty.
    pub fn from_labels(raters: Vec<String>, labels: Vec<Vec<bool>>) -> Result<Self> {
        let segments: Vec<String> = (0..labels.len()).map(|i| format!("u{i}")).collect();
        let masks = labels
            .iter()
            .zip(&segments)
            .map(|(row, id)| row.iter().map(|_| CharMask::empty(id.clone(), 0)).collect())
            .collect();
        Self::new(
            segments.clone(),
            vec![String::new(); segments.len()],
            raters,
            labels,
            masks,
        )
    }

    /// Grid with both labels and masks; labels are derived from the masks.
    pub fn from_masks(
        languages: Vec<String>,
        raters: Vec<String>,
        masks: Vec<Vec<CharMask>>,
    ) -> Result<Self> {
        let segments = masks
            .iter()
            .map(|row| row.first().map(|m| m.segment_id.clone()).unwrap_or_default())
            .collect();
        let labels = masks
            .iter()
            .map(|row| row.iter().map(CharMask::has_errors).collect())
            .collect();
        Self::new(segments, languages, raters, labels, masks)
    }

    pub fn new(
        segments: Vec<String>,
        languages: Vec<String>,
        raters: Vec<String>,
        labels: Vec<Vec<bool>>,
        masks: Vec<Vec<CharMask>>,
    ) -> Result<Self> {
        let n = segments.len();
        if languages.len() != n || labels.len() != n || masks.len() != n {
            return Err(Error::validation("rater grid rows are inconsistent"));
        }
        for (i, (l, m)) in labels.iter().zip(&masks).enumerate() {
            if l.len() != raters.len() || m.len() != raters.len() {
                return Err(Error::validation(format!(
                    "segment {} is missing a rater cell",
                    segments[i]
                )));
            }
            if m.windows(2).any(|w| w[0].length != w[1].length) {
                return Err(Error::validation(format!(
                    "segment {}: rater masks differ in length",
                    segments[i]
                )));
            }
        }
        Ok(Self {
            segments,
            languages,
            raters,
            labels,
            masks,
        })
    }

    /// Builds the shared-subset grid: only segments annotated by every rater
    /// are kept. Returns the grid and the number of segments dropped.
    pub fn from_annotations(
        corpus: &Corpus,
        raters: &[(String, Vec<AnnotationSet>)],
    ) -> Result<(Self, usize)> {
        let mut per_rater: Vec<HashMap<String, Vec<ErrorSpan>>> = Vec::new();
        for (_, sets) in raters {
            let mut by_seg: HashMap<String, Vec<ErrorSpan>> = HashMap::new();
            for set in crate::io::ground_all(sets, corpus)? {
                by_seg.entry(set.segment_id).or_default().extend(set.spans);
            }
            per_rater.push(by_seg);
        }
        let all: HashSet<&String> = per_rater.iter().flat_map(|m| m.keys()).collect();
        let mut shared: Vec<&String> = all
            .iter()
            .copied()
            .filter(|id| per_rater.iter().all(|m| m.contains_key(*id)))
            .collect();
        shared.sort();
        let dropped = all.len() - shared.len();

        let mut segments = Vec::new();
        let mut languages = Vec::new();
        let mut labels = Vec::new();
        let mut masks = Vec::new();
        for id in shared {
            let seg = corpus.require(id)?;
            let len = char_len(&seg.target_text);
            segments.push(id.clone());
            languages.push(seg.language.clone());
            labels.push(
                per_rater
                    .iter()
                    .map(|m| m[id].iter().any(|s| s.side == crate::model::Side::Target))
                    .collect(),
            );
            masks.push(
                per_rater
                    .iter()
                    .map(|m| build_mask(id, len, &m[id]).mask)
                    .collect(),
            );
        }
        let grid = Self::new(
            segments,
            languages,
            raters.iter().map(|(r, _)| r.clone()).collect(),
            labels,
            masks,
        )?;
        Ok((grid, dropped))
    }

    fn check_shape(&self) -> Result<()> {
        if self.raters.len() < 2 {
            return Err(Error::precondition("alpha needs at least two raters"));
        }
        if self.segments.len() < 2 {
            return Err(Error::precondition("alpha needs at least two segments"));
        }
        Ok(())
    }
}

/// Nominal alpha on segment-level any-error labels.
pub fn alpha_nominal(grid: &RaterGrid) -> Result<Alpha> {
    grid.check_shape()?;
    let mut c = Coincidence::default();
    for row in &grid.labels {
        c.add_unit(row.iter().filter(|&&b| b).count(), row.len());
    }
    Ok(c.alpha())
}

fn character_coincidence(grid: &RaterGrid, rows: impl Iterator<Item = usize>) -> Coincidence {
    let mut c = Coincidence::default();
    for i in rows {
        let masks = &grid.masks[i];
        let len = masks.first().map_or(0, |m| m.length);
        let mut ones = vec![0usize; len];
        for m in masks {
            for iv in &m.error_chars {
                for slot in &mut ones[iv.start..iv.end.min(len)] {
                    *slot += 1;
                }
            }
        }
        for k in ones {
            c.add_unit(k, masks.len());
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitizedAlpha {
    pub global: Alpha,
    pub per_language: BTreeMap<String, Alpha>,
    /// Min and max of the defined per-language values. Not a confidence interval.
    pub range: Option<(f64, f64)>,
}

/// Character-level alpha over the pooled target characters, globally and per language.
pub fn alpha_unitized(grid: &RaterGrid) -> Result<UnitizedAlpha> {
    if grid.raters.len() < 2 {
        return Err(Error::precondition("alpha needs at least two raters"));
    }
    let global = character_coincidence(grid, 0..grid.segments.len()).alpha();
    let mut by_lang: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, lang) in grid.languages.iter().enumerate() {
        by_lang.entry(lang.as_str()).or_default().push(i);
    }
    let per_language: BTreeMap<String, Alpha> = by_lang
        .into_iter()
        .map(|(lang, rows)| {
            (
                lang.to_string(),
                character_coincidence(grid, rows.into_iter()).alpha(),
            )
        })
        .collect();
    let range = per_language
        .values()
        .filter_map(|a| a.value)
        .fold(None, |acc: Option<(f64, f64)>, v| {
            Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
        });
    Ok(UnitizedAlpha {
        global,
        per_language,
        range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Interval;

    fn grid(labels: &[&[u8]]) -> RaterGrid {
        let raters = (0..labels[0].len()).map(|r| format!("r{r}")).collect();
        RaterGrid::from_labels(
            raters,
            labels
                .iter()
                .map(|row| row.iter().map(|&v| v == 1).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn four_segment_example() {
        // o11=2, o00=2, o01=o10=2, n=8: Do=0.5, De=32/56
        let a = alpha_nominal(&grid(&[&[1, 1], &[1, 0], &[0, 0], &[0, 1]])).unwrap();
        assert!((a.observed_disagreement - 0.5).abs() < 1e-12);
        assert!((a.expected_disagreement - 32.0 / 56.0).abs() < 1e-12);
        assert!((a.value.unwrap() - 0.125).abs() < 1e-9);
    }

    #[test]
    fn perfect_agreement() {
        let a = alpha_nominal(&grid(&[&[1, 1, 1], &[0, 0, 0], &[1, 1, 1]])).unwrap();
        assert_eq!(a.value, Some(1.0));
    }

    #[test]
    fn no_variation_is_undefined() {
        let a = alpha_nominal(&grid(&[&[1, 1], &[1, 1]])).unwrap();
        assert_eq!(a.value, None);
    }

    #[test]
    fn needs_two_raters_and_segments() {
        assert!(alpha_nominal(&grid(&[&[1], &[0]])).is_err());
        assert!(alpha_nominal(&grid(&[&[1, 0]])).is_err());
    }

    fn mask(id: &str, len: usize, ivs: &[(usize, usize)]) -> CharMask {
        let mut m = CharMask::empty(id, len);
        let spans: Vec<ErrorSpan> = ivs
            .iter()
            .map(|&(a, b)| {
                let mut s = ErrorSpan::new(
                    crate::model::Side::Target,
                    "x",
                    crate::model::MqmLabel::Grammar,
                    crate::model::Severity::Major,
                )
                .with_offsets(a, b);
                s.offsets_valid = true;
                s
            })
            .collect();
        if !spans.is_empty() {
            m = build_mask(id, len, &spans).mask;
        }
        m
    }

    #[test]
    fn all_versus_nothing_closed_form() {
        // one rater marks every character, the other none: alpha = 1/L - 1
        let len = 10;
        let g = RaterGrid::from_masks(
            vec!["de".into()],
            vec!["a".into(), "b".into()],
            vec![vec![mask("s", len, &[(0, len)]), mask("s", len, &[])]],
        )
        .unwrap();
        let a = alpha_unitized(&g).unwrap();
        assert!((a.global.value.unwrap() - (1.0 / len as f64 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_masks_give_one() {
        let row = |id: &str| vec![mask(id, 12, &[(2, 5)]), mask(id, 12, &[(2, 5)]), mask(id, 12, &[(2, 5)])];
        let g = RaterGrid::from_masks(
            vec!["de".into(), "fr".into()],
            vec!["a".into(), "b".into(), "c".into()],
            vec![row("s1"), row("s2")],
        )
        .unwrap();
        let a = alpha_unitized(&g).unwrap();
        assert_eq!(a.global.value, Some(1.0));
        assert_eq!(a.range, Some((1.0, 1.0)));
        assert_eq!(a.per_language.len(), 2);
        assert_eq!(g.masks[0][0].error_chars, vec![Interval { start: 2, end: 5 }]);
    }

    #[test]
    fn missing_cell_is_rejected() {
        let err = RaterGrid::new(
            vec!["s".into()],
            vec!["de".into()],
            vec!["a".into(), "b".into()],
            vec![vec![true]],
            vec![vec![CharMask::empty("s", 1)]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}
