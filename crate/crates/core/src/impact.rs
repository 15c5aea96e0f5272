//! Association between annotated translation errors and benchmark correctness.
//!
//! Rows are (item, target language, evaluation model) observations with the
//! translated outcome `y`, the English outcome `y_en` of the same item and
//! model, `t` (at least one annotated target-side error, annotator specific)
//! and `s` (at least one source-side issue on the item, shared across its
//! translations).
//!
//! Models are logistic regressions with an intercept, the listed regressors
//! and one-hot fixed effects for language, dataset and evaluation model, where
//! the lexicographically first level of each factor is the reference. They are
//! fitted by iteratively reweighted least squares. Uncertainty comes from a
//! block bootstrap that resamples whole items with all of their rows.
//!
//! All reported effects are associations, not causal estimates.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{is_english, AnnotationSet, CorrectnessRecord, Corpus, SourceAnomaly};
use crate::stats::{self, Estimate};

pub const DEFAULT_REPLICATES: usize = 2_500;
pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-8;
pub const RIDGE: f64 = 1e-8;
/// Any |coefficient| above this marks the fit as (quasi-)separated.
pub const SEPARATION_BOUND: f64 = 15.0;
const DIVERGENCE_BOUND: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub item_id: String,
    pub language: String,
    pub dataset: String,
    pub eval_model: String,
    pub y: bool,
    pub y_en: bool,
    pub t: bool,
    pub s: bool,
}

/// Items with at least one source-side issue.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceIssues {
    items: HashSet<String>,
}

impl SourceIssues {
    pub fn new(items: impl IntoIterator<Item = String>) -> Self {
        Self {
            items: items.into_iter().collect(),
        }
    }

    /// Collects issues from source-side spans in `source_sets` and from
    /// anomaly records, mapped to items through the corpus.
    pub fn from_annotations(
        corpus: &Corpus,
        source_sets: &[AnnotationSet],
        anomalies: &[SourceAnomaly],
    ) -> Result<Self> {
        let mut items = HashSet::new();
        for set in source_sets {
            if set.source_spans().next().is_some() {
                items.insert(corpus.require(&set.segment_id)?.item_key().to_string());
            }
        }
        for a in anomalies {
            items.insert(corpus.require(&a.segment_id)?.item_key().to_string());
        }
        Ok(Self { items })
    }

    pub fn contains(&self, item: &str) -> bool {
        self.items.contains(item)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AssembleOptions {
    /// Keep only these datasets; `None` keeps everything.
    pub datasets: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub translated_records: usize,
    pub rows: usize,
    pub dropped_missing_english: usize,
    pub dropped_missing_segment: usize,
    pub dropped_missing_annotation: usize,
    pub excluded_dataset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub rows: Vec<RegressionRow>,
    pub accounting: Accounting,
}

/// Joins translated correctness with English correctness, the annotator's
/// target spans and the item's source issues.
///
/// A translated record becomes a row only when the English record of the same
/// item and model exists, the (item, language, dataset) maps to a segment and
/// the annotator has an annotation set for that segment.
pub fn assemble(
    correctness: &[CorrectnessRecord],
    corpus: &Corpus,
    target_sets: &[AnnotationSet],
    source: &SourceIssues,
    options: &AssembleOptions,
) -> Result<Assembly> {
    let mut seen = HashSet::new();
    for r in correctness {
        let key = (&r.item_id, r.language.as_str(), &r.dataset, &r.eval_model);
        if !seen.insert(key) {
            return Err(Error::validation(format!(
                "duplicate correctness record for item {} language {} dataset {} model {}",
                r.item_id, r.language, r.dataset, r.eval_model
            )));
        }
    }
    let english: HashMap<(&str, &str, &str), bool> = correctness
        .iter()
        .filter(|r| is_english(&r.language))
        .map(|r| ((r.item_id.as_str(), r.dataset.as_str(), r.eval_model.as_str()), r.correct))
        .collect();
    let mut segment_of: HashMap<(&str, &str, &str), &str> = HashMap::new();
    for seg in corpus.iter() {
        let key = (seg.item_key(), seg.language.as_str(), seg.dataset.as_str());
        if segment_of.insert(key, &seg.segment_id).is_some() {
            return Err(Error::validation(format!(
                "several segments for item {} language {} dataset {}",
                key.0, key.1, key.2
            )));
        }
    }
    let mut has_target_error: HashMap<&str, bool> = HashMap::new();
    for set in target_sets {
        corpus.require(&set.segment_id)?;
        let flag = has_target_error.entry(set.segment_id.as_str()).or_insert(false);
        *flag |= set.target_spans().next().is_some();
    }

    let mut acc = Accounting::default();
    let mut rows = Vec::new();
    for r in correctness.iter().filter(|r| !is_english(&r.language)) {
        acc.translated_records += 1;
        if let Some(allow) = &options.datasets {
            if !allow.contains(&r.dataset) {
                acc.excluded_dataset += 1;
                continue;
            }
        }
        let Some(&y_en) = english.get(&(r.item_id.as_str(), r.dataset.as_str(), r.eval_model.as_str())) else {
            acc.dropped_missing_english += 1;
            continue;
        };
        let Some(seg) = segment_of.get(&(r.item_id.as_str(), r.language.as_str(), r.dataset.as_str())) else {
            acc.dropped_missing_segment += 1;
            continue;
        };
        let Some(&t) = has_target_error.get(seg) else {
            acc.dropped_missing_annotation += 1;
            continue;
        };
        rows.push(RegressionRow {
            item_id: r.item_id.clone(),
            language: r.language.clone(),
            dataset: r.dataset.clone(),
            eval_model: r.eval_model.clone(),
            y: r.correct,
            y_en,
            t,
            s: source.contains(&r.item_id),
        });
    }
    acc.rows = rows.len();
    Ok(Assembly {
        rows,
        accounting: acc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sample {
    All,
    EnglishCorrect,
}

/// Which rows enter the model and which regressors it has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub sample: Sample,
    pub include_s: bool,
    pub include_y_en: bool,
}

impl ModelSpec {
    /// All rows; regressors T, S and y_en.
    pub const A: ModelSpec = ModelSpec {
        sample: Sample::All,
        include_s: true,
        include_y_en: true,
    };
    /// Rows with y_en = 1; regressors T and S.
    pub const B: ModelSpec = ModelSpec {
        sample: Sample::EnglishCorrect,
        include_s: true,
        include_y_en: false,
    };

    pub fn without_s(self) -> Self {
        Self {
            include_s: false,
            ..self
        }
    }

    pub fn label(&self) -> String {
        let base = match (self.sample, self.include_y_en) {
            (Sample::All, true) => "A",
            (Sample::EnglishCorrect, false) => "B",
            (Sample::All, false) => "A-noEN",
            (Sample::EnglishCorrect, true) => "B+EN",
        };
        if self.include_s {
            base.to_string()
        } else {
            format!("{base}¬S")
        }
    }

    pub fn select<'a>(&self, rows: &'a [RegressionRow]) -> Vec<&'a RegressionRow> {
        rows.iter()
            .filter(|r| self.sample == Sample::All || r.y_en)
            .collect()
    }

    pub fn has(&self, regressor: Regressor) -> bool {
        match regressor {
            Regressor::T => true,
            Regressor::S => self.include_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regressor {
    T,
    S,
}

const FACTORS: [&str; 3] = ["language", "dataset", "eval_model"];

/// Compact row with factor levels as ids. Level ids follow lexicographic order
/// of the level names.
#[derive(Debug, Clone, Copy)]
struct RowCode {
    item: u32,
    levels: [u32; 3],
    y: bool,
    y_en: bool,
    t: bool,
    s: bool,
}

struct Coded {
    rows: Vec<RowCode>,
    level_names: [Vec<String>; 3],
    items: usize,
}

fn code_rows(rows: &[&RegressionRow]) -> Coded {
    let factor = |r: &RegressionRow, f: usize| -> String {
        match f {
            0 => r.language.clone(),
            1 => r.dataset.clone(),
            _ => r.eval_model.clone(),
        }
    };
    let level_names: [Vec<String>; 3] = std::array::from_fn(|f| {
        rows.iter()
            .map(|r| factor(r, f))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    });
    let index: [HashMap<&str, u32>; 3] = std::array::from_fn(|f| {
        level_names[f]
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u32))
            .collect()
    });
    let mut item_ids: HashMap<&str, u32> = HashMap::new();
    let coded = rows
        .iter()
        .map(|r| {
            let next = item_ids.len() as u32;
            let item = *item_ids.entry(r.item_id.as_str()).or_insert(next);
            RowCode {
                item,
                levels: [
                    index[0][r.language.as_str()],
                    index[1][r.dataset.as_str()],
                    index[2][r.eval_model.as_str()],
                ],
                y: r.y,
                y_en: r.y_en,
                t: r.t,
                s: r.s,
            }
        })
        .collect();
    Coded {
        rows: coded,
        level_names,
        items: item_ids.len(),
    }
}

/// Column layout of a design matrix: intercept, T, [S], [y_en], dummies.
#[derive(Debug, Clone)]
struct Layout {
    include_s: bool,
    include_y_en: bool,
    /// Per factor, the column of each level id (`None` for the reference level
    /// and for levels absent from the fitted rows).
    columns: [Vec<Option<usize>>; 3],
    /// Per factor, level ids that own a column, in column order.
    dummies: [Vec<u32>; 3],
    width: usize,
}

impl Layout {
    fn new(rows: &[RowCode], n_levels: [usize; 3], spec: &ModelSpec) -> Self {
        let mut width = 2;
        let s_col = spec.include_s;
        if s_col {
            width += 1;
        }
        if spec.include_y_en {
            width += 1;
        }
        let mut columns: [Vec<Option<usize>>; 3] = std::array::from_fn(|f| vec![None; n_levels[f]]);
        let mut dummies: [Vec<u32>; 3] = Default::default();
        for f in 0..3 {
            let present: BTreeSet<u32> = rows.iter().map(|r| r.levels[f]).collect();
            for &level in present.iter().skip(1) {
                columns[f][level as usize] = Some(width);
                dummies[f].push(level);
                width += 1;
            }
        }
        Self {
            include_s: spec.include_s,
            include_y_en: spec.include_y_en,
            columns,
            dummies,
            width,
        }
    }

    fn encode(&self, r: &RowCode, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
        out[1] = f64::from(u8::from(r.t));
        let mut c = 2;
        if self.include_s {
            out[c] = f64::from(u8::from(r.s));
            c += 1;
        }
        if self.include_y_en {
            out[c] = f64::from(u8::from(r.y_en));
        }
        for f in 0..3 {
            if let Some(col) = self.columns[f].get(r.levels[f] as usize).copied().flatten() {
                out[col] = 1.0;
            }
        }
    }

    fn terms(&self, names: &[Vec<String>; 3]) -> Vec<String> {
        let mut terms = vec!["intercept".to_string(), "T".to_string()];
        if self.include_s {
            terms.push("S".into());
        }
        if self.include_y_en {
            terms.push("y_en".into());
        }
        for f in 0..3 {
            for &level in &self.dummies[f] {
                terms.push(format!("{}={}", FACTORS[f], names[f][level as usize]));
            }
        }
        terms
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Outcome of a raw logistic fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Coefficient change fell below [`TOLERANCE`] and no coefficient exceeds
    /// [`SEPARATION_BOUND`].
    pub converged: bool,
    pub separated: bool,
}

/// Maximum-likelihood logistic regression by IRLS on a dense row-major design
/// `x` (`n × p`). A ridge of [`RIDGE`] is added to the normal equations.
pub fn fit_logit(x: &[f64], y: &[f64], p: usize) -> Result<LogitFit> {
    if p == 0 || x.len() != y.len() * p {
        return Err(Error::parameter("design and response sizes disagree"));
    }
    if y.is_empty() {
        return Err(Error::Estimation("no rows to fit".into()));
    }
    let mut beta = DVector::<f64>::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        for (row, &yi) in x.chunks_exact(p).zip(y) {
            let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            // working response folded in: X'W z = X'W X beta + X'(y - mu)
            let resid = yi - mu;
            for j in 0..p {
                if row[j] == 0.0 {
                    continue;
                }
                let wj = w * row[j];
                rhs[j] += row[j] * (resid + w * eta);
                for k in j..p {
                    info[(j, k)] += wj * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                info[(j, k)] = info[(k, j)];
            }
            info[(j, j)] += RIDGE;
        }
        let next = match info.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => info
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Estimation("singular information matrix".into()))?,
        };
        if next.iter().any(|b| !b.is_finite()) {
            break;
        }
        let delta = (&next - &beta).amax();
        beta = next;
        if delta < TOLERANCE {
            converged = true;
            break;
        }
        if beta.amax() > DIVERGENCE_BOUND {
            break;
        }
    }
    let separated = beta.iter().any(|b| !b.is_finite() || b.abs() > SEPARATION_BOUND);
    Ok(LogitFit {
        coefficients: beta.iter().copied().collect(),
        iterations,
        converged: converged && !separated,
        separated,
    })
}

struct CodedFit {
    layout: Layout,
    fit: LogitFit,
}

fn fit_codes(rows: &[RowCode], n_levels: [usize; 3], spec: &ModelSpec) -> Result<CodedFit> {
    if rows.is_empty() {
        return Err(Error::Estimation("no rows to fit".into()));
    }
    let layout = Layout::new(rows, n_levels, spec);
    let p = layout.width;
    let mut x = vec![0.0; rows.len() * p];
    for (r, chunk) in rows.iter().zip(x.chunks_exact_mut(p)) {
        layout.encode(r, chunk);
    }
    let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.y))).collect();
    Ok(CodedFit {
        fit: fit_logit(&x, &y, p)?,
        layout,
    })
}

impl CodedFit {
    /// Linear predictor with optional overrides for T and S.
    fn eta(&self, r: &RowCode, t: Option<bool>, s: Option<bool>, buf: &mut [f64]) -> f64 {
        let mut code = *r;
        if let Some(t) = t {
            code.t = t;
        }
        if let Some(s) = s {
            code.s = s;
        }
        self.layout.encode(&code, buf);
        buf.iter().zip(&self.fit.coefficients).map(|(a, b)| a * b).sum()
    }

    fn ame(&self, rows: &[RowCode], regressor: Regressor) -> f64 {
        let mut buf = vec![0.0; self.layout.width];
        let (on, off) = (Some(true), Some(false));
        let total: f64 = rows
            .iter()
            .map(|r| {
                let (p1, p0) = match regressor {
                    Regressor::T => (
                        sigmoid(self.eta(r, on, None, &mut buf)),
                        sigmoid(self.eta(r, off, None, &mut buf)),
                    ),
                    Regressor::S => (
                        sigmoid(self.eta(r, None, on, &mut buf)),
                        sigmoid(self.eta(r, None, off, &mut buf)),
                    ),
                };
                p1 - p0
            })
            .sum();
        100.0 * total / rows.len() as f64
    }
}

/// A fitted model with named terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub terms: Vec<String>,
    /// Log-odds, aligned with `terms`.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub separated: bool,
    pub iterations: usize,
    pub n_rows: usize,
}

impl FitResult {
    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.terms
            .iter()
            .position(|t| t == term)
            .map(|i| self.coefficients[i])
    }

    pub fn odds_ratios(&self) -> Vec<f64> {
        self.coefficients.iter().map(|b| b.exp()).collect()
    }

    /// Predicted probability for `row`, optionally forcing T and/or S.
    /// Factor levels unseen at fit time contribute nothing.
    pub fn predict(&self, row: &RegressionRow, t: Option<bool>, s: Option<bool>) -> f64 {
        let val = |b: bool| f64::from(u8::from(b));
        let mut eta = 0.0;
        for (term, beta) in self.terms.iter().zip(&self.coefficients) {
            let x = match term.as_str() {
                "intercept" => 1.0,
                "T" => val(t.unwrap_or(row.t)),
                "S" => val(s.unwrap_or(row.s)),
                "y_en" => val(row.y_en),
                other => {
                    let (factor, level) = other.split_once('=').unwrap_or((other, ""));
                    let actual = match factor {
                        "language" => &row.language,
                        "dataset" => &row.dataset,
                        _ => &row.eval_model,
                    };
                    val(actual == level)
                }
            };
            eta += x * beta;
        }
        sigmoid(eta)
    }
}

fn fit_result(spec: &ModelSpec, coded: &Coded, cf: &CodedFit) -> FitResult {
    FitResult {
        spec: *spec,
        terms: cf.layout.terms(&coded.level_names),
        coefficients: cf.fit.coefficients.clone(),
        converged: cf.fit.converged,
        separated: cf.fit.separated,
        iterations: cf.fit.iterations,
        n_rows: coded.rows.len(),
    }
}

fn n_levels(coded: &Coded) -> [usize; 3] {
    std::array::from_fn(|f| coded.level_names[f].len())
}

fn prepare(rows: &[RegressionRow], spec: &ModelSpec) -> Result<Coded> {
    let selected = spec.select(rows);
    if selected.is_empty() {
        return Err(match spec.sample {
            Sample::EnglishCorrect => Error::validation("empty Spec B subset (no rows with y_en = 1)"),
            Sample::All => Error::validation("no regression rows"),
        });
    }
    Ok(code_rows(&selected))
}

/// Fits `spec` on `rows` (the spec's sample filter is applied here).
pub fn fit(rows: &[RegressionRow], spec: &ModelSpec) -> Result<FitResult> {
    let coded = prepare(rows, spec)?;
    let cf = fit_codes(&coded.rows, n_levels(&coded), spec)?;
    Ok(fit_result(spec, &coded, &cf))
}

/// Average marginal effect of switching `regressor` from 0 to 1, in
/// probability points, over the rows the fit's spec selects.
pub fn ame(fit: &FitResult, rows: &[RegressionRow], regressor: Regressor) -> Result<f64> {
    if !fit.spec.has(regressor) {
        return Err(Error::parameter(format!(
            "regressor {regressor:?} is not part of spec {}",
            fit.spec.label()
        )));
    }
    if !fit.converged {
        return Err(Error::Estimation("fit did not converge".into()));
    }
    let selected = fit.spec.select(rows);
    if selected.is_empty() {
        return Err(Error::validation("no rows for marginal effect"));
    }
    let (t, s) = match regressor {
        Regressor::T => ((Some(true), None), (Some(false), None)),
        Regressor::S => ((None, Some(true)), (None, Some(false))),
    };
    let total: f64 = selected
        .iter()
        .map(|r| fit.predict(r, t.0, t.1) - fit.predict(r, s.0, s.1))
        .sum();
    Ok(100.0 * total / selected.len() as f64)
}

/// `share of rows with T = 1` × |AME(T)|, in probability points.
pub fn overall_loss(rows: &[RegressionRow], ame_t: f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let exposed = rows.iter().filter(|r| r.t).count() as f64 / rows.len() as f64;
    overall_loss_from_share(exposed, ame_t)
}

pub fn overall_loss_from_share(share_t: f64, ame_t: f64) -> f64 {
    share_t * ame_t.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub term: String,
    pub log_odds: f64,
    pub ci: Option<(f64, f64)>,
    pub odds_ratio: f64,
    pub odds_ratio_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmeReport {
    pub spec: String,
    pub n_rows: usize,
    pub n_items: usize,
    pub share_t: f64,
    pub ame_t: Estimate,
    pub ame_s: Option<Estimate>,
    /// Share of T = 1 rows times |AME(T)|.
    pub overall_loss: f64,
    pub coefficients: Vec<CoefficientRow>,
    pub boot_success: usize,
    pub boot_fail: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// Rows of the items drawn for bootstrap replicate `index`.
fn resample(coded: &Coded, by_item: &[Vec<usize>], seed: u64, index: u64) -> Vec<RowCode> {
    let mut rng = stats::replicate_rng(seed, index);
    let mut out = Vec::with_capacity(coded.rows.len());
    for _ in 0..by_item.len() {
        let item = rng.random_range(0..by_item.len());
        out.extend(by_item[item].iter().map(|&i| coded.rows[i]));
    }
    out
}

fn rows_by_item(coded: &Coded) -> Vec<Vec<usize>> {
    let mut by_item = vec![Vec::new(); coded.items];
    for (i, r) in coded.rows.iter().enumerate() {
        by_item[r.item as usize].push(i);
    }
    by_item
}

struct Replicate {
    ame_t: f64,
    ame_s: Option<f64>,
    coefficients: Vec<(String, f64)>,
}

/// AMEs with item-level block-bootstrap percentile intervals.
///
/// Replicates whose fit errors or does not converge are counted in
/// `boot_fail` and left out of the intervals.
pub fn block_bootstrap(
    rows: &[RegressionRow],
    spec: &ModelSpec,
    replicates: usize,
    seed: u64,
) -> Result<AmeReport> {
    if replicates == 0 {
        return Err(Error::parameter("bootstrap needs at least one replicate"));
    }
    let coded = prepare(rows, spec)?;
    let levels = n_levels(&coded);
    let point = fit_codes(&coded.rows, levels, spec)?;
    if !point.fit.converged {
        return Err(Error::Estimation(format!(
            "spec {} did not converge on the full sample",
            spec.label()
        )));
    }
    let point_result = fit_result(spec, &coded, &point);
    let by_item = rows_by_item(&coded);

    let outcomes: Vec<Option<Replicate>> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let sample = resample(&coded, &by_item, seed, b);
            let cf = fit_codes(&sample, levels, spec).ok()?;
            if !cf.fit.converged {
                return None;
            }
            let names = cf.layout.terms(&coded.level_names);
            Some(Replicate {
                ame_t: cf.ame(&sample, Regressor::T),
                ame_s: spec.include_s.then(|| cf.ame(&sample, Regressor::S)),
                coefficients: names.into_iter().zip(cf.fit.coefficients.iter().copied()).collect(),
            })
        })
        .collect();
    let ok: Vec<&Replicate> = outcomes.iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::Estimation("every bootstrap replicate failed".into()));
    }

    let ame_t_point = point.ame(&coded.rows, Regressor::T);
    let ame_t = stats::percentile_interval(
        ame_t_point,
        &ok.iter().map(|r| r.ame_t).collect::<Vec<_>>(),
    )
    .expect("non-empty");
    let ame_s = spec.include_s.then(|| {
        stats::percentile_interval(
            point.ame(&coded.rows, Regressor::S),
            &ok.iter().filter_map(|r| r.ame_s).collect::<Vec<_>>(),
        )
        .expect("non-empty")
    });

    let mut draws: HashMap<&str, Vec<f64>> = HashMap::new();
    for r in &ok {
        for (name, value) in &r.coefficients {
            draws.entry(name.as_str()).or_default().push(*value);
        }
    }
    let coefficients = point_result
        .terms
        .iter()
        .zip(&point_result.coefficients)
        .map(|(term, &b)| {
            let ci = draws
                .get(term.as_str())
                .and_then(|d| stats::percentile_interval(b, d))
                .map(|e| (e.lower, e.upper));
            CoefficientRow {
                term: term.clone(),
                log_odds: b,
                ci,
                odds_ratio: b.exp(),
                odds_ratio_ci: ci.map(|(lo, hi)| (lo.exp(), hi.exp())),
            }
        })
        .collect();

    let share_t = coded.rows.iter().filter(|r| r.t).count() as f64 / coded.rows.len() as f64;
    Ok(AmeReport {
        spec: spec.label(),
        n_rows: coded.rows.len(),
        n_items: coded.items,
        share_t,
        overall_loss: overall_loss_from_share(share_t, ame_t_point),
        ame_t,
        ame_s,
        coefficients,
        boot_success: ok.len(),
        boot_fail: replicates - ok.len(),
        replicates,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelUplift {
    pub eval_model: String,
    pub n_rows: usize,
    pub observed_accuracy: f64,
    pub predicted_accuracy: f64,
    pub counterfactual_accuracy: f64,
    /// 100 × (mean prediction at T = 0 − mean prediction at observed T).
    pub uplift: Option<Estimate>,
    pub uplift_point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub spec: String,
    pub models: Vec<ModelUplift>,
    pub spearman: Option<Estimate>,
    pub kendall: Option<Estimate>,
    /// Why correlations are missing, if they are.
    pub correlation_note: Option<String>,
    pub boot_success: usize,
    pub boot_fail: usize,
    pub replicates: usize,
    pub seed: u64,
}

struct RankingPoint {
    /// Per model level id: (observed, predicted, counterfactual, rows).
    per_model: BTreeMap<u32, (f64, f64, f64, usize)>,
}

impl RankingPoint {
    fn compute(cf: &CodedFit, rows: &[RowCode]) -> Self {
        let mut buf = vec![0.0; cf.layout.width];
        let mut sums: BTreeMap<u32, (f64, f64, f64, usize)> = BTreeMap::new();
        for r in rows {
            let e = sums.entry(r.levels[2]).or_default();
            e.0 += f64::from(u8::from(r.y));
            e.1 += sigmoid(cf.eta(r, None, None, &mut buf));
            e.2 += sigmoid(cf.eta(r, Some(false), None, &mut buf));
            e.3 += 1;
        }
        for v in sums.values_mut() {
            let n = v.3 as f64;
            v.0 /= n;
            v.1 /= n;
            v.2 /= n;
        }
        Self { per_model: sums }
    }

    fn uplift(&self, model: u32) -> Option<f64> {
        self.per_model.get(&model).map(|v| 100.0 * (v.2 - v.1))
    }

    fn correlations(&self) -> (Option<f64>, Option<f64>) {
        let observed: Vec<f64> = self.per_model.values().map(|v| v.0).collect();
        let counterfactual: Vec<f64> = self.per_model.values().map(|v| v.2).collect();
        (
            stats::spearman(&observed, &counterfactual),
            stats::kendall_tau_b(&observed, &counterfactual),
        )
    }
}

/// Compares the observed ranking of evaluation models (mean observed y) with
/// the ranking under predicted accuracy at T = 0, and reports per-model
/// uplifts. Intervals come from the item-level block bootstrap.
pub fn counterfactual_ranking(
    rows: &[RegressionRow],
    spec: &ModelSpec,
    replicates: usize,
    seed: u64,
) -> Result<RankingReport> {
    if replicates == 0 {
        return Err(Error::parameter("bootstrap needs at least one replicate"));
    }
    let coded = prepare(rows, spec)?;
    let levels = n_levels(&coded);
    let point_fit = fit_codes(&coded.rows, levels, spec)?;
    if !point_fit.fit.converged {
        return Err(Error::Estimation(format!(
            "spec {} did not converge on the full sample",
            spec.label()
        )));
    }
    let point = RankingPoint::compute(&point_fit, &coded.rows);
    let by_item = rows_by_item(&coded);

    let outcomes: Vec<Option<RankingPoint>> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let sample = resample(&coded, &by_item, seed, b);
            let cf = fit_codes(&sample, levels, spec).ok()?;
            cf.fit.converged.then(|| RankingPoint::compute(&cf, &sample))
        })
        .collect();
    let ok: Vec<&RankingPoint> = outcomes.iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::Estimation("every bootstrap replicate failed".into()));
    }

    let models = point
        .per_model
        .iter()
        .map(|(&m, &(obs, pred, cf, n))| {
            let point_uplift = 100.0 * (cf - pred);
            let draws: Vec<f64> = ok.iter().filter_map(|r| r.uplift(m)).collect();
            ModelUplift {
                eval_model: coded.level_names[2][m as usize].clone(),
                n_rows: n,
                observed_accuracy: obs,
                predicted_accuracy: pred,
                counterfactual_accuracy: cf,
                uplift: stats::percentile_interval(point_uplift, &draws),
                uplift_point: point_uplift,
            }
        })
        .collect();

    let (rho, tau) = point.correlations();
    let mut note = None;
    let (spearman, kendall) = if point.per_model.len() < 2 {
        note = Some("fewer than two evaluation models; correlations not computed".to_string());
        log::warn!("counterfactual ranking: fewer than two evaluation models");
        (None, None)
    } else {
        let (rhos, taus): (Vec<_>, Vec<_>) = ok.iter().map(|r| r.correlations()).unzip();
        let rhos: Vec<f64> = rhos.into_iter().flatten().collect();
        let taus: Vec<f64> = taus.into_iter().flatten().collect();
        if rho.is_none() {
            note = Some("a ranking is constant; correlations undefined".to_string());
        }
        (
            rho.and_then(|p| stats::percentile_interval(p, &rhos)),
            tau.and_then(|p| stats::percentile_interval(p, &taus)),
        )
    };

    Ok(RankingReport {
        spec: spec.label(),
        models,
        spearman,
        kendall,
        correlation_note: note,
        boot_success: ok.len(),
        boot_fail: replicates - ok.len(),
        replicates,
        seed,
    })
}

/// Point-estimate ranking comparison for an already fitted model; no bootstrap.
/// Useful for inspecting a fit with hand-set coefficients.
pub fn ranking_from_fit(fit: &FitResult, rows: &[RegressionRow]) -> (Vec<ModelUplift>, Option<f64>, Option<f64>) {
    let selected = fit.spec.select(rows);
    let mut by_model: BTreeMap<&str, Vec<&RegressionRow>> = BTreeMap::new();
    for r in selected {
        by_model.entry(r.eval_model.as_str()).or_default().push(r);
    }
    let models: Vec<ModelUplift> = by_model
        .iter()
        .map(|(m, rs)| {
            let n = rs.len() as f64;
            let obs = rs.iter().filter(|r| r.y).count() as f64 / n;
            let pred = rs.iter().map(|r| fit.predict(r, None, None)).sum::<f64>() / n;
            let cf = rs.iter().map(|r| fit.predict(r, Some(false), None)).sum::<f64>() / n;
            ModelUplift {
                eval_model: m.to_string(),
                n_rows: rs.len(),
                observed_accuracy: obs,
                predicted_accuracy: pred,
                counterfactual_accuracy: cf,
                uplift: None,
                uplift_point: 100.0 * (cf - pred),
            }
        })
        .collect();
    let obs: Vec<f64> = models.iter().map(|m| m.observed_accuracy).collect();
    let cf: Vec<f64> = models.iter().map(|m| m.counterfactual_accuracy).collect();
    let rho = stats::spearman(&obs, &cf);
    let tau = stats::kendall_tau_b(&obs, &cf);
    (models, rho, tau)
}
