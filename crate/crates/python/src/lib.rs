//! Python bindings. Structured results come back as plain dicts and lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use spanqe::char_metrics::{self, build_mask, CharMask};
use spanqe::impact::{self, FitResult, ModelSpec, Regressor, RegressionRow};
use spanqe::model::ground_span;
use spanqe::refspan::{self, AcesItem};
use spanqe::reliability::{self, RaterGrid};
use spanqe::span_match::{self, Criterion, MatchConfig};
use spanqe::{Error, ErrorSpan, Interval, MqmLabel, Severity, Side};

fn py_err(e: Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let raw = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (raw,))
}

fn interval(span: (usize, usize)) -> PyResult<Interval> {
    Interval::new(span.0, span.1).map_err(py_err)
}

/// Overlap coefficient of two half-open character ranges.
#[pyfunction]
fn oc_score(a: (usize, usize), b: (usize, usize)) -> PyResult<f64> {
    span_match::oc_score(interval(a)?, interval(b)?).map_err(py_err)
}

/// Character-trigram Dice similarity of two span texts.
#[pyfunction]
fn sim_score(a: &str, b: &str) -> PyResult<f64> {
    span_match::sim_score(a, b).map_err(py_err)
}

fn spans_on(text: &str, spans: &[(usize, usize)]) -> PyResult<Vec<ErrorSpan>> {
    spans
        .iter()
        .map(|&(s, e)| {
            let slice = spanqe::model::char_slice(text, s, e)
                .filter(|_| s < e)
                .ok_or_else(|| PyValueError::new_err(format!("span [{s},{e}) does not fit the text")))?;
            let raw = ErrorSpan::new(Side::Target, slice, MqmLabel::Mistranslation, Severity::Major).with_offsets(s, e);
            Ok(ground_span(&raw, text))
        })
        .collect()
}

/// Greedy one-to-one matching of two span lists over the same target text.
///
/// Returns `{tp, fp, fn, precision, recall, f1}`.
#[pyfunction]
#[pyo3(signature = (text, gold, pred, criterion = "oc", threshold = None))]
fn match_spans<'py>(
    py: Python<'py>,
    text: &str,
    gold: Vec<(usize, usize)>,
    pred: Vec<(usize, usize)>,
    criterion: &str,
    threshold: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let criterion = match criterion.to_ascii_lowercase().as_str() {
        "oc" => Criterion::Oc,
        "sim" => Criterion::Sim,
        other => return Err(PyValueError::new_err(format!("unknown criterion {other:?}"))),
    };
    let mut cfg = MatchConfig::for_criterion(criterion);
    if let Some(t) = threshold {
        cfg = cfg.with_threshold(t).map_err(py_err)?;
    }
    let c = span_match::greedy_match(&spans_on(text, &gold)?, &spans_on(text, &pred)?, &cfg).counts;
    let out = serde_json::json!({
        "tp": c.tp, "fp": c.fp, "fn": c.fn_,
        "precision": c.precision(), "recall": c.recall(), "f1": c.f1(),
    });
    to_py(py, &out)
}

type MaskSpec = (usize, Vec<(usize, usize, String)>);

fn masks(segments: &[MaskSpec]) -> PyResult<Vec<CharMask>> {
    segments
        .iter()
        .enumerate()
        .map(|(i, (length, spans))| {
            let spans = spans
                .iter()
                .map(|(s, e, sev)| {
                    let sev: Severity = sev.parse().map_err(PyValueError::new_err)?;
                    let mut span =
                        ErrorSpan::new(Side::Target, "-", MqmLabel::Mistranslation, sev).with_offsets(*s, *e);
                    span.offsets_valid = s < e;
                    Ok(span)
                })
                .collect::<PyResult<Vec<_>>>()?;
            Ok(build_mask(&format!("s{i}"), *length, &spans).mask)
        })
        .collect()
}

/// Char-F1 and Char-F1w over aligned segment lists.
///
/// Each segment is `(length, [(start, end, severity), ...])`.
#[pyfunction]
fn char_scores(gold: Vec<MaskSpec>, pred: Vec<MaskSpec>) -> PyResult<(f64, f64)> {
    let (g, p) = (masks(&gold)?, masks(&pred)?);
    Ok((
        char_metrics::char_f1(&g, &p).map_err(py_err)?,
        char_metrics::char_f1w(&g, &p).map_err(py_err)?,
    ))
}

/// Krippendorff's nominal alpha for a units × raters grid of binary labels.
/// `None` when the labels show no variation.
#[pyfunction]
fn alpha_nominal(labels: Vec<Vec<bool>>) -> PyResult<Option<f64>> {
    let raters = labels.first().map_or(0, Vec::len);
    let grid = RaterGrid::from_labels((0..raters).map(|r| format!("r{r}")).collect(), labels).map_err(py_err)?;
    Ok(reliability::alpha_nominal(&grid).map_err(py_err)?.value)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    refspan::tokenize(text)
}

/// Token-level edits as `((good_start, good_end), (incorrect_start, incorrect_end))`.
#[pyfunction]
fn token_diff(good: &str, incorrect: &str) -> Vec<((usize, usize), (usize, usize))> {
    refspan::token_diff(good, incorrect)
        .into_iter()
        .map(|e| ((e.good.start, e.good.end), (e.incorrect.start, e.incorrect.end)))
        .collect()
}

/// Projects a good/incorrect pair onto the reference and returns the projected item.
#[pyfunction]
#[pyo3(signature = (reference, good, incorrect, phenomenon = "unknown", language = "de", item_id = "item"))]
fn project<'py>(
    py: Python<'py>,
    reference: &str,
    good: &str,
    incorrect: &str,
    phenomenon: &str,
    language: &str,
    item_id: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let item = AcesItem {
        item_id: item_id.into(),
        language: language.into(),
        phenomenon: phenomenon.into(),
        reference: reference.into(),
        good: good.into(),
        incorrect: incorrect.into(),
    };
    item.validate().map_err(py_err)?;
    to_py(py, &refspan::project(&item))
}

#[pyfunction]
fn overall_loss(share_t: f64, ame_t: f64) -> f64 {
    impact::overall_loss_from_share(share_t, ame_t)
}

type RowTuple = (String, String, String, String, bool, bool, bool, bool);

fn to_rows(raw: Vec<RowTuple>) -> Vec<RegressionRow> {
    raw.into_iter()
        .map(|(item_id, language, dataset, eval_model, y, y_en, t, s)| RegressionRow {
            item_id,
            language,
            dataset,
            eval_model,
            y,
            y_en,
            t,
            s,
        })
        .collect()
}

fn model_spec(name: &str, omit_s: bool) -> PyResult<ModelSpec> {
    let base = match name {
        "A" | "a" => ModelSpec::A,
        "B" | "b" => ModelSpec::B,
        other => return Err(PyValueError::new_err(format!("unknown spec {other:?}"))),
    };
    Ok(if omit_s { base.without_s() } else { base })
}

/// A fitted fixed-effects logit.
#[pyclass(frozen)]
struct Fit {
    inner: FitResult,
    rows: Vec<RegressionRow>,
}

#[pymethods]
impl Fit {
    #[getter]
    fn terms(&self) -> Vec<String> {
        self.inner.terms.clone()
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn separated(&self) -> bool {
        self.inner.separated
    }

    fn coefficient(&self, term: &str) -> Option<f64> {
        self.inner.coefficient(term)
    }

    fn odds_ratios(&self) -> Vec<f64> {
        self.inner.odds_ratios()
    }

    /// Average marginal effect of `"T"` or `"S"` in probability points.
    #[pyo3(signature = (regressor = "T"))]
    fn ame(&self, regressor: &str) -> PyResult<f64> {
        let r = match regressor {
            "T" | "t" => Regressor::T,
            "S" | "s" => Regressor::S,
            other => return Err(PyValueError::new_err(format!("unknown regressor {other:?}"))),
        };
        impact::ame(&self.inner, &self.rows, r).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Fit(spec={}, n_rows={}, converged={})",
            self.inner.spec.label(),
            self.inner.n_rows,
            self.inner.converged
        )
    }
}

/// Fits a model to rows `(item_id, language, dataset, eval_model, y, y_en, t, s)`.
#[pyfunction]
#[pyo3(signature = (rows, spec = "A", omit_s = false))]
fn fit(rows: Vec<RowTuple>, spec: &str, omit_s: bool) -> PyResult<Fit> {
    let rows = to_rows(rows);
    let inner = impact::fit(&rows, &model_spec(spec, omit_s)?).map_err(py_err)?;
    Ok(Fit { inner, rows })
}

/// AME point estimates with item-level block-bootstrap intervals.
#[pyfunction]
#[pyo3(signature = (rows, spec = "A", omit_s = false, boot = 2500, seed = spanqe::DEFAULT_SEED))]
fn impact_report<'py>(
    py: Python<'py>,
    rows: Vec<RowTuple>,
    spec: &str,
    omit_s: bool,
    boot: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = model_spec(spec, omit_s)?;
    let rows = to_rows(rows);
    let rep = py.detach(|| impact::block_bootstrap(&rows, &s, boot, seed)).map_err(py_err)?;
    to_py(py, &rep)
}

/// Counterfactual ranking of evaluation models with T switched off.
#[pyfunction]
#[pyo3(signature = (rows, spec = "A", omit_s = false, boot = 2500, seed = spanqe::DEFAULT_SEED))]
fn ranking_report<'py>(
    py: Python<'py>,
    rows: Vec<RowTuple>,
    spec: &str,
    omit_s: bool,
    boot: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = model_spec(spec, omit_s)?;
    let rows = to_rows(rows);
    let rep = py.detach(|| impact::counterfactual_ranking(&rows, &s, boot, seed)).map_err(py_err)?;
    to_py(py, &rep)
}

#[pymodule]
pub fn spanqe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("DEFAULT_SEED", spanqe::DEFAULT_SEED)?;
    m.add_class::<Fit>()?;
    m.add_function(wrap_pyfunction!(oc_score, m)?)?;
    m.add_function(wrap_pyfunction!(sim_score, m)?)?;
    m.add_function(wrap_pyfunction!(match_spans, m)?)?;
    m.add_function(wrap_pyfunction!(char_scores, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_nominal, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(token_diff, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(overall_loss, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(impact_report, m)?)?;
    m.add_function(wrap_pyfunction!(ranking_report, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_names() {
        assert_eq!(model_spec("a", false).unwrap(), ModelSpec::A);
        assert_eq!(model_spec("B", true).unwrap(), ModelSpec::B.without_s());
        assert!(model_spec("C", false).is_err());
    }

    #[test]
    fn row_tuples_keep_field_order() {
        let r = &to_rows(vec![("i".into(), "de".into(), "d".into(), "m".into(), true, false, true, false)])[0];
        assert_eq!((r.item_id.as_str(), r.eval_model.as_str()), ("i", "m"));
        assert!(r.y && !r.y_en && r.t && !r.s);
    }
}
