use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde_json::{json, Value};
use spanqe::char_metrics::{any_error_f1, char_ci, masks_for_annotator, CharMetric};
use spanqe::impact::{
    assemble, block_bootstrap, counterfactual_ranking, AssembleOptions, Assembly, ModelSpec, SourceIssues,
};
use spanqe::io::{self, read_jsonl};
use spanqe::refspan::{
    aggregate, project as project_item, score_spans, summarize_projection, AcesItem, CategoryMap,
    ProjectedItem, TokenPrediction, Weighting,
};
use spanqe::reliability::{alpha_nominal, alpha_unitized, RaterGrid};
use spanqe::span_match::{
    annotator_stats, compare, micro_aggregate, source_overlap_rate, threshold_sweep, Criterion, MatchConfig,
    MatchReport,
};
use spanqe::stats::Estimate;
use spanqe::{AnnotationSet, Error, Result};

use crate::report::{digest, emit, f2, f3, opt3, Clock, InputDigest, Tsv};
use crate::{AgreeArgs, CharArgs, ImpactArgs, OverlapArgs, ProjectArgs, ReliabilityArgs, SpanlocArgs, SpecArg, StatsArgs};

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report value serializes")
}

fn digests(inputs: &[(&str, &Path)]) -> Result<Vec<InputDigest>> {
    inputs.iter().map(|(role, p)| digest(role, p)).collect()
}

/// Name of the annotator in a file: its single `annotator_id`, or the file
/// stem when the file is empty or mixes several.
fn annotator_name(sets: &[AnnotationSet], path: &Path) -> String {
    let ids: BTreeSet<&str> = sets.iter().map(|s| s.annotator_id.as_str()).collect();
    match ids.into_iter().collect::<Vec<_>>().as_slice() {
        [one] => one.to_string(),
        _ => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
    }
}

fn match_rows(tsv: &mut Tsv, criterion: &str, threshold: f64, r: &MatchReport) {
    let counts = |g: &spanqe::span_match::GroupScore| {
        [g.counts.tp.to_string(), g.counts.fp.to_string(), g.counts.fn_.to_string()]
    };
    let [tp, fp, fn_] = counts(&r.pooled);
    tsv.row(&[
        "score", criterion, &f3(threshold), "pooled", &tp, &fp, &fn_,
        &f3(r.pooled.precision), &f3(r.pooled.recall), &f3(r.pooled.f1), "NA", "NA",
    ]);
    let (lo, hi) = r.f1_range.map_or(("NA".into(), "NA".into()), |(a, b)| (f3(a), f3(b)));
    tsv.row(&[
        "score", criterion, &f3(threshold), "mean", "NA", "NA", "NA",
        &f3(r.mean_precision), &f3(r.mean_recall), &f3(r.mean_f1), &lo, &hi,
    ]);
    for (lang, g) in &r.per_language {
        let [tp, fp, fn_] = counts(g);
        tsv.row(&[
            "score", criterion, &f3(threshold), lang, &tp, &fp, &fn_,
            &f3(g.precision), &f3(g.recall), &f3(g.f1), "NA", "NA",
        ]);
    }
}

pub fn agree(a: &AgreeArgs) -> Result<()> {
    let clock = Clock::start();
    let inputs = digests(&[("segments", &a.segments), ("gold", &a.gold), ("pred", &a.pred)])?;
    let corpus = io::load_corpus(&a.segments)?;
    let gold = io::load_annotations(&a.gold)?;
    let pred = io::load_annotations(&a.pred)?;

    let oc_cfg = MatchConfig::oc().with_threshold(a.oc_threshold)?;
    let sim_cfg = MatchConfig::sim().with_threshold(a.sim_threshold)?;
    let oc = micro_aggregate(&compare(&gold, &pred, &corpus, &oc_cfg)?);
    let sim = micro_aggregate(&compare(&gold, &pred, &corpus, &sim_cfg)?);

    let mut tsv = Tsv::new(&[
        "section", "criterion", "threshold", "group", "tp", "fp", "fn", "precision", "recall", "f1",
        "f1_min", "f1_max",
    ]);
    match_rows(&mut tsv, "OC", a.oc_threshold, &oc);
    match_rows(&mut tsv, "SIM", a.sim_threshold, &sim);

    let mut result = json!({
        "oc": { "threshold": a.oc_threshold, "report": oc },
        "sim": { "threshold": a.sim_threshold, "report": sim },
    });
    if a.sweep {
        let mut sweeps = Vec::new();
        for criterion in [Criterion::Oc, Criterion::Sim] {
            let s = threshold_sweep(&gold, &pred, &corpus, criterion)?;
            for p in &s.points {
                tsv.row(&[
                    "sweep", criterion.name(), &f3(p.threshold), "pooled", &p.tp.to_string(), "NA", "NA",
                    "NA", "NA", &f3(p.pooled_f1), &f3(s.f1_range.0), &f3(s.f1_range.1),
                ]);
                tsv.row(&[
                    "sweep", criterion.name(), &f3(p.threshold), "mean", "NA", "NA", "NA", "NA", "NA",
                    &f3(p.mean_f1), "NA", "NA",
                ]);
            }
            sweeps.push(s);
        }
        result["sweep"] = to_value(&sweeps);
    }
    emit(&a.run.out, "agree", a.run.seed, a, &inputs, &result, &tsv, clock)
}

fn estimate_row(tsv: &mut Tsv, name: &str, e: &Estimate) {
    tsv.row(&[name, &f3(e.point), &f3(e.lower), &f3(e.upper), &f3(e.boot_mean)]);
}

pub fn char(a: &CharArgs) -> Result<()> {
    let clock = Clock::start();
    let inputs = digests(&[("segments", &a.segments), ("gold", &a.gold), ("pred", &a.pred)])?;
    let corpus = io::load_corpus(&a.segments)?;
    let gold = io::load_annotations(&a.gold)?;
    let pred = io::load_annotations(&a.pred)?;

    // a segment one side did not annotate counts as error-free on that side
    let ids: Vec<String> = gold
        .iter()
        .chain(&pred)
        .map(|s| s.segment_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.is_empty() {
        return Err(Error::Validation("no annotated segments".into()));
    }
    let (gold_masks, gold_excluded) = masks_for_annotator(&gold, &corpus, &ids)?;
    let (pred_masks, pred_excluded) = masks_for_annotator(&pred, &corpus, &ids)?;
    let f1 = char_ci(&gold_masks, &pred_masks, CharMetric::CharF1, a.boot, a.run.seed)?;
    let f1w = char_ci(&gold_masks, &pred_masks, CharMetric::CharF1w, a.boot, a.run.seed)?;
    let any = any_error_f1(&gold_masks, &pred_masks)?;

    let mut tsv = Tsv::new(&["metric", "point", "ci_lower", "ci_upper", "boot_mean"]);
    estimate_row(&mut tsv, "Char-F1", &f1);
    estimate_row(&mut tsv, "Char-F1w", &f1w);
    tsv.row(&["segment-any-error-F1", &f3(any), "NA", "NA", "NA"]);
    let result = json!({
        "segments": ids.len(),
        "replicates": a.boot,
        "excluded_spans": { "gold": gold_excluded, "pred": pred_excluded },
        "char_f1": f1,
        "char_f1w": f1w,
        "segment_any_error_f1": any,
    });
    emit(&a.run.out, "char", a.run.seed, a, &inputs, &result, &tsv, clock)
}

pub fn reliability(a: &ReliabilityArgs) -> Result<()> {
    let clock = Clock::start();
    let mut roles: Vec<(String, &Path)> = vec![
        ("segments".into(), a.segments.as_path()),
        ("gold".into(), a.gold.as_path()),
        ("pred".into(), a.pred.as_path()),
    ];
    for (i, r) in a.rater.iter().enumerate() {
        roles.push((format!("rater{}", i + 3), r.as_path()));
    }
    let inputs = roles
        .iter()
        .map(|(role, p)| digest(role, p))
        .collect::<Result<Vec<_>>>()?;
    let corpus = io::load_corpus(&a.segments)?;
    let mut raters = Vec::new();
    let mut seen = HashSet::new();
    for path in std::iter::once(&a.gold).chain(std::iter::once(&a.pred)).chain(&a.rater) {
        let sets = io::load_annotations(path)?;
        let mut name = annotator_name(&sets, path);
        if !seen.insert(name.clone()) {
            name = format!("{name}#{}", raters.len() + 1);
        }
        raters.push((name, sets));
    }
    let (grid, dropped) = RaterGrid::from_annotations(&corpus, &raters)?;
    if dropped > 0 {
        log::warn!("{dropped} segments not annotated by every rater were left out");
    }
    let nominal = alpha_nominal(&grid)?;
    let unitized = alpha_unitized(&grid)?;

    let mut tsv = Tsv::new(&["coefficient", "scope", "alpha", "observed_disagreement", "expected_disagreement"]);
    let alpha_row = |tsv: &mut Tsv, name: &str, scope: &str, al: &spanqe::reliability::Alpha| {
        tsv.row(&[
            name, scope, &opt3(al.value), &f3(al.observed_disagreement), &f3(al.expected_disagreement),
        ]);
    };
    alpha_row(&mut tsv, "nominal", "all", &nominal);
    alpha_row(&mut tsv, "unitized", "all", &unitized.global);
    for (lang, al) in &unitized.per_language {
        alpha_row(&mut tsv, "unitized", lang, al);
    }
    if let Some((lo, hi)) = unitized.range {
        tsv.row(&["unitized", "range_min", &f3(lo), "NA", "NA"]);
        tsv.row(&["unitized", "range_max", &f3(hi), "NA", "NA"]);
    }
    let result = json!({
        "raters": grid.raters,
        "segments": grid.segments.len(),
        "dropped_segments": dropped,
        "nominal": nominal,
        "unitized": unitized,
    });
    emit(&a.run.out, "reliability", a.run.seed, a, &inputs, &result, &tsv, clock)
}

pub fn overlap(a: &OverlapArgs) -> Result<()> {
    let clock = Clock::start();
    let mut roles: Vec<(&str, &Path)> = vec![("segments", &a.segments), ("anomalies", &a.anomalies), ("gold", &a.gold)];
    if let Some(p) = &a.pred {
        roles.push(("pred", p));
    }
    let inputs = digests(&roles)?;
    let corpus = io::load_corpus(&a.segments)?;
    let anomalies = io::load_anomalies(&a.anomalies)?;

    let mut tsv = Tsv::new(&["annotator", "language", "spans", "overlapping", "rate"]);
    let mut reports = Vec::new();
    for path in std::iter::once(&a.gold).chain(a.pred.as_ref()) {
        let sets = io::load_annotations(path)?;
        let name = annotator_name(&sets, path);
        let r = source_overlap_rate(&sets, &anomalies, &corpus)?;
        for (lang, cell) in &r.per_language {
            tsv.row(&[&name, lang, &cell.spans.to_string(), &cell.overlapping.to_string(), &opt3(cell.rate)]);
        }
        tsv.row(&[&name, "mean", "NA", "NA", &opt3(r.mean)]);
        tsv.row(&[&name, "range_min", "NA", "NA", &opt3(r.range.map(|x| x.0))]);
        tsv.row(&[&name, "range_max", "NA", "NA", &opt3(r.range.map(|x| x.1))]);
        reports.push(json!({ "annotator": name, "report": r }));
    }
    let result = json!({
        "threshold": spanqe::span_match::SOURCE_OVERLAP_THRESHOLD,
        "annotators": reports,
    });
    emit(&a.run.out, "overlap", a.run.seed, a, &inputs, &result, &tsv, clock)
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let clock = Clock::start();
    let mut roles: Vec<(&str, &Path)> = vec![("segments", &a.segments), ("gold", &a.gold)];
    if let Some(p) = &a.pred {
        roles.push(("pred", p));
    }
    let inputs = digests(&roles)?;
    let corpus = io::load_corpus(&a.segments)?;

    let mut tsv = Tsv::new(&["annotator", "scope", "segments", "spans_per_sample", "median_span_length", "coverage"]);
    let mut reports = Vec::new();
    for path in std::iter::once(&a.gold).chain(a.pred.as_ref()) {
        let sets = io::load_annotations(path)?;
        let name = annotator_name(&sets, path);
        let s = annotator_stats(&sets, &corpus)?;
        let median = if s.median_defined { f3(s.median_span_length) } else { "NA".into() };
        tsv.row(&[&name, "mean", "NA", &f3(s.spans_per_sample), &median, &f3(s.coverage)]);
        for (lang, l) in &s.per_language {
            tsv.row(&[
                &name, lang, &l.segments.to_string(), &f3(l.spans_per_sample),
                &opt3(l.median_span_length), &f3(l.coverage),
            ]);
        }
        reports.push(json!({ "annotator": name, "stats": s }));
    }
    let result = json!({ "annotators": reports });
    emit(&a.run.out, "stats", a.run.seed, a, &inputs, &result, &tsv, clock)
}

fn load_projection(path: &Path) -> Result<Vec<ProjectedItem>> {
    let items: Vec<AcesItem> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    for it in &items {
        it.validate()?;
        if !ids.insert(it.item_id.as_str()) {
            return Err(Error::Validation(format!("duplicate item_id {}", it.item_id)));
        }
    }
    Ok(items.iter().map(project_item).collect())
}

pub fn project(a: &ProjectArgs) -> Result<()> {
    let clock = Clock::start();
    let inputs = digests(&[("aces", &a.aces)])?;
    let projected = load_projection(&a.aces)?;
    let summary = summarize_projection(&projected);

    let mut tsv = Tsv::new(&[
        "item_id", "language", "phenomenon", "status", "token_start", "token_end", "gold_span", "edit",
    ]);
    for p in &projected {
        let status = match (&p.gold_span, p.discarded) {
            (Some(_), _) => "kept".to_string(),
            (None, Some(reason)) => to_value(&reason).as_str().unwrap_or("discarded").to_string(),
            (None, None) => "discarded".to_string(),
        };
        let (s, e, text) = p.gold_span.as_ref().map_or(("NA".into(), "NA".into(), "NA".into()), |g| {
            (g.token_start.to_string(), g.token_end.to_string(), g.text.clone())
        });
        tsv.row(&[&p.item_id, &p.language, &p.phenomenon, &status, &s, &e, &text, &p.edit]);
    }
    let result = json!({ "summary": summary, "items": projected });
    emit(&a.run.out, "project", a.run.seed, a, &inputs, &result, &tsv, clock)
}

pub fn spanloc(a: &SpanlocArgs) -> Result<()> {
    let clock = Clock::start();
    let mut roles: Vec<(&str, &Path)> = vec![("aces", &a.aces), ("pred", &a.pred)];
    if let Some(m) = &a.mapping {
        roles.push(("mapping", m));
    }
    let inputs = digests(&roles)?;
    let projected = load_projection(&a.aces)?;
    let preds: Vec<TokenPrediction> = read_jsonl(&a.pred)?;
    let map = match &a.mapping {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
            CategoryMap::from_tsv(&raw)?
        }
        None => CategoryMap::builtin(),
    };
    let scores = score_spans(&projected, &preds, a.k)?;
    let mean_n = aggregate(&scores, &map, Weighting::MeanN)?;
    let mean_cap = aggregate(&scores, &map, Weighting::MeanCap(a.cap))?;

    let mut tsv = Tsv::new(&[
        "level", "name", "weighting", "n", "precision", "recall", "f1", "precision_tolerant",
        "recall_tolerant", "f1_tolerant",
    ]);
    for s in &scores {
        tsv.row(&[
            "phenomenon", &s.phenomenon, "NA", &s.n.to_string(), &f3(s.precision), &f3(s.recall),
            &f3(s.f1), &f3(s.precision_tolerant), &f3(s.recall_tolerant), &f3(s.f1_tolerant),
        ]);
    }
    for (label, cats) in [("meanN".to_string(), &mean_n), (format!("meanCap{}", a.cap), &mean_cap)] {
        for c in cats.iter() {
            tsv.row(&[
                "category", &c.category, &label, &c.phenomena.to_string(), "NA", &f3(c.recall), &f3(c.f1),
                "NA", &f3(c.recall_tolerant), &f3(c.f1_tolerant),
            ]);
        }
    }
    let result = json!({
        "k": a.k,
        "cap": a.cap,
        "projection": summarize_projection(&projected),
        "phenomena": scores,
        "categories": { "mean_n": mean_n, "mean_cap": mean_cap },
    });
    emit(&a.run.out, "spanloc", a.run.seed, a, &inputs, &result, &tsv, clock)
}

fn impact_inputs(a: &ImpactArgs) -> Result<(Vec<InputDigest>, Assembly, ModelSpec)> {
    let mut roles: Vec<(&str, &Path)> = vec![
        ("segments", &a.segments),
        ("gold", &a.gold),
        ("correctness", &a.correctness),
    ];
    if let Some(p) = &a.anomalies {
        roles.push(("anomalies", p));
    }
    if let Some(p) = &a.source {
        roles.push(("source", p));
    }
    let inputs = digests(&roles)?;
    let corpus = io::load_corpus(&a.segments)?;
    let target = io::load_annotations(&a.gold)?;
    let correctness = io::load_correctness(&a.correctness)?;
    let anomalies = match &a.anomalies {
        Some(p) => io::load_anomalies(p)?,
        None => Vec::new(),
    };
    let source_sets = match &a.source {
        Some(p) => io::load_annotations(p)?,
        None => Vec::new(),
    };
    let issues = SourceIssues::from_annotations(&corpus, &source_sets, &anomalies)?;
    let options = AssembleOptions {
        datasets: a.datasets.as_ref().map(|d| d.iter().cloned().collect()),
    };
    let assembly = assemble(&correctness, &corpus, &target, &issues, &options)?;
    let mut spec = match a.spec {
        SpecArg::A => ModelSpec::A,
        SpecArg::B => ModelSpec::B,
    };
    if a.omit_s {
        spec = spec.without_s();
    }
    Ok((inputs, assembly, spec))
}

pub fn impact(a: &ImpactArgs) -> Result<()> {
    let clock = Clock::start();
    let (inputs, assembly, spec) = impact_inputs(a)?;
    let rep = block_bootstrap(&assembly.rows, &spec, a.boot, a.run.seed)?;

    let mut tsv = Tsv::new(&["quantity", "point", "ci_lower", "ci_upper"]);
    let pp = |tsv: &mut Tsv, name: &str, e: &Estimate| {
        tsv.row(&[name, &f2(e.point), &f2(e.lower), &f2(e.upper)]);
    };
    pp(&mut tsv, "AME(T) pp", &rep.ame_t);
    if let Some(s) = &rep.ame_s {
        pp(&mut tsv, "AME(S) pp", s);
    }
    tsv.row(&["overall_loss pp", &f2(rep.overall_loss), "NA", "NA"]);
    tsv.row(&["share_T", &f3(rep.share_t), "NA", "NA"]);
    for c in &rep.coefficients {
        let (lo, hi) = c.ci.map_or(("NA".into(), "NA".into()), |(l, h)| (f3(l), f3(h)));
        tsv.row(&[&format!("log_odds:{}", c.term), &f3(c.log_odds), &lo, &hi]);
        let (lo, hi) = c.odds_ratio_ci.map_or(("NA".into(), "NA".into()), |(l, h)| (f3(l), f3(h)));
        tsv.row(&[&format!("odds_ratio:{}", c.term), &f3(c.odds_ratio), &lo, &hi]);
    }
    let result = json!({ "accounting": assembly.accounting, "report": rep });
    emit(&a.run.out, "impact", a.run.seed, a, &inputs, &result, &tsv, clock)
}

pub fn rank(a: &ImpactArgs) -> Result<()> {
    let clock = Clock::start();
    let (inputs, assembly, spec) = impact_inputs(a)?;
    let rep = counterfactual_ranking(&assembly.rows, &spec, a.boot, a.run.seed)?;
    if let Some(note) = &rep.correlation_note {
        log::warn!("{note}");
    }

    let mut tsv = Tsv::new(&[
        "kind", "name", "n_rows", "observed_accuracy", "counterfactual_accuracy", "point", "ci_lower",
        "ci_upper",
    ]);
    for m in &rep.models {
        let (lo, hi) = m.uplift.as_ref().map_or(("NA".into(), "NA".into()), |e| (f2(e.lower), f2(e.upper)));
        tsv.row(&[
            "uplift_pp", &m.eval_model, &m.n_rows.to_string(), &f3(m.observed_accuracy),
            &f3(m.counterfactual_accuracy), &f2(m.uplift_point), &lo, &hi,
        ]);
    }
    for (name, est) in [("spearman", &rep.spearman), ("kendall_tau_b", &rep.kendall)] {
        let cells = est.as_ref().map_or(["NA".to_string(), "NA".into(), "NA".into()], |e| {
            [f3(e.point), f3(e.lower), f3(e.upper)]
        });
        tsv.row(&["correlation", name, "NA", "NA", "NA", &cells[0], &cells[1], &cells[2]]);
    }
    let result = json!({ "accounting": assembly.accounting, "report": rep });
    emit(&a.run.out, "rank", a.run.seed, a, &inputs, &result, &tsv, clock)
}
