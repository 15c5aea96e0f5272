mod common;

use common::{grid_mle, Sim};
use proptest::prelude::*;
use spanqe::impact::{
    ame, block_bootstrap, counterfactual_ranking, fit, fit_logit, ranking_from_fit, ModelSpec, Regressor,
    RegressionRow, Sample,
};
use spanqe::stats::average_ranks;

const INTERCEPT_T: ModelSpec = ModelSpec {
    sample: Sample::All,
    include_s: false,
    include_y_en: false,
};

fn cell_rows(cells: &[(bool, usize, usize)]) -> Vec<RegressionRow> {
    let mut rows = Vec::new();
    for &(t, pos, neg) in cells {
        for k in 0..pos + neg {
            rows.push(RegressionRow {
                item_id: format!("i{}", rows.len()),
                language: "de".into(),
                dataset: "d".into(),
                eval_model: "m".into(),
                y: k < pos,
                y_en: true,
                t,
                s: false,
            });
        }
    }
    rows
}

#[test]
fn two_cell_fixture_matches_grid_mle() {
    let rows = cell_rows(&[(false, 3, 1), (true, 1, 3)]);
    let f = fit(&rows, &INTERCEPT_T).unwrap();
    let (b0, bt) = grid_mle(&[(0.0, 3.0, 1.0), (1.0, 1.0, 3.0)]);
    assert!((f.coefficients[0] - b0).abs() < 1e-3);
    assert!((f.coefficients[1] - bt).abs() < 1e-3);
    assert!((ame(&f, &rows, Regressor::T).unwrap() + 50.0).abs() < 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn irls_matches_grid_mle_on_toys(c in prop::array::uniform4(1usize..7)) {
        let rows = cell_rows(&[(false, c[0], c[1]), (true, c[2], c[3])]);
        let f = fit(&rows, &INTERCEPT_T).unwrap();
        let (b0, bt) = grid_mle(&[
            (0.0, c[0] as f64, c[1] as f64),
            (1.0, c[2] as f64, c[3] as f64),
        ]);
        prop_assert!(f.converged);
        prop_assert!((f.coefficients[0] - b0).abs() < 1e-3);
        prop_assert!((f.coefficients[1] - bt).abs() < 1e-3);
    }
}

#[test]
fn synthetic_effect_is_recovered() {
    let (rows, oracle) = Sim {
        items: 1500,
        ..Sim::default()
    }
    .generate();
    let rep = block_bootstrap(&rows, &ModelSpec::A, 150, 3).unwrap();
    assert_eq!(rep.boot_fail, 0);
    assert!(rep.ame_t.upper < 0.0, "{:?}", rep.ame_t);
    assert!((rep.ame_t.point - oracle).abs() < 2.0, "{} vs {oracle}", rep.ame_t.point);
    let again = block_bootstrap(&rows, &ModelSpec::A, 150, 3).unwrap();
    assert_eq!(rep, again);
}

#[test]
fn reference_level_choice_does_not_move_ames() {
    let (rows, _) = Sim {
        languages: vec!["da", "de", "fi"],
        models: vec![("m-a", 0.0), ("m-b", 0.4), ("m-c", -0.3)],
        ..Sim::default()
    }
    .generate();
    let renamed: Vec<RegressionRow> = rows
        .iter()
        .map(|r| RegressionRow {
            language: if r.language == "da" { "zz".into() } else { r.language.clone() },
            eval_model: if r.eval_model == "m-a" { "z-model".into() } else { r.eval_model.clone() },
            ..r.clone()
        })
        .collect();
    let a = fit(&rows, &ModelSpec::A).unwrap();
    let b = fit(&renamed, &ModelSpec::A).unwrap();
    assert_ne!(a.terms, b.terms);
    for reg in [Regressor::T, Regressor::S] {
        let x = ame(&a, &rows, reg).unwrap();
        let y = ame(&b, &renamed, reg).unwrap();
        assert!((x - y).abs() < 1e-9, "{reg:?}: {x} vs {y}");
    }
}

#[test]
fn spec_b_is_spec_a_on_the_english_correct_subset() {
    let (rows, _) = Sim::default().generate();
    let b = fit(&rows, &ModelSpec::B).unwrap();
    // same design built by hand: intercept, T, S, language and model dummies
    let subset: Vec<&RegressionRow> = rows.iter().filter(|r| r.y_en).collect();
    let mut x = Vec::new();
    for r in &subset {
        let v = |c: bool| f64::from(u8::from(c));
        x.extend([1.0, v(r.t), v(r.s), v(r.language == "de"), v(r.eval_model == "m-b")]);
    }
    let y: Vec<f64> = subset.iter().map(|r| f64::from(u8::from(r.y))).collect();
    let manual = fit_logit(&x, &y, 5).unwrap();
    assert_eq!(b.terms, vec!["intercept", "T", "S", "language=de", "eval_model=m-b"]);
    for (u, v) in b.coefficients.iter().zip(&manual.coefficients) {
        assert!((u - v).abs() < 1e-8);
    }
}

#[test]
fn omitting_a_confounding_s_makes_ame_t_more_negative() {
    let (rows, _) = Sim {
        items: 3000,
        beta_s: -1.0,
        p_t: 0.3,
        t_given_s: 0.5,
        p_s: 0.4,
        ..Sim::default()
    }
    .generate();
    let with_s = fit(&rows, &ModelSpec::A).unwrap();
    let without = fit(&rows, &ModelSpec::A.without_s()).unwrap();
    let a = ame(&with_s, &rows, Regressor::T).unwrap();
    let b = ame(&without, &rows, Regressor::T).unwrap();
    assert!(b < a, "A¬S {b} should be below A {a}");
}

#[test]
fn omitting_an_independent_s_barely_moves_ame_t() {
    let (rows, _) = Sim {
        items: 3000,
        beta_s: -0.5,
        ..Sim::default()
    }
    .generate();
    let a = ame(&fit(&rows, &ModelSpec::A).unwrap(), &rows, Regressor::T).unwrap();
    let b = ame(&fit(&rows, &ModelSpec::A.without_s()).unwrap(), &rows, Regressor::T).unwrap();
    assert!((a - b).abs() < 1.0, "{a} vs {b}");
}

#[test]
fn odds_ratios_are_exponentiated_log_odds() {
    let (rows, _) = Sim::default().generate();
    let rep = block_bootstrap(&rows, &ModelSpec::A, 40, 1).unwrap();
    for c in &rep.coefficients {
        assert_eq!(c.odds_ratio, c.log_odds.exp());
        if let (Some((lo, hi)), Some((olo, ohi))) = (c.ci, c.odds_ratio_ci) {
            assert_eq!((olo, ohi), (lo.exp(), hi.exp()));
        }
    }
}

/// Balanced rows: within every model the accuracy is the same for T = 0 and
/// T = 1, so the fitted translation effect is zero.
fn balanced_rows() -> Vec<RegressionRow> {
    let mut rows = Vec::new();
    for (m, correct_of_ten) in [("m1", 3), ("m2", 5), ("m3", 6), ("m4", 8)] {
        for t in [false, true] {
            for k in 0..10 {
                rows.push(RegressionRow {
                    item_id: format!("{m}-{t}-{k}"),
                    language: "de".into(),
                    dataset: "d".into(),
                    eval_model: m.into(),
                    y: k < correct_of_ten,
                    y_en: true,
                    t,
                    s: false,
                });
            }
        }
    }
    rows
}

#[test]
fn zero_translation_effect_leaves_ranking_untouched() {
    let rows = balanced_rows();
    let mut f = fit(&rows, &INTERCEPT_T).unwrap();
    assert!(f.coefficient("T").unwrap().abs() < 1e-9);
    let t = f.terms.iter().position(|t| t == "T").unwrap();
    f.coefficients[t] = 0.0;
    let (models, rho, tau) = ranking_from_fit(&f, &rows);
    assert!(models.iter().all(|m| m.uplift_point == 0.0));
    assert_eq!(rho, Some(1.0));
    assert_eq!(tau, Some(1.0));

    let rep = counterfactual_ranking(&rows, &INTERCEPT_T, 100, 4).unwrap();
    assert_eq!(rep.spearman.unwrap().point, 1.0);
    assert_eq!(rep.kendall.unwrap().point, 1.0);
}

#[test]
fn uniform_penalty_keeps_ranking_and_lifts_everyone() {
    let (rows, _) = Sim {
        items: 800,
        models: vec![("m1", -0.6), ("m2", -0.2), ("m3", 0.3), ("m4", 0.7), ("m5", 1.1)],
        beta_t: -0.6,
        ..Sim::default()
    }
    .generate();
    let rep = counterfactual_ranking(&rows, &ModelSpec::A, 100, 8).unwrap();
    assert!(rep.spearman.as_ref().unwrap().point >= 0.99);
    assert!(rep.models.iter().all(|m| m.uplift_point > 0.0));
}

#[test]
fn shifting_all_predictors_keeps_both_rankings() {
    let (rows, _) = Sim {
        languages: vec!["de"],
        models: vec![("m1", -0.5), ("m2", 0.1), ("m3", 0.6)],
        p_s: 0.0,
        p_en: 1.0,
        ..Sim::default()
    }
    .generate();
    let f = fit(&rows, &INTERCEPT_T).unwrap();
    let (base, _, _) = ranking_from_fit(&f, &rows);
    let ranks = |m: &[spanqe::impact::ModelUplift]| {
        (
            average_ranks(&m.iter().map(|u| u.observed_accuracy).collect::<Vec<_>>()),
            average_ranks(&m.iter().map(|u| u.counterfactual_accuracy).collect::<Vec<_>>()),
        )
    };
    for shift in [-2.0, -0.5, 0.7, 3.0] {
        let mut g = f.clone();
        g.coefficients[0] += shift;
        let (moved, _, _) = ranking_from_fit(&g, &rows);
        assert_eq!(ranks(&base), ranks(&moved));
    }
}

#[test]
fn one_model_refuses_correlations() {
    let rows = cell_rows(&[(false, 3, 1), (true, 1, 3)]);
    let rep = counterfactual_ranking(&rows, &INTERCEPT_T, 20, 1).unwrap();
    assert_eq!(rep.models.len(), 1);
    assert!(rep.spearman.is_none() && rep.kendall.is_none());
    assert!(rep.correlation_note.is_some());
}
