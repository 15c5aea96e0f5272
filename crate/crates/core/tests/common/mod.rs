#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanqe::impact::RegressionRow;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Data-generating process for synthetic correctness rows.
#[derive(Clone)]
pub struct Sim {
    pub items: usize,
    pub languages: Vec<&'static str>,
    /// Evaluation model names with their additive log-odds effect.
    pub models: Vec<(&'static str, f64)>,
    pub beta0: f64,
    pub beta_t: f64,
    pub beta_s: f64,
    pub beta_en: f64,
    pub p_t: f64,
    pub p_s: f64,
    pub p_en: f64,
    /// Added to the T probability when the item has a source issue.
    pub t_given_s: f64,
    pub seed: u64,
}

impl Default for Sim {
    fn default() -> Self {
        Self {
            items: 500,
            languages: vec!["da", "de"],
            models: vec![("m-a", 0.0), ("m-b", 0.5)],
            beta0: 0.2,
            beta_t: -0.4,
            beta_s: 0.0,
            beta_en: 1.0,
            p_t: 0.6,
            p_s: 0.2,
            p_en: 0.7,
            t_given_s: 0.0,
            seed: 7,
        }
    }
}

impl Sim {
    fn eta(&self, model_effect: f64, t: bool, s: bool, y_en: bool) -> f64 {
        let b = |v: bool| f64::from(u8::from(v));
        self.beta0 + self.beta_t * b(t) + self.beta_s * b(s) + self.beta_en * b(y_en) + model_effect
    }

    /// Rows plus the oracle AME(T) in pp computed with the true coefficients
    /// over the generated rows.
    pub fn generate(&self) -> (Vec<RegressionRow>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut rows = Vec::new();
        let mut oracle = 0.0;
        for i in 0..self.items {
            let item = format!("q{i:05}");
            let s = rng.random_bool(self.p_s);
            let y_en: Vec<bool> = self.models.iter().map(|_| rng.random_bool(self.p_en)).collect();
            for lang in &self.languages {
                let p_t = (self.p_t + if s { self.t_given_s } else { 0.0 }).clamp(0.0, 1.0);
                let t = rng.random_bool(p_t);
                for (m, &(model, effect)) in self.models.iter().enumerate() {
                    let eta = self.eta(effect, t, s, y_en[m]);
                    let y = rng.random_bool(sigmoid(eta));
                    oracle += sigmoid(self.eta(effect, true, s, y_en[m])) - sigmoid(self.eta(effect, false, s, y_en[m]));
                    rows.push(RegressionRow {
                        item_id: item.clone(),
                        language: lang.to_string(),
                        dataset: "synthetic".into(),
                        eval_model: model.to_string(),
                        y,
                        y_en: y_en[m],
                        t,
                        s,
                    });
                }
            }
        }
        let n = rows.len() as f64;
        (rows, 100.0 * oracle / n)
    }
}

/// Log-likelihood of an intercept + one-regressor logistic model over
/// aggregated cells `(x, successes, failures)`.
pub fn loglik(cells: &[(f64, f64, f64)], b0: f64, b1: f64) -> f64 {
    cells
        .iter()
        .map(|&(x, pos, neg)| {
            let p = sigmoid(b0 + b1 * x);
            pos * p.ln() + neg * (1.0 - p).ln()
        })
        .sum()
}

/// Brute-force MLE over [-5, 5]^2: a 1e-2 grid, then a 1e-4 grid around the
/// best coarse point. The logistic likelihood is concave, so the refinement
/// window cannot miss the optimum.
pub fn grid_mle(cells: &[(f64, f64, f64)]) -> (f64, f64) {
    let search = |lo0: f64, lo1: f64, steps: usize, step: f64| {
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=steps {
            let b0 = lo0 + i as f64 * step;
            for j in 0..=steps {
                let b1 = lo1 + j as f64 * step;
                let ll = loglik(cells, b0, b1);
                if ll > best.0 {
                    best = (ll, b0, b1);
                }
            }
        }
        (best.1, best.2)
    };
    let (c0, c1) = search(-5.0, -5.0, 1000, 1e-2);
    search(c0 - 0.02, c1 - 0.02, 400, 1e-4)
}

/// Size of a maximum matching in a bipartite eligibility matrix, by exhaustive
/// enumeration. Fine for up to five rows.
pub fn max_matching(eligible: &[Vec<bool>]) -> usize {
    fn go(row: usize, eligible: &[Vec<bool>], used: &mut Vec<bool>) -> usize {
        if row == eligible.len() {
            return 0;
        }
        let mut best = go(row + 1, eligible, used);
        for c in 0..used.len() {
            if eligible[row][c] && !used[c] {
                used[c] = true;
                best = best.max(1 + go(row + 1, eligible, used));
                used[c] = false;
            }
        }
        best
    }
    let cols = eligible.first().map_or(0, Vec::len);
    go(0, eligible, &mut vec![false; cols])
}
