//! L2-regularized logistic regression and the scorer abstraction shared by
//! in-process and external models.
//!
//! Training minimizes
//!
//! ```text
//! J(w, b) = (1/n) Σ log(1 + exp(-s_i (w·x_i + b))) + (λ/2) ‖w‖²
//! ```
//!
//! with `s_i = +1` for `Hope` and `-1` for `NotHope`. The bias is not
//! regularized. The optimizer is a full-batch L-BFGS with Armijo
//! backtracking, started from zero, so results are deterministic.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label, LabeledDocument};
use crate::error::{Error, Result};
use crate::features::{SparseVector, Vectorizer, DEFAULT_MAX_TOKENS};

/// Tolerance on `Σ p = 1` for a valid distribution.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Class probabilities in `[NotHope, Hope]` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbDist([f64; 2]);

impl ProbDist {
    pub fn new(p_not_hope: f64, p_hope: f64) -> Result<Self> {
        let valid = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !valid(p_not_hope) || !valid(p_hope) || (p_not_hope + p_hope - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbability(p_not_hope, p_hope));
        }
        Ok(ProbDist([p_not_hope, p_hope]))
    }

    /// `[1 - p, p]`, with `p` clamped to `[0, 1]`.
    pub fn from_hope(p_hope: f64) -> Self {
        let p = p_hope.clamp(0.0, 1.0);
        ProbDist([1.0 - p, p])
    }

    /// Accepts a pair whose sum is within `tol` of one and rescales it to sum
    /// to one. Pairs that already sum to exactly one are kept bit-for-bit.
    pub fn renormalized(p_not_hope: f64, p_hope: f64, tol: f64) -> Result<Self> {
        let valid = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        let sum = p_not_hope + p_hope;
        if !valid(p_not_hope) || !valid(p_hope) || (sum - 1.0).abs() > tol || sum <= 0.0 {
            return Err(Error::InvalidProbability(p_not_hope, p_hope));
        }
        if sum == 1.0 {
            Ok(ProbDist([p_not_hope, p_hope]))
        } else {
            Ok(ProbDist([p_not_hope / sum, p_hope / sum]))
        }
    }

    pub fn probs(&self) -> [f64; 2] {
        self.0
    }

    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    pub fn hope(&self) -> f64 {
        self.0[1]
    }

    pub fn not_hope(&self) -> f64 {
        self.0[0]
    }

    /// Most probable class; an exact tie resolves to `NotHope`.
    pub fn predicted(&self) -> Label {
        self.predicted_with_tie(Label::NotHope)
    }

    pub fn predicted_with_tie(&self, tie: Label) -> Label {
        let [n, h] = self.0;
        if h > n {
            Label::Hope
        } else if n > h {
            Label::NotHope
        } else {
            tie
        }
    }
}

/// Anything that turns documents into class probabilities.
pub trait Scorer {
    /// One distribution per input document, in input order.
    fn score_batch(&mut self, docs: &[Document]) -> Result<Vec<ProbDist>>;
}

/// A scorer that can be (re)trained on a labeled set. Used by the active
/// learning loop as the training procedure.
pub trait Learner: Scorer {
    fn fit(&mut self, labeled: &[LabeledDocument]) -> Result<()>;
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score_batch(&mut self, docs: &[Document]) -> Result<Vec<ProbDist>> {
        (**self).score_batch(docs)
    }
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn fit(&mut self, labeled: &[LabeledDocument]) -> Result<()> {
        (**self).fit(labeled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Unused by the deterministic full-batch solver; carried for
    /// reproducibility manifests.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            max_iters: 500,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config(format!("grad_tol must be > 0, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub vectorizer_fingerprint: Option<String>,
    pub format_version: u32,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        LinearModel {
            weights,
            bias,
            lambda: 0.0,
            vectorizer_fingerprint: None,
            format_version: MODEL_FORMAT_VERSION,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &SparseVector) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(x.dot(&self.weights) + self.bias)
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<ProbDist> {
        Ok(ProbDist::from_hope(sigmoid(self.logit(x)?)))
    }

    pub fn predict(&self, x: &SparseVector) -> Result<Label> {
        Ok(self.predict_proba(x)?.predicted())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let m: LinearModel = serde_json::from_str(json)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Regularized logistic loss over a fixed data set. Parameters are laid out
/// as `[w_0, .., w_{d-1}, b]`.
#[derive(Debug)]
pub struct Objective<'a> {
    x: &'a [SparseVector],
    signs: Vec<f64>,
    lambda: f64,
    dim: usize,
}

impl<'a> Objective<'a> {
    pub fn new(x: &'a [SparseVector], y: &[Label], lambda: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch(x.len(), y.len()));
        }
        let dim = x.first().map(SparseVector::dim).ok_or(Error::EmptyInput)?;
        for (i, v) in x.iter().enumerate() {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            if v.entries().iter().any(|(_, w)| !w.is_finite()) {
                return Err(Error::NonFinite(i));
            }
        }
        let signs = y.iter().map(|l| if *l == Label::Hope { 1.0 } else { -1.0 }).collect();
        Ok(Objective { x, signs, lambda, dim })
    }

    /// Number of parameters, weights plus bias.
    pub fn n_params(&self) -> usize {
        self.dim + 1
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let (w, b) = theta.split_at(self.dim);
        let n = self.x.len() as f64;
        let loss: f64 = self
            .x
            .iter()
            .zip(&self.signs)
            .map(|(x, s)| softplus(-s * (x.dot(w) + b[0])))
            .sum();
        loss / n + 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Objective value, writing the gradient into `grad`.
    pub fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (w, b) = theta.split_at(self.dim);
        let n = self.x.len() as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (x, &s) in self.x.iter().zip(&self.signs) {
            let m = s * (x.dot(w) + b[0]);
            loss += softplus(-m);
            // d/dm log(1 + e^{-m}) = -sigmoid(-m)
            let coef = -s * sigmoid(-m) / n;
            for &(i, v) in x.entries() {
                grad[i] += coef * v;
            }
            grad[self.dim] += coef;
        }
        let mut reg = 0.0;
        for (g, &wi) in grad[..self.dim].iter_mut().zip(w) {
            *g += self.lambda * wi;
            reg += wi * wi;
        }
        loss / n + 0.5 * self.lambda * reg
    }
}

/// Diagnostics from a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub final_grad_inf: f64,
}

pub fn train(x: &[SparseVector], y: &[Label], cfg: &TrainConfig) -> Result<LinearModel> {
    train_with_report(x, y, cfg).map(|(m, _)| m)
}

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn train_with_report(x: &[SparseVector], y: &[Label], cfg: &TrainConfig) -> Result<(LinearModel, TrainReport)> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(y.contains(&Label::Hope) && y.contains(&Label::NotHope)) {
        return Err(Error::SingleClass);
    }
    let obj = Objective::new(x, y, cfg.lambda)?;
    let p = obj.n_params();

    let mut theta = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut f = obj.value_grad(&theta, &mut grad);
    let mut trace = vec![f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(LBFGS_MEMORY);
    let mut iterations = 0;
    let mut converged = inf_norm(&grad) <= cfg.grad_tol;

    let mut next = vec![0.0; p];
    let mut next_grad = vec![0.0; p];
    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let mut dir = lbfgs_direction(&grad, &history);
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }

        let mut step = if history.is_empty() {
            (1.0 / inf_norm(&grad)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for ((n, t), d) in next.iter_mut().zip(&theta).zip(&dir) {
                *n = t + step * d;
            }
            let f_new = obj.value_grad(&next, &mut next_grad);
            if f_new <= f + ARMIJO_C1 * step * slope {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            if history.is_empty() {
                // No decrease possible along steepest descent at machine precision.
                break;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        std::mem::swap(&mut theta, &mut next);
        std::mem::swap(&mut grad, &mut next_grad);
        f = f_new;
        trace.push(f);
        converged = inf_norm(&grad) <= cfg.grad_tol;
    }

    let bias = theta.pop().expect("bias parameter");
    let model = LinearModel {
        weights: theta,
        bias,
        lambda: cfg.lambda,
        vectorizer_fingerprint: None,
        format_version: MODEL_FORMAT_VERSION,
    };
    let report = TrainReport {
        iterations,
        converged,
        objective_trace: trace,
        final_grad_inf: inf_norm(&grad),
    };
    Ok((model, report))
}

fn lbfgs_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// A fitted TF-IDF vectorizer paired with its logistic regression model.
#[derive(Debug, Clone)]
pub struct TfidfLogReg {
    pub vectorizer: Vectorizer,
    pub model: LinearModel,
}

impl TfidfLogReg {
    pub fn fit(docs: &[LabeledDocument], cfg: &TrainConfig, max_tokens: usize) -> Result<Self> {
        let vectorizer = Vectorizer::fit(docs.iter().map(|d| &d.doc), max_tokens)?;
        let x = vectorizer.transform_all(docs.iter().map(|d| &d.doc));
        let y: Vec<Label> = docs.iter().map(|d| d.label).collect();
        let mut model = train(&x, &y, cfg)?;
        model.vectorizer_fingerprint = Some(vectorizer.fingerprint());
        Ok(TfidfLogReg { vectorizer, model })
    }

    /// Pairs a model with a vectorizer, checking that they were trained together.
    pub fn from_parts(vectorizer: Vectorizer, model: LinearModel) -> Result<Self> {
        let fp = vectorizer.fingerprint();
        if model.vectorizer_fingerprint.as_deref() != Some(fp.as_str()) {
            return Err(Error::FingerprintMismatch {
                model: model.vectorizer_fingerprint.unwrap_or_else(|| "<none>".into()),
                vectorizer: fp,
            });
        }
        if model.dim() != vectorizer.dim() {
            return Err(Error::DimensionMismatch {
                expected: vectorizer.dim(),
                found: model.dim(),
            });
        }
        Ok(TfidfLogReg { vectorizer, model })
    }

    pub fn predict_proba(&self, doc: &Document) -> ProbDist {
        self.model
            .predict_proba(&self.vectorizer.transform(doc))
            .expect("vectorizer and model dimensions agree")
    }

    pub fn predict(&self, doc: &Document) -> Label {
        self.predict_proba(doc).predicted()
    }
}

impl Scorer for TfidfLogReg {
    fn score_batch(&mut self, docs: &[Document]) -> Result<Vec<ProbDist>> {
        Ok(docs.iter().map(|d| self.predict_proba(d)).collect())
    }
}

/// Retrains a fresh [`TfidfLogReg`] from scratch on every `fit`.
#[derive(Debug, Clone)]
pub struct TfidfLrLearner {
    pub config: TrainConfig,
    pub max_tokens: usize,
    fitted: Option<TfidfLogReg>,
}

impl TfidfLrLearner {
    pub fn new(config: TrainConfig, max_tokens: usize) -> Self {
        TfidfLrLearner {
            config,
            max_tokens,
            fitted: None,
        }
    }

    pub fn fitted(&self) -> Option<&TfidfLogReg> {
        self.fitted.as_ref()
    }

    pub fn into_fitted(self) -> Option<TfidfLogReg> {
        self.fitted
    }
}

impl Default for TfidfLrLearner {
    fn default() -> Self {
        TfidfLrLearner::new(TrainConfig::default(), DEFAULT_MAX_TOKENS)
    }
}

impl Scorer for TfidfLrLearner {
    fn score_batch(&mut self, docs: &[Document]) -> Result<Vec<ProbDist>> {
        self.fitted.as_mut().ok_or(Error::NotFitted)?.score_batch(docs)
    }
}

impl Learner for TfidfLrLearner {
    fn fit(&mut self, labeled: &[LabeledDocument]) -> Result<()> {
        self.fitted = Some(TfidfLogReg::fit(labeled, &self.config, self.max_tokens)?);
        Ok(())
    }
}

/// Fixed lookup from raw text to probabilities. Training is a no-op, which
/// makes it a reference point for replaying external scorers.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    table: HashMap<String, ProbDist>,
    fallback: Option<ProbDist>,
}

impl TableScorer {
    pub fn new(table: HashMap<String, ProbDist>) -> Self {
        TableScorer { table, fallback: None }
    }

    pub fn with_fallback(mut self, p: ProbDist) -> Self {
        self.fallback = Some(p);
        self
    }

    /// Parses `{"text": [p_not_hope, p_hope], ...}`.
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: HashMap<String, [f64; 2]> = serde_json::from_str(json)?;
        let table = raw
            .into_iter()
            .map(|(k, [a, b])| ProbDist::renormalized(a, b, 1e-6).map(|p| (k, p)))
            .collect::<Result<_>>()?;
        Ok(TableScorer::new(table))
    }
}

impl Scorer for TableScorer {
    fn score_batch(&mut self, docs: &[Document]) -> Result<Vec<ProbDist>> {
        docs.iter()
            .map(|d| {
                self.table
                    .get(&d.raw_text)
                    .copied()
                    .or(self.fallback)
                    .ok_or_else(|| Error::MissingScore(d.raw_text.clone()))
            })
            .collect()
    }
}

impl Learner for TableScorer {
    fn fit(&mut self, _labeled: &[LabeledDocument]) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: &[&[f64]]) -> Vec<SparseVector> {
        rows.iter().map(|r| SparseVector::from_dense(r)).collect()
    }

    #[test]
    fn separable_1d() {
        let x = dense(&[&[-1.0], &[1.0]]);
        let y = [Label::NotHope, Label::Hope];
        let m = train(&x, &y, &TrainConfig::default()).unwrap();
        assert!(m.weights[0] > 0.0);
        assert_eq!(m.predict(&x[0]).unwrap(), Label::NotHope);
        assert_eq!(m.predict(&x[1]).unwrap(), Label::Hope);
        // Stationarity: by symmetry b = 0 and w solves w = sigmoid(-w).
        assert!(m.bias.abs() < 1e-6);
        let w = m.weights[0];
        assert!((w - sigmoid(-w)).abs() < 1e-5);
    }

    #[test]
    fn zero_features_balanced_labels_stay_at_origin() {
        let x = vec![SparseVector::zeros(3); 4];
        let y = [Label::Hope, Label::NotHope, Label::Hope, Label::NotHope];
        let (m, report) = train_with_report(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(m.weights, vec![0.0; 3]);
        assert_eq!(m.bias, 0.0);
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
    }

    #[test]
    fn training_input_errors() {
        let x = dense(&[&[1.0], &[2.0]]);
        assert!(matches!(
            train(&x, &[Label::Hope, Label::Hope], &TrainConfig::default()),
            Err(Error::SingleClass)
        ));
        let mixed = vec![SparseVector::zeros(1), SparseVector::zeros(2)];
        assert!(matches!(
            train(&mixed, &[Label::Hope, Label::NotHope], &TrainConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let nan = dense(&[&[f64::NAN], &[1.0]]);
        assert!(matches!(
            train(&nan, &[Label::Hope, Label::NotHope], &TrainConfig::default()),
            Err(Error::NonFinite(0))
        ));
        assert!(matches!(
            train(&x, &[Label::Hope], &TrainConfig::default()),
            Err(Error::LengthMismatch(2, 1))
        ));
        let bad = TrainConfig {
            lambda: -1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&x, &[Label::Hope, Label::NotHope], &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn predict_proba_examples() {
        let zero = LinearModel::new(vec![0.0, 0.0], 0.0);
        let x = SparseVector::from_dense(&[0.3, -2.0]);
        assert_eq!(zero.predict_proba(&x).unwrap().probs(), [0.5, 0.5]);
        assert_eq!(zero.predict(&x).unwrap(), Label::NotHope);

        let m = LinearModel::new(vec![2.0], -1.0);
        let p = m.predict_proba(&SparseVector::from_dense(&[1.0])).unwrap();
        assert!((p.hope() - 0.731_058_578_630_004_9).abs() < 1e-6);
        assert_eq!(m.predict(&SparseVector::from_dense(&[1.0])).unwrap(), Label::Hope);

        let extreme = LinearModel::new(vec![1.0], 0.0);
        let p = extreme.predict_proba(&SparseVector::from_dense(&[-1000.0])).unwrap();
        assert!(p.hope().is_finite() && p.hope() >= 0.0);
        assert_eq!(p.not_hope(), 1.0);
        let p = extreme.predict_proba(&SparseVector::from_dense(&[1000.0])).unwrap();
        assert_eq!(p.hope(), 1.0);

        assert!(matches!(
            m.predict_proba(&SparseVector::zeros(2)),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn tie_and_threshold() {
        assert_eq!(ProbDist::from_hope(0.49).predicted(), Label::NotHope);
        assert_eq!(ProbDist::from_hope(0.5).predicted(), Label::NotHope);
        assert_eq!(ProbDist::from_hope(0.5).predicted_with_tie(Label::Hope), Label::Hope);
        assert_eq!(ProbDist::from_hope(0.51).predicted(), Label::Hope);
    }

    #[test]
    fn probdist_validation() {
        assert!(ProbDist::new(0.25, 0.75).is_ok());
        assert!(ProbDist::new(0.6, 0.6).is_err());
        assert!(ProbDist::new(-0.1, 1.1).is_err());
        assert!(ProbDist::new(f64::NAN, 0.5).is_err());
        let p = ProbDist::renormalized(0.3, 0.7000004, 1e-6).unwrap();
        assert!((p.not_hope() + p.hope() - 1.0).abs() < 1e-15);
        assert!(ProbDist::renormalized(0.6, 0.6, 1e-6).is_err());
        assert_eq!(ProbDist::renormalized(0.25, 0.75, 1e-6).unwrap().probs(), [0.25, 0.75]);
    }

    #[test]
    fn model_json_round_trip() {
        let mut m = LinearModel::new(vec![0.5, -0.25], 0.125);
        m.vectorizer_fingerprint = Some("abc".into());
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        for key in ["weights", "bias", "lambda", "vectorizer_fingerprint", "format_version"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(LinearModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn fingerprint_mismatch_detected() {
        let docs = vec![
            LabeledDocument::new("1", "good day", Label::Hope),
            LabeledDocument::new("2", "bad day", Label::NotHope),
        ];
        let a = TfidfLogReg::fit(&docs, &TrainConfig::default(), 128).unwrap();
        let other = Vectorizer::fit([&Document::new("x", "something else entirely")], 128).unwrap();
        assert!(matches!(
            TfidfLogReg::from_parts(other, a.model.clone()),
            Err(Error::FingerprintMismatch { .. })
        ));
        assert!(TfidfLogReg::from_parts(a.vectorizer.clone(), a.model.clone()).is_ok());
    }

    #[test]
    fn regularization_shrinks_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<SparseVector> = (0..40)
            .map(|_| SparseVector::from_dense(&(0..4).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let y: Vec<Label> = x
            .iter()
            .map(|v| {
                if v.get(0) + 0.5 * v.get(1) + rng.gen_range(-0.3..0.3) > 0.0 {
                    Label::Hope
                } else {
                    Label::NotHope
                }
            })
            .collect();
        let norms: Vec<f64> = [0.01, 1.0, 100.0]
            .iter()
            .map(|&lambda| {
                let m = train(
                    &x,
                    &y,
                    &TrainConfig {
                        lambda,
                        ..TrainConfig::default()
                    },
                )
                .unwrap();
                m.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
            })
            .collect();
        assert!(norms[0] >= norms[1] && norms[1] >= norms[2], "{norms:?}");
    }

    #[test]
    fn repeated_training_is_bit_identical() {
        let x = dense(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5], &[0.9, 0.2]]);
        let y = [Label::Hope, Label::NotHope, Label::NotHope, Label::Hope];
        let a = train(&x, &y, &TrainConfig::default()).unwrap();
        let b = train(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn table_scorer_lookup() {
        let mut s = TableScorer::from_json(r#"{"hi": [0.25, 0.75]}"#).unwrap();
        let out = s.score_batch(&[Document::new("1", "hi")]).unwrap();
        assert_eq!(out[0].probs(), [0.25, 0.75]);
        assert!(matches!(
            s.score_batch(&[Document::new("2", "other")]),
            Err(Error::MissingScore(_))
        ));
        let mut s = s.with_fallback(ProbDist::from_hope(0.5));
        assert_eq!(s.score_batch(&[Document::new("2", "other")]).unwrap()[0].hope(), 0.5);
    }

    #[test]
    fn learner_requires_fit() {
        let mut l = TfidfLrLearner::default();
        assert!(matches!(
            l.score_batch(&[Document::new("1", "x")]),
            Err(Error::NotFitted)
        ));
    }

    proptest! {
        #[test]
        fn batch_scoring_matches_single(texts in proptest::collection::vec("[a-e ]{0,12}", 1..10)) {
            let docs = vec![
                LabeledDocument::new("1", "a b c", Label::Hope),
                LabeledDocument::new("2", "c d e", Label::NotHope),
                LabeledDocument::new("3", "a a d", Label::Hope),
            ];
            let mut lr = TfidfLogReg::fit(&docs, &TrainConfig::default(), 128).unwrap();
            let queries: Vec<Document> = texts.iter().enumerate().map(|(i, t)| Document::new(i.to_string(), t.as_str())).collect();
            let batch = lr.score_batch(&queries).unwrap();
            prop_assert_eq!(batch.len(), queries.len());
            for (q, p) in queries.iter().zip(&batch) {
                let single = lr.score_batch(std::slice::from_ref(q)).unwrap();
                prop_assert_eq!(single[0], *p);
                prop_assert!((p.hope() + p.not_hope() - 1.0).abs() <= 1e-9);
            }
        }
    }
}
