//! Pool-based active learning with a simulated oracle.
//!
//! Each round scores the unlabeled pool, queries the `batch_k` most
//! informative documents, reveals their gold labels, moves them into the
//! labeled set and retrains from scratch. The loop stops after `max_rounds`,
//! when the pool is exhausted, or once pool accuracy stops improving by at
//! least `plateau_delta` (checked from `min_rounds` on).

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{Learner, ProbDist, Scorer};
use crate::corpus::{Document, Label, LabeledDocument};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Entropy,
    Random,
    Margin,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().as_str() {
            "entropy" => Ok(Strategy::Entropy),
            "random" => Ok(Strategy::Random),
            "margin" => Ok(Strategy::Margin),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Entropy => "entropy",
            Strategy::Random => "random",
            Strategy::Margin => "margin",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALConfig {
    pub batch_k: usize,
    pub max_rounds: usize,
    pub min_rounds: usize,
    pub plateau_delta: f64,
    pub seed_fraction: f64,
    pub strategy: Strategy,
    pub rng_seed: u64,
}

impl Default for ALConfig {
    fn default() -> Self {
        ALConfig {
            batch_k: 20,
            max_rounds: 5,
            min_rounds: 3,
            plateau_delta: 0.002,
            seed_fraction: 0.10,
            strategy: Strategy::Entropy,
            rng_seed: 0,
        }
    }
}

impl ALConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_k < 1 {
            return Err(Error::Config("batch_k must be >= 1".into()));
        }
        if self.min_rounds > self.max_rounds {
            return Err(Error::Config(format!(
                "min_rounds ({}) exceeds max_rounds ({})",
                self.min_rounds, self.max_rounds
            )));
        }
        if !(self.plateau_delta >= 0.0) {
            return Err(Error::Config("plateau_delta must be >= 0".into()));
        }
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "seed_fraction must lie in (0, 1], got {}",
                self.seed_fraction
            )));
        }
        Ok(())
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &ProbDist) -> f64 {
    -p.probs().iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>()
}

/// Ground-truth labels revealed on request.
#[derive(Debug, Clone, Default)]
pub struct OracleHandle {
    labels: HashMap<String, Label>,
}

impl OracleHandle {
    pub fn from_documents(docs: &[LabeledDocument]) -> Self {
        OracleHandle {
            labels: docs.iter().map(|d| (d.doc.id.clone(), d.label)).collect(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, label: Label) {
        self.labels.insert(id.into(), label);
    }

    pub fn reveal(&self, id: &str) -> Result<Label> {
        self.labels
            .get(id)
            .copied()
            .ok_or_else(|| Error::OracleMissing(id.to_string()))
    }
}

/// One completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub labeled_size: usize,
    /// Accuracy of the retrained model on the remaining pool; `None` once
    /// the pool is empty.
    pub pool_accuracy: Option<f64>,
    pub selected_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    PoolExhausted,
    Plateau,
}

#[derive(Debug, Clone)]
pub struct ALState {
    pub labeled: Vec<LabeledDocument>,
    /// Labels here are never shown to the learner.
    pub pool: Vec<LabeledDocument>,
    pub round: usize,
    pub history: Vec<RoundRecord>,
    /// Accuracy of the seed model on the initial pool.
    pub initial_pool_accuracy: Option<f64>,
    pub stop_reason: StopReason,
}

impl ALState {
    /// History as JSON lines, one record per round.
    pub fn write_history<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in &self.history {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n").map_err(|e| Error::io("<history output>", e))?;
        }
        Ok(())
    }

    pub fn history_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_history(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

fn cmp_ids(a: &str, b: &str) -> Ordering {
    a.cmp(b)
}

/// Picks ids from `pool` given precomputed scores. `rng` is only used by the
/// random strategy.
pub fn select_from_scores(
    pool: &[Document],
    scores: &[ProbDist],
    strategy: Strategy,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if pool.len() != scores.len() {
        return Err(Error::LengthMismatch(pool.len(), scores.len()));
    }
    let take = k.min(pool.len());
    let mut order: Vec<usize> = (0..pool.len()).collect();
    match strategy {
        Strategy::Entropy => {
            let h: Vec<f64> = scores.iter().map(entropy).collect();
            order.sort_by(|&a, &b| h[b].total_cmp(&h[a]).then_with(|| cmp_ids(&pool[a].id, &pool[b].id)));
        }
        Strategy::Margin => {
            let m: Vec<f64> = scores.iter().map(|p| (p.hope() - p.not_hope()).abs()).collect();
            order.sort_by(|&a, &b| m[a].total_cmp(&m[b]).then_with(|| cmp_ids(&pool[a].id, &pool[b].id)));
        }
        Strategy::Random => {
            let (chosen, _) = order.partial_shuffle(rng, take);
            return Ok(chosen.iter().map(|&i| pool[i].id.clone()).collect());
        }
    }
    Ok(order[..take].iter().map(|&i| pool[i].id.clone()).collect())
}

/// Scores `pool` and returns the ids to query next, most informative first.
pub fn select_batch<S: Scorer + ?Sized>(scorer: &mut S, pool: &[Document], cfg: &ALConfig) -> Result<Vec<String>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let scores = scorer.score_batch(pool)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    select_from_scores(pool, &scores, cfg.strategy, cfg.batch_k, &mut rng)
}

/// Per-class random sample of `seed_fraction` of the training set, returned
/// as sorted indices.
fn stratified_seed(docs: &[LabeledDocument], fraction: f64, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut chosen = Vec::new();
    for label in Label::ALL {
        let mut members: Vec<usize> = docs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == label)
            .map(|(i, _)| i)
            .collect();
        // tolerance keeps e.g. 30 * 0.1 from rounding down to 2
        let n = (members.len() as f64 * fraction + 1e-9).floor() as usize;
        if n == 0 {
            return Err(Error::SeedTooSmall { class: label.as_str() });
        }
        members.shuffle(rng);
        chosen.extend_from_slice(&members[..n]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

fn pool_accuracy(pool: &[LabeledDocument], scores: &[ProbDist], oracle: &OracleHandle) -> Result<Option<f64>> {
    if pool.is_empty() {
        return Ok(None);
    }
    let mut correct = 0usize;
    for (d, p) in pool.iter().zip(scores) {
        if oracle.reveal(&d.doc.id)? == p.predicted() {
            correct += 1;
        }
    }
    Ok(Some(correct as f64 / pool.len() as f64))
}

fn pool_documents(pool: &[LabeledDocument]) -> Vec<Document> {
    pool.iter().map(|d| d.doc.clone()).collect()
}

/// Runs the full loop. The learner is left fitted on the final labeled set.
pub fn run_loop<L: Learner + ?Sized>(
    train_set: &[LabeledDocument],
    learner: &mut L,
    oracle: &OracleHandle,
    cfg: &ALConfig,
) -> Result<ALState> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ids = HashSet::with_capacity(train_set.len());
    for (row, d) in train_set.iter().enumerate() {
        if !ids.insert(d.doc.id.as_str()) {
            return Err(Error::DuplicateId {
                row: row + 1,
                id: d.doc.id.clone(),
            });
        }
        oracle.reveal(&d.doc.id)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let seed = stratified_seed(train_set, cfg.seed_fraction, &mut rng)?;
    let mut in_seed = vec![false; train_set.len()];
    seed.iter().for_each(|&i| in_seed[i] = true);

    let mut labeled = Vec::with_capacity(train_set.len());
    let mut pool = Vec::with_capacity(train_set.len());
    for (d, &s) in train_set.iter().zip(&in_seed) {
        if s {
            labeled.push(d.clone());
        } else {
            pool.push(d.clone());
        }
    }

    learner.fit(&labeled)?;
    let mut pool_docs = pool_documents(&pool);
    let mut scores = if pool.is_empty() {
        Vec::new()
    } else {
        learner.score_batch(&pool_docs)?
    };
    let initial_pool_accuracy = pool_accuracy(&pool, &scores, oracle)?;
    let mut previous = initial_pool_accuracy;

    let mut state = ALState {
        labeled,
        pool,
        round: 0,
        history: Vec::new(),
        initial_pool_accuracy,
        stop_reason: StopReason::MaxRounds,
    };

    loop {
        if state.pool.is_empty() {
            state.stop_reason = StopReason::PoolExhausted;
            break;
        }
        if state.round >= cfg.max_rounds {
            state.stop_reason = StopReason::MaxRounds;
            break;
        }
        state.round += 1;

        let selected = select_from_scores(&pool_docs, &scores, cfg.strategy, cfg.batch_k, &mut rng)?;
        let chosen: HashSet<&str> = selected.iter().map(String::as_str).collect();
        let mut remaining = Vec::with_capacity(state.pool.len() - selected.len());
        let mut moved: HashMap<&str, LabeledDocument> = HashMap::with_capacity(selected.len());
        for d in std::mem::take(&mut state.pool) {
            if chosen.contains(d.doc.id.as_str()) {
                let label = oracle.reveal(&d.doc.id)?;
                let id = selected.iter().find(|s| **s == d.doc.id).expect("selected id").as_str();
                moved.insert(id, LabeledDocument { doc: d.doc, label });
            } else {
                remaining.push(d);
            }
        }
        // queried documents join the labeled set in query order
        for id in &selected {
            state.labeled.push(moved.remove(id.as_str()).expect("queried document"));
        }
        state.pool = remaining;

        learner.fit(&state.labeled)?;
        pool_docs = pool_documents(&state.pool);
        scores = if state.pool.is_empty() {
            Vec::new()
        } else {
            learner.score_batch(&pool_docs)?
        };
        let accuracy = pool_accuracy(&state.pool, &scores, oracle)?;
        state.history.push(RoundRecord {
            round: state.round,
            labeled_size: state.labeled.len(),
            pool_accuracy: accuracy,
            selected_ids: selected,
        });

        if state.round >= cfg.min_rounds {
            if let (Some(prev), Some(cur)) = (previous, accuracy) {
                if cur - prev < cfg.plateau_delta {
                    state.stop_reason = StopReason::Plateau;
                    break;
                }
            }
        }
        previous = accuracy;
    }
    Ok(state)
}
