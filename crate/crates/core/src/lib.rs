//! Hope-speech classification toolkit: CSV corpus ingestion, unigram TF-IDF
//! features, L2-regularized logistic regression, pool-based active learning
//! with entropy sampling, evaluation metrics, and a line protocol that lets
//! external processes act as scorers.

pub mod active_learning;
pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod scorer_protocol;

pub use active_learning::{entropy, run_loop, select_batch, ALConfig, ALState, OracleHandle, Strategy};
pub use classifier::{Learner, LinearModel, ProbDist, Scorer, TrainConfig};
pub use corpus::{Corpus, CsvSchema, Document, Label, LabeledDocument, Language, Split};
pub use error::{Error, ProtocolError, Result};
pub use evaluation::{confusion, metrics, stratified_kfold, ConfusionMatrix, MetricsReport};
pub use features::{SparseVector, Vectorizer};
