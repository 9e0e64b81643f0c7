//! Binary question router built on a multi-layer LSTM.
//!
//! Questions are tokenized, embedded, run through stacked LSTM layers and a
//! two-layer affine head producing `(p_concept, p_code)`. Everything, including
//! backpropagation through time and the optimizer, is implemented here on top
//! of `ndarray`.

mod corpus;
mod error;
mod io;
mod model;
mod tokenize;
mod train;

pub use corpus::{load_corpus, parse_corpus, write_corpus, Label, LabeledQuestion};
pub use error::ClassifierError;
pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{Affine, ClassifierModel, Gradients, Hyper, LstmLayer, Parameters, Prediction};
pub use tokenize::{tokenize, tokens, Vocabulary, PAD_ID, UNK_ID};
pub use train::{train, EpochMetrics, TrainConfig, TrainReport};

/// Bundled two-class question corpus, one JSON record per line.
pub const BUNDLED_CORPUS: &str = include_str!("../data/questions.jsonl");

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;
