use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledQuestion};
use crate::model::{ClassifierModel, Gradients, Hyper, Parameters};
use crate::tokenize::Vocabulary;
use crate::{ClassifierError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: Hyper,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of each class held out for evaluation.
    pub heldout_fraction: f64,
    /// Tokens seen fewer times than this in the training split map to `<unk>`.
    pub min_token_count: usize,
    /// Global gradient-norm clip applied per batch.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hyper: Hyper::default(),
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 32,
            heldout_fraction: 0.1,
            min_token_count: 2,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sample cross-entropy accumulated over the epoch's batches.
    pub train_loss: f64,
    /// `None` when the held-out split is empty.
    pub heldout_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_size: usize,
    pub heldout_size: usize,
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.heldout_accuracy)
    }

    /// Share of consecutive epoch pairs whose train loss did not increase.
    pub fn non_increasing_ratio(&self) -> f64 {
        let pairs = self.epochs.windows(2).count();
        if pairs == 0 {
            return 1.0;
        }
        let good = self
            .epochs
            .windows(2)
            .filter(|w| w[1].train_loss <= w[0].train_loss)
            .count();
        good as f64 / pairs as f64
    }
}

struct Adam {
    first: Parameters,
    second: Parameters,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &Parameters) -> Self {
        Adam {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut Parameters, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut());
        for (((p, g), m), v) in tensors {
            for k in 0..p.len() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Per-class shuffle, then the first `fraction` of each class is held out.
fn stratified_split(
    corpus: &[LabeledQuestion],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<LabeledQuestion>, Vec<LabeledQuestion>) {
    let mut train = Vec::new();
    let mut heldout = Vec::new();
    for label in [Label::Concept, Label::Code] {
        let mut members: Vec<&LabeledQuestion> =
            corpus.iter().filter(|q| q.label == label).collect();
        members.shuffle(rng);
        let n = members.len();
        let held = if n < 2 {
            0
        } else {
            ((n as f64 * fraction).round() as usize).clamp(usize::from(fraction > 0.0), n - 1)
        };
        heldout.extend(members[..held].iter().map(|q| (*q).clone()));
        train.extend(members[held..].iter().map(|q| (*q).clone()));
    }
    (train, heldout)
}

fn accuracy(model: &ClassifierModel, encoded: &[(Vec<u32>, Label)]) -> Result<Option<f64>> {
    if encoded.is_empty() {
        return Ok(None);
    }
    let mut correct = 0usize;
    for chunk in encoded.chunks(64) {
        let ids: Vec<&[u32]> = chunk.iter().map(|(ids, _)| ids.as_slice()).collect();
        let predictions = model.forward_batch(&ids)?;
        correct += predictions
            .iter()
            .zip(chunk)
            .filter(|(p, (_, label))| p.label() == *label)
            .count();
    }
    Ok(Some(correct as f64 / encoded.len() as f64))
}

/// Trains a fresh model on `corpus`.
///
/// The corpus is sorted canonically before the seeded split and shuffles, so
/// the trained parameters depend only on the multiset of questions and the
/// seed, not on the order they were supplied in.
pub fn train(
    corpus: &[LabeledQuestion],
    config: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport)> {
    let has = |l: Label| corpus.iter().any(|q| q.label == l);
    if !has(Label::Concept) || !has(Label::Code) {
        return Err(ClassifierError::DegenerateCorpus);
    }
    if config.hyper.num_layers == 0 || config.batch_size == 0 {
        return Err(ClassifierError::InvalidConfig(
            "num_layers and batch_size must be positive".into(),
        ));
    }
    let mut canonical = corpus.to_vec();
    canonical.sort();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_set, heldout_set) = stratified_split(&canonical, config.heldout_fraction, &mut rng);

    let vocab = Vocabulary::build(
        train_set.iter().map(|q| q.text.as_str()),
        config.min_token_count,
    );
    let mut model = ClassifierModel {
        params: Parameters::random(vocab.len(), &config.hyper, &mut rng),
        vocab,
        hyper: config.hyper,
    };

    let mut train_encoded: Vec<(Vec<u32>, Label)> = train_set
        .iter()
        .map(|q| (model.encode(&q.text), q.label))
        .collect();
    let heldout_encoded: Vec<(Vec<u32>, Label)> = heldout_set
        .iter()
        .map(|q| (model.encode(&q.text), q.label))
        .collect();

    let mut adam = Adam::new(&model.params);
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        train_encoded.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in train_encoded.chunks(config.batch_size) {
            let (loss, mut grads) = model.loss_and_grads_encoded(batch)?;
            loss_sum += loss;
            if let Some(max_norm) = config.clip_norm {
                let norm = grads.l2_norm();
                if norm > max_norm {
                    grads.scale(max_norm / norm);
                }
            }
            adam.update(&mut model.params, &grads, config.learning_rate);
        }
        epochs.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train_encoded.len() as f64,
            heldout_accuracy: accuracy(&model, &heldout_encoded)?,
        });
    }

    let report = TrainReport {
        train_size: train_encoded.len(),
        heldout_size: heldout_encoded.len(),
        epochs,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        TrainConfig {
            hyper: Hyper {
                embed_dim: 8,
                hidden_dim: 8,
                head_dim: 4,
                num_layers: 1,
                max_seq_len: 12,
            },
            epochs: 2,
            ..TrainConfig::default()
        }
    }

    fn tiny_corpus() -> Vec<LabeledQuestion> {
        let mut v = Vec::new();
        for topic in ["heap", "stack", "queue", "trie", "graph", "tree"] {
            v.push(LabeledQuestion::new(
                format!("what is a {topic}"),
                Label::Concept,
            ));
            v.push(LabeledQuestion::new(
                format!("write code to build a {topic}"),
                Label::Code,
            ));
        }
        v
    }

    #[test]
    fn single_class_corpus_is_degenerate() {
        let corpus: Vec<_> = tiny_corpus()
            .into_iter()
            .filter(|q| q.label == Label::Concept)
            .collect();
        assert!(matches!(
            train(&corpus, &small_config()),
            Err(ClassifierError::DegenerateCorpus)
        ));
        assert!(matches!(
            train(&[], &small_config()),
            Err(ClassifierError::DegenerateCorpus)
        ));
    }

    #[test]
    fn split_is_stratified() {
        let corpus = tiny_corpus();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train_set, heldout) = stratified_split(&corpus, 0.2, &mut rng);
        assert_eq!(train_set.len() + heldout.len(), corpus.len());
        for label in [Label::Concept, Label::Code] {
            assert_eq!(heldout.iter().filter(|q| q.label == label).count(), 1);
        }
    }

    #[test]
    fn input_order_does_not_change_the_result() {
        let corpus = tiny_corpus();
        let mut reversed = corpus.clone();
        reversed.reverse();
        let (a, ra) = train(&corpus, &small_config()).unwrap();
        let (b, rb) = train(&reversed, &small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(a.params.is_finite());
    }
}
