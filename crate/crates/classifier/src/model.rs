use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledQuestion};
use crate::tokenize::{tokenize, Vocabulary, PAD_ID};
use crate::{ClassifierError, Result};

/// Architecture sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyper {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub head_dim: usize,
    pub num_layers: usize,
    pub max_seq_len: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            embed_dim: 64,
            hidden_dim: 128,
            head_dim: 64,
            num_layers: 2,
            max_seq_len: 64,
        }
    }
}

/// `y = W x + b`, with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }
}

/// One LSTM layer. Gate blocks are stacked in the order input, forget,
/// candidate, output; each block is `hidden_dim` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LstmLayer {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmLayer {
            w_input: Array2::zeros((4 * hidden_dim, input_dim)),
            w_hidden: Array2::zeros((4 * hidden_dim, hidden_dim)),
            bias: Array1::zeros(4 * hidden_dim),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.ncols()
    }
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub embeddings: Array2<f64>,
    pub layers: Vec<LstmLayer>,
    pub head_hidden: Affine,
    pub head_out: Affine,
}

pub type Gradients = Parameters;

impl Parameters {
    pub fn zeros(vocab_len: usize, hyper: &Hyper) -> Self {
        let layers = (0..hyper.num_layers)
            .map(|l| {
                let input_dim = if l == 0 {
                    hyper.embed_dim
                } else {
                    hyper.hidden_dim
                };
                LstmLayer::zeros(input_dim, hyper.hidden_dim)
            })
            .collect();
        Parameters {
            embeddings: Array2::zeros((vocab_len, hyper.embed_dim)),
            layers,
            head_hidden: Affine::zeros(hyper.head_dim, hyper.hidden_dim),
            head_out: Affine::zeros(2, hyper.head_dim),
        }
    }

    /// Embeddings ~ N(0, 1); LSTM weights ~ U(±1/√hidden); affine layers
    /// ~ U(±1/√fan_in).
    pub fn random<R: Rng>(vocab_len: usize, hyper: &Hyper, rng: &mut R) -> Self {
        let mut params = Self::zeros(vocab_len, hyper);
        params
            .embeddings
            .mapv_inplace(|_| StandardNormal.sample(rng));
        let lstm_bound = 1.0 / (hyper.hidden_dim as f64).sqrt();
        for layer in &mut params.layers {
            fill_uniform(layer.w_input.as_slice_mut().unwrap(), lstm_bound, rng);
            fill_uniform(layer.w_hidden.as_slice_mut().unwrap(), lstm_bound, rng);
            fill_uniform(layer.bias.as_slice_mut().unwrap(), lstm_bound, rng);
        }
        for affine in [&mut params.head_hidden, &mut params.head_out] {
            let bound = 1.0 / (affine.weight.ncols() as f64).sqrt();
            fill_uniform(affine.weight.as_slice_mut().unwrap(), bound, rng);
            fill_uniform(affine.bias.as_slice_mut().unwrap(), bound, rng);
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        Parameters {
            embeddings: Array2::zeros(self.embeddings.raw_dim()),
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    w_input: Array2::zeros(l.w_input.raw_dim()),
                    w_hidden: Array2::zeros(l.w_hidden.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            head_hidden: Affine::zeros(
                self.head_hidden.weight.nrows(),
                self.head_hidden.weight.ncols(),
            ),
            head_out: Affine::zeros(self.head_out.weight.nrows(), self.head_out.weight.ncols()),
        }
    }

    /// All tensors flattened, in a fixed order shared with the model file
    /// format and the optimizer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embeddings.as_slice().expect("standard layout")];
        for layer in &self.layers {
            out.push(layer.w_input.as_slice().expect("standard layout"));
            out.push(layer.w_hidden.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        for affine in [&self.head_hidden, &self.head_out] {
            out.push(affine.weight.as_slice().expect("standard layout"));
            out.push(affine.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> =
            vec![self.embeddings.as_slice_mut().expect("standard layout")];
        for layer in &mut self.layers {
            out.push(layer.w_input.as_slice_mut().expect("standard layout"));
            out.push(layer.w_hidden.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        for affine in [&mut self.head_hidden, &mut self.head_out] {
            out.push(affine.weight.as_slice_mut().expect("standard layout"));
            out.push(affine.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

fn fill_uniform<R: Rng>(values: &mut [f64], bound: f64, rng: &mut R) {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for v in values {
        *v = dist.sample(rng);
    }
}

/// Softmax output over the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_concept: f64,
    pub p_code: f64,
}

impl Prediction {
    /// Ties go to [`Label::Concept`].
    pub fn label(&self) -> Label {
        if self.p_concept >= self.p_code {
            Label::Concept
        } else {
            Label::Code
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub vocab: Vocabulary,
    pub hyper: Hyper,
    pub params: Parameters,
}

/// Activations of one layer over a padded batch, kept for backpropagation.
/// Vectors are indexed by time step; matrices have one row per sequence.
struct LayerTrace {
    inputs: Vec<Array2<f64>>,
    /// `T + 1` entries; entry 0 is the zero initial state.
    hidden: Vec<Array2<f64>>,
    cell: Vec<Array2<f64>>,
    /// Activated gates `i, f, g, o`, each `B × 4H`.
    gates: Vec<Array2<f64>>,
    cell_tanh: Vec<Array2<f64>>,
}

/// A batch forward pass. Sequences shorter than the longest one are masked:
/// past its last token a sequence's state is carried forward unchanged, so the
/// final state is the state after the sequence's own last real token.
struct Trace {
    token_ids: Vec<Vec<usize>>,
    layers: Vec<LayerTrace>,
    /// `B × H`
    top: Array2<f64>,
    /// `B × M`
    head_act: Array2<f64>,
    /// `B × 2`
    logits: Array2<f64>,
}

impl Trace {
    fn active(&self, b: usize, t: usize) -> bool {
        t < self.token_ids[b].len()
    }

    fn probabilities(&self, b: usize) -> Prediction {
        let (a, c) = (self.logits[[b, 0]], self.logits[[b, 1]]);
        let m = a.max(c);
        let (ea, ec) = ((a - m).exp(), (c - m).exp());
        let z = ea + ec;
        Prediction {
            p_concept: ea / z,
            p_code: ec / z,
        }
    }

    /// `-ln p[label]` for row `b`, computed in log space.
    fn loss(&self, b: usize, label: Label) -> f64 {
        let (a, c) = (self.logits[[b, 0]], self.logits[[b, 1]]);
        let m = a.max(c);
        let lse = m + ((a - m).exp() + (c - m).exp()).ln();
        lse - self.logits[[b, label.index()]]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ClassifierModel {
    pub fn new_random(vocab: Vocabulary, hyper: Hyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Parameters::random(vocab.len(), &hyper, &mut rng);
        ClassifierModel {
            vocab,
            hyper,
            params,
        }
    }

    /// Token ids for `text`, padded to `max_seq_len`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text, &self.vocab, self.hyper.max_seq_len)
    }

    /// Runs the network over `ids` (exactly `max_seq_len` long). Only the
    /// prefix before the first padding id is consumed; the head reads the
    /// hidden state after that last real token.
    pub fn forward(&self, ids: &[u32]) -> Result<Prediction> {
        Ok(self.trace(&[ids])?.probabilities(0))
    }

    pub fn forward_batch(&self, batch: &[&[u32]]) -> Result<Vec<Prediction>> {
        let trace = self.trace(batch)?;
        Ok((0..batch.len()).map(|b| trace.probabilities(b)).collect())
    }

    pub fn predict(&self, text: &str) -> Result<Prediction> {
        if text.trim().is_empty() {
            return Err(ClassifierError::EmptyText);
        }
        self.forward(&self.encode(text))
    }

    pub fn classify(&self, text: &str) -> Result<Label> {
        Ok(self.predict(text)?.label())
    }

    /// Summed cross-entropy over `batch` and its gradient.
    pub fn loss_and_grads(&self, batch: &[LabeledQuestion]) -> Result<(f64, Gradients)> {
        let encoded: Vec<(Vec<u32>, Label)> = batch
            .iter()
            .map(|q| (self.encode(&q.text), q.label))
            .collect();
        self.loss_and_grads_encoded(&encoded)
    }

    pub fn loss_and_grads_encoded(&self, batch: &[(Vec<u32>, Label)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        let ids: Vec<&[u32]> = batch.iter().map(|(ids, _)| ids.as_slice()).collect();
        let labels: Vec<Label> = batch.iter().map(|(_, l)| *l).collect();
        let trace = self.trace(&ids)?;
        let total = labels
            .iter()
            .enumerate()
            .map(|(b, &l)| trace.loss(b, l))
            .sum();
        let mut grads = self.params.zeros_like();
        self.backward(&trace, &labels, &mut grads);
        Ok((total, grads))
    }

    /// Summed cross-entropy without gradients.
    pub fn loss(&self, batch: &[LabeledQuestion]) -> Result<f64> {
        if batch.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        let encoded: Vec<Vec<u32>> = batch.iter().map(|q| self.encode(&q.text)).collect();
        let ids: Vec<&[u32]> = encoded.iter().map(Vec::as_slice).collect();
        let trace = self.trace(&ids)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(b, q)| trace.loss(b, q.label))
            .sum())
    }

    fn real_tokens(&self, ids: &[u32]) -> Result<Vec<usize>> {
        if ids.len() != self.hyper.max_seq_len {
            return Err(ClassifierError::ShapeMismatch {
                expected: self.hyper.max_seq_len,
                actual: ids.len(),
            });
        }
        let vocab_len = self.params.embeddings.nrows();
        ids.iter()
            .take_while(|&&id| id != PAD_ID)
            .map(|&id| {
                if (id as usize) < vocab_len {
                    Ok(id as usize)
                } else {
                    Err(ClassifierError::ShapeMismatch {
                        expected: vocab_len,
                        actual: id as usize + 1,
                    })
                }
            })
            .collect()
    }

    fn trace(&self, batch: &[&[u32]]) -> Result<Trace> {
        let hyper = &self.hyper;
        let token_ids: Vec<Vec<usize>> = batch
            .iter()
            .map(|ids| self.real_tokens(ids))
            .collect::<Result<_>>()?;
        let rows = token_ids.len();
        let steps = token_ids.iter().map(Vec::len).max().unwrap_or(0);

        let mut inputs: Vec<Array2<f64>> = (0..steps)
            .map(|t| {
                let mut x = Array2::zeros((rows, hyper.embed_dim));
                for (b, seq) in token_ids.iter().enumerate() {
                    if let Some(&id) = seq.get(t) {
                        x.row_mut(b).assign(&self.params.embeddings.row(id));
                    }
                }
                x
            })
            .collect();

        let mut layers = Vec::with_capacity(self.params.layers.len());
        for layer in &self.params.layers {
            let h_dim = layer.hidden_dim();
            let mut hidden = vec![Array2::<f64>::zeros((rows, h_dim))];
            let mut cell = vec![Array2::<f64>::zeros((rows, h_dim))];
            let mut gates = Vec::with_capacity(steps);
            let mut cell_tanh = Vec::with_capacity(steps);
            for (t, x) in inputs.iter().enumerate() {
                let z =
                    x.dot(&layer.w_input.t()) + hidden[t].dot(&layer.w_hidden.t()) + &layer.bias;
                let mut g = Array2::<f64>::zeros((rows, 4 * h_dim));
                let mut c_next = cell[t].clone();
                let mut h_next = hidden[t].clone();
                let mut tc_row = Array2::<f64>::zeros((rows, h_dim));
                for b in 0..rows {
                    if t >= token_ids[b].len() {
                        continue;
                    }
                    for k in 0..h_dim {
                        let i = sigmoid(z[[b, k]]);
                        let f = sigmoid(z[[b, h_dim + k]]);
                        let cand = z[[b, 2 * h_dim + k]].tanh();
                        let o = sigmoid(z[[b, 3 * h_dim + k]]);
                        g[[b, k]] = i;
                        g[[b, h_dim + k]] = f;
                        g[[b, 2 * h_dim + k]] = cand;
                        g[[b, 3 * h_dim + k]] = o;
                        let c = f * cell[t][[b, k]] + i * cand;
                        let tc = c.tanh();
                        c_next[[b, k]] = c;
                        tc_row[[b, k]] = tc;
                        h_next[[b, k]] = o * tc;
                    }
                }
                gates.push(g);
                cell_tanh.push(tc_row);
                cell.push(c_next);
                hidden.push(h_next);
            }
            let next_inputs = hidden[1..].to_vec();
            layers.push(LayerTrace {
                inputs: std::mem::replace(&mut inputs, next_inputs),
                hidden,
                cell,
                gates,
                cell_tanh,
            });
        }

        let top = match layers.last() {
            Some(last) => last.hidden[steps].clone(),
            None => Array2::zeros((rows, hyper.hidden_dim)),
        };
        let head = &self.params.head_hidden;
        let head_act = (top.dot(&head.weight.t()) + &head.bias).mapv(f64::tanh);
        let out = &self.params.head_out;
        let logits = head_act.dot(&out.weight.t()) + &out.bias;
        Ok(Trace {
            token_ids,
            layers,
            top,
            head_act,
            logits,
        })
    }

    fn backward(&self, trace: &Trace, labels: &[Label], grads: &mut Gradients) {
        let rows = labels.len();
        let mut d_logits = Array2::<f64>::zeros((rows, 2));
        for (b, label) in labels.iter().enumerate() {
            let p = trace.probabilities(b);
            d_logits[[b, 0]] = p.p_concept;
            d_logits[[b, 1]] = p.p_code;
            d_logits[[b, label.index()]] -= 1.0;
        }

        let head_out = &self.params.head_out;
        grads.head_out.weight += &d_logits.t().dot(&trace.head_act);
        grads.head_out.bias += &d_logits.sum_axis(Axis(0));
        let d_pre = d_logits.dot(&head_out.weight) * trace.head_act.mapv(|a| 1.0 - a * a);

        let head_hidden = &self.params.head_hidden;
        grads.head_hidden.weight += &d_pre.t().dot(&trace.top);
        grads.head_hidden.bias += &d_pre.sum_axis(Axis(0));
        let d_top = d_pre.dot(&head_hidden.weight);

        let steps = trace.layers.first().map_or(0, |l| l.gates.len());
        // Gradient arriving at each layer's outputs from the layer above.
        let mut d_out: Vec<Array2<f64>> = Vec::new();

        for (l, layer) in self.params.layers.iter().enumerate().rev() {
            let lt = &trace.layers[l];
            let h_dim = layer.hidden_dim();
            let is_top = l + 1 == self.params.layers.len();
            // The head reads the state carried past the end of each sequence,
            // so its gradient enters the recurrence at the last step and is
            // passed through masked steps unchanged.
            let mut dh_next = if is_top {
                d_top.clone()
            } else {
                Array2::zeros((rows, h_dim))
            };
            let mut dc_next = Array2::<f64>::zeros((rows, h_dim));
            let mut d_in: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); steps];
            for t in (0..steps).rev() {
                let mut dh = dh_next;
                if !is_top {
                    dh += &d_out[t];
                }
                let gates = &lt.gates[t];
                let mut dz = Array2::<f64>::zeros((rows, 4 * h_dim));
                for b in 0..rows {
                    if !trace.active(b, t) {
                        continue;
                    }
                    for k in 0..h_dim {
                        let i = gates[[b, k]];
                        let f = gates[[b, h_dim + k]];
                        let g = gates[[b, 2 * h_dim + k]];
                        let o = gates[[b, 3 * h_dim + k]];
                        let tc = lt.cell_tanh[t][[b, k]];
                        let dhk = dh[[b, k]];
                        let dc = dc_next[[b, k]] + dhk * o * (1.0 - tc * tc);
                        dz[[b, k]] = dc * g * i * (1.0 - i);
                        dz[[b, h_dim + k]] = dc * lt.cell[t][[b, k]] * f * (1.0 - f);
                        dz[[b, 2 * h_dim + k]] = dc * i * (1.0 - g * g);
                        dz[[b, 3 * h_dim + k]] = dhk * tc * o * (1.0 - o);
                        dc_next[[b, k]] = dc * f;
                    }
                }
                let mut dh_prev = dz.dot(&layer.w_hidden);
                for b in 0..rows {
                    if !trace.active(b, t) {
                        dh_prev.row_mut(b).assign(&dh.row(b));
                    }
                }
                dh_next = dh_prev;

                let g_layer = &mut grads.layers[l];
                g_layer.w_input += &dz.t().dot(&lt.inputs[t]);
                g_layer.w_hidden += &dz.t().dot(&lt.hidden[t]);
                g_layer.bias += &dz.sum_axis(Axis(0));
                d_in[t] = dz.dot(&layer.w_input);
            }
            if l > 0 {
                d_out = d_in;
            } else {
                for (t, dx) in d_in.iter().enumerate() {
                    for (b, seq) in trace.token_ids.iter().enumerate() {
                        if let Some(&id) = seq.get(t) {
                            let mut row = grads.embeddings.row_mut(id);
                            row += &dx.row(b);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_hyper() -> Hyper {
        Hyper {
            embed_dim: 4,
            hidden_dim: 5,
            head_dim: 3,
            num_layers: 2,
            max_seq_len: 6,
        }
    }

    fn tiny_model(seed: u64) -> ClassifierModel {
        let vocab = Vocabulary::from_tokens(["what", "is", "a", "heap", "implement", "?"]);
        ClassifierModel::new_random(vocab, tiny_hyper(), seed)
    }

    #[test]
    fn zero_head_gives_even_odds() {
        let mut model = tiny_model(3);
        model.params.head_out = Affine::zeros(2, 3);
        let p = model.predict("what is a heap ?").unwrap();
        assert_eq!(p.p_concept, 0.5);
        assert_eq!(p.p_code, 0.5);
        assert_eq!(p.label(), Label::Concept);
    }

    #[test]
    fn even_odds_loss_is_ln2() {
        let mut model = tiny_model(3);
        model.params.head_out = Affine::zeros(2, 3);
        for label in [Label::Concept, Label::Code] {
            let loss = model
                .loss(&[LabeledQuestion::new("what is a heap ?", label)])
                .unwrap();
            assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let model = tiny_model(1);
        assert!(matches!(
            model.forward(&[2, 3]),
            Err(ClassifierError::ShapeMismatch {
                expected: 6,
                actual: 2
            })
        ));
    }

    #[test]
    fn forward_is_deterministic_for_a_seed() {
        let a = tiny_model(9).predict("implement a heap").unwrap();
        let b = tiny_model(9).predict("implement a heap").unwrap();
        assert_eq!(a, b);
        assert!((a.p_concept + a.p_code - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_and_text_are_rejected() {
        let model = tiny_model(1);
        assert!(matches!(
            model.loss_and_grads(&[]),
            Err(ClassifierError::EmptyBatch)
        ));
        assert!(matches!(
            model.predict("   "),
            Err(ClassifierError::EmptyText)
        ));
    }

    #[test]
    fn duplicated_sample_doubles_loss_and_grads() {
        let model = tiny_model(5);
        let q = LabeledQuestion::new("implement a heap ?", Label::Code);
        let (one, g1) = model.loss_and_grads(std::slice::from_ref(&q)).unwrap();
        let (two, g2) = model.loss_and_grads(&[q.clone(), q]).unwrap();
        assert_eq!(two, 2.0 * one);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn all_padding_input_is_valid() {
        let model = tiny_model(2);
        let p = model.forward(&[PAD_ID; 6]).unwrap();
        assert!((p.p_concept + p.p_code - 1.0).abs() < 1e-12);
    }
}
