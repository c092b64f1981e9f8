//! Encoder, prediction and joint networks.
//!
//! The encoder is a stack of LSTM layers over acoustic frames. The prediction
//! network embeds the previous non-blank label and runs its own LSTM stack.
//! The joint network sums a projection of each side, applies `tanh`, then a
//! linear output layer and a log-softmax over the `|K| + 1` symbols, blank
//! first.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{log_softmax_into, LogProb, LstmLayer, LstmState, Matrix};
use crate::{Error, Result};

pub type Label = u32;

/// The blank symbol. Its embedding row doubles as the start-of-sequence input.
pub const BLANK: Label = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub enc_layers: usize,
    pub enc_hidden: usize,
    pub pred_layers: usize,
    pub pred_hidden: usize,
    pub joint_dim: usize,
    /// Non-blank labels; the vocabulary is `num_labels + 1` with blank at 0.
    pub num_labels: usize,
}

impl ModelConfig {
    /// Phone-recognition sized network: 3x256 encoder, 1x256 predictor.
    pub fn timit_like() -> Self {
        ModelConfig {
            input_dim: 40,
            enc_layers: 3,
            enc_hidden: 256,
            pred_layers: 1,
            pred_hidden: 256,
            joint_dim: 256,
            num_labels: 61,
        }
    }

    /// Word-piece sized network: 5x512 encoder, 2x512 predictor, 256 labels.
    pub fn librispeech_like() -> Self {
        ModelConfig {
            input_dim: 80,
            enc_layers: 5,
            enc_hidden: 512,
            pred_layers: 2,
            pred_hidden: 512,
            joint_dim: 512,
            num_labels: 256,
        }
    }

    /// Single-layer network for tests and oracle comparisons.
    pub fn tiny(input_dim: usize, hidden: usize, num_labels: usize) -> Self {
        ModelConfig {
            input_dim,
            enc_layers: 1,
            enc_hidden: hidden,
            pred_layers: 1,
            pred_hidden: hidden,
            joint_dim: hidden,
            num_labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            (self.input_dim, "input_dim must be >= 1"),
            (self.enc_layers, "enc_layers must be >= 1"),
            (self.enc_hidden, "enc_hidden must be >= 1"),
            (self.pred_layers, "pred_layers must be >= 1"),
            (self.pred_hidden, "pred_hidden must be >= 1"),
            (self.joint_dim, "joint_dim must be >= 1"),
            (self.num_labels, "num_labels must be >= 1"),
        ];
        for (v, why) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(why));
            }
        }
        if self.pred_hidden != self.enc_hidden {
            return Err(Error::InvalidConfig("pred_hidden must equal enc_hidden"));
        }
        if self.num_labels >= u32::MAX as usize {
            return Err(Error::InvalidConfig("num_labels too large"));
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.num_labels + 1
    }

    /// Parameter blocks in canonical order: embedding, encoder layers bottom
    /// up (input weights, recurrent weights, bias), predictor layers, then
    /// `W_e`, `W_p`, `b_z`, `W_z`, `b_s`.
    pub fn param_layout(&self) -> Vec<ParamBlock> {
        let d = self.enc_hidden;
        let mut out = vec![ParamBlock::new(String::from("pred.embedding"), self.vocab_size(), d)];
        for (prefix, layers, first_in) in [
            ("enc", self.enc_layers, self.input_dim),
            ("pred", self.pred_layers, d),
        ] {
            for l in 0..layers {
                let input = if l == 0 { first_in } else { d };
                out.push(ParamBlock::new(format!("{prefix}.{l}.w_ih"), 4 * d, input));
                out.push(ParamBlock::new(format!("{prefix}.{l}.w_hh"), 4 * d, d));
                out.push(ParamBlock::new(format!("{prefix}.{l}.bias"), 1, 4 * d));
            }
        }
        out.push(ParamBlock::new(String::from("joint.w_enc"), self.joint_dim, d));
        out.push(ParamBlock::new(String::from("joint.w_pred"), self.joint_dim, d));
        out.push(ParamBlock::new(String::from("joint.bias"), 1, self.joint_dim));
        out.push(ParamBlock::new(String::from("out.weight"), self.vocab_size(), self.joint_dim));
        out.push(ParamBlock::new(String::from("out.bias"), 1, self.vocab_size()));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    fn new(name: String, rows: usize, cols: usize) -> Self {
        ParamBlock { name, rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All network parameters. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    embedding: Matrix,
    enc: Vec<LstmLayer>,
    pred: Vec<LstmLayer>,
    w_enc: Matrix,
    w_pred: Matrix,
    b_joint: Vec<f64>,
    w_out: Matrix,
    b_out: Vec<f64>,
}

impl ModelWeights {
    /// Assembles weights from flat blocks laid out as
    /// [`ModelConfig::param_layout`].
    pub fn from_blocks(config: ModelConfig, blocks: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if blocks.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter block count",
                expected: layout.len(),
                found: blocks.len(),
            });
        }
        let mut mats = Vec::with_capacity(blocks.len());
        for (spec, data) in layout.iter().zip(blocks) {
            mats.push(Matrix::from_vec(spec.rows, spec.cols, data)?);
        }
        let mut it = mats.into_iter();
        let mut next = || it.next().expect("layout length checked");
        let embedding = next();
        let mut stack = |n: usize| -> Result<Vec<LstmLayer>> {
            (0..n)
                .map(|_| {
                    let w_ih = next();
                    let w_hh = next();
                    let bias = next().into_data();
                    LstmLayer::new(w_ih, w_hh, bias)
                })
                .collect()
        };
        let enc = stack(config.enc_layers)?;
        let pred = stack(config.pred_layers)?;
        let w_enc = next();
        let w_pred = next();
        let b_joint = next().into_data();
        let w_out = next();
        let b_out = next().into_data();
        Ok(ModelWeights {
            config,
            embedding,
            enc,
            pred,
            w_enc,
            w_pred,
            b_joint,
            w_out,
            b_out,
        })
    }

    /// Flat parameter blocks in [`ModelConfig::param_layout`] order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.data()];
        for layer in self.enc.iter().chain(&self.pred) {
            out.push(layer.w_ih().data());
            out.push(layer.w_hh().data());
            out.push(layer.bias());
        }
        out.push(self.w_enc.data());
        out.push(self.w_pred.data());
        out.push(&self.b_joint);
        out.push(self.w_out.data());
        out.push(&self.b_out);
        out
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let blocks = config.param_layout().iter().map(|b| vec![0.0; b.len()]).collect();
        ModelWeights::from_blocks(config, blocks)
    }

    /// All-zero network whose output layer bias is `logits`: the posterior
    /// is `softmax(logits)` regardless of input or label history.
    pub fn bias_only(config: ModelConfig, logits: &[f64]) -> Result<Self> {
        let mut w = ModelWeights::zeros(config)?;
        if logits.len() != config.vocab_size() {
            return Err(Error::DimensionMismatch {
                what: "output bias",
                expected: config.vocab_size(),
                found: logits.len(),
            });
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("output bias"));
        }
        w.b_out = logits.to_vec();
        Ok(w)
    }

    /// Rescales the output layer by `gain` and adds `blank_bias` to the blank
    /// logit. Untrained uniform weights give nearly flat posteriors; this
    /// turns them into the peaked, blank-dominant posteriors of a trained
    /// transducer without touching the rest of the network.
    pub fn with_output_calibration(&self, gain: f64, blank_bias: f64) -> Result<Self> {
        if !gain.is_finite() || !blank_bias.is_finite() {
            return Err(Error::NonFinite("output calibration"));
        }
        let mut w = self.clone();
        w.w_out = self.w_out.map(|v| v * gain);
        for b in &mut w.b_out {
            *b *= gain;
        }
        w.b_out[BLANK as usize] += blank_bias;
        Ok(w)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn embedding(&self) -> &Matrix {
        &self.embedding
    }

    pub fn encoder_layers(&self) -> &[LstmLayer] {
        &self.enc
    }

    pub fn predictor_layers(&self) -> &[LstmLayer] {
        &self.pred
    }

    pub fn joint_enc(&self) -> &Matrix {
        &self.w_enc
    }

    pub fn joint_pred(&self) -> &Matrix {
        &self.w_pred
    }

    pub fn joint_bias(&self) -> &[f64] {
        &self.b_joint
    }

    pub fn output_weight(&self) -> &Matrix {
        &self.w_out
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.b_out
    }

    fn check_label(&self, label: Label) -> Result<()> {
        if label as usize > self.config.num_labels {
            return Err(Error::LabelOutOfRange {
                label,
                vocab: self.config.vocab_size(),
            });
        }
        Ok(())
    }

    fn check_hidden(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.config.enc_hidden {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.config.enc_hidden,
                found: len,
            });
        }
        Ok(())
    }
}

/// Deterministic synthetic weights, uniform in `[-0.5/sqrt(D), 0.5/sqrt(D)]`.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<ModelWeights> {
    config.validate()?;
    let bound = 0.5 / libm::sqrt(config.enc_hidden as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = config
        .param_layout()
        .iter()
        .map(|b| (0..b.len()).map(|_| rng.random_range(-bound..=bound)).collect())
        .collect();
    ModelWeights::from_blocks(config, blocks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncState {
    pub layers: Vec<LstmState>,
}

impl EncState {
    pub fn zeros(config: &ModelConfig) -> Self {
        EncState {
            layers: vec![LstmState::zeros(config.enc_hidden); config.enc_layers],
        }
    }
}

/// Prediction-network state after consuming a label history.
///
/// `proj` caches `W_p * last_h`, the predictor's contribution to the joint
/// network, so scoring a state against many frames costs one output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PredState {
    pub layers: Vec<LstmState>,
    proj: Vec<f64>,
}

impl PredState {
    pub fn zeros(config: &ModelConfig) -> Self {
        PredState {
            layers: vec![LstmState::zeros(config.pred_hidden); config.pred_layers],
            proj: vec![0.0; config.joint_dim],
        }
    }

    /// The exposed hidden representation: the top layer's output.
    pub fn last_h(&self) -> &[f64] {
        &self.layers.last().expect("at least one layer").h
    }

    pub fn joint_projection(&self) -> &[f64] {
        &self.proj
    }
}

pub fn encoder_step(w: &ModelWeights, x: &[f64], state: &EncState) -> Result<(Vec<f64>, EncState)> {
    if x.len() != w.config.input_dim {
        return Err(Error::DimensionMismatch {
            what: "acoustic frame",
            expected: w.config.input_dim,
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("acoustic frame"));
    }
    if state.layers.len() != w.enc.len() {
        return Err(Error::DimensionMismatch {
            what: "encoder state layers",
            expected: w.enc.len(),
            found: state.layers.len(),
        });
    }
    let mut layers = Vec::with_capacity(w.enc.len());
    let mut input = x;
    for (layer, prev) in w.enc.iter().zip(&state.layers) {
        layers.push(layer.step(input, prev)?);
        input = &layers.last().expect("just pushed").h;
    }
    let h = layers.last().expect("at least one layer").h.clone();
    Ok((h, EncState { layers }))
}

/// Encoder outputs for a whole utterance together with their joint-network
/// projections `W_e * h_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    hidden: Vec<Vec<f64>>,
    proj: Vec<Vec<f64>>,
}

impl EncoderOutput {
    pub fn frames(&self) -> usize {
        self.hidden.len()
    }

    pub fn hidden(&self, t: usize) -> &[f64] {
        &self.hidden[t]
    }

    pub fn projection(&self, t: usize) -> &[f64] {
        &self.proj[t]
    }
}

fn check_features(w: &ModelWeights, features: &Matrix) -> Result<()> {
    if features.rows() == 0 {
        return Err(Error::Empty("feature frames"));
    }
    if features.cols() != w.config.input_dim {
        return Err(Error::DimensionMismatch {
            what: "feature dimension",
            expected: w.config.input_dim,
            found: features.cols(),
        });
    }
    Ok(())
}

/// Runs the encoder over a `T x F` feature matrix.
pub fn encode(w: &ModelWeights, features: &Matrix) -> Result<EncoderOutput> {
    check_features(w, features)?;
    let mut state = EncState::zeros(&w.config);
    let mut hidden = Vec::with_capacity(features.rows());
    for t in 0..features.rows() {
        let (h, next) = encoder_step(w, features.row(t), &state)?;
        hidden.push(h);
        state = next;
    }
    let refs: Vec<&[f64]> = hidden.iter().map(|h| h.as_slice()).collect();
    let proj = w.w_enc.matvec_batch(&refs)?;
    Ok(EncoderOutput { hidden, proj })
}

/// Encodes several utterances in lockstep, batching each frame index across
/// the utterances that are still running. Results equal [`encode`] per
/// utterance bit for bit.
pub fn encode_batch(w: &ModelWeights, utterances: &[&Matrix]) -> Result<Vec<EncoderOutput>> {
    for f in utterances {
        check_features(w, f)?;
        if f.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("acoustic frame"));
        }
    }
    let n = utterances.len();
    let longest = utterances.iter().map(|f| f.rows()).max().unwrap_or(0);
    let mut states: Vec<EncState> = (0..n).map(|_| EncState::zeros(&w.config)).collect();
    let mut hidden: Vec<Vec<Vec<f64>>> = utterances.iter().map(|f| Vec::with_capacity(f.rows())).collect();
    for t in 0..longest {
        let live: Vec<usize> = (0..n).filter(|&i| utterances[i].rows() > t).collect();
        let mut inputs: Vec<Vec<f64>> = live.iter().map(|&i| utterances[i].row(t).to_vec()).collect();
        for (l, layer) in w.enc.iter().enumerate() {
            let xs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
            let prev: Vec<&LstmState> = live.iter().map(|&i| &states[i].layers[l]).collect();
            let next = layer.step_batch(&xs, &prev)?;
            inputs = next.iter().map(|s| s.h.clone()).collect();
            for (&i, s) in live.iter().zip(next) {
                states[i].layers[l] = s;
            }
        }
        for (&i, h) in live.iter().zip(inputs) {
            hidden[i].push(h);
        }
    }
    hidden
        .into_iter()
        .map(|hidden| {
            let refs: Vec<&[f64]> = hidden.iter().map(|h| h.as_slice()).collect();
            let proj = w.w_enc.matvec_batch(&refs)?;
            Ok(EncoderOutput { hidden, proj })
        })
        .collect()
}

/// `W_e * h_enc`, the encoder side of the joint network for one frame.
pub fn project_encoder(w: &ModelWeights, h_enc: &[f64]) -> Result<Vec<f64>> {
    w.check_hidden("encoder output", h_enc.len())?;
    w.w_enc.matvec(h_enc)
}

fn check_pred_state(w: &ModelWeights, state: &PredState) -> Result<()> {
    if state.layers.len() != w.pred.len() {
        return Err(Error::DimensionMismatch {
            what: "predictor state layers",
            expected: w.pred.len(),
            found: state.layers.len(),
        });
    }
    if state.proj.len() != w.config.joint_dim {
        return Err(Error::DimensionMismatch {
            what: "predictor joint projection",
            expected: w.config.joint_dim,
            found: state.proj.len(),
        });
    }
    Ok(())
}

pub fn predictor_step(w: &ModelWeights, label: Label, state: &PredState) -> Result<PredState> {
    w.check_label(label)?;
    check_pred_state(w, state)?;
    let mut layers = Vec::with_capacity(w.pred.len());
    let mut input = w.embedding.row(label as usize);
    for (layer, prev) in w.pred.iter().zip(&state.layers) {
        layers.push(layer.step(input, prev)?);
        input = &layers.last().expect("just pushed").h;
    }
    let proj = w.w_pred.matvec(input)?;
    Ok(PredState { layers, proj })
}

/// Advances many prediction-network states by one label each, one pass over
/// the weights per layer.
pub fn batched_predictor_step(w: &ModelWeights, labels: &[Label], states: &[&PredState]) -> Result<Vec<PredState>> {
    if labels.len() != states.len() {
        return Err(Error::DimensionMismatch {
            what: "predictor batch",
            expected: labels.len(),
            found: states.len(),
        });
    }
    for (&label, s) in labels.iter().zip(states) {
        w.check_label(label)?;
        check_pred_state(w, s)?;
    }
    if labels.is_empty() {
        return Ok(Vec::new());
    }
    let mut per_layer: Vec<Vec<LstmState>> = Vec::with_capacity(w.pred.len());
    for (l, layer) in w.pred.iter().enumerate() {
        let xs: Vec<&[f64]> = if l == 0 {
            labels.iter().map(|&k| w.embedding.row(k as usize)).collect()
        } else {
            per_layer[l - 1].iter().map(|s| s.h.as_slice()).collect()
        };
        let prev: Vec<&LstmState> = states.iter().map(|s| &s.layers[l]).collect();
        per_layer.push(layer.step_batch(&xs, &prev)?);
    }
    let tops: Vec<&[f64]> = per_layer.last().expect("at least one layer").iter().map(|s| s.h.as_slice()).collect();
    let projs = w.w_pred.matvec_batch(&tops)?;
    let mut out: Vec<PredState> = projs
        .into_iter()
        .map(|proj| PredState {
            layers: Vec::with_capacity(w.pred.len()),
            proj,
        })
        .collect();
    for layer_states in per_layer {
        for (o, s) in out.iter_mut().zip(layer_states) {
            o.layers.push(s);
        }
    }
    Ok(out)
}

/// State after the start step: the blank embedding fed into a zero state.
/// It depends only on the weights, so decoders compute it once.
pub fn predictor_start(w: &ModelWeights) -> PredState {
    predictor_step(w, BLANK, &PredState::zeros(&w.config)).expect("zero state matches config")
}

/// `W x (|K|+1)` log-posteriors, one row per prediction state.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<LogProb>,
}

impl PosteriorMatrix {
    /// Stacks equally long rows.
    pub fn from_rows(rows: Vec<Vec<LogProb>>) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).ok_or(Error::Empty("posterior rows"))?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in &rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "posterior row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(PosteriorMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[LogProb] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, k: Label) -> LogProb {
        self.data[i * self.cols + k as usize]
    }

    /// Row-major flat view: blank of row 0, labels of row 0, blank of row 1...
    pub fn as_flat(&self) -> &[LogProb] {
        &self.data
    }
}

#[inline]
fn joint_hidden(w: &ModelWeights, enc_proj: &[f64], pred_proj: &[f64]) -> Vec<f64> {
    enc_proj
        .iter()
        .zip(pred_proj)
        .zip(&w.b_joint)
        .map(|((e, p), b)| libm::tanh((e + p) + b))
        .collect()
}

/// Log-posterior over blank and labels for one (frame, history) pair given
/// the frame's encoder projection.
pub fn posterior_projected(w: &ModelWeights, enc_proj: &[f64], pred: &PredState) -> Result<Vec<LogProb>> {
    if enc_proj.len() != w.config.joint_dim {
        return Err(Error::DimensionMismatch {
            what: "encoder projection",
            expected: w.config.joint_dim,
            found: enc_proj.len(),
        });
    }
    check_pred_state(w, pred)?;
    let z = joint_hidden(w, enc_proj, &pred.proj);
    let mut logits = vec![0.0; w.config.vocab_size()];
    w.w_out.matvec_into(&z, &mut logits);
    for (l, b) in logits.iter_mut().zip(&w.b_out) {
        *l += b;
    }
    let mut out = vec![LogProb::ZERO; logits.len()];
    log_softmax_into(&logits, &mut out);
    Ok(out)
}

pub fn posterior(w: &ModelWeights, h_enc: &[f64], pred: &PredState) -> Result<Vec<LogProb>> {
    let proj = project_encoder(w, h_enc)?;
    posterior_projected(w, &proj, pred)
}

/// Batched joint network: the encoder projection is shared by every row,
/// the output layer is applied to all rows in one pass over its weights.
pub fn batched_posterior_projected(w: &ModelWeights, enc_proj: &[f64], preds: &[&PredState]) -> Result<PosteriorMatrix> {
    if preds.is_empty() {
        return Err(Error::Empty("batched posterior states"));
    }
    if enc_proj.len() != w.config.joint_dim {
        return Err(Error::DimensionMismatch {
            what: "encoder projection",
            expected: w.config.joint_dim,
            found: enc_proj.len(),
        });
    }
    for p in preds {
        check_pred_state(w, p)?;
    }
    let zs: Vec<Vec<f64>> = preds.iter().map(|p| joint_hidden(w, enc_proj, &p.proj)).collect();
    let refs: Vec<&[f64]> = zs.iter().map(|z| z.as_slice()).collect();
    let vocab = w.config.vocab_size();
    let mut logits = vec![vec![0.0; vocab]; preds.len()];
    w.w_out.matvec_batch_into(&refs, &mut logits);
    let mut data = vec![LogProb::ZERO; preds.len() * vocab];
    for (i, row) in logits.iter_mut().enumerate() {
        for (l, b) in row.iter_mut().zip(&w.b_out) {
            *l += b;
        }
        log_softmax_into(row, &mut data[i * vocab..(i + 1) * vocab]);
    }
    Ok(PosteriorMatrix {
        rows: preds.len(),
        cols: vocab,
        data,
    })
}

pub fn batched_posterior(w: &ModelWeights, h_enc: &[f64], preds: &[&PredState]) -> Result<PosteriorMatrix> {
    let proj = project_encoder(w, h_enc)?;
    batched_posterior_projected(w, &proj, preds)
}
