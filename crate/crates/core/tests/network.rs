mod common;

use common::Net;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnt_core::model::{
    batched_posterior, batched_predictor_step, encode, encode_batch, init_model, posterior, predictor_start,
    predictor_step, ModelConfig, PredState,
};
use rnnt_core::numerics::{lstm_cell_step, LstmState};
use rnnt_core::{Label, Matrix};

const TOL: f64 = 1e-12;

fn close(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= TOL, "{x} vs {y}");
    }
}

fn config() -> ModelConfig {
    ModelConfig {
        input_dim: 5,
        enc_layers: 2,
        enc_hidden: 12,
        pred_layers: 2,
        pred_hidden: 12,
        joint_dim: 7,
        num_labels: 4,
    }
}

fn features(seed: u64, t: usize, f: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(t, f, (0..t * f).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn lstm_cell_matches_scalar_oracle() {
    let w = init_model(config(), 11).unwrap();
    let net = Net::new(&w);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let (x, h, c) = (v(5), v(12), v(12));
    let (h1, c1) = lstm_cell_step(&w.encoder_layers()[0], &x, &h, &c).unwrap();
    let want = net.lstm(true, 0, &x, &common::Cell { h, c });
    close(&h1, &want.h);
    close(&c1, &want.c);
}

#[test]
fn encoder_matches_scalar_oracle() {
    let w = init_model(config(), 12).unwrap();
    let x = features(1, 9, 5);
    let got = encode(&w, &x).unwrap();
    let want = Net::new(&w).encode(&x);
    for t in 0..9 {
        close(got.hidden(t), &want[t]);
    }
}

#[test]
fn predictor_and_joint_match_scalar_oracle() {
    let w = init_model(config(), 13).unwrap();
    let net = Net::new(&w);
    let h_enc: Vec<f64> = (0..12).map(|i| (i as f64 * 0.3).sin()).collect();
    let history: [Label; 4] = [3, 1, 4, 4];
    let mut state = predictor_start(&w);
    for n in 0..=history.len() {
        let got: Vec<f64> = posterior(&w, &h_enc, &state).unwrap().iter().map(|p| p.value()).collect();
        close(&got, &net.posterior(&h_enc, &history[..n]));
        let cells = net.pred_cells(&history[..n]);
        for (l, c) in cells.iter().enumerate() {
            close(&state.layers[l].h, &c.h);
            close(&state.layers[l].c, &c.c);
        }
        if n < history.len() {
            state = predictor_step(&w, history[n], &state).unwrap();
        }
    }
}

#[test]
fn batched_posterior_equals_rowwise_on_random_draws() {
    let w = init_model(config(), 14).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let width = rng.random_range(1..=9);
        let mut states: Vec<PredState> = Vec::new();
        for _ in 0..width {
            let mut s = predictor_start(&w);
            for _ in 0..rng.random_range(0..4) {
                s = predictor_step(&w, rng.random_range(1..=4), &s).unwrap();
            }
            states.push(s);
        }
        let h_enc: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let refs: Vec<&PredState> = states.iter().collect();
        let batch = batched_posterior(&w, &h_enc, &refs).unwrap();
        for (i, s) in states.iter().enumerate() {
            assert_eq!(batch.row(i), posterior(&w, &h_enc, s).unwrap().as_slice());
        }
        let labels: Vec<Label> = (0..width).map(|_| rng.random_range(1..=4)).collect();
        let stepped = batched_predictor_step(&w, &labels, &refs).unwrap();
        for ((s, k), got) in states.iter().zip(&labels).zip(&stepped) {
            assert_eq!(got, &predictor_step(&w, *k, s).unwrap());
        }
    }
}

#[test]
fn encode_batch_equals_encode() {
    let w = init_model(config(), 15).unwrap();
    let xs: Vec<Matrix> = [3, 7, 1, 5].iter().enumerate().map(|(i, &t)| features(i as u64, t, 5)).collect();
    let refs: Vec<&Matrix> = xs.iter().collect();
    let batched = encode_batch(&w, &refs).unwrap();
    for (x, b) in xs.iter().zip(&batched) {
        assert_eq!(b, &encode(&w, x).unwrap());
    }
}

#[test]
fn zero_state_cell_with_zero_weights() {
    let w = rnnt_core::ModelWeights::zeros(config()).unwrap();
    let s = w.encoder_layers()[0].step(&[0.0; 5], &LstmState::zeros(12)).unwrap();
    // i = f = o = 0.5, g = 0: c = 0, h = 0
    assert!(s.h.iter().chain(&s.c).all(|&v| v == 0.0));
}
