//! Header fuzzing shared by the format tests and the acceptance run.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rnnt_io::feature_file::FEATURE_HEADER_LEN;
use rnnt_io::model_file::MODEL_HEADER_LEN;

pub const MUTATIONS: usize = 10_000;

pub fn u32_at(b: &[u8], at: usize) -> u64 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap()) as u64
}

/// Writer-side validity of a model image, from the documented layout.
pub fn model_image_valid(b: &[u8]) -> bool {
    if b.len() < MODEL_HEADER_LEN || &b[..4] != b"RNTW" || b[4..6] != [1, 0] {
        return false;
    }
    let f: Vec<u64> = (0..7).map(|i| u32_at(b, 6 + 4 * i)).collect();
    let (input, enc_layers, d, pred_layers, pred_hidden, joint, k) = (f[0], f[1], f[2], f[3], f[4], f[5], f[6]);
    if f.iter().any(|&v| v == 0) || pred_hidden != d || k >= u32::MAX as u64 {
        return false;
    }
    let (input, enc_layers, d, pred_layers, joint, k) =
        (input as u128, enc_layers as u128, d as u128, pred_layers as u128, joint as u128, k as u128);
    let lstm = |inp: u128| 4 * d * inp + 4 * d * d + 4 * d;
    let floats = (k + 1) * d
        + lstm(input)
        + (enc_layers - 1) * lstm(d)
        + pred_layers * lstm(d)
        + 2 * joint * d
        + joint
        + (k + 1) * joint
        + (k + 1);
    (b.len() - MODEL_HEADER_LEN) as u128 == 4 * floats
}

pub fn feature_image_valid(b: &[u8]) -> bool {
    if b.len() < FEATURE_HEADER_LEN || &b[..4] != b"RNTF" || b[4..6] != [1, 0] {
        return false;
    }
    let (t, f, dur) = (u32_at(b, 6), u32_at(b, 10), u32_at(b, 14));
    t > 0 && f > 0 && dur > 0 && (b.len() - FEATURE_HEADER_LEN) as u128 == 4 * t as u128 * f as u128
}

/// Corrupts the header region: byte flips, interesting field values or a
/// cut inside the header.
pub fn mutate(rng: &mut ChaCha8Rng, image: &[u8], header_len: usize) -> Vec<u8> {
    let mut b = image.to_vec();
    match rng.random_range(0..4) {
        0 => {
            for _ in 0..rng.random_range(1..=4) {
                let at = rng.random_range(0..header_len);
                b[at] ^= rng.random_range(1..=255u8);
            }
        }
        1 => {
            let fields = (header_len - 6) / 4;
            let at = 6 + 4 * rng.random_range(0..fields);
            let old = u32_at(&b, at) as u32;
            let v = [0, 1, u32::MAX, old.wrapping_add(1), old.wrapping_sub(1), old.wrapping_mul(2), rng.random()]
                [rng.random_range(0..7)];
            b[at..at + 4].copy_from_slice(&v.to_le_bytes());
        }
        2 => b.truncate(rng.random_range(0..header_len)),
        _ => {
            let at = rng.random_range(0..6);
            b[at] = rng.random();
        }
    }
    b
}

/// Mutates `image` [`MUTATIONS`] times and checks every reader verdict
/// against `valid`: invalid images must give a named error and no panic,
/// valid ones must parse and re-serialize to the same bytes. Returns the
/// number of rejected images.
fn fuzz<T>(
    seed: u64,
    image: &[u8],
    header_len: usize,
    valid: fn(&[u8]) -> bool,
    read: impl Fn(&[u8]) -> rnnt_io::Result<T> + std::panic::RefUnwindSafe,
    write: impl Fn(&T) -> Vec<u8>,
) -> Result<usize, String> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = 0;
    for i in 0..MUTATIONS {
        let b = mutate(&mut rng, image, header_len);
        let res = std::panic::catch_unwind(|| read(&b)).map_err(|_| format!("mutation {i}: reader panicked"))?;
        match (valid(&b), res) {
            (true, Ok(v)) if write(&v) == b => {}
            (true, Ok(_)) => return Err(format!("mutation {i}: valid image did not round-trip")),
            (true, Err(e)) => return Err(format!("mutation {i}: valid image rejected: {e}")),
            (false, Ok(_)) => return Err(format!("mutation {i}: invalid image accepted")),
            (false, Err(rnnt_io::FormatError::Io { .. })) => return Err(format!("mutation {i}: unnamed error")),
            (false, Err(_)) => rejected += 1,
        }
    }
    Ok(rejected)
}

pub fn fuzz_model_headers(seed: u64) -> Result<usize, String> {
    use rnnt_core::model::init_model;
    use rnnt_io::model_file::{model_from_bytes, model_to_bytes};
    let image = model_to_bytes(&init_model(rnnt_core::ModelConfig::tiny(3, 4, 5), 1).unwrap()).unwrap();
    fuzz(seed, &image, MODEL_HEADER_LEN, model_image_valid, model_from_bytes, |w| {
        model_to_bytes(w).unwrap()
    })
}

pub fn fuzz_feature_headers(seed: u64) -> Result<usize, String> {
    use rnnt_io::feature_file::FeatureFile;
    let m = rnnt_core::Matrix::from_vec(6, 4, (0..24).map(|i| i as f64 * 0.25 - 3.0).collect()).unwrap();
    let image = FeatureFile::new(m, 60).unwrap().to_bytes().unwrap();
    fuzz(seed, &image, FEATURE_HEADER_LEN, feature_image_valid, FeatureFile::from_bytes, |f| {
        f.to_bytes().unwrap()
    })
}
