//! Synthetic acoustic features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rnnt_core::Matrix;

use crate::feature_file::FeatureFile;

/// `T x F` standard-normal draws from a seeded stream.
pub fn synth_features(frames: usize, dim: usize, seed: u64) -> Matrix {
    assert!(frames >= 1 && dim >= 1, "synthetic features need T, F >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..frames * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_vec(frames, dim, data).expect("normal draws are finite")
}

/// [`synth_features`] packaged with a duration of `frame_ms` per frame.
pub fn synth_utterance(frames: usize, dim: usize, seed: u64, frame_ms: u32) -> FeatureFile {
    let duration = u32::try_from(frames).ok().and_then(|t| t.checked_mul(frame_ms.max(1))).unwrap_or(u32::MAX);
    FeatureFile::new(synth_features(frames, dim, seed), duration).expect("frames and duration are positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_distinct() {
        assert_eq!(synth_features(4, 3, 9), synth_features(4, 3, 9));
        assert_ne!(synth_features(4, 3, 9), synth_features(4, 3, 10));
    }

    #[test]
    fn sample_mean_near_zero() {
        let m = synth_features(1000, 100, 1);
        let mean = m.data().iter().sum::<f64>() / m.data().len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn duration_scales_with_frames() {
        assert_eq!(synth_utterance(37, 2, 0, 10).audio_duration_ms, 370);
    }
}
