//! Seed derivation.
//!
//! Seeds are the first eight bytes of a SHA-256 digest over a domain tag and
//! the identifying fields. Channel realizations depend only on the trial, so
//! every predictor sees the same channels; pilot noise additionally depends
//! on the SNR; learner seeds depend on the predictor and fit index but not on
//! the SNR, so one trained model serves the whole SNR grid.

use sha2::{Digest, Sha256};

use crate::tracking::Predictor;

fn derive(tag: &str, master: u64, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"beamtrack/seed/v1/");
    h.update(tag.as_bytes());
    h.update(master.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub fn channel_seed(master: u64, trial: usize) -> u64 {
    derive("channel", master, &[trial as u64])
}

pub fn noise_seed(master: u64, trial: usize, snr_db: f64) -> u64 {
    derive("noise", master, &[trial as u64, snr_db.to_bits()])
}

pub fn model_seed(master: u64, predictor: Predictor, trial: usize, fit: usize) -> u64 {
    derive(predictor.name(), master, &[trial as u64, fit as u64])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_separate_their_inputs() {
        let a = channel_seed(1, 0);
        assert_eq!(a, channel_seed(1, 0));
        assert_ne!(a, channel_seed(1, 1));
        assert_ne!(a, channel_seed(2, 0));
        assert_ne!(noise_seed(1, 0, 15.0), noise_seed(1, 0, 20.0));
        assert_ne!(
            model_seed(1, Predictor::ErmXavier, 0, 0),
            model_seed(1, Predictor::ErmRandom, 0, 0)
        );
        assert_ne!(
            model_seed(1, Predictor::Ensemble, 0, 0),
            model_seed(1, Predictor::Ensemble, 0, 1)
        );
    }
}
