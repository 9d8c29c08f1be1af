//! Case generation, on-disk ingestion, and the train/test split.

mod io;
mod synth;

pub use io::{
    load_case, load_dataset, read_gaze, read_gray, save_case, save_dataset, write_gaze, write_gray, GrayImage,
    Manifest, ManifestEntry, Strictness, MANIFEST_FILE,
};
pub use synth::{generate_case, SynthConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::GazeCase;
use crate::error::{Error, Result};

/// Generates `n` cases named `case000`, `case001`, …; case `i` draws from its
/// own ChaCha stream so any case can be regenerated alone.
pub fn generate_dataset(cfg: &SynthConfig, n: usize, seed: u64) -> Result<Vec<GazeCase>> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            generate_case(cfg, &format!("case{i:03}"), &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<GazeCase>,
    pub test: Vec<GazeCase>,
    pub seed: u64,
}

/// Shuffles with `seed`, then takes the first `train_n` cases for training
/// and the next `test_n` for testing.
pub fn split_dataset(cases: &[GazeCase], train_n: usize, test_n: usize, seed: u64) -> Result<DatasetSplit> {
    if cases.len() < train_n + test_n {
        return Err(Error::Input(format!(
            "split needs {} cases, dataset has {}",
            train_n + test_n,
            cases.len()
        )));
    }
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| cases[i].clone()).collect();
    Ok(DatasetSplit {
        train: pick(&order[..train_n]),
        test: pick(&order[train_n..train_n + test_n]),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(cases: &[GazeCase]) -> Vec<String> {
        cases.iter().map(|c| c.case_id.clone()).collect()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let cfg = SynthConfig::default();
        let cases = generate_dataset(&cfg, 100, 1).unwrap();
        let split = split_dataset(&cases, 70, 30, 5).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (70, 30));
        let train: HashSet<_> = ids(&split.train).into_iter().collect();
        assert!(ids(&split.test).iter().all(|id| !train.contains(id)));

        let again = split_dataset(&cases, 70, 30, 5).unwrap();
        assert_eq!(ids(&again.train), ids(&split.train));
        let other = split_dataset(&cases, 70, 30, 6).unwrap();
        assert_ne!(ids(&other.train), ids(&split.train));
        assert_eq!(other.test.len(), 30);
    }

    #[test]
    fn too_few_cases() {
        let cases = generate_dataset(&SynthConfig::default(), 5, 1).unwrap();
        assert!(matches!(split_dataset(&cases, 4, 2, 0), Err(Error::Input(_))));
    }
}
