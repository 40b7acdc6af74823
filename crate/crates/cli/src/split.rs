//! Train/test partitions of a manifest.

use clap::ValueEnum;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use liquidsense::simulator::ManifestEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Train on levels 1, 3, 5, ..., the top level; hold out the rest.
    InterleavedLevels,
    /// Half of every class, chosen with the seed.
    HalfPerClass,
    /// Train on everything.
    All,
}

/// Level ranks used for training when interleaving `k` levels: odd ranks up
/// to `k - 2` plus the highest, so ten levels train on {1, 3, 5, 7, 10}.
pub fn interleaved_train_ranks(k: usize) -> Vec<usize> {
    let mut ranks: Vec<usize> = (1..=k.saturating_sub(2)).filter(|r| r % 2 == 1).collect();
    if k > 0 {
        ranks.push(k);
    }
    ranks
}

/// Returns `(train, test)` entry indices, each ascending.
pub fn partition(entries: &[ManifestEntry], split: Split, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut classes: Vec<usize> = entries.iter().map(|e| e.level_class).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut train = Vec::new();
    match split {
        Split::All => train.extend(0..entries.len()),
        Split::InterleavedLevels => {
            let ranks = interleaved_train_ranks(classes.len());
            let chosen: Vec<usize> = ranks.iter().map(|&r| classes[r - 1]).collect();
            train.extend((0..entries.len()).filter(|&i| chosen.contains(&entries[i].level_class)));
        }
        Split::HalfPerClass => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for &c in &classes {
                let mut members: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].level_class == c).collect();
                members.shuffle(&mut rng);
                train.extend_from_slice(&members[..members.len() / 2]);
            }
            train.sort_unstable();
        }
    }
    let test = (0..entries.len()).filter(|i| train.binary_search(i).is_err()).collect();
    (train, test)
}
