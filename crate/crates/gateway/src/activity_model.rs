//! Loading the activity forest, or training the built-in one.

use std::path::Path;

use ppgema_core::activity::{train_forest, ActivityError, ForestModel, ForestParams};
use ppgema_core::simulator::activity_corpus;

/// Keeps the built-in model's training subjects distinct from the
/// simulator subjects generated with the same seed.
const CORPUS_SALT: u64 = 0x00c0_5eed_a11c_e5ed;

pub const DEFAULT_CORPUS_SUBJECTS: usize = 4;
pub const DEFAULT_CORPUS_WINDOWS: usize = 3;

/// Forest trained on the simulator's motion corpus.
pub fn default_activity_model(seed: u64) -> Result<ForestModel, ActivityError> {
    let corpus = activity_corpus(DEFAULT_CORPUS_SUBJECTS, DEFAULT_CORPUS_WINDOWS, seed ^ CORPUS_SALT);
    train_forest(&corpus, &ForestParams::default(), seed)
}

pub fn load_or_train(path: Option<&Path>, seed: u64) -> Result<ForestModel, ActivityError> {
    match path {
        Some(p) => ForestModel::load(p),
        None => default_activity_model(seed),
    }
}
