//! Trainable-component machinery: parameters, reverse-mode differentiation,
//! Adam, clipping, learning-rate scheduling, gradient checking and
//! checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use optim::{adam_step, clip_gradients, halve_lr_on_plateau, EarlyStopping, OptimState};
pub use params::{Grads, Init, ParamId, ParamSet, Tensor};
pub use tape::{Tape, Var};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate's single RNG type, so seeded runs are reproducible across
/// platforms and `rand` releases.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
