//! Gradient computation, optimisation and the training loop.

mod adam;
mod grad;
mod gradcheck;
mod loss;
mod trainer;
mod windows;

pub use adam::{adam_step, AdamState};
pub use grad::{batch_loss, batch_loss_and_grad, clip_global_norm, window_loss_and_grad};
pub use gradcheck::{
    analytic_gradient, compare_gradient, grad_check, relative_error, BlockReport, GradCheckCase,
    GradCheckReport, RELATIVE_FLOOR,
};
pub use loss::nll_loss;
pub use trainer::{train, EpochLog, TrainConfig, TrainOutcome, TrainState};
pub use windows::{cut_windows, make_windows, training_index, validation_index, window_starts};
