//! Differentiable-computation core: tensors, the gradient tape, losses,
//! the Adam optimizer, learning-rate schedule and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod params;
pub mod schedule;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{checkpoint_digest, load_checkpoint, save_checkpoint};
pub use gradcheck::{evaluate_with_gradients, gradient_check, Evaluation, GradCheckReport};
pub use loss::{bce_loss, binary_class_probs, BCE_CLAMP};
pub use params::{ParamId, ParamStore};
pub use schedule::{lr_at_step, ScheduleConfig};
pub use tape::{Bound, Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
