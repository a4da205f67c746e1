//! Predictive-coding estimator: a GRU that predicts the next seeker
//! observation and, from its hidden state, the current scale-factor errors.

mod adam;
mod backward;
mod checkpoint;
mod forward;
mod gradcheck;
mod params;

use crate::dynamics::NUM_THRUSTERS;
use crate::seeker::OBS_DIM;

/// Prediction error plus one flag per thruster.
pub const INPUT_DIM: usize = OBS_DIM + NUM_THRUSTERS;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use backward::{backward, segment_loss, Segment, SegmentStart};
pub use checkpoint::{AdamRecord, Checkpoint, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, relative_error, GradientSample};
pub use forward::{forward_step, gru_step, init_hidden, loss, pcm_input, LossParts, PcmState, StepOutput};
pub use params::{Dense, GruParams, InitConfig, PcmParams, TENSOR_COUNT};
