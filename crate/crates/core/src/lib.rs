//! Exoatmospheric intercept simulation with a strapdown seeker, seeker
//! scale-factor errors, and a predictive-coding estimator that learns to
//! compensate them online.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod episode;
pub mod error;
pub mod guidance;
pub mod math;
pub mod montecarlo;
pub mod pcm;
pub mod scenario;
pub mod seeker;
pub mod stabilization;
pub mod trainer;

pub use config::{PcmConfig, PhysicsConfig, Preset, RunConfig, RunSection};
pub use episode::{
    run_episode, EngagementConfig, EpisodeOptions, EpisodeOutput, EpisodeRecord, EpisodeRollout, Estimator, EstimatorStats,
    Termination, TimingConfig, TrajectoryRow,
};
pub use error::{Result, SimError};
pub use montecarlo::{run_batch, thread_pool, CaseStats, CsvMeta, PairedStats};
pub use pcm::{Checkpoint, PcmParams};
pub use trainer::{train, CurveRow, RolloutBuffers, TrainConfig, TrainState, UpdateMetrics};
