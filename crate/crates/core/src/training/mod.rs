//! Losses, metrics, sample construction, the training loop and checkpoints.

pub mod checkpoint;
pub mod loss;
pub mod metrics;
pub mod samples;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use loss::{combined_loss, smooth_l1};
pub use metrics::{metrics, MetricAccumulator, MetricRow, Metrics, MetricsReport, Task};
pub use samples::{make_samples, split_chronological, split_targets, Sample, Split};
pub use trainer::{evaluate, train, validation_loss, EpochLog, TrainConfig, TrainReport};
