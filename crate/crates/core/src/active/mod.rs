//! Pool-based active learning over simulator scenarios: dataset roles,
//! the train/score/acquire loop, checkpoints and an offline reference.

mod checkpoint;
mod dataset;
mod run;

pub use checkpoint::{read_checkpoint, write_checkpoint, RunLock, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use dataset::{mae, seed_mean, Features, HistoryEntry, RecordSource, SampleSource, SimDataset, SimulatorSource};
pub use run::{
    evaluate_test, run_active_loop, train_offline, ChoiceRow, LoopConfig, MetricsRow, OfflineReport, RunOptions,
    RunReport, RunState, StopReason, CHECKPOINT_FILE, CHOICES_HEADER, METRICS_HEADER,
};
