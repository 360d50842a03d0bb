//! Fold training, ensemble inference and fold reports.

mod ensemble;
mod optimizer;
mod report;
mod scheduler;
mod trainer;

pub use ensemble::{ensemble_mean, predict_series, PREDICT_BATCH};
pub use optimizer::{AdamW, AdamWConfig};
pub use report::{render_table, write_fold_reports, REPORT_HEADER};
pub use scheduler::{PlateauConfig, PlateauScheduler};
pub use trainer::{
    derive_seed, fold_partition, train_fold, training_schedule, FoldOutcome, FoldPartition,
    FoldReport, TrainConfig,
};
