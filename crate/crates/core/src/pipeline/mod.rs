//! Teacher training, self-labeling, student pre-training and fine-tuning, the
//! five pipeline configurations and the limited-label sweep.

mod config;
mod run;
mod select;
mod sweep;
mod train;

pub use config::{Configuration, PipelineConfig, SelectionPolicy, TrainingSchedule};
pub use run::{
    finetune_student, holdout_split, pretrain_student, pretrain_transformation, run_configuration, train_teacher,
    PipelineData, RunOutcome,
};
pub use select::{argmax, select_confident, self_label_and_select, ClassSelectionStats, Selection, SelectionStats};
pub use sweep::{
    aggregate_cells, limited_data_sweep, mean_std, parallel_map, run_cell, write_sweep_csv, CellScores, SweepData,
    SweepRow, SWEEP_CONFIGURATIONS,
};
pub use train::{
    fit, mean_loss, record_examples, train_supervised, window_examples, with_onehot_targets, write_history_csv,
    EpochRecord, FitOptions, History,
};
