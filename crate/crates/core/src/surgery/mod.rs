//! Dynamic network surgery: magnitude thresholds with a hysteresis band,
//! stochastically triggered mask updates, and weight updates that also move
//! pruned connections so they can be spliced back in.

pub mod config;
pub mod mask;
pub mod schedule;
pub mod train;

pub use config::{parse_pairs, LayerGroup, Phase, PlannedPhase, SurgeryConfig, SurgeryPlan};
pub use mask::{compute_thresholds, mask_value, MaskedParams, ThresholdSpec};
pub use schedule::{trigger_probability, LrPolicy, TriggerSchedule};
pub use train::{
    run_surgery, sgd_step, surgery_step, train_reference, LogRecord, StepReport, SurgeryOutcome, TrainOutcome,
    TrainState,
};
