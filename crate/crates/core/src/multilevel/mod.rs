//! Multilevel samplers, level schedules and sample allocation.

pub mod allocation;
pub mod sampler;
pub mod schedule;

pub use allocation::{allocate_cost, allocate_variance, LevelCost};
pub use sampler::{
    coupled_samples, finalize_estimate, finest_mean, level_spec, pilot_variances, prepare_level,
    prepare_levels, run_ml_cs, run_ml_cs_with, run_ml_gibbs, run_ml_gibbs_with, sample_variance,
    CoupledSamples, Coupling, EstimatorAccumulator, EstimatorMode, MultilevelOptions,
};
pub use schedule::{make_schedule, v_cycle_period, w_cycle_period, SampleSchedule, ScheduleKind};
