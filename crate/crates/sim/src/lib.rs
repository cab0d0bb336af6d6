//! Cycle-level functional model of the PermDNN computing engine.
//!
//! A layer is first laid out over the PE array ([`plan_layout`]), which
//! also fixes the processing scheme ([`select_schedule`]). [`simulate_layer`]
//! then streams an input vector through the image, skipping zero entries,
//! and reports the output together with a cycle breakdown.

pub mod config;
pub mod engine;
pub mod error;
pub mod layout;
pub mod perf;
pub mod schedule;
pub mod workload;

pub use config::EngineConfig;
pub use engine::{simulate_layer, CycleReport, LayerOutput};
pub use error::{Result, SimError};
pub use layout::{
    check_capacity, plan_layout, AccumulationSelector, SramImage, Weight, WeightEncoding,
    WeightPayload,
};
pub use perf::{scalability_sweep, throughput_model, ScalingRow, Throughput};
pub use schedule::{select_schedule, Pass, Schedule, ScheduleCase};
pub use workload::{synthesize_tagged, synthetic_activations, synthetic_lut, LayerWorkload};
