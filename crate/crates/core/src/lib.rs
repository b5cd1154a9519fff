//! Joint block placement and block dropping for ResNet-50 inference split
//! across a fleet of IoT devices.

pub mod assignment;
pub mod config;
pub mod cost;
pub mod error;
pub mod graph;
pub mod objective;
pub mod profile;
pub mod sim;
pub mod solver;
pub mod system;

pub use assignment::Assignment;
pub use config::Config;
pub use cost::{CostBreakdown, EnergyAccounting, Instance};
pub use error::{Error, Result};
pub use graph::{build_resnet50, BlockKind, BlockSpec, MemoryMode, ResNetGraph, SkipTopology};
pub use objective::{CoverageMode, CoverageScope, FeasibilityReport, ObjectiveWeights};
pub use profile::{AccuracyProfile, DropSet, ProfileEntry};
pub use sim::{run_round, run_scenario, sweep, MetricsRecord, Scenario, ScenarioSummary, SweepPoint};
pub use solver::{solve_exact, solve_ga, ExactLimits, GaConfig, SolveResult};
pub use system::{DeviceSpec, EnergyParams, RateMatrix};
