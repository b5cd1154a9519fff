//! Multi-round scenarios: each round draws a request batch and link rates,
//! solves placement, and records the resulting metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{EnergyAccounting, Instance};
use crate::error::{Error, Result};
use crate::graph::{MemoryMode, ResNetGraph};
use crate::objective::ObjectiveWeights;
use crate::profile::AccuracyProfile;
use crate::solver::{solve_ga, GaConfig, SolveResult};
use crate::system::{sample_rates, sample_requests, DeviceSpec, EnergyParams};

/// Everything needed to run one scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: ResNetGraph,
    pub profile: AccuracyProfile,
    pub fleet: Vec<DeviceSpec>,
    /// Bits per second.
    pub rate_bounds: (f64, f64),
    pub symmetric_rates: bool,
    pub lambda: f64,
    pub rounds: usize,
    pub weights: ObjectiveWeights,
    pub energy: EnergyParams,
    pub accounting: EnergyAccounting,
    pub memory_mode: MemoryMode,
    pub solver: GaConfig,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        let (lo, hi) = self.rate_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!(
                "rate bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        self.weights.validate()?;
        self.solver.validate()?;
        self.energy.validate()?;
        self.fleet.iter().try_for_each(DeviceSpec::validate)
    }

    /// Round `round`'s random inputs: a ChaCha stream selected by the round
    /// index, so rounds are independent of execution order.
    fn round_rng(&self, round: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(round as u64);
        rng
    }

    /// The instance and solver settings used in `round`.
    pub fn round_instance(&self, round: usize) -> Result<(Instance, GaConfig)> {
        let mut rng = self.round_rng(round);
        let batch = sample_requests(self.lambda, round, &mut rng)?;
        let rates = sample_rates(
            self.fleet.len(),
            self.rate_bounds.0,
            self.rate_bounds.1,
            self.symmetric_rates,
            round,
            &mut rng,
        )?;
        let solver = GaConfig {
            seed: self.solver.seed ^ rng.random::<u64>(),
            ..self.solver.clone()
        };
        let inst = Instance::new(self.graph.clone(), self.fleet.clone(), rates, batch.count, self.energy)?
            .with_memory_mode(self.memory_mode)
            .with_accounting(self.accounting);
        Ok((inst, solver))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub round: usize,
    pub requests: usize,
    pub avg_accuracy: f64,
    /// Seconds.
    pub total_latency: f64,
    /// Bits.
    pub shared_data: f64,
    /// Multiplications.
    pub total_computation: f64,
    /// Joules.
    pub total_energy: f64,
    pub feasible: bool,
    pub objective: f64,
    /// Set when the solver raised an error; metrics are then zero.
    pub error: Option<String>,
}

impl MetricsRecord {
    fn failed(round: usize, requests: usize, err: &Error) -> Self {
        Self {
            round,
            requests,
            avg_accuracy: 0.0,
            total_latency: 0.0,
            shared_data: 0.0,
            total_computation: 0.0,
            total_energy: 0.0,
            feasible: false,
            objective: f64::NAN,
            error: Some(err.to_string()),
        }
    }
}

/// Solves one round and measures the returned assignment. Solver errors
/// become a failed record instead of aborting.
pub fn run_round(scenario: &Scenario, round: usize) -> MetricsRecord {
    let (inst, solver) = match scenario.round_instance(round) {
        Ok(v) => v,
        Err(e) => return MetricsRecord::failed(round, 0, &e),
    };
    match solve_round(scenario, &inst, &solver) {
        Ok((res, rec)) => {
            debug_assert_eq!(res.feasible, rec.feasible);
            rec
        }
        Err(e) => MetricsRecord::failed(round, inst.requests, &e),
    }
}

fn solve_round(scenario: &Scenario, inst: &Instance, solver: &GaConfig) -> Result<(SolveResult, MetricsRecord)> {
    let res = solve_ga(inst, &scenario.weights, &scenario.profile, solver)?;
    let bd = inst.evaluate(&res.assignment)?;
    let acc = crate::objective::accuracy_term(&res.assignment, &scenario.profile)?;
    let rec = MetricsRecord {
        round: inst.rates.round,
        requests: inst.requests,
        avg_accuracy: acc,
        total_latency: bd.total_latency,
        shared_data: bd.shared_bits,
        total_computation: bd.total_computation,
        total_energy: bd.total_energy(),
        feasible: res.feasible,
        objective: res.objective,
        error: None,
    };
    Ok((res, rec))
}

/// Means are taken over rounds that produced a solution; failed rounds are
/// only counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub rounds: usize,
    pub solved_rounds: usize,
    pub feasible_rounds: usize,
    pub total_requests: usize,
    pub mean_accuracy: f64,
    pub mean_latency: f64,
    pub mean_shared_data: f64,
    pub mean_computation: f64,
    pub mean_energy: f64,
    pub mean_objective: f64,
    pub total_latency: f64,
    pub total_shared_data: f64,
    pub total_computation: f64,
    pub total_energy: f64,
}

impl ScenarioSummary {
    pub fn from_records(records: &[MetricsRecord]) -> Self {
        let solved: Vec<&MetricsRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let sum = |f: fn(&MetricsRecord) -> f64| solved.iter().map(|r| f(r)).sum::<f64>();
        let mean = |f: fn(&MetricsRecord) -> f64| {
            if solved.is_empty() {
                f64::NAN
            } else {
                sum(f) / solved.len() as f64
            }
        };
        Self {
            rounds: records.len(),
            solved_rounds: solved.len(),
            feasible_rounds: records.iter().filter(|r| r.feasible).count(),
            total_requests: records.iter().map(|r| r.requests).sum(),
            mean_accuracy: mean(|r| r.avg_accuracy),
            mean_latency: mean(|r| r.total_latency),
            mean_shared_data: mean(|r| r.shared_data),
            mean_computation: mean(|r| r.total_computation),
            mean_energy: mean(|r| r.total_energy),
            mean_objective: mean(|r| r.objective),
            total_latency: sum(|r| r.total_latency),
            total_shared_data: sum(|r| r.shared_data),
            total_computation: sum(|r| r.total_computation),
            total_energy: sum(|r| r.total_energy),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub records: Vec<MetricsRecord>,
    pub summary: ScenarioSummary,
}

/// Runs every round (concurrently; results are collected in round order).
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun> {
    scenario.validate()?;
    let records: Vec<MetricsRecord> = (0..scenario.rounds)
        .into_par_iter()
        .map(|t| run_round(scenario, t))
        .collect();
    let summary = ScenarioSummary::from_records(&records);
    Ok(ScenarioRun { records, summary })
}

/// One labelled variant of a base scenario.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub label: String,
    pub run: ScenarioRun,
}

/// Metric names used in long-form sweep tables.
pub const METRICS: [&str; 7] = [
    "avg_accuracy",
    "total_latency_s",
    "shared_data_bits",
    "total_computation_mults",
    "total_energy_j",
    "objective",
    "feasible",
];

impl MetricsRecord {
    /// Values in the order of [`METRICS`].
    pub fn metric_values(&self) -> [f64; 7] {
        [
            self.avg_accuracy,
            self.total_latency,
            self.shared_data,
            self.total_computation,
            self.total_energy,
            self.objective,
            if self.feasible { 1.0 } else { 0.0 },
        ]
    }
}

pub fn sweep(points: &[SweepPoint]) -> Result<Vec<SweepRun>> {
    if points.is_empty() {
        return Err(Error::Config("sweep axis has no values".into()));
    }
    points
        .iter()
        .map(|p| {
            Ok(SweepRun {
                label: p.label.clone(),
                run: run_scenario(&p.scenario)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_resnet50;

    pub(crate) fn ample(lambda: f64, rounds: usize, alpha: f64) -> Scenario {
        let graph = build_resnet50(224).unwrap();
        let profile = AccuracyProfile::synthetic_default(&graph);
        Scenario {
            fleet: (1..=3).map(|i| DeviceSpec::unlimited(i, 1.4e9 * i as f64)).collect(),
            graph,
            profile,
            rate_bounds: (7.2e6, 72.2e6),
            symmetric_rates: true,
            lambda,
            rounds,
            weights: ObjectiveWeights::new(alpha, 1.0 - alpha, 10.0, 0.8).unwrap(),
            energy: EnergyParams::default(),
            accounting: EnergyAccounting::PerEvent,
            memory_mode: MemoryMode::Inputs,
            solver: GaConfig {
                population: 20,
                generations: 15,
                ..GaConfig::default()
            },
            seed: 3,
        }
    }

    #[test]
    fn empty_round_is_zero_and_feasible() {
        let rec = run_round(&ample(0.0, 1, 0.5), 0);
        assert_eq!(rec.requests, 0);
        assert!(rec.feasible);
        assert_eq!(rec.total_latency, 0.0);
        assert_eq!(rec.shared_data, 0.0);
        assert_eq!(rec.total_energy, 0.0);
        assert_eq!(rec.total_computation, 0.0);
    }

    #[test]
    fn rounds_are_deterministic_and_order_independent() {
        let s = ample(2.0, 4, 0.5);
        let forward: Vec<_> = (0..4).map(|t| run_round(&s, t)).collect();
        let backward: Vec<_> = (0..4).rev().map(|t| run_round(&s, t)).collect();
        for (t, rec) in forward.iter().enumerate() {
            assert_eq!(rec, &backward[3 - t]);
            assert_eq!(rec.round, t);
        }
    }

    #[test]
    fn beta_one_with_ample_budgets_reaches_baseline() {
        let s = ample(2.0, 3, 0.0);
        for t in 0..3 {
            let rec = run_round(&s, t);
            assert!(rec.feasible);
            assert_eq!(rec.avg_accuracy, 0.9473);
        }
    }

    #[test]
    fn single_round_summary_mirrors_record() {
        let run = run_scenario(&ample(2.0, 1, 0.5)).unwrap();
        let r = &run.records[0];
        let s = &run.summary;
        assert_eq!(s.mean_accuracy, r.avg_accuracy);
        assert_eq!(s.mean_latency, r.total_latency);
        assert_eq!(s.total_energy, r.total_energy);
        assert_eq!(s.mean_computation, r.total_computation);
    }

    #[test]
    fn solver_errors_become_failed_records() {
        let mut s = ample(3.0, 2, 0.5);
        s.fleet = vec![DeviceSpec::new(1, 10.0, 10.0, 10.0, 1e9).unwrap()];
        let run = run_scenario(&s).unwrap();
        assert!(run
            .records
            .iter()
            .any(|r| r.error.is_some() && !r.feasible && r.objective.is_nan()));
    }

    #[test]
    fn sweep_yields_one_run_per_point() {
        let points: Vec<SweepPoint> = [(1.0, 0.0), (0.5, 0.5), (0.0, 1.0)]
            .iter()
            .map(|&(a, _)| SweepPoint {
                label: format!("{a}"),
                scenario: ample(1.0, 1, a),
            })
            .collect();
        let runs = sweep(&points).unwrap();
        assert_eq!(runs.len(), 3);
        assert!(sweep(&[]).is_err());
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = ample(1.0, 0, 0.5);
        assert!(run_scenario(&s).is_err());
        s.rounds = 1;
        s.rate_bounds = (0.0, 1.0);
        assert!(run_scenario(&s).is_err());
    }
}
