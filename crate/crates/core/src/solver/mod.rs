//! Searches over placements and drop sets: a genetic algorithm with
//! projection and repair, and an exhaustive solver for tiny instances.

pub mod chromosome;
mod exact;
mod ga;
pub mod repair;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use chromosome::{decode, encode, Dims};
pub use exact::{enumeration_size, solve_exact, ExactLimits};
pub use ga::solve_ga;
pub use repair::{repair_allocation, repair_in_place};

use crate::assignment::Assignment;
use crate::cost::{CostBreakdown, Instance};
use crate::error::{Error, Result};
use crate::objective::{
    objective_value, report_from_costs, CoverageMode, CoverageScope, FeasibilityReport, ObjectiveWeights,
};
use crate::profile::{AccuracyProfile, DropSet, ProfileEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-bit flip probability; `None` means 1 / chromosome length.
    pub mutation_rate: Option<f64>,
    pub tournament_size: usize,
    pub penalty_weight: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 200,
            crossover_rate: 0.9,
            mutation_rate: None,
            tournament_size: 3,
            penalty_weight: 10.0,
            elitism: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.population < 2 || !self.population.is_multiple_of(2) {
            return bad(format!(
                "population must be even and at least 2, got {}",
                self.population
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad(format!(
                "crossover_rate must lie in [0, 1], got {}",
                self.crossover_rate
            ));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return bad(format!("mutation_rate must lie in [0, 1], got {m}"));
            }
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be at least 1".into());
        }
        if !(self.penalty_weight > 0.0 && self.penalty_weight.is_finite()) {
            return bad(format!("penalty_weight must be positive, got {}", self.penalty_weight));
        }
        if self.elitism > self.population {
            return bad(format!(
                "elitism {} exceeds population {}",
                self.elitism, self.population
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    #[serde(skip)]
    pub assignment: Assignment,
    pub objective: f64,
    pub feasible: bool,
    pub report: FeasibilityReport,
    pub evaluations: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Equality ignores `wall_time`.
impl PartialEq for SolveResult {
    fn eq(&self, other: &Self) -> bool {
        self.assignment == other.assignment
            && self.objective.to_bits() == other.objective.to_bits()
            && self.feasible == other.feasible
            && self.report == other.report
            && self.evaluations == other.evaluations
    }
}

/// A scored, resolved candidate.
#[derive(Debug, Clone)]
pub(crate) struct Scored {
    pub assignment: Assignment,
    pub objective: f64,
    pub latency: f64,
    pub violation: f64,
    pub feasible: bool,
}

impl Scored {
    pub fn fitness(&self, penalty_weight: f64) -> f64 {
        self.objective + penalty_weight * self.violation
    }

    /// Feasible beats infeasible; then objective (or violation), then latency.
    pub fn better_than(&self, other: &Scored) -> bool {
        use std::cmp::Ordering::*;
        let key = |s: &Scored| {
            if s.feasible {
                (0, s.objective, s.latency)
            } else {
                (1, s.violation, s.objective)
            }
        };
        let (a, b) = (key(self), key(other));
        match a.0.cmp(&b.0) {
            Less => true,
            Greater => false,
            Equal => a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)) == Less,
        }
    }
}

/// Shared scoring for both solvers on resolved assignments.
pub(crate) struct Scorer<'a> {
    pub inst: &'a Instance,
    pub profile: &'a AccuracyProfile,
    pub weights: &'a ObjectiveWeights,
}

impl Scorer<'_> {
    pub fn costs(&self, a: &Assignment) -> Result<(CostBreakdown, f64)> {
        let bd = self.inst.evaluate(a)?;
        let acc = crate::objective::accuracy_term(a, self.profile)?;
        Ok((bd, acc))
    }

    /// Same verdict and violation as the full report, without building it.
    pub fn score(&self, a: Assignment) -> Result<Scored> {
        let bd = self.inst.evaluate(&a)?;
        let mut violation = 0.0;
        let mut feasible = true;
        let mut excess = |shortfall: f64, limit: f64| {
            if shortfall > 0.0 {
                feasible = false;
                violation += if limit.is_finite() && limit > 0.0 {
                    shortfall / limit
                } else {
                    shortfall
                };
            }
        };
        for (i, d) in self.inst.fleet.iter().enumerate() {
            excess(bd.memory[i] - d.memory_cap, d.memory_cap);
            excess(bd.compute[i] - d.compute_cap, d.compute_cap);
            excess(bd.energy[i] - d.energy_cap, d.energy_cap);
        }
        let threshold = self.weights.threshold;
        let mut acc_mean = 0.0;
        for r in 0..a.requests() {
            let acc = self
                .profile
                .g_lookup(a.keep_vector(r))
                .ok_or_else(|| Error::UnprofiledDropSet {
                    request: r + 1,
                    drop_set: a.drop_set(r).to_string(),
                })?;
            acc_mean = crate::objective::running_mean(acc_mean, acc, r);
            excess(threshold - acc, threshold);
        }
        let covered = (0..a.requests()).all(|r| (0..a.blocks()).all(|j| !a.keep(r, j) || a.host_count(r, j) == 1));
        let acc = if a.requests() == 0 {
            self.profile.baseline()
        } else {
            acc_mean
        };
        Ok(Scored {
            objective: objective_value(bd.total_latency, a.requests(), acc, self.weights),
            latency: bd.total_latency,
            violation,
            feasible: feasible && covered,
            assignment: a,
        })
    }

    pub fn report(&self, a: &Assignment, bd: &CostBreakdown) -> FeasibilityReport {
        report_from_costs(
            a,
            self.inst,
            bd,
            self.profile,
            self.weights.threshold,
            CoverageMode::Strict,
            CoverageScope::KeptOnly,
        )
    }

    pub fn finish(&self, best: Scored, evaluations: u64, wall_time: Duration) -> Result<SolveResult> {
        let (bd, _) = self.costs(&best.assignment)?;
        let report = self.report(&best.assignment, &bd);
        Ok(SolveResult {
            objective: best.objective,
            feasible: report.passed(),
            report,
            assignment: best.assignment,
            evaluations,
            wall_time,
        })
    }
}

/// Rejects instances that no assignment can satisfy, using only bounds
/// that hold for every candidate: each block kept under every allowed drop
/// set must fit some single device, and the fleet's summed budgets must
/// cover the cheapest allowed way to serve all requests.
pub fn precheck(inst: &Instance, allowed: &[ProfileEntry]) -> Result<()> {
    if inst.requests == 0 {
        return Ok(());
    }
    let m = inst.n_blocks();
    let costs = inst.costs();
    let p_c = inst.energy.p_compute;
    for j in 0..m {
        if allowed.iter().any(|e| e.drop_set.contains(j + 1)) {
            continue;
        }
        let budgets = [
            ("memory", inst.fleet.iter().any(|d| costs.memory[j] <= d.memory_cap)),
            ("compute", inst.fleet.iter().any(|d| costs.compute[j] <= d.compute_cap)),
            (
                "energy",
                inst.fleet
                    .iter()
                    .any(|d| p_c * costs.compute[j] / d.mult_rate <= d.energy_cap),
            ),
        ];
        let fits = inst.fleet.iter().any(|d| {
            costs.memory[j] <= d.memory_cap
                && costs.compute[j] <= d.compute_cap
                && p_c * costs.compute[j] / d.mult_rate <= d.energy_cap
        });
        if !fits {
            let short: Vec<&str> = budgets.iter().filter(|b| !b.1).map(|b| b.0).collect();
            let why = if short.is_empty() {
                "no single device meets all budgets".to_string()
            } else {
                format!("no device has enough {}", short.join(" or "))
            };
            return Err(Error::InfeasibleInstance(format!(
                "block {} fits on no device: {why}",
                j + 1
            )));
        }
    }
    let kept_sum = |v: &[f64], d: &DropSet| (0..m).filter(|&j| !d.contains(j + 1)).map(|j| v[j]).sum::<f64>();
    let min_over = |v: &[f64]| {
        allowed
            .iter()
            .map(|e| kept_sum(v, &e.drop_set))
            .fold(f64::INFINITY, f64::min)
    };
    let r = inst.requests as f64;
    let fastest = inst.fleet.iter().map(|d| d.mult_rate).fold(0.0, f64::max);
    let checks = [
        (
            "memory",
            r * min_over(&costs.memory),
            inst.fleet.iter().map(|d| d.memory_cap).sum::<f64>(),
        ),
        (
            "compute",
            r * min_over(&costs.compute),
            inst.fleet.iter().map(|d| d.compute_cap).sum::<f64>(),
        ),
        (
            "energy",
            r * p_c * min_over(&costs.compute) / fastest,
            inst.fleet.iter().map(|d| d.energy_cap).sum::<f64>(),
        ),
    ];
    for (what, need, have) in checks {
        if need > have {
            return Err(Error::InfeasibleInstance(format!(
                "{} requests need at least {need:.6e} {what} but the fleet offers {have:.6e}",
                inst.requests
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_resnet50;
    use crate::system::{DeviceSpec, EnergyParams, RateMatrix};

    #[test]
    fn fast_score_matches_full_report() {
        use rand::{Rng, SeedableRng};
        let graph = build_resnet50(224).unwrap().truncated(8).unwrap();
        let profile = AccuracyProfile::synthetic_default(&graph);
        let fleet: Vec<_> = (1..=3)
            .map(|i| DeviceSpec::new(i, 8e6 * i as f64, 4e8 * i as f64, 1.5 * i as f64, 1e9).unwrap())
            .collect();
        let inst = Instance::new(graph, fleet, RateMatrix::uniform(3, 2e7), 2, EnergyParams::default()).unwrap();
        let weights = ObjectiveWeights::new(0.5, 0.5, 2.0, 0.85).unwrap();
        let scorer = Scorer {
            inst: &inst,
            profile: &profile,
            weights: &weights,
        };
        let sets: Vec<DropSet> = profile.entries().map(|e| e.drop_set.clone()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let mut a = inst.blank_assignment();
            for r in 0..2 {
                a.apply_drop_set(r, &sets[rng.random_range(0..sets.len())]);
                for j in 0..8 {
                    for i in 0..3 {
                        a.set_x(r, i, j, rng.random_bool(0.4));
                    }
                }
            }
            let bd = inst.evaluate(&a).unwrap();
            let report = scorer.report(&a, &bd);
            let s = scorer.score(a).unwrap();
            assert_eq!(s.feasible, report.passed());
            assert!((s.violation - report.violation()).abs() <= 1e-12 * (1.0 + s.violation));
        }
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let odd = GaConfig {
            population: 7,
            ..GaConfig::default()
        };
        assert!(odd.validate().is_err());
        let rate = GaConfig {
            crossover_rate: 1.5,
            ..GaConfig::default()
        };
        assert!(rate.validate().is_err());
        let pen = GaConfig {
            penalty_weight: 0.0,
            ..GaConfig::default()
        };
        assert!(pen.validate().is_err());
    }

    #[test]
    fn precheck_flags_hopeless_fleets() {
        let graph = build_resnet50(224).unwrap();
        let profile = AccuracyProfile::synthetic_default(&graph);
        let allowed = profile.allowed_drop_sets(0.8).unwrap();
        let tiny = vec![DeviceSpec::new(1, 1e3, 1e12, 1e12, 1e9).unwrap()];
        let inst = Instance::new(
            graph.clone(),
            tiny,
            RateMatrix::uniform(1, 1e7),
            1,
            EnergyParams::default(),
        )
        .unwrap();
        assert!(matches!(precheck(&inst, &allowed), Err(Error::InfeasibleInstance(_))));

        let ok = vec![DeviceSpec::unlimited(1, 1e9)];
        let inst = Instance::new(
            graph.clone(),
            ok,
            RateMatrix::uniform(1, 1e7),
            3,
            EnergyParams::default(),
        )
        .unwrap();
        assert!(precheck(&inst, &allowed).is_ok());

        let starved: Vec<_> = (1..=2)
            .map(|i| DeviceSpec::new(i, 1e12, 1e9, 1e12, 1e9).unwrap())
            .collect();
        let inst = Instance::new(graph, starved, RateMatrix::uniform(2, 1e7), 1, EnergyParams::default()).unwrap();
        let err = precheck(&inst, &allowed).unwrap_err();
        assert!(err.to_string().contains("compute"), "{err}");
    }
}
