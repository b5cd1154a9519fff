//! Weighted latency/accuracy objective and per-constraint feasibility checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::cost::{CostBreakdown, Instance};
use crate::error::{Error, Result};
use crate::profile::AccuracyProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Seconds; divides per-request latency to make it dimensionless.
    pub latency_ref: f64,
    /// Minimum per-request accuracy.
    pub threshold: f64,
}

impl ObjectiveWeights {
    pub fn new(alpha: f64, beta: f64, latency_ref: f64, threshold: f64) -> Result<Self> {
        let w = Self {
            alpha,
            beta,
            latency_ref,
            threshold,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha)
            || !(0.0..=1.0).contains(&self.beta)
            || (self.alpha + self.beta - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "weights must lie in [0, 1] and sum to 1, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.latency_ref > 0.0 && self.latency_ref.is_finite()) {
            return Err(Error::Config(format!(
                "latency_ref must be positive, got {}",
                self.latency_ref
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Worst-case latency of one request: the whole network on the slowest
/// device, with every block boundary crossing a link at the lowest rate.
pub fn default_latency_ref(
    inst_graph: &crate::graph::ResNetGraph,
    fleet: &[crate::system::DeviceSpec],
    rate_lo: f64,
) -> f64 {
    let slowest = fleet.iter().map(|d| d.mult_rate).fold(f64::INFINITY, f64::min);
    let m = inst_graph.len();
    let compute: f64 = (1..=m).map(|j| inst_graph.compute_load(j) as f64).sum();
    let transfer: f64 = (1..m).map(|j| inst_graph.output_bits(j) as f64).sum();
    compute / slowest + transfer / rate_lo
}

/// Mean per-request accuracy. An empty round scores the baseline.
pub fn accuracy_term(a: &Assignment, profile: &AccuracyProfile) -> Result<f64> {
    let r = a.requests();
    if r == 0 {
        return Ok(profile.baseline());
    }
    let mut mean = 0.0;
    for req in 0..r {
        let acc = profile
            .g_lookup(a.keep_vector(req))
            .ok_or_else(|| Error::UnprofiledDropSet {
                request: req + 1,
                drop_set: a.drop_set(req).to_string(),
            })?;
        mean = running_mean(mean, acc, req);
    }
    Ok(mean)
}

/// Folds the `k`-th value (0-based) into a mean. Exact when every value is
/// the same, which a plain sum-then-divide is not.
pub(crate) fn running_mean(mean: f64, value: f64, k: usize) -> f64 {
    mean + (value - mean) / (k + 1) as f64
}

/// α·(T_L / (R·latency_ref)) + β·(1 − Acc); lower is better.
pub fn objective_value(total_latency: f64, requests: usize, accuracy: f64, weights: &ObjectiveWeights) -> f64 {
    let latency_term = if requests == 0 {
        0.0
    } else {
        total_latency / (requests as f64 * weights.latency_ref)
    };
    weights.alpha * latency_term + weights.beta * (1.0 - accuracy)
}

pub fn objective(
    a: &Assignment,
    inst: &Instance,
    profile: &AccuracyProfile,
    weights: &ObjectiveWeights,
) -> Result<f64> {
    let acc = accuracy_term(a, profile)?;
    let bd = inst.evaluate(a)?;
    Ok(objective_value(bd.total_latency, a.requests(), acc, weights))
}

/// How one-host-per-block coverage is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// Exactly one host.
    #[default]
    Strict,
    /// At least one host.
    Relaxed,
}

/// Which blocks the coverage constraint applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageScope {
    #[default]
    KeptOnly,
    /// Dropped blocks need a host too.
    AllBlocks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Memory,
    Compute,
    Energy,
    Coverage,
    Accuracy,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Memory => "memory",
            ConstraintKind::Compute => "compute",
            ConstraintKind::Energy => "energy",
            ConstraintKind::Coverage => "coverage",
            ConstraintKind::Accuracy => "accuracy",
        })
    }
}

/// The concrete device, request or block a check is about (1-based ids).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Device(usize),
    Request(usize),
    Block { request: usize, block: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub kind: ConstraintKind,
    pub witness: Witness,
    pub used: f64,
    pub limit: f64,
    /// `limit − used` for budgets; negative means violated.
    pub margin: f64,
    pub passed: bool,
}

impl ConstraintCheck {
    /// Violation relative to the limit; zero when satisfied.
    pub fn relative_violation(&self) -> f64 {
        if self.passed {
            return 0.0;
        }
        let excess = -self.margin;
        if self.limit.is_finite() && self.limit > 0.0 {
            excess / self.limit
        } else {
            excess
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Sum of relative violations over budget and accuracy constraints.
    pub fn violation(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.kind != ConstraintKind::Coverage)
            .map(ConstraintCheck::relative_violation)
            .sum()
    }

    pub fn count_failures(&self, kind: ConstraintKind) -> usize {
        self.failures().filter(|c| c.kind == kind).count()
    }
}

fn budget_check(kind: ConstraintKind, device: usize, used: f64, limit: f64) -> ConstraintCheck {
    ConstraintCheck {
        kind,
        witness: Witness::Device(device + 1),
        used,
        limit,
        margin: limit - used,
        passed: used <= limit,
    }
}

/// Builds the report from an already computed cost breakdown.
pub fn report_from_costs(
    a: &Assignment,
    inst: &Instance,
    bd: &CostBreakdown,
    profile: &AccuracyProfile,
    threshold: f64,
    coverage: CoverageMode,
    scope: CoverageScope,
) -> FeasibilityReport {
    let mut checks = Vec::new();
    for (i, d) in inst.fleet.iter().enumerate() {
        checks.push(budget_check(ConstraintKind::Memory, i, bd.memory[i], d.memory_cap));
        checks.push(budget_check(ConstraintKind::Compute, i, bd.compute[i], d.compute_cap));
        checks.push(budget_check(ConstraintKind::Energy, i, bd.energy[i], d.energy_cap));
    }
    for r in 0..a.requests() {
        for j in 0..a.blocks() {
            if scope == CoverageScope::KeptOnly && !a.keep(r, j) {
                continue;
            }
            let count = a.host_count(r, j) as f64;
            let (margin, passed) = match coverage {
                CoverageMode::Strict => (-(count - 1.0).abs(), count == 1.0),
                CoverageMode::Relaxed => (count - 1.0, count >= 1.0),
            };
            checks.push(ConstraintCheck {
                kind: ConstraintKind::Coverage,
                witness: Witness::Block {
                    request: r + 1,
                    block: j + 1,
                },
                used: count,
                limit: 1.0,
                margin,
                passed,
            });
        }
    }
    for r in 0..a.requests() {
        let acc = profile.g_lookup(a.keep_vector(r));
        let used = acc.unwrap_or(0.0);
        checks.push(ConstraintCheck {
            kind: ConstraintKind::Accuracy,
            witness: Witness::Request(r + 1),
            used,
            limit: threshold,
            margin: used - threshold,
            passed: acc.is_some_and(|v| v >= threshold),
        });
    }
    FeasibilityReport { checks }
}

/// Evaluates the memory, compute and energy budgets per device, coverage per
/// (request, block) and the accuracy threshold per request.
pub fn check_constraints(
    a: &Assignment,
    inst: &Instance,
    profile: &AccuracyProfile,
    weights: &ObjectiveWeights,
    coverage: CoverageMode,
    scope: CoverageScope,
) -> Result<FeasibilityReport> {
    let bd = inst.evaluate(a)?;
    Ok(report_from_costs(
        a,
        inst,
        &bd,
        profile,
        weights.threshold,
        coverage,
        scope,
    ))
}
