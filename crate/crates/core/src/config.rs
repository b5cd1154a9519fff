//! TOML scenario configuration.
//!
//! ```toml
//! [model]                 # optional
//! input_side = 224
//! memory_mode = "inputs"  # inputs | weights | both
//!
//! [profile]               # optional; omit `path` for the built-in synthetic profile
//! path = "profiles/synthetic-default.toml"
//!
//! [[fleet.tiers]]         # or [[fleet.devices]] without `count`
//! count = 5
//! memory_bytes = 100e6
//! compute_mults = 1.4e9
//! energy_j = 800.0
//! mult_rate = 1.4e9       # multiplications per second
//!
//! [network]
//! rate_lo_bps = 7.2e6
//! rate_hi_bps = 72.2e6
//! symmetric = true
//!
//! [weights]
//! alpha = 0.5
//! beta = 0.5
//! threshold = 0.8
//! latency_ref_s = 10.0    # optional; derived from the fleet when absent
//!
//! [energy]
//! p_compute_w = 8.0
//! p_transmit_w = 10.0
//! accounting = "per_event" # or literal_sum
//!
//! [solver]                # genetic algorithm settings, all optional
//! population = 100
//! generations = 200
//!
//! [scenario]
//! seed = 1                # required
//! lambda = 3.0
//! rounds = 10
//!
//! [solve]                 # optional, used by single-instance solving
//! round = 0
//! requests = 3            # fixed batch size instead of a Poisson draw
//!
//! [sweep]                 # optional
//! axis = "lambda"         # weights | energy | lambda | compute
//! values = [1.0, 3.0, 5.0]
//! ```
//!
//! Budgets accept `inf`. Energy and compute axis values are either one
//! number for every device or a list with one entry per tier (or device).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::EnergyAccounting;
use crate::error::{Error, Result};
use crate::graph::{build_resnet50, MemoryMode};
use crate::objective::{default_latency_ref, ObjectiveWeights};
use crate::profile::AccuracyProfile;
use crate::sim::{Scenario, SweepPoint};
use crate::solver::GaConfig;
use crate::system::{DeviceSpec, EnergyParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub profile: ProfileSection,
    pub fleet: FleetSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub solver: GaConfig,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub input_side: u32,
    pub memory_mode: MemoryMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            input_side: 224,
            memory_mode: MemoryMode::Inputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEntry {
    pub memory_bytes: f64,
    pub compute_mults: f64,
    pub energy_j: f64,
    pub mult_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierEntry {
    pub count: usize,
    pub memory_bytes: f64,
    pub compute_mults: f64,
    pub energy_j: f64,
    pub mult_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetSection {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tiers: Vec<TierEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub devices: Vec<DeviceEntry>,
}

impl FleetSection {
    /// Device list with ids assigned in order.
    pub fn devices(&self) -> Result<Vec<DeviceSpec>> {
        let entries = self.expanded()?;
        entries
            .iter()
            .enumerate()
            .map(|(k, d)| DeviceSpec::new(k + 1, d.memory_bytes, d.compute_mults, d.energy_j, d.mult_rate))
            .collect()
    }

    /// Tier index of every device (devices listed individually are their own tier).
    fn groups(&self) -> Vec<usize> {
        if self.tiers.is_empty() {
            (0..self.devices.len()).collect()
        } else {
            self.tiers
                .iter()
                .enumerate()
                .flat_map(|(t, tier)| std::iter::repeat_n(t, tier.count))
                .collect()
        }
    }

    fn expanded(&self) -> Result<Vec<DeviceEntry>> {
        match (self.tiers.is_empty(), self.devices.is_empty()) {
            (false, true) => Ok(self
                .tiers
                .iter()
                .flat_map(|t| {
                    std::iter::repeat_n(
                        DeviceEntry {
                            memory_bytes: t.memory_bytes,
                            compute_mults: t.compute_mults,
                            energy_j: t.energy_j,
                            mult_rate: t.mult_rate,
                        },
                        t.count,
                    )
                })
                .collect()),
            (true, false) => Ok(self.devices.clone()),
            (true, true) => Err(Error::Config("fleet needs either tiers or devices".into())),
            (false, false) => Err(Error::Config("fleet takes tiers or devices, not both".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub rate_lo_bps: f64,
    pub rate_hi_bps: f64,
    pub symmetric: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            rate_lo_bps: 7.2e6,
            rate_hi_bps: 72.2e6,
            symmetric: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_ref_s: Option<f64>,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            threshold: 0.8,
            latency_ref_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub p_compute_w: f64,
    pub p_transmit_w: f64,
    pub accounting: EnergyAccounting,
}

impl Default for EnergySection {
    fn default() -> Self {
        let p = EnergyParams::default();
        Self {
            p_compute_w: p.p_compute,
            p_transmit_w: p.p_transmit,
            accounting: EnergyAccounting::PerEvent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub seed: u64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
}

fn default_lambda() -> f64 {
    3.0
}

fn default_rounds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub round: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requests: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Weights,
    Energy,
    Lambda,
    Compute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Scalar(f64),
    List(Vec<f64>),
}

impl AxisValue {
    fn numbers(&self) -> Vec<f64> {
        match self {
            AxisValue::Scalar(v) => vec![*v],
            AxisValue::List(v) => v.clone(),
        }
    }

    /// Label used in sweep tables, e.g. `3`, `0.7;0.3` or `1.4e9;2.8e9`.
    pub fn label(&self) -> String {
        let fmt = |v: &f64| {
            if v.abs() >= 1e6 {
                format!("{v:e}")
            } else {
                v.to_string()
            }
        };
        self.numbers().iter().map(fmt).collect::<Vec<_>>().join(";")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<AxisValue>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, applies `key=value` overrides (dotted keys,
    /// TOML values, bare words taken as strings) and makes the profile path
    /// absolute relative to the config file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg = Self::from_table(table)?;
        if let Some(p) = cfg.profile.path.as_mut() {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                let joined = base.join(&*p);
                *p = std::fs::canonicalize(&joined)
                    .map_err(|e| Error::Config(format!("profile {}: {e}", joined.display())))?;
            }
        }
        Ok(cfg)
    }

    /// The configuration with every default spelled out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet.devices()?;
        self.solver.validate()?;
        if self.scenario.rounds == 0 {
            return Err(Error::Config("scenario.rounds must be at least 1".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep.values is empty".into()));
            }
            for v in &s.values {
                if v.numbers().is_empty() || v.numbers().iter().any(|x| x.is_nan()) {
                    return Err(Error::Config(format!(
                        "sweep value {v:?} must be non-empty and numeric"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load_profile(&self, graph: &crate::graph::ResNetGraph) -> Result<AccuracyProfile> {
        match &self.profile.path {
            Some(p) => AccuracyProfile::load(p, graph, self.model.memory_mode),
            None => Ok(AccuracyProfile::synthetic_default(graph)),
        }
    }

    /// The base scenario (sweep section ignored).
    pub fn scenario(&self) -> Result<Scenario> {
        let graph = build_resnet50(self.model.input_side)?;
        let profile = self.load_profile(&graph)?;
        let fleet = self.fleet.devices()?;
        let latency_ref = match self.weights.latency_ref_s {
            Some(v) => v,
            None => default_latency_ref(&graph, &fleet, self.network.rate_lo_bps),
        };
        let s = Scenario {
            weights: ObjectiveWeights::new(
                self.weights.alpha,
                self.weights.beta,
                latency_ref,
                self.weights.threshold,
            )?,
            graph,
            profile,
            fleet,
            rate_bounds: (self.network.rate_lo_bps, self.network.rate_hi_bps),
            symmetric_rates: self.network.symmetric,
            lambda: self.scenario.lambda,
            rounds: self.scenario.rounds,
            energy: EnergyParams {
                p_compute: self.energy.p_compute_w,
                p_transmit: self.energy.p_transmit_w,
            },
            accounting: self.energy.accounting,
            memory_mode: self.model.memory_mode,
            solver: self.solver.clone(),
            seed: self.scenario.seed,
        };
        s.validate()?;
        Ok(s)
    }

    /// One scenario per sweep value, all sharing the base seed.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
        sweep
            .values
            .iter()
            .map(|v| {
                let cfg = self.with_axis_value(sweep.axis, v)?;
                Ok(SweepPoint {
                    label: v.label(),
                    scenario: cfg.scenario()?,
                })
            })
            .collect()
    }

    /// A copy with one axis value applied.
    pub fn with_axis_value(&self, axis: SweepAxis, value: &AxisValue) -> Result<Config> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        let nums = value.numbers();
        match axis {
            SweepAxis::Lambda => match value {
                AxisValue::Scalar(l) => cfg.scenario.lambda = *l,
                AxisValue::List(_) => return Err(Error::Config("lambda sweep values must be numbers".into())),
            },
            SweepAxis::Weights => {
                if !(nums.len() == 2 || nums.len() == 3) {
                    return Err(Error::Config(format!(
                        "weights sweep values are [alpha, beta] or [alpha, beta, threshold], got {nums:?}"
                    )));
                }
                cfg.weights.alpha = nums[0];
                cfg.weights.beta = nums[1];
                if let Some(t) = nums.get(2) {
                    cfg.weights.threshold = *t;
                }
            }
            SweepAxis::Energy => cfg.set_per_group(&nums, |d, v| d.energy_j = v, |t, v| t.energy_j = v)?,
            SweepAxis::Compute => cfg.set_per_group(&nums, |d, v| d.compute_mults = v, |t, v| t.compute_mults = v)?,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_per_group(
        &mut self,
        nums: &[f64],
        dev: fn(&mut DeviceEntry, f64),
        tier: fn(&mut TierEntry, f64),
    ) -> Result<()> {
        let groups = self.fleet.groups().iter().max().map_or(0, |g| g + 1);
        let pick = |k: usize| {
            if nums.len() == 1 {
                Ok(nums[0])
            } else if nums.len() == groups {
                Ok(nums[k])
            } else {
                Err(Error::Config(format!(
                    "expected 1 or {groups} values, got {}",
                    nums.len()
                )))
            }
        };
        for (k, t) in self.fleet.tiers.iter_mut().enumerate() {
            tier(t, pick(k)?);
        }
        for (k, d) in self.fleet.devices.iter_mut().enumerate() {
            dev(d, pick(k)?);
        }
        Ok(())
    }
}

/// Sets a dotted key in a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[[fleet.tiers]]
count = 2
memory_bytes = 100e6
compute_mults = 1.4e9
energy_j = 800.0
mult_rate = 1.4e9

[[fleet.tiers]]
count = 1
memory_bytes = inf
compute_mults = 2.8e9
energy_j = 1000.0
mult_rate = 2.8e9

[scenario]
seed = 7
"#;

    #[test]
    fn defaults_fill_in() {
        let c = Config::parse(BASE).unwrap();
        assert_eq!(c.scenario.rounds, 10);
        assert_eq!(c.scenario.lambda, 3.0);
        assert_eq!(c.solver, GaConfig::default());
        let devs = c.fleet.devices().unwrap();
        assert_eq!(devs.len(), 3);
        assert_eq!(devs[2].device_id, 3);
        assert!(devs[2].memory_cap.is_infinite());
        let s = c.scenario().unwrap();
        assert!(s.weights.latency_ref > 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{BASE}\n[weights]\nalpha = 0.5\nbeta = 0.5\ngamma = 1.0\n");
        assert!(matches!(Config::parse(&text), Err(Error::Config(_))));
        assert!(Config::parse(&format!("{BASE}\n[bogus]\nx = 1\n")).is_err());
    }

    #[test]
    fn seed_is_required() {
        let text = BASE.replace("seed = 7", "lambda = 2.0");
        assert!(Config::parse(&text).is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let c = Config::parse(&format!(
            "{BASE}\n[sweep]\naxis = \"weights\"\nvalues = [[1.0, 0.0], [0.5, 0.5, 0.85]]\n"
        ))
        .unwrap();
        let dumped = c.to_toml().unwrap();
        assert_eq!(Config::parse(&dumped).unwrap(), c);
    }

    #[test]
    fn overrides() {
        let mut t: toml::Table = BASE.parse().unwrap();
        apply_override(&mut t, "weights.alpha=1.0").unwrap();
        apply_override(&mut t, "weights.beta = 0").unwrap();
        apply_override(&mut t, "model.memory_mode=both").unwrap();
        apply_override(&mut t, "scenario.seed=99").unwrap();
        let c = Config::from_table(t).unwrap();
        assert_eq!(c.weights.alpha, 1.0);
        assert_eq!(c.weights.beta, 0.0);
        assert_eq!(c.model.memory_mode, MemoryMode::Both);
        assert_eq!(c.scenario.seed, 99);
        let mut t: toml::Table = BASE.parse().unwrap();
        assert!(apply_override(&mut t, "no_equals").is_err());
        assert!(apply_override(&mut t, "scenario.seed.x=1").is_err());
    }

    #[test]
    fn sweep_axes_apply() {
        let c = Config::parse(BASE).unwrap();
        let e = c
            .with_axis_value(SweepAxis::Energy, &AxisValue::List(vec![10.0, 20.0]))
            .unwrap();
        let devs = e.fleet.devices().unwrap();
        assert_eq!(
            (devs[0].energy_cap, devs[1].energy_cap, devs[2].energy_cap),
            (10.0, 10.0, 20.0)
        );
        let all = c.with_axis_value(SweepAxis::Compute, &AxisValue::Scalar(5e9)).unwrap();
        assert!(all.fleet.devices().unwrap().iter().all(|d| d.compute_cap == 5e9));
        assert!(c
            .with_axis_value(SweepAxis::Energy, &AxisValue::List(vec![1.0, 2.0, 3.0]))
            .is_err());
        let l = c.with_axis_value(SweepAxis::Lambda, &AxisValue::Scalar(5.0)).unwrap();
        assert_eq!(l.scenario.lambda, 5.0);
        let w = c
            .with_axis_value(SweepAxis::Weights, &AxisValue::List(vec![0.7, 0.3, 0.85]))
            .unwrap();
        assert_eq!((w.weights.alpha, w.weights.threshold), (0.7, 0.85));
        assert_eq!(AxisValue::List(vec![0.7, 0.3]).label(), "0.7;0.3");
        assert_eq!(AxisValue::List(vec![0.7e9, 1.4e9]).label(), "7e8;1.4e9");
    }

    #[test]
    fn sweep_points_share_the_seed() {
        let c = Config::parse(&format!(
            "{BASE}\n[sweep]\naxis = \"lambda\"\nvalues = [1.0, 3.0, 5.0]\n"
        ))
        .unwrap();
        let pts = c.sweep_points().unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| p.scenario.seed == 7));
        assert_eq!(pts[2].label, "5");
    }
}
