//! Latency, energy and traffic accounting for a candidate assignment.
//!
//! A block hosted by several devices is computed by each of them and every
//! host receives the block's inputs; a resolved assignment (one host per
//! kept block) reduces this to the usual single-placement costs.

use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::graph::{effective_edges, BlockSpec, MemoryMode, ResNetGraph};
use crate::system::{DeviceSpec, EnergyParams, RateMatrix};

/// How computation energy is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyAccounting {
    /// Every compute second and every transfer is charged exactly once.
    #[default]
    PerEvent,
    /// Computation energy scaled by N·O, as the nested sum reads when taken
    /// literally. Kept for comparison only.
    LiteralSum,
}

/// Per-block cost vectors (indexed from 0) derived once from the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCosts {
    pub memory: Vec<f64>,
    pub compute: Vec<f64>,
    pub out_bits: Vec<f64>,
}

impl BlockCosts {
    pub fn new(graph: &ResNetGraph, mode: MemoryMode) -> Self {
        let ids = 1..=graph.len();
        Self {
            memory: ids.clone().map(|j| graph.memory_load(j, mode) as f64).collect(),
            compute: ids.clone().map(|j| graph.compute_load(j) as f64).collect(),
            out_bits: ids.map(|j| graph.output_bits(j) as f64).collect(),
        }
    }
}

/// Everything fixed for one optimization round.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: ResNetGraph,
    pub fleet: Vec<DeviceSpec>,
    pub rates: RateMatrix,
    pub requests: usize,
    pub energy: EnergyParams,
    accounting: EnergyAccounting,
    memory_mode: MemoryMode,
    costs: BlockCosts,
}

impl Instance {
    pub fn new(
        graph: ResNetGraph,
        fleet: Vec<DeviceSpec>,
        rates: RateMatrix,
        requests: usize,
        energy: EnergyParams,
    ) -> Result<Self> {
        if fleet.is_empty() {
            return Err(Error::Config("fleet has no devices".into()));
        }
        for (idx, d) in fleet.iter().enumerate() {
            d.validate()?;
            if d.device_id != idx + 1 {
                return Err(Error::Config(format!(
                    "device ids must be contiguous from 1; position {} has id {}",
                    idx + 1,
                    d.device_id
                )));
            }
        }
        if rates.n_devices() != fleet.len() {
            return Err(Error::LengthMismatch {
                what: "rate matrix",
                expected: fleet.len(),
                got: rates.n_devices(),
            });
        }
        energy.validate()?;
        let memory_mode = MemoryMode::default();
        let costs = BlockCosts::new(&graph, memory_mode);
        Ok(Self {
            graph,
            fleet,
            rates,
            requests,
            energy,
            accounting: EnergyAccounting::default(),
            memory_mode,
            costs,
        })
    }

    pub fn with_memory_mode(mut self, mode: MemoryMode) -> Self {
        self.memory_mode = mode;
        self.costs = BlockCosts::new(&self.graph, mode);
        self
    }

    pub fn with_accounting(mut self, accounting: EnergyAccounting) -> Self {
        self.accounting = accounting;
        self
    }

    pub fn memory_mode(&self) -> MemoryMode {
        self.memory_mode
    }

    pub fn accounting(&self) -> EnergyAccounting {
        self.accounting
    }

    pub fn costs(&self) -> &BlockCosts {
        &self.costs
    }

    pub fn n_devices(&self) -> usize {
        self.fleet.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.graph.len()
    }

    /// An all-keep assignment with nothing placed, sized for this instance.
    pub fn blank_assignment(&self) -> Assignment {
        Assignment::empty(self.requests, self.n_devices(), self.n_blocks())
    }

    pub fn check_dims(&self, a: &Assignment) -> Result<()> {
        let expected = (self.requests, self.n_devices(), self.n_blocks());
        let got = (a.requests(), a.devices(), a.blocks());
        if expected != got {
            return Err(Error::Config(format!(
                "assignment dimensions {got:?} do not match instance {expected:?}"
            )));
        }
        Ok(())
    }

    /// Single pass over the assignment producing every cost aggregate.
    pub fn evaluate(&self, a: &Assignment) -> Result<CostBreakdown> {
        self.check_dims(a)?;
        let n = self.n_devices();
        let m = self.n_blocks();
        let mut bd = CostBreakdown::zeros(n);
        let mut transfer_latency = 0.0;

        let mut host_list: Vec<usize> = Vec::with_capacity(m * 2);
        let mut offsets: Vec<usize> = vec![0; m + 1];

        for r in 0..a.requests() {
            let keep = a.keep_vector(r);
            let edges = effective_edges(&self.graph, keep)?;

            host_list.clear();
            for j in 0..m {
                offsets[j] = host_list.len();
                if keep[j] {
                    host_list.extend(a.hosts(r, j));
                }
            }
            offsets[m] = host_list.len();
            let hosts = |j: usize| &host_list[offsets[j]..offsets[j + 1]];

            for j in (0..m).filter(|&j| keep[j]) {
                let c = self.costs.compute[j];
                for &h in hosts(j) {
                    bd.comp_time[h] += c / self.fleet[h].mult_rate;
                    bd.compute[h] += c;
                    bd.memory[h] += self.costs.memory[j];
                    bd.total_computation += c;
                }
            }

            // Edges come sorted by destination; at most a direct and a skip
            // edge share one, and they always share the source as well.
            let mut k = 0;
            while k < edges.len() {
                let dst = edges[k].dst - 1;
                let mut end = k + 1;
                while end < edges.len() && edges[end].dst - 1 == dst {
                    end += 1;
                }
                let group = &edges[k..end];

                let mut incoming: f64 = 0.0;
                for e in group {
                    let src = e.src - 1;
                    let bits = self.costs.out_bits[src];
                    let mut cost = 0.0;
                    for &hs in hosts(src) {
                        for &hd in hosts(dst) {
                            if hs != hd {
                                cost += bits / self.rates.get(hs, hd);
                            }
                        }
                    }
                    incoming = incoming.max(cost);
                }
                transfer_latency += incoming;

                for (g, e) in group.iter().enumerate() {
                    if group[..g].iter().any(|p| p.src == e.src) {
                        continue;
                    }
                    let src = e.src - 1;
                    let bits = self.costs.out_bits[src];
                    for &hs in hosts(src) {
                        for &hd in hosts(dst) {
                            if hs != hd {
                                bd.tx_time[hs] += bits / self.rates.get(hs, hd);
                                bd.shared_bits += bits;
                            }
                        }
                    }
                }
                k = end;
            }
        }

        let comp_factor = match self.accounting {
            EnergyAccounting::PerEvent => 1.0,
            EnergyAccounting::LiteralSum => (n * self.graph.skip.max_skip()) as f64,
        };
        for i in 0..n {
            bd.energy[i] =
                self.energy.p_compute * bd.comp_time[i] * comp_factor + self.energy.p_transmit * bd.tx_time[i];
        }
        bd.total_latency = transfer_latency + bd.comp_time.iter().sum::<f64>();
        Ok(bd)
    }
}

/// Aggregates for one assignment. Per-device vectors are indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub total_latency: f64,
    /// Seconds each device spends computing.
    pub comp_time: Vec<f64>,
    /// Seconds each device spends sending.
    pub tx_time: Vec<f64>,
    pub energy: Vec<f64>,
    /// Bytes.
    pub memory: Vec<f64>,
    /// Multiplications.
    pub compute: Vec<f64>,
    pub shared_bits: f64,
    pub total_computation: f64,
}

impl CostBreakdown {
    fn zeros(n: usize) -> Self {
        Self {
            total_latency: 0.0,
            comp_time: vec![0.0; n],
            tx_time: vec![0.0; n],
            energy: vec![0.0; n],
            memory: vec![0.0; n],
            compute: vec![0.0; n],
            shared_bits: 0.0,
            total_computation: 0.0,
        }
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }
}

/// Seconds for `device` to compute `block`.
pub fn comp_latency(device: &DeviceSpec, block: &BlockSpec) -> f64 {
    crate::graph::compute_load(block) as f64 / device.mult_rate
}

/// Seconds to move a block output of `k_bits` over a link of `rho` bits/s.
pub fn direct_tx_latency(k_bits: f64, rho: f64) -> f64 {
    k_bits / rho
}

/// Like [`direct_tx_latency`], gated by the skip relation.
pub fn skip_tx_latency(k_bits_source: f64, rho: f64, theta: bool) -> f64 {
    if theta {
        k_bits_source / rho
    } else {
        0.0
    }
}

/// Transfer time between two devices; zero when co-located.
pub fn link_latency(k_bits: f64, from: usize, to: usize, rates: &RateMatrix) -> f64 {
    if from == to {
        0.0
    } else {
        direct_tx_latency(k_bits, rates.get(from, to))
    }
}

/// Seconds device `device` (0-based) spends computing its kept blocks.
pub fn device_comp_time(a: &Assignment, device: usize, inst: &Instance) -> f64 {
    let rate = inst.fleet[device].mult_rate;
    let mut t = 0.0;
    for r in 0..a.requests() {
        for j in 0..a.blocks() {
            if a.keep(r, j) && a.x(r, device, j) {
                t += inst.costs.compute[j] / rate;
            }
        }
    }
    t
}

pub fn total_latency(a: &Assignment, inst: &Instance) -> Result<f64> {
    inst.evaluate(a).map(|bd| bd.total_latency)
}

pub fn device_energy(a: &Assignment, device: usize, inst: &Instance) -> Result<f64> {
    inst.evaluate(a).map(|bd| bd.energy[device])
}

/// Bits crossing device boundaries.
pub fn shared_data(a: &Assignment, inst: &Instance) -> Result<f64> {
    inst.evaluate(a).map(|bd| bd.shared_bits)
}

/// Multiplications performed over all kept, hosted blocks.
pub fn total_computation(a: &Assignment, graph: &ResNetGraph) -> f64 {
    let mut total = 0.0;
    for r in 0..a.requests() {
        for j in 0..a.blocks() {
            if a.keep(r, j) {
                total += a.host_count(r, j) as f64 * graph.compute_load(j + 1) as f64;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_resnet50;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn device(id: usize, rate: f64) -> DeviceSpec {
        DeviceSpec::unlimited(id, rate)
    }

    fn instance(m: usize, rates: Vec<f64>, rho: f64, requests: usize) -> Instance {
        let graph = build_resnet50(224).unwrap().truncated(m).unwrap();
        let fleet: Vec<DeviceSpec> = rates.iter().enumerate().map(|(i, &r)| device(i + 1, r)).collect();
        let n = fleet.len();
        Instance::new(
            graph,
            fleet,
            RateMatrix::uniform(n, rho),
            requests,
            EnergyParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn comp_latency_examples() {
        let g = build_resnet50(224).unwrap();
        let d = device(1, 1.4e9);
        assert!(rel(comp_latency(&d, g.block(3)), 218_365_952.0 / 1.4e9) < 1e-15);
        assert!((comp_latency(&d, g.block(3)) - 0.15598).abs() < 5e-6);
        let fast = device(2, 2.8e9);
        assert!(rel(comp_latency(&fast, g.block(3)) * 2.0, comp_latency(&d, g.block(3))) < 1e-15);
        let mut empty = g.block(3).clone();
        empty.layers.clear();
        assert_eq!(comp_latency(&d, &empty), 0.0);
    }

    #[test]
    fn transfer_latency_examples() {
        assert_eq!(direct_tx_latency(25_690_112.0, 25_690_112.0), 1.0);
        assert!((direct_tx_latency(25_690_112.0, 72.2e6) - 0.35582).abs() < 5e-6);
        assert_eq!(direct_tx_latency(0.0, 7.2e6), 0.0);
        assert_eq!(skip_tx_latency(3_211_264.0, 7.2e6, false), 0.0);
        assert!((skip_tx_latency(3_211_264.0, 7.2e6, true) - 0.44601).abs() < 5e-6);
        let rates = RateMatrix::uniform(2, 7.2e6);
        assert_eq!(link_latency(3_211_264.0, 1, 1, &rates), 0.0);
    }

    #[test]
    fn device_comp_time_cases() {
        let inst = instance(4, vec![1.4e9, 2.8e9], 10e6, 1);
        let a = Assignment::from_hosts(2, 4, &[vec![Some(1), Some(0), Some(0), Some(1)]]).unwrap();
        assert_eq!(
            device_comp_time(&a, 0, &inst),
            inst.costs.compute[1] / 1.4e9 + inst.costs.compute[2] / 1.4e9
        );
        let idle = Assignment::from_hosts(2, 4, &[vec![Some(1), Some(1), Some(1), Some(1)]]).unwrap();
        assert_eq!(device_comp_time(&idle, 0, &inst), 0.0);
        let mut dropped = a.clone();
        dropped.set_keep(0, 2, false);
        assert_eq!(device_comp_time(&dropped, 0, &inst), inst.costs.compute[1] / 1.4e9);
    }

    #[test]
    fn single_device_has_no_transfer_terms() {
        let inst = instance(6, vec![2.0e9], 10e6, 1);
        let a = Assignment::from_hosts(1, 6, &[vec![Some(0); 6]]).unwrap();
        let bd = inst.evaluate(&a).unwrap();
        let comp: f64 = inst.costs.compute.iter().map(|c| c / 2.0e9).sum();
        assert!(rel(bd.total_latency, comp) < 1e-12);
        assert_eq!(bd.shared_bits, 0.0);
        assert_eq!(bd.tx_time[0], 0.0);
    }

    #[test]
    fn two_device_split_one_edge() {
        let inst = instance(2, vec![1.0e9, 2.0e9], 20e6, 1);
        let a = Assignment::from_hosts(2, 2, &[vec![Some(0), Some(1)]]).unwrap();
        let bd = inst.evaluate(&a).unwrap();
        let k1 = 56.0 * 56.0 * 64.0 * 32.0;
        let expected = 118_013_952.0 / 1.0e9 + inst.costs.compute[1] / 2.0e9 + k1 / 20e6;
        assert!(rel(bd.total_latency, expected) < 1e-12);
        assert_eq!(bd.shared_bits, k1);
        assert!(rel(bd.energy[0], 8.0 * 118_013_952.0 / 1.0e9 + 10.0 * k1 / 20e6) < 1e-12);
    }

    #[test]
    fn skip_edge_crossing_adds_source_output() {
        let inst = instance(4, vec![1.0e9, 1.0e9], 20e6, 1);
        let kept = Assignment::from_hosts(2, 4, &[vec![Some(0), Some(0), Some(0), Some(1)]]).unwrap();
        let dropped = Assignment::from_hosts(2, 4, &[vec![Some(0), Some(0), None, Some(1)]]).unwrap();
        let bk = inst.evaluate(&kept).unwrap();
        let bdr = inst.evaluate(&dropped).unwrap();
        assert_eq!(bk.shared_bits, inst.costs.out_bits[2]);
        assert_eq!(bdr.shared_bits, inst.costs.out_bits[1]);
    }

    #[test]
    fn energy_examples() {
        let p = EnergyParams::default();
        assert_eq!(p.p_compute * 2.0 + p.p_transmit * 1.0, 26.0);
        let inst = instance(4, vec![1.0e9, 1.0e9], 20e6, 1);
        let a = Assignment::from_hosts(2, 4, &[vec![Some(1); 4]]).unwrap();
        let bd = inst.evaluate(&a).unwrap();
        assert_eq!(bd.energy[0], 0.0);
        assert_eq!(bd.tx_time[1], 0.0);
        assert!(rel(bd.energy[1], 8.0 * bd.comp_time[1]) < 1e-15);
    }

    #[test]
    fn literal_energy_scales_computation() {
        let inst = instance(4, vec![1.0e9, 1.0e9], 20e6, 1);
        let a = Assignment::from_hosts(2, 4, &[vec![Some(0), Some(0), Some(1), Some(1)]]).unwrap();
        let per_event = inst.evaluate(&a).unwrap();
        let literal = inst
            .clone()
            .with_accounting(EnergyAccounting::LiteralSum)
            .evaluate(&a)
            .unwrap();
        let factor = 2.0 * 3.0;
        let expected = 8.0 * per_event.comp_time[0] * factor + 10.0 * per_event.tx_time[0];
        assert!(rel(literal.energy[0], expected) < 1e-12);
    }

    #[test]
    fn total_computation_gating_and_linearity() {
        let g = build_resnet50(224).unwrap();
        let full: f64 = (1..=17).map(|j| g.compute_load(j) as f64).sum();
        let one = Assignment::from_hosts(1, 17, &[vec![Some(0); 17]]).unwrap();
        assert_eq!(total_computation(&one, &g), full);
        let mut dropped = one.clone();
        dropped.set_keep(0, 4, false);
        assert_eq!(total_computation(&dropped, &g), full - g.compute_load(5) as f64);
        let two = Assignment::from_hosts(1, 17, &[vec![Some(0); 17], vec![Some(0); 17]]).unwrap();
        assert_eq!(total_computation(&two, &g), 2.0 * full);
    }

    #[test]
    fn unbridgeable_drop_propagates() {
        let inst = instance(6, vec![1.0e9], 20e6, 1);
        let mut a = Assignment::from_hosts(1, 6, &[vec![Some(0); 6]]).unwrap();
        for j in 1..5 {
            a.set_keep(0, j, false);
        }
        assert!(matches!(inst.evaluate(&a), Err(Error::UnbridgeableDrop { .. })));
    }
}
