//! Device fleet, inter-device data rates and request arrivals.

use rand::Rng;
use rand_distr::{Distribution, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One device's per-round budgets. Ids are 1-based; infinite budgets are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: usize,
    /// Bytes.
    pub memory_cap: f64,
    /// Multiplications per round.
    pub compute_cap: f64,
    /// Joules per round.
    pub energy_cap: f64,
    /// Multiplications per second.
    pub mult_rate: f64,
}

impl DeviceSpec {
    pub fn new(device_id: usize, memory_cap: f64, compute_cap: f64, energy_cap: f64, mult_rate: f64) -> Result<Self> {
        let d = Self {
            device_id,
            memory_cap,
            compute_cap,
            energy_cap,
            mult_rate,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let budgets = [self.memory_cap, self.compute_cap, self.energy_cap, self.mult_rate];
        if budgets.iter().any(|b| b.is_nan() || *b <= 0.0) {
            return Err(Error::Config(format!(
                "device {} budgets must be positive: {self:?}",
                self.device_id
            )));
        }
        if !self.mult_rate.is_finite() {
            return Err(Error::Config(format!(
                "device {} multiplication rate must be finite",
                self.device_id
            )));
        }
        Ok(())
    }

    /// A device with no binding budget, for abundance experiments.
    pub fn unlimited(device_id: usize, mult_rate: f64) -> Self {
        Self {
            device_id,
            memory_cap: f64::INFINITY,
            compute_cap: f64::INFINITY,
            energy_cap: f64::INFINITY,
            mult_rate,
        }
    }
}

/// Symmetric-or-not matrix of link rates in bits per second. The diagonal
/// is never read: co-located transfers cost nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    n: usize,
    rho: Vec<f64>,
    pub round: usize,
}

impl RateMatrix {
    /// Same rate on every link.
    pub fn uniform(n: usize, rate: f64) -> Self {
        let mut rho = vec![rate; n * n];
        for i in 0..n {
            rho[i * n + i] = 0.0;
        }
        Self { n, rho, round: 0 }
    }

    /// Builds from a row-major n×n table; the diagonal is ignored.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut rho = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    what: "rate matrix row",
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, r) in row.into_iter().enumerate() {
                if i != j && (r.is_nan() || r <= 0.0) {
                    return Err(Error::Config(format!("rate {i}->{j} must be positive")));
                }
                rho.push(if i == j { 0.0 } else { r });
            }
        }
        Ok(Self { n, rho, round: 0 })
    }

    pub fn n_devices(&self) -> usize {
        self.n
    }

    /// ρ between 0-based device indices.
    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rho[from * self.n + to]
    }

    pub fn set(&mut self, from: usize, to: usize, rate: f64) {
        self.rho[from * self.n + to] = rate;
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn min_rate(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    min = min.min(self.get(i, j));
                }
            }
        }
        min
    }
}

/// Draws every off-diagonal rate independently from U[lo, hi].
pub fn sample_rates<R: Rng + ?Sized>(
    n: usize,
    lo: f64,
    hi: f64,
    symmetric: bool,
    round: usize,
    rng: &mut R,
) -> Result<RateMatrix> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::Config(format!(
            "rate bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
        )));
    }
    let mut m = RateMatrix {
        n,
        rho: vec![0.0; n * n],
        round,
    };
    let dist = Uniform::new_inclusive(lo, hi).map_err(|e| Error::Config(e.to_string()))?;
    let draw = |rng: &mut R| if lo == hi { lo } else { dist.sample(rng) };
    for i in 0..n {
        for j in 0..n {
            if i == j || (symmetric && j < i) {
                continue;
            }
            let r = draw(rng);
            m.set(i, j, r);
            if symmetric {
                m.set(j, i, r);
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestBatch {
    pub round: usize,
    pub count: usize,
}

/// Number of inference requests in a round, Poisson(λ).
pub fn sample_requests<R: Rng + ?Sized>(lambda: f64, round: usize, rng: &mut R) -> Result<RequestBatch> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "arrival rate must be finite and >= 0, got {lambda}"
        )));
    }
    let count = if lambda == 0.0 {
        0
    } else {
        let poisson = Poisson::new(lambda).map_err(|e| Error::Config(e.to_string()))?;
        poisson.sample(rng) as usize
    };
    Ok(RequestBatch { round, count })
}

/// Power draw while computing and while transmitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Watts.
    pub p_compute: f64,
    /// Watts.
    pub p_transmit: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            p_compute: 8.0,
            p_transmit: 10.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if self.p_compute > 0.0 && self.p_transmit > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("power draws must be positive: {self:?}")))
        }
    }
}
