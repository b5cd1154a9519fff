//! Reduces a multi-covered placement to one host per kept block by following
//! the chain of previously chosen devices.

use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::system::{DeviceSpec, RateMatrix};

/// For each request, scans kept blocks in order with the previously chosen
/// device `dvc`: keep `dvc` if it hosts the block, else the host with the
/// highest rate from `dvc`, else (first block) the host with the highest
/// multiplication rate. Ties go to the lowest device id. Dropped blocks are
/// skipped and left untouched; `y` never changes.
pub fn repair_allocation(a: &Assignment, rates: &RateMatrix, fleet: &[DeviceSpec]) -> Result<Assignment> {
    let mut out = a.clone();
    repair_in_place(&mut out, rates, fleet)?;
    Ok(out)
}

pub fn repair_in_place(a: &mut Assignment, rates: &RateMatrix, fleet: &[DeviceSpec]) -> Result<()> {
    let n = a.devices();
    if fleet.len() != n || rates.n_devices() != n {
        return Err(Error::LengthMismatch {
            what: "fleet",
            expected: n,
            got: fleet.len().min(rates.n_devices()),
        });
    }
    for r in 0..a.requests() {
        let mut dvc: Option<usize> = None;
        for j in 0..a.blocks() {
            if !a.keep(r, j) {
                continue;
            }
            let chosen = choose(a, r, j, dvc, rates, fleet).ok_or(Error::UncoveredBlock {
                request: r + 1,
                block: j + 1,
            })?;
            for i in 0..n {
                a.set_x(r, i, j, i == chosen);
            }
            dvc = Some(chosen);
        }
    }
    Ok(())
}

fn choose(
    a: &Assignment,
    r: usize,
    j: usize,
    dvc: Option<usize>,
    rates: &RateMatrix,
    fleet: &[DeviceSpec],
) -> Option<usize> {
    if let Some(d) = dvc {
        if a.x(r, d, j) {
            return Some(d);
        }
    }
    let score = |i: usize| match dvc {
        Some(d) => rates.get(d, i),
        None => fleet[i].mult_rate,
    };
    // strict comparison keeps the lowest index on ties
    let mut best: Option<(usize, f64)> = None;
    for i in a.hosts(r, j) {
        let s = score(i);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}
