use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Scored, Scorer, SolveResult};
use crate::assignment::Assignment;
use crate::cost::Instance;
use crate::error::{Error, Result};
use crate::objective::ObjectiveWeights;
use crate::profile::{AccuracyProfile, ProfileEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactLimits {
    pub max_evaluations: u64,
}

impl Default for ExactLimits {
    fn default() -> Self {
        Self {
            max_evaluations: 1_000_000,
        }
    }
}

/// Number of candidates the exhaustive search visits:
/// (Σ over allowed sets of N^(kept blocks))^R, saturating.
pub fn enumeration_size(n: usize, m: usize, requests: usize, allowed: &[ProfileEntry]) -> u128 {
    let per_request = allowed
        .iter()
        .map(|e| {
            (n as u128)
                .checked_pow((m - e.drop_set.len()) as u32)
                .unwrap_or(u128::MAX)
        })
        .fold(0u128, |acc, v| acc.saturating_add(v));
    let mut total: u128 = 1;
    for _ in 0..requests {
        total = total.saturating_mul(per_request);
    }
    total
}

/// Visits every allowed drop set per request and every single-host placement
/// of the kept blocks, returning the best strictly feasible candidate (or the
/// least violating one when none is feasible).
pub fn solve_exact(
    inst: &Instance,
    weights: &ObjectiveWeights,
    profile: &AccuracyProfile,
    limits: &ExactLimits,
) -> Result<SolveResult> {
    let start = Instant::now();
    weights.validate()?;
    let allowed = profile.allowed_drop_sets(weights.threshold)?;
    let (n, m, requests) = (inst.n_devices(), inst.n_blocks(), inst.requests);
    let size = enumeration_size(n, m, requests, &allowed);
    if size > limits.max_evaluations as u128 {
        return Err(Error::InstanceTooLarge {
            size,
            limit: limits.max_evaluations,
        });
    }
    let scorer = Scorer { inst, profile, weights };

    // every (drop set, placement) option for a single request
    let mut options: Vec<Vec<Option<usize>>> = Vec::new();
    for e in &allowed {
        let kept: Vec<usize> = (0..m).filter(|&j| !e.drop_set.contains(j + 1)).collect();
        let mut digits = vec![0usize; kept.len()];
        loop {
            let mut row = vec![None; m];
            for (k, &j) in kept.iter().enumerate() {
                row[j] = Some(digits[k]);
            }
            options.push(row);
            if !advance(&mut digits, n) {
                break;
            }
        }
    }

    let mut choice = vec![0usize; requests];
    let mut best: Option<Scored> = None;
    let mut evaluations = 0u64;
    loop {
        let rows: Vec<Vec<Option<usize>>> = choice.iter().map(|&c| options[c].clone()).collect();
        let a = if requests == 0 {
            inst.blank_assignment()
        } else {
            Assignment::from_hosts(n, m, &rows)?
        };
        let s = scorer.score(a)?;
        evaluations += 1;
        if best.as_ref().is_none_or(|b| s.better_than(b)) {
            best = Some(s);
        }
        if !advance(&mut choice, options.len()) {
            break;
        }
    }
    scorer.finish(best.expect("at least one candidate"), evaluations, start.elapsed())
}

/// Mixed-radix increment; false once every digit wrapped.
fn advance(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}
