use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use super::chromosome::{decode, encode, Dims};
use super::repair::repair_in_place;
use super::{precheck, GaConfig, Scored, Scorer, SolveResult};
use crate::assignment::Assignment;
use crate::cost::Instance;
use crate::error::Result;
use crate::objective::ObjectiveWeights;
use crate::profile::{AccuracyProfile, ProfileEntry};

/// Generational GA over the flat bit encoding. Every offspring is decoded,
/// its drop sets projected onto the allowed ones, uncovered kept blocks
/// opened to every device, then repaired; the resolved genome replaces the
/// raw one. Fitness is objective + penalty_weight · relative violation.
pub fn solve_ga(
    inst: &Instance,
    weights: &ObjectiveWeights,
    profile: &AccuracyProfile,
    config: &GaConfig,
) -> Result<SolveResult> {
    let start = Instant::now();
    config.validate()?;
    weights.validate()?;
    let allowed = profile.allowed_drop_sets(weights.threshold)?;
    precheck(inst, &allowed)?;
    let scorer = Scorer { inst, profile, weights };

    let dims = Dims {
        requests: inst.requests,
        devices: inst.n_devices(),
        blocks: inst.n_blocks(),
    };
    if dims.requests == 0 {
        let best = scorer.score(inst.blank_assignment())?;
        return scorer.finish(best, 1, start.elapsed());
    }

    let len = dims.len();
    let mutation = config.mutation_rate.unwrap_or(1.0 / len as f64);
    // gaps between flipped bits are geometric, so each bit flips with
    // probability `mutation` without drawing once per bit
    let gaps = if mutation > 0.0 {
        Some(Geometric::new(mutation).expect("probability in (0, 1]"))
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let develop = |bits: Vec<bool>| develop(bits, dims, inst, &allowed, &scorer);

    let initial = initial_population(dims, config.population, &mut rng);
    let mut pop: Vec<(Vec<bool>, Scored)> = initial.into_par_iter().map(develop).collect::<Result<_>>()?;
    let mut evaluations = pop.len() as u64;
    let mut best = best_of(&pop).clone();

    let pw = config.penalty_weight;
    for _ in 0..config.generations {
        let key = |i: usize| (pop[i].1.fitness(pw), pop[i].1.latency, i);
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2))
        });
        let rank: Vec<usize> = {
            let mut r = vec![0; pop.len()];
            for (pos, &i) in order.iter().enumerate() {
                r[i] = pos;
            }
            r
        };
        let tournament = |rng: &mut ChaCha8Rng| {
            (0..config.tournament_size)
                .map(|_| rng.random_range(0..pop.len()))
                .min_by_key(|&i| rank[i])
                .expect("tournament_size >= 1")
        };

        let mut children: Vec<Vec<bool>> = Vec::with_capacity(config.population);
        while children.len() + config.elitism < config.population {
            let p1 = tournament(&mut rng);
            let p2 = tournament(&mut rng);
            let (mut c1, mut c2) = (pop[p1].0.clone(), pop[p2].0.clone());
            if rng.random_bool(config.crossover_rate) {
                uniform_crossover(&mut c1, &mut c2, &mut rng);
            }
            if let Some(gaps) = &gaps {
                mutate(&mut c1, gaps, &mut rng);
                mutate(&mut c2, gaps, &mut rng);
            }
            children.push(c1);
            if children.len() + config.elitism < config.population {
                children.push(c2);
            }
        }

        evaluations += children.len() as u64;
        let developed: Vec<(Vec<bool>, Scored)> = children.into_par_iter().map(develop).collect::<Result<_>>()?;
        let mut next: Vec<(Vec<bool>, Scored)> = order[..config.elitism].iter().map(|&i| pop[i].clone()).collect();
        next.extend(developed);
        pop = next;
        let gen_best = best_of(&pop);
        if gen_best.better_than(&best) {
            best = gen_best.clone();
        }
    }
    scorer.finish(best, evaluations, start.elapsed())
}

fn uniform_crossover(c1: &mut [bool], c2: &mut [bool], rng: &mut ChaCha8Rng) {
    for (a, b) in c1.chunks_mut(64).zip(c2.chunks_mut(64)) {
        let mask: u64 = rng.random();
        for (bit, (x, y)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
            if mask >> bit & 1 == 1 {
                std::mem::swap(x, y);
            }
        }
    }
}

fn mutate(c: &mut [bool], gaps: &Geometric, rng: &mut ChaCha8Rng) {
    let mut k = gaps.sample(rng);
    while (k as usize) < c.len() {
        c[k as usize] = !c[k as usize];
        k += 1 + gaps.sample(rng);
    }
}

fn best_of(pop: &[(Vec<bool>, Scored)]) -> &Scored {
    let mut best = &pop[0].1;
    for (_, s) in &pop[1..] {
        if s.better_than(best) {
            best = s;
        }
    }
    best
}

/// One all-keep, single-device individual per device (up to half the
/// population), the rest random with a per-individual drop probability in
/// [0, 0.5). Duplicates are redrawn.
fn initial_population(dims: Dims, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    let mut seen: HashSet<Vec<bool>> = HashSet::with_capacity(size);
    let mut pop = Vec::with_capacity(size);
    for i in 0..dims.devices.min(size / 2) {
        let mut a = Assignment::empty(dims.requests, dims.devices, dims.blocks);
        for r in 0..dims.requests {
            for j in 0..dims.blocks {
                a.set_x(r, i, j, true);
            }
        }
        let bits = encode(&a);
        if seen.insert(bits.clone()) {
            pop.push(bits);
        }
    }
    let mut attempts = 0;
    while pop.len() < size {
        let p_drop: f64 = rng.random_range(0.0..0.5);
        let mut bits: Vec<bool> = (0..dims.x_len()).map(|_| rng.random_bool(0.5)).collect();
        bits.extend((0..dims.requests * dims.blocks).map(|k| k % dims.blocks == 0 || !rng.random_bool(p_drop)));
        attempts += 1;
        // tiny search spaces cannot supply enough distinct genomes
        if seen.insert(bits.clone()) || attempts > 50 * size {
            pop.push(bits);
        }
    }
    pop
}

/// The largest allowed set contained in `raw`; ties go to higher accuracy.
fn project<'a>(raw: &crate::profile::DropSet, allowed: &'a [ProfileEntry]) -> &'a ProfileEntry {
    let mut best: Option<&ProfileEntry> = None;
    for e in allowed {
        if e.drop_set.is_subset(raw) && best.is_none_or(|b| e.drop_set.len() > b.drop_set.len()) {
            best = Some(e);
        }
    }
    best.expect("the empty drop set is always allowed")
}

fn develop(
    bits: Vec<bool>,
    dims: Dims,
    inst: &Instance,
    allowed: &[ProfileEntry],
    scorer: &Scorer,
) -> Result<(Vec<bool>, Scored)> {
    let mut a = decode(&bits, dims)?;
    for r in 0..dims.requests {
        let target = project(&a.drop_set(r), allowed).drop_set.clone();
        a.apply_drop_set(r, &target);
        for j in 0..dims.blocks {
            if !a.keep(r, j) {
                for i in 0..dims.devices {
                    a.set_x(r, i, j, false);
                }
            } else if a.host_count(r, j) == 0 {
                for i in 0..dims.devices {
                    a.set_x(r, i, j, true);
                }
            }
        }
    }
    repair_in_place(&mut a, &inst.rates, &inst.fleet)?;
    let genome = encode(&a);
    Ok((genome, scorer.score(a)?))
}
