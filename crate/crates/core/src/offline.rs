//! Prescient benchmark: the full-horizon optimum with budgets, a grid oracle
//! for tiny instances, and competitive-ratio bookkeeping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{PowerUtility, Utility};
use crate::region::RateRegion;
use crate::solver::{self, JobTerm, SlotSpec, SolverOptions};
use crate::workload::{Instance, Job};

#[derive(Debug, Clone)]
pub struct OfflineSolution {
    /// `slot_jobs[t]` lists instance job indices active in slot `t`.
    pub slot_jobs: Vec<Vec<usize>>,
    /// `rates[t][i]` is the rate of job `slot_jobs[t][i]`.
    pub rates: Vec<Vec<f64>>,
    pub served: Vec<f64>,
    pub objective: f64,
    /// Certified bound on `optimum - objective`.
    pub gap: f64,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

impl OfflineSolution {
    pub fn upper_bound(&self) -> f64 {
        self.objective + self.gap
    }
}

fn slot_jobs(inst: &Instance) -> Vec<Vec<usize>> {
    (0..inst.horizon()).map(|t| inst.active_at(t)).collect()
}

/// Solves the offline program to relative tolerance `tol`.
pub fn offline_solve(inst: &Instance, tol: f64) -> Result<OfflineSolution> {
    if !(tol > 0.0) {
        return Err(Error::config("tolerance must be positive"));
    }
    let terms: Vec<JobTerm<'_>> = inst
        .jobs
        .iter()
        .map(|j| JobTerm { utility: &j.utility, scale: 1.0, offset: 0.0, linear: 0.0, budget: j.size, user: j.user })
        .collect();
    let sj = slot_jobs(inst);
    let slots: Vec<SlotSpec<'_>> =
        inst.regions.iter().zip(&sj).map(|(r, jobs)| SlotSpec { region: r, jobs: jobs.clone() }).collect();
    let opts = SolverOptions { rel_tol: tol, max_newton: 2000 };
    let sol = solver::solve(&terms, &slots, &opts)?;
    Ok(OfflineSolution {
        slot_jobs: sj,
        gap: sol.gap(),
        served: sol.totals,
        rates: sol.rates,
        objective: sol.objective,
        converged: sol.converged,
    })
}

/// Size guards of [`brute_force_solve`].
pub const BRUTE_MAX_SLOTS: usize = 4;
pub const BRUTE_MAX_USERS: usize = 2;
pub const BRUTE_MAX_JOBS: usize = 3;
pub const BRUTE_MAX_VERTICES: usize = 3;

/// Exhaustive search over allocations on an `h`-grid, by dynamic programming
/// over per-job cumulative grid counts. Per-slot allocations are screened
/// with `contains`. The reported gap is the rounding bound
/// `sum_j grad_j(0) * h * (slots of j)`.
pub fn brute_force_solve(inst: &Instance, h: f64) -> Result<OfflineSolution> {
    if !(h > 0.0) {
        return Err(Error::config("grid step must be positive"));
    }
    if inst.horizon() > BRUTE_MAX_SLOTS
        || inst.num_users > BRUTE_MAX_USERS
        || inst.jobs.len() > BRUTE_MAX_JOBS
        || inst.regions.iter().any(|r| r.num_vertices() > BRUTE_MAX_VERTICES)
    {
        return Err(Error::Refused(format!(
            "grid search limited to {BRUTE_MAX_SLOTS} slots, {BRUTE_MAX_USERS} users, \
             {BRUTE_MAX_JOBS} jobs and {BRUTE_MAX_VERTICES} vertices per slot"
        )));
    }
    let n = inst.jobs.len();
    let sj = slot_jobs(inst);
    let cap: Vec<usize> = inst.jobs.iter().map(|j| (j.size / h + 1e-9).floor() as usize).collect();
    // Mixed-radix encoding of the per-job cumulative grid counts.
    let mut radix = vec![1usize; n + 1];
    for k in 0..n {
        radix[k + 1] = radix[k] * (cap[k] + 1);
    }
    let num_states = radix[n];
    let mut reachable = vec![false; num_states];
    reachable[0] = true;
    // Per slot: the feasible moves and, per state, (parent state, move index).
    let mut layers: Vec<(Vec<Vec<usize>>, Vec<(usize, usize)>)> = Vec::with_capacity(inst.horizon());
    for (t, region) in inst.regions.iter().enumerate() {
        let active = &sj[t];
        let limits: Vec<usize> = active
            .iter()
            .map(|&k| ((region.max_rate(inst.jobs[k].user) / h + 1e-9).floor() as usize).min(cap[k]))
            .collect();
        let mut moves = Vec::new();
        let mut counts = vec![0usize; active.len()];
        loop {
            let mut users = vec![0.0; inst.num_users];
            for (i, &k) in active.iter().enumerate() {
                users[inst.jobs[k].user] += counts[i] as f64 * h;
            }
            if region.contains(&users, 1e-12) {
                moves.push(counts.clone());
            }
            // Odometer increment.
            let mut i = 0;
            while i < counts.len() && counts[i] == limits[i] {
                counts[i] = 0;
                i += 1;
            }
            if i == counts.len() {
                break;
            }
            counts[i] += 1;
        }
        let mut next = vec![false; num_states];
        let mut parent = vec![(usize::MAX, 0); num_states];
        for state in (0..num_states).filter(|&st| reachable[st]) {
            'moves: for (mi, mv) in moves.iter().enumerate() {
                let mut to = state;
                for (&k, &c) in active.iter().zip(mv) {
                    if (state / radix[k]) % (cap[k] + 1) + c > cap[k] {
                        continue 'moves;
                    }
                    to += c * radix[k];
                }
                if !next[to] {
                    next[to] = true;
                    parent[to] = (state, mi);
                }
            }
        }
        reachable = next;
        layers.push((moves, parent));
    }
    let decode = |st: usize| -> Vec<usize> { (0..n).map(|k| (st / radix[k]) % (cap[k] + 1)).collect() };
    let mut best: Option<(f64, usize)> = None;
    for st in (0..num_states).filter(|&st| reachable[st]) {
        let val = inst
            .jobs
            .iter()
            .zip(decode(st))
            .map(|(j, c)| j.utility.eval(c as f64 * h))
            .sum::<Result<f64, _>>()?;
        if best.is_none_or(|b| val > b.0) {
            best = Some((val, st));
        }
    }
    let (objective, last) = best.expect("the all-zero allocation is always reachable");
    let state = decode(last);
    let mut path = vec![Vec::new(); layers.len()];
    let mut cur = last;
    for (t, (moves, parent)) in layers.iter().enumerate().rev() {
        let (prev, mi) = parent[cur];
        path[t] = moves[mi].clone();
        cur = prev;
    }
    let rates: Vec<Vec<f64>> = path.iter().map(|mv| mv.iter().map(|&c| c as f64 * h).collect()).collect();
    let mut gap = 0.0;
    for (k, j) in inst.jobs.iter().enumerate() {
        let slots = sj.iter().filter(|a| a.contains(&k)).count() as f64;
        gap += j.utility.grad(0.0)? * h * slots;
    }
    Ok(OfflineSolution {
        slot_jobs: sj,
        rates,
        served: state.iter().map(|&c| c as f64 * h).collect(),
        objective,
        gap,
        converged: true,
    })
}

/// Random instance inside the grid-search guards: three slots, two users,
/// two or three jobs with sizes in `{0.5, 1, 1.5, 2}`, and regions of up to
/// three vertices with coordinates in `{0, 0.5, 1}`.
pub fn tiny_instance(seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = 3;
    let regions = (0..horizon)
        .map(|_| {
            let m = rng.random_range(1..=BRUTE_MAX_VERTICES);
            let mut verts: Vec<Vec<f64>> = Vec::with_capacity(m);
            while verts.len() < m {
                let v: Vec<f64> = (0..2).map(|_| rng.random_range(0..=2) as f64 * 0.5).collect();
                if v.iter().any(|x| *x > 0.0) {
                    verts.push(v);
                }
            }
            RateRegion::new(2, verts)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs = (0..rng.random_range(2..=BRUTE_MAX_JOBS))
        .map(|id| {
            let arrival = rng.random_range(0..horizon);
            let deadline = rng.random_range(arrival..horizon);
            let v = rng.random_range(0.05..1.0);
            let psi = rng.random_range(0.01..0.99);
            Ok(Job {
                id,
                arrival,
                deadline,
                size: rng.random_range(1..=4) as f64 * 0.5,
                utility: PowerUtility::new(v, psi)?,
                user: rng.random_range(0..2),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::new(2, jobs, regions)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioReport {
    /// `(P* upper bound) / P`.
    pub ratio: f64,
    /// `D / P`, when a dual objective is available.
    pub dual_ratio: Option<f64>,
    /// Set when `P = 0` while the offline optimum is positive.
    pub flagged: bool,
}

fn ratio_of(num: f64, den: f64) -> (f64, bool) {
    if den > 0.0 {
        (num / den, false)
    } else if num <= 0.0 {
        (1.0, false)
    } else {
        (f64::INFINITY, true)
    }
}

/// Competitive ratio of an online run against the offline bound.
/// An empty instance has ratio 1 by convention.
pub fn competitive_ratio(online: f64, offline: &OfflineSolution, dual: Option<f64>) -> RatioReport {
    let (ratio, flagged) = ratio_of(offline.upper_bound(), online);
    let dual_ratio = dual.map(|d| ratio_of(d, online).0);
    RatioReport { ratio, dual_ratio, flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::PowerUtility;
    use crate::region::RateRegion;
    use crate::workload::Job;

    fn job(id: usize, a: usize, d: usize, size: f64, user: usize) -> Job {
        Job { id, arrival: a, deadline: d, size, utility: PowerUtility::new(1.0, 0.5).unwrap(), user }
    }

    #[test]
    fn empty_instance() {
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let inst = Instance::new(1, vec![], vec![r]).unwrap();
        let off = offline_solve(&inst, 1e-9).unwrap();
        assert_eq!(off.objective, 0.0);
        let bf = brute_force_solve(&inst, 0.1).unwrap();
        assert_eq!(bf.objective, 0.0);
        assert_eq!(competitive_ratio(0.0, &off, Some(0.0)).ratio, 1.0);
    }

    #[test]
    fn one_job_one_slot_grid_scan() {
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let inst = Instance::new(1, vec![job(0, 0, 0, 2.0, 0)], vec![r]).unwrap();
        let bf = brute_force_solve(&inst, 0.1).unwrap();
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        assert!((bf.objective - f.eval(1.0).unwrap()).abs() < 1e-12);
        let off = offline_solve(&inst, 1e-9).unwrap();
        assert!((off.objective - bf.objective).abs() < 1e-7);
    }

    #[test]
    fn grid_oracle_agrees_on_tiny_instances() {
        for seed in 0..5 {
            let inst = tiny_instance(seed).unwrap();
            let off = offline_solve(&inst, 1e-9).unwrap();
            let bf = brute_force_solve(&inst, 0.1).unwrap();
            assert!(off.converged);
            assert!(bf.objective <= off.upper_bound() + 1e-9, "seed {seed}");
            assert!((bf.objective - off.objective).abs() <= 0.01 * (1.0 + off.objective.abs()), "seed {seed}");
        }
    }

    #[test]
    fn refuses_large_instances() {
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let inst = Instance::new(1, vec![], vec![r; 5]).unwrap();
        assert!(matches!(brute_force_solve(&inst, 0.1), Err(Error::Refused(_))));
    }

    #[test]
    fn zero_online_reward_is_flagged() {
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let inst = Instance::new(1, vec![job(0, 0, 0, 2.0, 0)], vec![r]).unwrap();
        let off = offline_solve(&inst, 1e-9).unwrap();
        let rep = competitive_ratio(0.0, &off, None);
        assert!(rep.flagged && rep.ratio.is_infinite());
    }

    #[test]
    fn slack_budgets_decompose_per_slot() {
        let r1 = RateRegion::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r2 = RateRegion::new(2, vec![vec![0.5, 0.5]]).unwrap();
        let inst = Instance::new(2, vec![job(0, 0, 1, 100.0, 0), job(1, 0, 1, 100.0, 1)], vec![r1, r2]).unwrap();
        let off = offline_solve(&inst, 1e-10).unwrap();
        // Symmetric: each user gets 0.5 + 0.5.
        assert!((off.served[0] - 1.0).abs() < 1e-6 && (off.served[1] - 1.0).abs() < 1e-6);
    }
}
