//! Comparison schedulers: earliest due date, greedy by initial marginal value,
//! and primal-only marginal-utility maximization.
//!
//! Each step sees the active jobs and their served amounts. Only [`edd_step`]
//! receives deadlines.

use crate::error::{Error, Result};
use crate::numerics::{PowerUtility, Utility};
use crate::online::{JobHandle, SlotDecision};
use crate::region::{RateRegion, UserRateAllocation};
use crate::solver::{self, JobTerm, SlotSpec, SolverOptions};

/// A job as seen by a deadline-oblivious baseline.
#[derive(Debug, Clone, Copy)]
pub struct ActiveJob<'a> {
    pub handle: JobHandle,
    pub id: usize,
    pub size: f64,
    pub user: usize,
    pub utility: &'a PowerUtility,
    pub served: f64,
}

impl ActiveJob<'_> {
    /// Remaining size; remainders below `1e-9 * size` count as finished.
    fn remaining(&self) -> f64 {
        let r = self.size - self.served;
        if r > 1e-9 * self.size {
            r
        } else {
            0.0
        }
    }

    fn unfinished(&self) -> bool {
        self.remaining() > 0.0
    }
}

/// Builds the decision from per-job rates (aligned with `jobs`).
fn decide(t: usize, jobs: &[ActiveJob<'_>], rates: Vec<f64>, num_users: usize) -> Result<SlotDecision> {
    let mut user_rates = vec![0.0; num_users];
    let mut gain = 0.0;
    for (j, &x) in jobs.iter().zip(&rates) {
        user_rates[j.user] += x;
        gain += j.utility.increment(j.served, x)?;
    }
    Ok(SlotDecision {
        t,
        jobs: jobs.iter().map(|j| j.handle).collect(),
        served_before: jobs.iter().map(|j| j.served).collect(),
        rates,
        user_rates: UserRateAllocation { rates: user_rates },
        reward_gain: gain,
    })
}

/// Picks user rates with `linear_max` and hands each user's rate to its jobs
/// in `order`, capping each at its remaining size and spilling the rest.
fn cap_and_spill(
    t: usize,
    jobs: &[ActiveJob<'_>],
    region: &RateRegion,
    user_coeffs: &[f64],
    order: &[usize],
) -> Result<SlotDecision> {
    let (alloc, _) = region.linear_max(user_coeffs)?;
    let mut left = alloc.rates;
    let mut rates = vec![0.0; jobs.len()];
    for &k in order {
        let j = &jobs[k];
        let x = left[j.user].min(j.remaining());
        rates[k] = x;
        left[j.user] -= x;
    }
    decide(t, jobs, rates, region.num_users())
}

fn check_users(jobs: &[ActiveJob<'_>], region: &RateRegion) -> Result<()> {
    match jobs.iter().find(|j| j.user >= region.num_users()) {
        Some(j) => Err(Error::structural(format!("job {} user out of range", j.id))),
        None => Ok(()),
    }
}

/// Earliest due date first; `deadlines` is aligned with `jobs`.
pub fn edd_step(t: usize, jobs: &[ActiveJob<'_>], deadlines: &[usize], region: &RateRegion) -> Result<SlotDecision> {
    check_users(jobs, region)?;
    if deadlines.len() != jobs.len() {
        return Err(Error::structural("one deadline per active job required"));
    }
    let mut coeffs = vec![0.0; region.num_users()];
    for j in jobs.iter().filter(|j| j.unfinished()) {
        coeffs[j.user] = 1.0;
    }
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&k| (deadlines[k], jobs[k].id));
    cap_and_spill(t, jobs, region, &coeffs, &order)
}

/// Greedy by initial marginal value `grad(0)`, the ranking a linear-reward
/// scheduler would use.
pub fn greedy_step(t: usize, jobs: &[ActiveJob<'_>], region: &RateRegion) -> Result<SlotDecision> {
    check_users(jobs, region)?;
    let weights = jobs.iter().map(|j| j.utility.grad(0.0)).collect::<Result<Vec<_>, _>>()?;
    let mut coeffs = vec![0.0; region.num_users()];
    for (j, &w) in jobs.iter().zip(&weights) {
        if j.unfinished() {
            coeffs[j.user] = f64::max(coeffs[j.user], w);
        }
    }
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(jobs[a].id.cmp(&jobs[b].id)));
    cap_and_spill(t, jobs, region, &coeffs, &order)
}

/// Maximizes `sum_j f_j(S_j + x_j)` over the region with remaining-size caps.
pub fn primal_step(
    t: usize,
    jobs: &[ActiveJob<'_>],
    region: &RateRegion,
    opts: &SolverOptions,
) -> Result<SlotDecision> {
    check_users(jobs, region)?;
    if jobs.is_empty() {
        return decide(t, jobs, Vec::new(), region.num_users());
    }
    let terms: Vec<JobTerm<'_>> = jobs
        .iter()
        .map(|j| JobTerm {
            utility: j.utility,
            scale: 1.0,
            offset: j.served,
            linear: 0.0,
            budget: j.remaining(),
            user: j.user,
        })
        .collect();
    let slots = [SlotSpec { region, jobs: (0..jobs.len()).collect() }];
    let sol = solver::solve(&terms, &slots, opts)?;
    if !sol.converged {
        return Err(Error::Convergence { residual: sol.gap(), iterations: sol.iterations });
    }
    let rates = sol.rates.into_iter().next().unwrap_or_default();
    // The interior solution may sit a hair above a cap.
    let rates = rates.iter().zip(jobs).map(|(x, j)| x.min(j.remaining())).collect();
    decide(t, jobs, rates, region.num_users())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(k: usize, size: f64, user: usize, f: &PowerUtility, served: f64) -> ActiveJob<'_> {
        ActiveJob { handle: JobHandle(k), id: k, size, user, utility: f, served }
    }

    #[test]
    fn edd_orders_by_deadline_and_spills() {
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let jobs = [job(0, 5.0, 0, &f, 0.0), job(1, 0.4, 0, &f, 0.0)];
        let d = edd_step(0, &jobs, &[7, 3], &r).unwrap();
        assert_eq!(d.rates, vec![0.6, 0.4]);
        let single = edd_step(0, &jobs[..1], &[7], &r).unwrap();
        assert_eq!(single.rates, vec![1.0]);
    }

    #[test]
    fn edd_skips_finished_jobs() {
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let jobs = [job(0, 1.0, 0, &f, 1.0), job(1, 5.0, 0, &f, 0.0)];
        let d = edd_step(0, &jobs, &[2, 9], &r).unwrap();
        assert_eq!(d.rates, vec![0.0, 1.0]);
    }

    #[test]
    fn greedy_prefers_larger_scale() {
        let a = PowerUtility::new(2.0, 0.5).unwrap();
        let b = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let jobs = [job(0, 5.0, 0, &b, 0.0), job(1, 5.0, 0, &a, 0.0)];
        let d = greedy_step(0, &jobs, &r).unwrap();
        assert_eq!(d.rates, vec![0.0, 1.0]);
    }

    #[test]
    fn greedy_with_identical_rewards_is_max_rate() {
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(2, vec![vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let jobs = [job(0, 5.0, 0, &f, 0.0), job(1, 5.0, 1, &f, 0.0)];
        let d = greedy_step(0, &jobs, &r).unwrap();
        assert_eq!(d.user_rates.rates, vec![0.0, 3.0]);
    }

    #[test]
    fn primal_respects_remaining_size() {
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let jobs = [job(0, 2.0, 0, &f, 1.7)];
        let d = primal_step(0, &jobs, &r, &SolverOptions::default()).unwrap();
        assert!(d.rates[0] <= 0.3 + 1e-15);
        assert!(d.rates[0] > 0.3 - 1e-6);
        let none = primal_step(0, &[], &r, &SolverOptions::default()).unwrap();
        assert!(none.rates.is_empty());
    }
}
