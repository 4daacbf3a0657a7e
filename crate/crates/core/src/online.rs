//! The deadline-oblivious (DO) primal-dual scheduler and its lightweight variant.
//!
//! Per slot, DO maximizes `sum_j f_j(S_j + x_j) - beta_j x_j` over the slot's
//! region, sets `alpha_j = grad f_j(S_j)` and grows `beta_j` geometrically.
//! The scheduler only ever sees which jobs are active; deadlines never reach it.

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::numerics::{PowerUtility, Utility};
use crate::region::{RateRegion, UserRateAllocation};
use crate::solver::{self, JobTerm, SlotSpec, SolverOptions};

/// `C = (1 + F_max)^(1 / F_max)`, with the limit `e` as `F_max -> 0`.
pub fn competitive_constant(f_max: f64) -> f64 {
    if f_max < 1e-12 {
        E
    } else {
        (f_max.ln_1p() / f_max).exp()
    }
}

/// `3 + 1 / (C - 1)`.
pub fn competitive_bound(f_max: f64) -> f64 {
    3.0 + 1.0 / (competitive_constant(f_max) - 1.0)
}

/// Index of an admitted job inside a [`SchedulerState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobHandle(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Joint saddle-point allocation (full DO).
    Full,
    /// Linearized allocation from the previous slot's duals.
    Lightweight,
}

/// Allocation made in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub t: usize,
    pub jobs: Vec<JobHandle>,
    pub rates: Vec<f64>,
    /// Cumulative service of each job before this slot.
    pub served_before: Vec<f64>,
    pub user_rates: UserRateAllocation,
    pub reward_gain: f64,
}

impl SlotDecision {
    fn empty(t: usize, num_users: usize) -> Self {
        Self {
            t,
            jobs: Vec::new(),
            rates: Vec::new(),
            served_before: Vec::new(),
            user_rates: UserRateAllocation { rates: vec![0.0; num_users] },
            reward_gain: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct JobEntry<U> {
    id: usize,
    size: f64,
    user: usize,
    utility: U,
}

/// DO bookkeeping: cumulative service, duals and the constants `F_max`, `C`.
#[derive(Debug, Clone)]
pub struct SchedulerState<U: Utility = PowerUtility> {
    num_users: usize,
    f_max: f64,
    c: f64,
    jobs: Vec<JobEntry<U>>,
    cumulative: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    clock: usize,
    beta_scale: f64,
    solver: SolverOptions,
}

impl<U: Utility> SchedulerState<U> {
    pub fn new(num_users: usize, f_max: f64) -> Result<Self> {
        if num_users == 0 {
            return Err(Error::config("at least one user required"));
        }
        if !(f_max >= 0.0 && f_max.is_finite()) {
            return Err(Error::config(format!("F_max must be finite and non-negative, got {f_max}")));
        }
        Ok(Self {
            num_users,
            f_max,
            c: competitive_constant(f_max),
            jobs: Vec::new(),
            cumulative: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            clock: 0,
            beta_scale: 1.0,
            solver: SolverOptions::default(),
        })
    }

    /// Multiplies the additive term of every beta update; anything other than
    /// 1 breaks the geometric lower bound and exists for negative-control tests.
    pub fn set_beta_scale(&mut self, scale: f64) {
        self.beta_scale = scale;
    }

    pub fn set_solver_options(&mut self, opts: SolverOptions) {
        self.solver = opts;
    }

    /// Registers an arriving job; `alpha` starts at `grad(0)` and `beta` at 0.
    pub fn admit(&mut self, id: usize, size: f64, utility: U, user: usize) -> Result<JobHandle> {
        if !(size > 0.0 && size.is_finite()) {
            return Err(Error::structural(format!("job {id} has invalid size {size}")));
        }
        if user >= self.num_users {
            return Err(Error::structural(format!("job {id} user {user} out of range")));
        }
        let g0 = utility.grad(0.0)?;
        self.jobs.push(JobEntry { id, size, user, utility });
        self.cumulative.push(0.0);
        self.alpha.push(g0);
        self.beta.push(0.0);
        Ok(JobHandle(self.jobs.len() - 1))
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn clock(&self) -> usize {
        self.clock
    }

    pub fn job_id(&self, h: JobHandle) -> usize {
        self.jobs[h.0].id
    }

    pub fn size(&self, h: JobHandle) -> f64 {
        self.jobs[h.0].size
    }

    pub fn user(&self, h: JobHandle) -> usize {
        self.jobs[h.0].user
    }

    pub fn utility(&self, h: JobHandle) -> &U {
        &self.jobs[h.0].utility
    }

    pub fn cumulative(&self, h: JobHandle) -> f64 {
        self.cumulative[h.0]
    }

    pub fn alpha(&self, h: JobHandle) -> f64 {
        self.alpha[h.0]
    }

    pub fn beta(&self, h: JobHandle) -> f64 {
        self.beta[h.0]
    }

    fn check_handles(&self, active: &[JobHandle]) -> Result<Vec<JobHandle>> {
        let mut sorted = active.to_vec();
        sorted.sort_by_key(|h| (self.jobs.get(h.0).map(|j| j.id), h.0));
        sorted.dedup();
        if let Some(h) = sorted.iter().find(|h| h.0 >= self.jobs.len()) {
            return Err(Error::structural(format!("unknown job handle {}", h.0)));
        }
        Ok(sorted)
    }

    fn check_region(&self, region: &RateRegion) -> Result<()> {
        if region.num_users() != self.num_users {
            return Err(Error::structural("region user count differs from scheduler"));
        }
        Ok(())
    }

    /// Largest per-slot rate that keeps `S_j <= Y_j (1 + F_max)`.
    fn rate_cap(&self, h: JobHandle) -> f64 {
        (self.jobs[h.0].size * (1.0 + self.f_max) - self.cumulative[h.0]).max(0.0)
    }

    /// Records the allocation: updates cumulative service and `alpha`, advances the clock.
    fn commit(&mut self, active: Vec<JobHandle>, rates: Vec<f64>) -> Result<SlotDecision> {
        let mut user_rates = vec![0.0; self.num_users];
        let mut served_before = Vec::with_capacity(active.len());
        let mut gain = 0.0;
        for (h, &x) in active.iter().zip(&rates) {
            let j = &self.jobs[h.0];
            let s = self.cumulative[h.0];
            served_before.push(s);
            user_rates[j.user] += x;
            gain += j.utility.increment(s, x)?;
            self.cumulative[h.0] = s + x;
            self.alpha[h.0] = j.utility.grad(s + x)?;
        }
        let t = self.clock;
        self.clock += 1;
        Ok(SlotDecision {
            t,
            jobs: active,
            rates,
            served_before,
            user_rates: UserRateAllocation { rates: user_rates },
            reward_gain: gain,
        })
    }

    /// Full DO allocation for one slot (the saddle-point step).
    pub fn do_step(&mut self, active: &[JobHandle], region: &RateRegion) -> Result<SlotDecision> {
        self.check_region(region)?;
        let active = self.check_handles(active)?;
        if active.is_empty() {
            let d = SlotDecision::empty(self.clock, self.num_users);
            self.clock += 1;
            return Ok(d);
        }
        let terms: Vec<JobTerm<'_>> = active
            .iter()
            .map(|h| {
                let j = &self.jobs[h.0];
                JobTerm {
                    utility: &j.utility,
                    scale: 1.0,
                    offset: self.cumulative[h.0],
                    linear: -self.beta[h.0],
                    budget: self.rate_cap(*h),
                    user: j.user,
                }
            })
            .collect();
        let slots = [SlotSpec { region, jobs: (0..active.len()).collect() }];
        let sol = solver::solve(&terms, &slots, &self.solver)?;
        if !sol.converged {
            return Err(Error::Convergence { residual: sol.gap(), iterations: sol.iterations });
        }
        let rates = sol.rates.into_iter().next().unwrap_or_default();
        self.commit(active, rates)
    }

    /// Lightweight DO: per user, the rate goes to the job with the largest
    /// positive `alpha - beta` from the previous slot (lowest id on ties).
    pub fn lightweight_do_step(&mut self, active: &[JobHandle], region: &RateRegion) -> Result<SlotDecision> {
        self.check_region(region)?;
        let active = self.check_handles(active)?;
        let users: Vec<usize> = active.iter().map(|h| self.jobs[h.0].user).collect();
        let coeffs: Vec<f64> = active.iter().map(|h| self.alpha[h.0] - self.beta[h.0]).collect();
        let (mut rates, _) = region.job_linear_max(&users, &coeffs)?;
        for (x, h) in rates.iter_mut().zip(&active) {
            *x = x.min(self.rate_cap(*h));
        }
        self.commit(active, rates)
    }

    /// Geometric dual update for the jobs of `decision`.
    pub fn beta_update(&mut self, decision: &SlotDecision) -> Result<()> {
        for ((h, &x), &before) in decision.jobs.iter().zip(&decision.rates).zip(&decision.served_before) {
            if x == 0.0 {
                continue;
            }
            let j = &self.jobs[h.0];
            let g_now = j.utility.grad(before + x)?;
            let g_prev = j.utility.grad(before)?;
            let b = self.beta[h.0];
            self.beta[h.0] = g_now / g_prev * (1.0 + x / j.size) * b
                + self.beta_scale * g_now * x / ((self.c - 1.0) * j.size);
        }
        Ok(())
    }

    /// One slot of the chosen variant followed by the beta update.
    pub fn step(&mut self, variant: Variant, active: &[JobHandle], region: &RateRegion) -> Result<SlotDecision> {
        let d = match variant {
            Variant::Full => self.do_step(active, region)?,
            Variant::Lightweight => self.lightweight_do_step(active, region)?,
        };
        self.beta_update(&d)?;
        Ok(d)
    }

    /// `P = sum_j f_j(S_j)`.
    pub fn compute_primal(&self) -> Result<f64> {
        self.jobs.iter().zip(&self.cumulative).map(|(j, &s)| Ok(j.utility.eval(s)?)).sum()
    }

    /// `D = sum_t sigma_t(alpha - beta over active jobs) + beta.Y - sum_j f*_j(alpha_j)`.
    ///
    /// `activity[t]` lists the jobs active in slot `t` of `regions`.
    pub fn compute_dual(&self, regions: &[RateRegion], activity: &[Vec<JobHandle>]) -> Result<f64> {
        if regions.len() != activity.len() {
            return Err(Error::structural("one activity list per region required"));
        }
        let mut d = 0.0;
        for (region, active) in regions.iter().zip(activity) {
            self.check_region(region)?;
            let active = self.check_handles(active)?;
            let users: Vec<usize> = active.iter().map(|h| self.jobs[h.0].user).collect();
            let coeffs: Vec<f64> = active.iter().map(|h| self.alpha[h.0] - self.beta[h.0]).collect();
            d += region.job_linear_max(&users, &coeffs)?.1;
        }
        for (k, j) in self.jobs.iter().enumerate() {
            d += self.beta[k] * j.size - j.utility.conjugate(self.alpha[k])?;
        }
        Ok(d)
    }

    /// Scales every allocation by `1 - F_max`, restoring `S_j <= Y_j`.
    /// Reward gains are recomputed along the scaled trajectory.
    pub fn feasibility_scale(&self, decisions: &[SlotDecision]) -> Result<Vec<SlotDecision>> {
        let k = 1.0 - self.f_max.min(1.0);
        let mut served = vec![0.0; self.jobs.len()];
        decisions
            .iter()
            .map(|d| {
                let rates: Vec<f64> = d.rates.iter().map(|x| x * k).collect();
                let mut gain = 0.0;
                let mut before = Vec::with_capacity(rates.len());
                for (h, &x) in d.jobs.iter().zip(&rates) {
                    let s = served[h.0];
                    before.push(s);
                    gain += self.jobs[h.0].utility.increment(s, x)?;
                    served[h.0] = s + x;
                }
                Ok(SlotDecision {
                    t: d.t,
                    jobs: d.jobs.clone(),
                    rates,
                    served_before: before,
                    user_rates: UserRateAllocation { rates: d.user_rates.rates.iter().map(|x| x * k).collect() },
                    reward_gain: gain,
                })
            })
            .collect()
    }
}
