//! Per-slot checks of the DO lemmas, accumulated into violation counters.

use std::fmt;

use crate::error::Result;
use crate::numerics::Utility;
use crate::online::{SchedulerState, SlotDecision};
use crate::region::RateRegion;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub alpha: f64,
    pub complementary_gap: f64,
    pub absolute: f64,
    pub membership: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { alpha: 1e-7, complementary_gap: 1e-6, absolute: 1e-9, membership: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub lemma: usize,
    pub slot: usize,
    /// Offending job id, when the check is per job.
    pub job: Option<usize>,
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lemma {} violated at slot {}", self.lemma, self.slot)?;
        if let Some(j) = self.job {
            write!(f, ", job {j}")?;
        }
        write!(f, ", residual {:.3e}", self.residual)
    }
}

/// Violation counters and worst residuals for Lemmas 1 to 5.
#[derive(Debug, Clone, Default)]
pub struct LemmaMonitor {
    pub tol: Tolerances,
    pub checks: [usize; 5],
    pub violations: [usize; 5],
    /// Largest residual seen per lemma (positive means violated).
    pub worst: [f64; 5],
    pub first: Vec<Violation>,
}

impl LemmaMonitor {
    pub fn new(tol: Tolerances) -> Self {
        Self { tol, worst: [f64::NEG_INFINITY; 5], ..Default::default() }
    }

    pub fn total_violations(&self) -> usize {
        self.violations.iter().sum()
    }

    pub fn passed(&self, lemma: usize) -> bool {
        self.violations[lemma - 1] == 0
    }

    fn record(&mut self, lemma: usize, slot: usize, job: Option<usize>, residual: f64) {
        let k = lemma - 1;
        self.checks[k] += 1;
        if !(residual <= self.worst[k]) {
            self.worst[k] = residual;
        }
        if !(residual <= 0.0) {
            self.violations[k] += 1;
            if self.first.len() < 16 {
                self.first.push(Violation { lemma, slot, job, residual });
            }
        }
    }

    /// Checks one slot after `state.step`. `beta_before` holds each decision
    /// job's beta from before the update. Lemma 1 only applies to full DO.
    pub fn check_slot<U: Utility>(
        &mut self,
        state: &SchedulerState<U>,
        decision: &SlotDecision,
        beta_before: &[f64],
        region: &RateRegion,
        full_do: bool,
    ) -> Result<()> {
        let t = decision.t;
        let c = state.c();
        let f_max = state.f_max();
        let tol = self.tol;
        if full_do && !decision.jobs.is_empty() {
            let mut coeffs = Vec::with_capacity(decision.jobs.len());
            let mut users = Vec::with_capacity(decision.jobs.len());
            let mut alpha_err = f64::NEG_INFINITY;
            for (k, h) in decision.jobs.iter().enumerate() {
                let a = state.alpha(*h);
                let g = state.utility(*h).grad(state.cumulative(*h))?;
                alpha_err = alpha_err.max((a - g).abs() - tol.alpha);
                coeffs.push(a - beta_before[k]);
                users.push(state.user(*h));
            }
            let sigma = region.job_linear_max(&users, &coeffs)?.1;
            let cx: f64 = coeffs.iter().zip(&decision.rates).map(|(c, x)| c * x).sum();
            let cs: f64 = coeffs.iter().zip(&decision.served_before).map(|(c, s)| c * s).sum();
            let rel = (sigma - cx) / (1.0 + (cs + sigma).abs());
            self.record(1, t, None, alpha_err.max(rel - tol.complementary_gap));
        }
        let mut alpha_x = 0.0;
        let mut dbeta_y = 0.0;
        for (k, h) in decision.jobs.iter().enumerate() {
            let id = Some(state.job_id(*h));
            let s = state.cumulative(*h);
            let y = state.size(*h);
            let a = state.alpha(*h);
            let b = state.beta(*h);
            let g = state.utility(*h).grad(s)?;
            let lower = g * (c.powf(s / y) - 1.0) / (c - 1.0);
            self.record(2, t, id, lower - b - tol.absolute);
            let neg = (-a).max(-b);
            let over = s - y * (1.0 + f_max) - tol.absolute;
            self.record(3, t, id, neg.max(over));
            alpha_x += a * decision.rates[k];
            dbeta_y += (b - beta_before[k]) * y;
        }
        let member = region.contains(&decision.user_rates.rates, tol.membership);
        self.record(3, t, None, if member { -1.0 } else { 1.0 });
        let dp = decision.reward_gain;
        self.record(4, t, None, alpha_x - dp - tol.absolute);
        self.record(5, t, None, dbeta_y - dp * (1.0 + 1.0 / (c - 1.0)) - tol.absolute);
        Ok(())
    }

    pub fn merge(&mut self, other: &LemmaMonitor) {
        for k in 0..5 {
            self.checks[k] += other.checks[k];
            self.violations[k] += other.violations[k];
            self.worst[k] = self.worst[k].max(other.worst[k]);
        }
        for v in &other.first {
            if self.first.len() < 16 {
                self.first.push(v.clone());
            }
        }
    }
}
