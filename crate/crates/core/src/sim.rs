//! Drives an online scheduler through a finite-horizon instance.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{edd_step, greedy_step, primal_step, ActiveJob};
use crate::error::{Error, Result};
use crate::invariants::{LemmaMonitor, Tolerances};
use crate::numerics::Utility;
use crate::online::{competitive_bound, JobHandle, SchedulerState, SlotDecision, Variant};
use crate::solver::SolverOptions;
use crate::workload::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Do,
    Lightweight,
    Lfdo,
    DLookahead,
    Edd,
    Greedy,
    Primal,
    Offline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Do,
        Algorithm::Lightweight,
        Algorithm::Lfdo,
        Algorithm::DLookahead,
        Algorithm::Edd,
        Algorithm::Greedy,
        Algorithm::Primal,
        Algorithm::Offline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Do => "do",
            Algorithm::Lightweight => "lightweight",
            Algorithm::Lfdo => "lfdo",
            Algorithm::DLookahead => "dlookahead",
            Algorithm::Edd => "edd",
            Algorithm::Greedy => "greedy",
            Algorithm::Primal => "primal",
            Algorithm::Offline => "offline",
        }
    }

    /// Whether the algorithm runs slot by slot on a horizon instance.
    pub fn is_online(self) -> bool {
        !matches!(self, Algorithm::Offline | Algorithm::Lfdo | Algorithm::DLookahead)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub job: usize,
    pub rate: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub reward_gain: f64,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub check_invariants: bool,
    pub keep_trace: bool,
    /// Fault-injection factor for the beta update; 1 in normal runs.
    pub beta_scale: f64,
    pub solver: SolverOptions,
    pub tolerances: Tolerances,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            check_invariants: true,
            keep_trace: false,
            beta_scale: 1.0,
            solver: SolverOptions::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub primal: f64,
    /// Dual objective; only the DO variants carry duals.
    pub dual: Option<f64>,
    pub f_max: f64,
    pub c: f64,
    pub bound: f64,
    /// Final served amount per instance job.
    pub served: Vec<f64>,
    pub monitor: Option<LemmaMonitor>,
    pub trace: Vec<TraceRow>,
}

impl RunResult {
    pub fn dual_ratio(&self) -> Option<f64> {
        self.dual.map(|d| if self.primal > 0.0 { d / self.primal } else if d <= 0.0 { 1.0 } else { f64::INFINITY })
    }
}

fn activity(inst: &Instance) -> Vec<Vec<usize>> {
    let mut act = vec![Vec::new(); inst.horizon()];
    for (k, j) in inst.jobs.iter().enumerate() {
        for slot in act.iter_mut().take(j.deadline + 1).skip(j.arrival) {
            slot.push(k);
        }
    }
    act
}

/// Runs an online algorithm over `inst`.
pub fn run_online(inst: &Instance, algorithm: Algorithm, opts: &RunOptions) -> Result<RunResult> {
    match algorithm {
        Algorithm::Do => run_do(inst, Variant::Full, opts),
        Algorithm::Lightweight => run_do(inst, Variant::Lightweight, opts),
        Algorithm::Edd | Algorithm::Greedy | Algorithm::Primal => run_baseline(inst, algorithm, opts),
        other => Err(Error::config(format!("{other} is not a slot-by-slot horizon algorithm"))),
    }
}

fn run_do(inst: &Instance, variant: Variant, opts: &RunOptions) -> Result<RunResult> {
    let f_max = inst.f_max();
    let mut state: SchedulerState = SchedulerState::new(inst.num_users, f_max)?;
    state.set_beta_scale(opts.beta_scale);
    state.set_solver_options(opts.solver);
    let act = activity(inst);
    let mut handles = vec![JobHandle(usize::MAX); inst.jobs.len()];
    let mut monitor = opts.check_invariants.then(|| LemmaMonitor::new(opts.tolerances));
    let mut trace = Vec::new();
    let mut activity_handles = Vec::with_capacity(inst.horizon());
    for (t, region) in inst.regions.iter().enumerate() {
        for (k, j) in inst.jobs.iter().enumerate() {
            if j.arrival == t {
                handles[k] = state.admit(j.id, j.size, j.utility, j.user)?;
            }
        }
        let active: Vec<JobHandle> = act[t].iter().map(|&k| handles[k]).collect();
        let beta_before: Vec<f64> = {
            let mut sorted = active.clone();
            sorted.sort_by_key(|h| (state.job_id(*h), h.0));
            sorted.iter().map(|h| state.beta(*h)).collect()
        };
        let d = state.step(variant, &active, region)?;
        if let Some(m) = monitor.as_mut() {
            m.check_slot(&state, &d, &beta_before, region, variant == Variant::Full)?;
        }
        if opts.keep_trace {
            push_trace(&mut trace, &d, |h| (state.job_id(h), Some(state.alpha(h)), Some(state.beta(h))));
        }
        activity_handles.push(active);
    }
    let primal = state.compute_primal()?;
    let dual = state.compute_dual(&inst.regions, &activity_handles)?;
    let served = handles.iter().map(|h| state.cumulative(*h)).collect();
    Ok(RunResult {
        algorithm: if variant == Variant::Full { Algorithm::Do } else { Algorithm::Lightweight },
        primal,
        dual: Some(dual),
        f_max,
        c: state.c(),
        bound: competitive_bound(f_max),
        served,
        monitor,
        trace,
    })
}

fn push_trace(trace: &mut Vec<TraceRow>, d: &SlotDecision, info: impl Fn(JobHandle) -> (usize, Option<f64>, Option<f64>)) {
    for (h, &x) in d.jobs.iter().zip(&d.rates) {
        let (job, alpha, beta) = info(*h);
        trace.push(TraceRow { t: d.t, job, rate: x, alpha, beta, reward_gain: d.reward_gain });
    }
}

fn run_baseline(inst: &Instance, algorithm: Algorithm, opts: &RunOptions) -> Result<RunResult> {
    let act = activity(inst);
    let mut served = vec![0.0; inst.jobs.len()];
    let mut trace = Vec::new();
    for (t, region) in inst.regions.iter().enumerate() {
        let jobs: Vec<ActiveJob<'_>> = act[t]
            .iter()
            .map(|&k| {
                let j = &inst.jobs[k];
                ActiveJob { handle: JobHandle(k), id: j.id, size: j.size, user: j.user, utility: &j.utility, served: served[k] }
            })
            .collect();
        let d = match algorithm {
            Algorithm::Edd => {
                let deadlines: Vec<usize> = act[t].iter().map(|&k| inst.jobs[k].deadline).collect();
                edd_step(t, &jobs, &deadlines, region)?
            }
            Algorithm::Greedy => greedy_step(t, &jobs, region)?,
            _ => primal_step(t, &jobs, region, &opts.solver)?,
        };
        for (h, &x) in d.jobs.iter().zip(&d.rates) {
            served[h.0] += x;
        }
        if opts.keep_trace {
            push_trace(&mut trace, &d, |h| (inst.jobs[h.0].id, None, None));
        }
    }
    let primal = inst.jobs.iter().zip(&served).map(|(j, &s)| Ok(j.utility.eval(s)?)).sum::<Result<f64>>()?;
    let f_max = inst.f_max();
    Ok(RunResult {
        algorithm,
        primal,
        dual: None,
        f_max,
        c: crate::online::competitive_constant(f_max),
        bound: competitive_bound(f_max),
        served,
        monitor: None,
        trace,
    })
}
