//! Frame-based scheduling under long-term timely-throughput targets:
//! virtual queues, the long-term fair DO variant, the frame lookahead
//! benchmark and stability metrics.

use crate::error::{Error, Result};
use crate::invariants::{LemmaMonitor, Tolerances};
use crate::numerics::{DriftPenaltyUtility, PowerUtility, Utility};
use crate::online::{JobHandle, SchedulerState, Variant};
use crate::region::RateRegion;
use crate::solver::{self, JobTerm, SlotSpec, SolverOptions};
use crate::workload::{Frame, FrameSet, Job};

/// Per-user virtual queues and their per-frame targets.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualQueue {
    pub lengths: Vec<f64>,
    pub targets: Vec<f64>,
}

impl VirtualQueue {
    /// Empty queues.
    pub fn new(targets: Vec<f64>) -> Result<Self> {
        if targets.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::config("targets must be finite and non-negative"));
        }
        Ok(Self { lengths: vec![0.0; targets.len()], targets })
    }

    pub fn num_users(&self) -> usize {
        self.targets.len()
    }
}

/// `Q_n <- max(Q_n + delta_n - served_n, 0)`.
pub fn queue_update(q: &VirtualQueue, served: &[f64]) -> Result<VirtualQueue> {
    if served.len() != q.num_users() {
        return Err(Error::structural("one served amount per user required"));
    }
    if let Some(s) = served.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::structural(format!("served amount {s} is negative")));
    }
    let lengths = q.lengths.iter().zip(&q.targets).zip(served).map(|((l, d), s)| (l + d - s).max(0.0)).collect();
    Ok(VirtualQueue { lengths, targets: q.targets.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub k: usize,
    /// `sum_j f_j(min(S_j, Y_j))` over the frame's jobs.
    pub reward: f64,
    /// Per-user timely throughput `b_n`, counting at most `Y_j` per job.
    pub served: Vec<f64>,
    /// Queue lengths at the start of the frame.
    pub queue_before: Vec<f64>,
    /// Queue lengths after the end-of-frame update.
    pub queue_after: Vec<f64>,
    /// Drift-plus-penalty objective `V * reward + sum_n Q_n b_n` at the frame-start queues.
    pub objective: f64,
    /// Certified slack of `objective` against the frame optimum; only the lookahead sets it.
    pub gap: f64,
    /// Per-job cumulative service, aligned with the frame's jobs.
    pub job_served: Vec<f64>,
}

fn frame_outcome(jobs: &[Job], job_served: Vec<f64>, q: &VirtualQueue, v: f64, k: usize, gap: f64) -> Result<FrameResult> {
    let mut served = vec![0.0; q.num_users()];
    let mut reward = 0.0;
    for (j, &s) in jobs.iter().zip(&job_served) {
        let s = s.clamp(0.0, j.size);
        served[j.user] += s;
        reward += j.utility.eval(s)?;
    }
    let objective = v * reward + q.lengths.iter().zip(&served).map(|(a, b)| a * b).sum::<f64>();
    let next = queue_update(q, &served)?;
    Ok(FrameResult {
        k,
        reward,
        served,
        queue_before: q.lengths.clone(),
        queue_after: next.lengths,
        objective,
        gap,
        job_served,
    })
}

fn check_frame(frame: &Frame, regions: &[&RateRegion], q: &VirtualQueue) -> Result<()> {
    if let Some(j) = frame.jobs.iter().find(|j| j.arrival != frame.start || j.deadline >= frame.start + regions.len()) {
        return Err(Error::structural(format!("job {} does not fit inside frame {}", j.id, frame.index)));
    }
    if let Some(j) = frame.jobs.iter().find(|j| j.user >= q.num_users()) {
        return Err(Error::structural(format!("job {} user out of range", j.id)));
    }
    if regions.iter().any(|r| r.num_users() != q.num_users()) {
        return Err(Error::structural("region user count differs from queue"));
    }
    Ok(())
}

/// Options of the frame-level DO runs.
#[derive(Debug, Clone)]
pub struct FrameOptions {
    pub variant: Variant,
    pub solver: SolverOptions,
    /// When set, lemma checks run inside every frame.
    pub tolerances: Option<Tolerances>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { variant: Variant::Full, solver: SolverOptions::default(), tolerances: None }
    }
}

/// One frame of DO on the reward `V f_j(x) + Q_{U(j)} x`, with a fresh
/// scheduler state, followed by the queue update.
pub fn lfdo_frame(
    frame: &Frame,
    regions: &[&RateRegion],
    q: &VirtualQueue,
    v: f64,
    f_max: f64,
    opts: &FrameOptions,
    monitor: Option<&mut LemmaMonitor>,
) -> Result<FrameResult> {
    check_frame(frame, regions, q)?;
    let mut state: SchedulerState<DriftPenaltyUtility<PowerUtility>> = SchedulerState::new(q.num_users(), f_max)?;
    state.set_solver_options(opts.solver);
    let handles = frame
        .jobs
        .iter()
        .map(|j| state.admit(j.id, j.size, DriftPenaltyUtility::new(j.utility, v, q.lengths[j.user])?, j.user))
        .collect::<Result<Vec<JobHandle>>>()?;
    let mut local = opts.tolerances.map(LemmaMonitor::new);
    for (i, region) in regions.iter().enumerate() {
        let t = frame.start + i;
        let active: Vec<JobHandle> =
            frame.jobs.iter().zip(&handles).filter(|(j, _)| j.deadline >= t).map(|(_, h)| *h).collect();
        let beta_before: Vec<f64> = {
            let mut sorted = active.clone();
            sorted.sort_by_key(|h| (state.job_id(*h), h.0));
            sorted.iter().map(|h| state.beta(*h)).collect()
        };
        let d = state.step(opts.variant, &active, region)?;
        if let Some(m) = local.as_mut() {
            m.check_slot(&state, &d, &beta_before, region, opts.variant == Variant::Full)?;
        }
    }
    if let (Some(m), Some(l)) = (monitor, local.as_ref()) {
        m.merge(l);
    }
    let served = handles.iter().map(|h| state.cumulative(*h)).collect();
    frame_outcome(&frame.jobs, served, q, v, frame.index, 0.0)
}

/// Plain DO on one frame; queues are only observed.
pub fn do_frame(
    frame: &Frame,
    regions: &[&RateRegion],
    q: &VirtualQueue,
    f_max: f64,
    opts: &FrameOptions,
    monitor: Option<&mut LemmaMonitor>,
) -> Result<FrameResult> {
    let zero = VirtualQueue { lengths: vec![0.0; q.num_users()], targets: q.targets.clone() };
    let r = lfdo_frame(frame, regions, &zero, 1.0, f_max, opts, monitor)?;
    frame_outcome(&frame.jobs, r.job_served, q, 1.0, frame.index, 0.0)
}

/// Frame optimum of `V sum_j f_j(s_j) + sum_n Q_n b_n` with all regions known up front.
pub fn d_lookahead_frame(
    frame: &Frame,
    regions: &[&RateRegion],
    q: &VirtualQueue,
    v: f64,
    solver_opts: &SolverOptions,
) -> Result<FrameResult> {
    check_frame(frame, regions, q)?;
    if !(v > 0.0) {
        return Err(Error::config("V must be positive"));
    }
    let terms: Vec<JobTerm<'_>> = frame
        .jobs
        .iter()
        .map(|j| JobTerm {
            utility: &j.utility as &dyn Utility,
            scale: v,
            offset: 0.0,
            linear: q.lengths[j.user],
            budget: j.size,
            user: j.user,
        })
        .collect();
    let slots: Vec<SlotSpec<'_>> = regions
        .iter()
        .enumerate()
        .map(|(i, r)| SlotSpec {
            region: r,
            jobs: (0..frame.jobs.len()).filter(|&k| frame.jobs[k].deadline >= frame.start + i).collect(),
        })
        .collect();
    let sol = solver::solve(&terms, &slots, solver_opts)?;
    if !sol.converged {
        return Err(Error::Convergence { residual: sol.gap(), iterations: sol.iterations });
    }
    frame_outcome(&frame.jobs, sol.totals.clone(), q, v, frame.index, sol.gap())
}

/// Frame-level scheduling policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FramePolicy {
    /// Plain DO, ignoring the queues.
    Do,
    /// DO on the drift-plus-penalty reward with weight `V`.
    Lfdo { v: f64 },
    /// The non-causal frame optimum with weight `V`.
    Lookahead { v: f64 },
}

#[derive(Debug, Clone)]
pub struct StochasticRun {
    pub frames: Vec<FrameResult>,
    pub monitor: Option<LemmaMonitor>,
}

/// Runs `policy` over every frame, carrying the virtual queues across frames.
pub fn run_frames(set: &FrameSet, targets: &[f64], policy: FramePolicy, opts: &FrameOptions) -> Result<StochasticRun> {
    let mut q = VirtualQueue::new(targets.to_vec())?;
    let mut monitor = opts.tolerances.map(LemmaMonitor::new);
    let mut frames = Vec::with_capacity(set.frames.len());
    for frame in &set.frames {
        let regions = frame.regions(&set.region_set);
        let r = match policy {
            FramePolicy::Do => do_frame(frame, &regions, &q, set.f_max, opts, monitor.as_mut())?,
            FramePolicy::Lfdo { v } => lfdo_frame(frame, &regions, &q, v, set.f_max, opts, monitor.as_mut())?,
            FramePolicy::Lookahead { v } => d_lookahead_frame(frame, &regions, &q, v, &opts.solver)?,
        };
        q.lengths.clone_from(&r.queue_after);
        frames.push(r);
    }
    Ok(StochasticRun { frames, monitor })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub frames: usize,
    /// `Q_n[K] / K`.
    pub queue_rate: Vec<f64>,
    /// `(1/K) sum_k b_n[k]`.
    pub avg_throughput: Vec<f64>,
    pub avg_reward: f64,
    /// Drift bound estimate `sum_n max(delta_n, b_n^max)^2`.
    pub b_hat: f64,
    /// Per user, `Q_n[K]/K - Q_n[0]/K - (delta_n - avg b_n)`; never negative.
    pub violation_slack: Vec<f64>,
    /// Queue nonnegativity and the telescoped bound held on the whole history.
    pub identities_hold: bool,
}

/// Stability metrics of a frame history. `b_max[n]` bounds user `n`'s
/// per-frame service.
pub fn stability_report(history: &[FrameResult], targets: &[f64], b_max: &[f64]) -> Result<StabilityReport> {
    let n = targets.len();
    if history.is_empty() {
        return Err(Error::config("at least one frame required"));
    }
    if b_max.len() != n || history.iter().any(|f| f.served.len() != n || f.queue_after.len() != n) {
        return Err(Error::structural("per-user vectors must match the target count"));
    }
    let k = history.len() as f64;
    let q0 = &history[0].queue_before;
    let qk = &history[history.len() - 1].queue_after;
    let mut identities_hold = history.iter().all(|f| f.queue_before.iter().chain(&f.queue_after).all(|q| *q >= 0.0));
    let mut avg_throughput = vec![0.0; n];
    let mut violation_slack = vec![0.0; n];
    for u in 0..n {
        let total: f64 = history.iter().map(|f| f.served[u]).sum();
        avg_throughput[u] = total / k;
        // Each update can only add delta - b or clip upward, so the telescoped
        // sum is a lower bound on the final queue up to rounding.
        let deficit: f64 = history.iter().map(|f| targets[u] - f.served[u]).sum();
        let slack = qk[u] - q0[u] - deficit;
        let scale = history.iter().map(|f| f.queue_after[u] + targets[u] + f.served[u]).sum::<f64>();
        if slack < -1e-12 * (1.0 + scale) {
            identities_hold = false;
        }
        violation_slack[u] = slack / k;
    }
    Ok(StabilityReport {
        frames: history.len(),
        queue_rate: qk.iter().map(|q| q / k).collect(),
        avg_throughput,
        avg_reward: history.iter().map(|f| f.reward).sum::<f64>() / k,
        b_hat: targets.iter().zip(b_max).map(|(d, b)| d.max(*b).powi(2)).sum(),
        violation_slack,
        identities_hold,
    })
}

/// Per-user bound on per-frame service: `D` times the best rate over the region set.
pub fn service_bound(set: &FrameSet, frame_len: usize) -> Vec<f64> {
    let n = set.region_set.first().map_or(0, |r| r.num_users());
    (0..n)
        .map(|u| frame_len as f64 * set.region_set.iter().map(|r| r.max_rate(u)).fold(0.0, f64::max))
        .collect()
}
