//! Experiment orchestration: spec files, runs over seeds and algorithms,
//! parameter sweeps, the validation suite and CSV artifacts.
//!
//! Spec files are flat `key=value` lines with dotted sections, for example
//! `scenario.p=0.3` or `lfdo.V=0.1`. Lists are comma separated and seed
//! lists accept inclusive ranges such as `1..50`. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::invariants::{LemmaMonitor, Tolerances};
use crate::numerics::{PowerUtility, Utility};
use crate::offline::{brute_force_solve, offline_solve, tiny_instance};
use crate::online::Variant;
use crate::region::sample_region;
use crate::sim::{run_online, Algorithm, RunOptions, RunResult};
use crate::solver::SolverOptions;
use crate::stochastic::{run_frames, service_bound, stability_report, FrameOptions, FramePolicy};
use crate::workload::{generate_frames, generate_instance, FrameConfig, ScenarioConfig};

/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_VAR: &str = "DOSCHED_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Adversarial,
    Stochastic,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub scenario: ScenarioConfig,
    pub frames: FrameConfig,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub tolerances: Tolerances,
    pub solver: SolverOptions,
    pub offline_tol: f64,
    /// Write per-slot traces next to the summaries.
    pub trace: bool,
    /// Fault injection for the beta update; 1 in normal runs.
    pub beta_scale: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            mode: Mode::Adversarial,
            scenario: ScenarioConfig::default(),
            frames: FrameConfig::asymmetric_five_user(1),
            algorithms: vec![Algorithm::Do],
            seeds: (1..=50).collect(),
            output: PathBuf::from("out"),
            tolerances: Tolerances::default(),
            solver: SolverOptions::default(),
            offline_tol: 1e-6,
            trace: false,
            beta_scale: 1.0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (parse_num("seeds", a)?, parse_num("seeds", b)?);
                if a > b {
                    return Err(Error::config(format!("seeds: empty range '{part}'")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num("seeds", part)?),
        }
    }
    Ok(out)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::config(format!("{key}: expected a boolean, got '{other}'"))),
    }
}

impl ExperimentSpec {
    /// Parses a spec file body; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: "expected key=value".into() })?;
            spec.set(key.trim(), value.trim()).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        }
        spec.finish();
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let sc = &mut self.scenario;
        let fr = &mut self.frames;
        match key {
            "mode" => {
                self.mode = match value {
                    "adversarial" => Mode::Adversarial,
                    "stochastic" => Mode::Stochastic,
                    other => return Err(Error::config(format!("unknown mode '{other}'"))),
                }
            }
            "algorithms" => {
                self.algorithms = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?
            }
            "seeds" => self.seeds = parse_seeds(value)?,
            "output" => self.output = PathBuf::from(value),
            "trace" => self.trace = parse_bool(key, value)?,
            "debug.beta_scale" => self.beta_scale = parse_num(key, value)?,
            "offline.tol" => self.offline_tol = parse_num(key, value)?,
            "solver.rel_tol" => self.solver.rel_tol = parse_num(key, value)?,
            "solver.max_newton" => self.solver.max_newton = parse_num(key, value)?,
            "tolerances.alpha" => self.tolerances.alpha = parse_num(key, value)?,
            "tolerances.gap" => self.tolerances.complementary_gap = parse_num(key, value)?,
            "tolerances.absolute" => self.tolerances.absolute = parse_num(key, value)?,
            "tolerances.membership" => self.tolerances.membership = parse_num(key, value)?,
            "scenario.users" => sc.num_users = parse_num(key, value)?,
            "scenario.horizon" => sc.horizon = parse_num(key, value)?,
            "scenario.p" => sc.arrival_prob = parse_num(key, value)?,
            "scenario.size_min" => sc.size_range.0 = parse_num(key, value)?,
            "scenario.size_max" => sc.size_range.1 = parse_num(key, value)?,
            "scenario.d_min" => sc.deadline_range.0 = parse_num(key, value)?,
            "scenario.d_max" | "D_max" => sc.deadline_range.1 = parse_num(key, value)?,
            "scenario.v_min" => sc.v_range.0 = parse_num(key, value)?,
            "scenario.v_max" => sc.v_range.1 = parse_num(key, value)?,
            "scenario.psi_min" => sc.psi_range.0 = parse_num(key, value)?,
            "scenario.psi_max" => sc.psi_range.1 = parse_num(key, value)?,
            "scenario.samples" => sc.samples_per_region = parse_num(key, value)?,
            "scenario.rate_caps" => sc.rate_caps = parse_list(key, value)?,
            "frames.frame_len" => {
                let d: usize = parse_num(key, value)?;
                fr.frame_len = d;
                for c in &mut fr.classes {
                    c.deadline = d;
                }
            }
            "frames.num_frames" => fr.num_frames = parse_num(key, value)?,
            "frames.targets" => fr.targets = parse_list(key, value)?,
            "frames.delta" | "delta" => {
                let d: f64 = parse_num(key, value)?;
                match fr.targets.first_mut() {
                    Some(t) => *t = d,
                    None => return Err(Error::config("no target to set")),
                }
            }
            "frames.V" | "lfdo.V" | "V" => fr.v_weight = parse_num(key, value)?,
            "frames.num_regions" => fr.num_regions = parse_num(key, value)?,
            "frames.samples" => fr.samples_per_region = parse_num(key, value)?,
            "frames.max_jobs" => fr.max_jobs_per_frame = parse_num(key, value)?,
            "frames.rate_caps" => fr.rate_caps = parse_list(key, value)?,
            "frames.throughput_caps" => fr.throughput_caps = Some(parse_list(key, value)?),
            "frames.sizes" => {
                let sizes: Vec<f64> = parse_list(key, value)?;
                if sizes.len() != fr.classes.len() {
                    return Err(Error::config("frames.sizes needs one size per class"));
                }
                for (c, s) in fr.classes.iter_mut().zip(sizes) {
                    c.size = s;
                }
            }
            other => return Err(Error::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Broadcasts a single rate cap over all users.
    fn finish(&mut self) {
        let sc = &mut self.scenario;
        if sc.rate_caps.len() != sc.num_users && !sc.rate_caps.is_empty() {
            sc.rate_caps = vec![sc.rate_caps[0]; sc.num_users];
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::config("at least one algorithm required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed required"));
        }
        if !(self.offline_tol > 0.0) {
            return Err(Error::config("offline.tol must be positive"));
        }
        match self.mode {
            Mode::Adversarial => {
                self.scenario.validate()?;
                if let Some(a) = self.algorithms.iter().find(|a| matches!(a, Algorithm::Lfdo | Algorithm::DLookahead)) {
                    return Err(Error::config(format!("{a} needs stochastic mode")));
                }
            }
            Mode::Stochastic => {
                self.frames.validate()?;
                if let Some(a) = self.algorithms.iter().find(|a| !matches!(a, Algorithm::Do | Algorithm::Lightweight | Algorithm::Lfdo | Algorithm::DLookahead)) {
                    return Err(Error::config(format!("{a} is not a frame policy")));
                }
            }
        }
        Ok(())
    }

    /// Output directory, resolved against the output-root variable when relative.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output.is_relative() => PathBuf::from(root).join(&self.output),
            _ => self.output.clone(),
        }
    }
}

/// One (seed, algorithm) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Total reward in adversarial mode, average per-frame reward in stochastic mode.
    pub reward: f64,
    pub dual: Option<f64>,
    pub c: f64,
    pub f_max: f64,
    pub bound: f64,
    /// Offline certified gap.
    pub gap: Option<f64>,
    pub violations: [usize; 5],
    /// Stochastic mode: per-user average timely throughput.
    pub throughput: Vec<f64>,
    /// Stochastic mode: per-user `Q_n[K] / K`.
    pub queue_rate: Vec<f64>,
    pub identities_hold: bool,
}

impl CellSummary {
    pub fn dual_ratio(&self) -> Option<f64> {
        self.dual.map(|d| if self.reward > 0.0 { d / self.reward } else if d <= 0.0 { 1.0 } else { f64::INFINITY })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub seeds: usize,
    pub median_reward: f64,
    pub mean_reward: f64,
    pub median_dual_ratio: Option<f64>,
    pub max_dual_ratio: Option<f64>,
    pub violations: usize,
    pub mean_throughput: Vec<f64>,
    pub mean_queue_rate: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub cells: Vec<CellSummary>,
    pub aggregate: Vec<AggregateRow>,
    /// Human-readable invariant violations; empty on a clean run.
    pub violations: Vec<String>,
    pub files: Vec<PathBuf>,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| sig12(*x)).collect::<Vec<_>>().join(";")
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }
}

fn monitor_report(seed: u64, algo: Algorithm, m: &LemmaMonitor, out: &mut Vec<String>) {
    for v in &m.first {
        out.push(format!("seed {seed} {algo}: {v}"));
    }
    let listed = m.first.len();
    let total = m.total_violations();
    if total > listed {
        out.push(format!("seed {seed} {algo}: {} further violations", total - listed));
    }
}

fn online_cell(seed: u64, r: &RunResult) -> CellSummary {
    CellSummary {
        seed,
        algorithm: r.algorithm,
        reward: r.primal,
        dual: r.dual,
        c: r.c,
        f_max: r.f_max,
        bound: r.bound,
        gap: None,
        violations: r.monitor.as_ref().map_or([0; 5], |m| m.violations),
        throughput: Vec::new(),
        queue_rate: Vec::new(),
        identities_hold: true,
    }
}

const SUMMARY_HEADER: &str = "seed,algorithm,P,D,D_over_P,C,F_max,bound,gap,lemma1,lemma2,lemma3,lemma4,lemma5,throughput,queue_rate\n";

fn summary_line(c: &CellSummary) -> String {
    let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
    let v = c.violations;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        c.seed,
        c.algorithm,
        sig12(c.reward),
        opt(c.dual),
        opt(c.dual_ratio()),
        sig12(c.c),
        sig12(c.f_max),
        sig12(c.bound),
        opt(c.gap),
        v[0],
        v[1],
        v[2],
        v[3],
        v[4],
        join(&c.throughput),
        join(&c.queue_rate)
    )
}

fn trace_csv(r: &RunResult) -> String {
    let mut s = String::from("t,job,x,alpha,beta,dP\n");
    for row in &r.trace {
        let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            row.t,
            row.job,
            sig12(row.rate),
            opt(row.alpha),
            opt(row.beta),
            sig12(row.reward_gain)
        );
    }
    s
}

fn aggregate(cells: &[CellSummary], algorithms: &[Algorithm]) -> Vec<AggregateRow> {
    algorithms
        .iter()
        .map(|&a| {
            let mine: Vec<&CellSummary> = cells.iter().filter(|c| c.algorithm == a).collect();
            let rewards: Vec<f64> = mine.iter().map(|c| c.reward).collect();
            let ratios: Vec<f64> = mine.iter().filter_map(|c| c.dual_ratio()).collect();
            let users = mine.first().map_or(0, |c| c.throughput.len());
            let col = |f: &dyn Fn(&CellSummary) -> &Vec<f64>| -> Vec<f64> {
                (0..users).map(|u| mean(&mine.iter().map(|c| f(c)[u]).collect::<Vec<_>>())).collect()
            };
            AggregateRow {
                algorithm: a,
                seeds: mine.len(),
                median_reward: median(&rewards),
                mean_reward: mean(&rewards),
                median_dual_ratio: (!ratios.is_empty()).then(|| median(&ratios)),
                max_dual_ratio: ratios.iter().copied().reduce(f64::max),
                violations: mine.iter().map(|c| c.violations.iter().sum::<usize>()).sum(),
                mean_throughput: col(&|c| &c.throughput),
                mean_queue_rate: col(&|c| &c.queue_rate),
            }
        })
        .collect()
}

const AGGREGATE_HEADER: &str =
    "algorithm,seeds,median_P,mean_P,median_D_over_P,max_D_over_P,violations,mean_throughput,mean_queue_rate\n";

fn aggregate_line(r: &AggregateRow) -> String {
    let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        r.algorithm,
        r.seeds,
        sig12(r.median_reward),
        sig12(r.mean_reward),
        opt(r.median_dual_ratio),
        opt(r.max_dual_ratio),
        r.violations,
        join(&r.mean_throughput),
        join(&r.mean_queue_rate)
    )
}

/// Runs every (seed, algorithm) cell, writes per-cell and aggregate CSVs,
/// and collects invariant violations.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut w = Writer::new(spec.output_dir())?;
    let mut report = ExperimentReport::default();
    for &seed in &spec.seeds {
        match spec.mode {
            Mode::Adversarial => adversarial_seed(spec, seed, &mut w, &mut report)?,
            Mode::Stochastic => stochastic_seed(spec, seed, &mut w, &mut report)?,
        }
    }
    report.aggregate = aggregate(&report.cells, &spec.algorithms);
    let mut body = String::from(AGGREGATE_HEADER);
    for row in &report.aggregate {
        body.push_str(&aggregate_line(row));
    }
    w.write("aggregate.csv", &body)?;
    let mut all = String::from(SUMMARY_HEADER);
    for c in &report.cells {
        all.push_str(&summary_line(c));
    }
    w.write("summary.csv", &all)?;
    report.files = w.files;
    Ok(report)
}

fn adversarial_seed(spec: &ExperimentSpec, seed: u64, w: &mut Writer, report: &mut ExperimentReport) -> Result<()> {
    let inst = generate_instance(&ScenarioConfig { seed, ..spec.scenario.clone() })?;
    let opts = RunOptions {
        check_invariants: true,
        keep_trace: spec.trace,
        solver: spec.solver,
        tolerances: spec.tolerances,
        beta_scale: spec.beta_scale,
    };
    for &algo in &spec.algorithms {
        let cell = if algo == Algorithm::Offline {
            let off = offline_solve(&inst, spec.offline_tol)?;
            if !off.converged {
                return Err(Error::Convergence { residual: off.gap, iterations: 0 });
            }
            if spec.trace {
                let mut s = String::from("t,job,x\n");
                for (t, (jobs, rates)) in off.slot_jobs.iter().zip(&off.rates).enumerate() {
                    for (&k, &x) in jobs.iter().zip(rates) {
                        let _ = writeln!(s, "{t},{},{}", inst.jobs[k].id, sig12(x));
                    }
                }
                w.write(&format!("trace_{algo}_seed{seed}.csv"), &s)?;
            }
            let f_max = inst.f_max();
            CellSummary {
                seed,
                algorithm: algo,
                reward: off.objective,
                dual: None,
                c: crate::online::competitive_constant(f_max),
                f_max,
                bound: crate::online::competitive_bound(f_max),
                gap: Some(off.gap),
                violations: [0; 5],
                throughput: Vec::new(),
                queue_rate: Vec::new(),
                identities_hold: true,
            }
        } else {
            let r = run_online(&inst, algo, &opts)?;
            if let Some(m) = &r.monitor {
                monitor_report(seed, algo, m, &mut report.violations);
            }
            if let Some(d) = r.dual {
                // Weak duality and the competitive bound are part of every DO run.
                let p = r.primal;
                if p > d + 1e-9 * (1.0 + p.abs()) {
                    report.violations.push(format!("seed {seed} {algo}: weak duality P {p} > D {d}"));
                }
                if algo == Algorithm::Do && d > p * r.bound + 1e-6 * p {
                    report.violations.push(format!("seed {seed} {algo}: D/P {} above bound {}", d / p, r.bound));
                }
            }
            if spec.trace {
                w.write(&format!("trace_{algo}_seed{seed}.csv"), &trace_csv(&r))?;
            }
            online_cell(seed, &r)
        };
        w.write(&format!("summary_{algo}_seed{seed}.csv"), &format!("{SUMMARY_HEADER}{}", summary_line(&cell)))?;
        report.cells.push(cell);
    }
    Ok(())
}

fn stochastic_seed(spec: &ExperimentSpec, seed: u64, w: &mut Writer, report: &mut ExperimentReport) -> Result<()> {
    let cfg = FrameConfig { seed, ..spec.frames.clone() };
    let set = generate_frames(&cfg)?;
    let b_max = service_bound(&set, cfg.frame_len);
    let v = cfg.v_weight;
    for &algo in &spec.algorithms {
        let (policy, variant) = match algo {
            Algorithm::Do => (FramePolicy::Do, Variant::Full),
            Algorithm::Lightweight => (FramePolicy::Do, Variant::Lightweight),
            Algorithm::Lfdo => (FramePolicy::Lfdo { v }, Variant::Full),
            _ => (FramePolicy::Lookahead { v }, Variant::Full),
        };
        let opts = FrameOptions { variant, solver: spec.solver, tolerances: Some(spec.tolerances) };
        let run = run_frames(&set, &cfg.targets, policy, &opts)?;
        if let Some(m) = &run.monitor {
            monitor_report(seed, algo, m, &mut report.violations);
        }
        let rep = stability_report(&run.frames, &cfg.targets, &b_max)?;
        if !rep.identities_hold {
            report.violations.push(format!("seed {seed} {algo}: queue identity violated"));
        }
        let n = cfg.num_users;
        let mut frames_csv = String::from("k");
        for u in 0..n {
            let _ = write!(frames_csv, ",Q{u}");
        }
        for u in 0..n {
            let _ = write!(frames_csv, ",b{u}");
        }
        frames_csv.push_str(",P,V\n");
        let mut plot = String::from("x,y\n");
        let mut running = 0.0;
        for f in &run.frames {
            let _ = write!(frames_csv, "{}", f.k);
            for q in &f.queue_before {
                let _ = write!(frames_csv, ",{}", sig12(*q));
            }
            for b in &f.served {
                let _ = write!(frames_csv, ",{}", sig12(*b));
            }
            let _ = writeln!(frames_csv, ",{},{}", sig12(f.reward), sig12(v));
            running += f.served[0];
            let _ = writeln!(plot, "{},{}", f.k + 1, sig12(running / (f.k + 1) as f64));
        }
        w.write(&format!("frames_{algo}_seed{seed}.csv"), &frames_csv)?;
        w.write(&format!("plot_throughput_user0_{algo}_seed{seed}.csv"), &plot)?;
        let mut stab = String::from("user,delta,avg_throughput,queue_rate,violation_slack,b_hat,avg_reward\n");
        for u in 0..n {
            let _ = writeln!(
                stab,
                "{u},{},{},{},{},{},{}",
                sig12(cfg.targets[u]),
                sig12(rep.avg_throughput[u]),
                sig12(rep.queue_rate[u]),
                sig12(rep.violation_slack[u]),
                sig12(rep.b_hat),
                sig12(rep.avg_reward)
            );
        }
        w.write(&format!("stability_{algo}_seed{seed}.csv"), &stab)?;
        let cell = CellSummary {
            seed,
            algorithm: algo,
            reward: rep.avg_reward,
            dual: None,
            c: crate::online::competitive_constant(set.f_max),
            f_max: set.f_max,
            bound: crate::online::competitive_bound(set.f_max),
            gap: None,
            violations: run.monitor.as_ref().map_or([0; 5], |m| m.violations),
            throughput: rep.avg_throughput,
            queue_rate: rep.queue_rate,
            identities_hold: rep.identities_hold,
        };
        w.write(&format!("summary_{algo}_seed{seed}.csv"), &format!("{SUMMARY_HEADER}{}", summary_line(&cell)))?;
        report.cells.push(cell);
    }
    Ok(())
}

/// Parameters accepted by [`sweep`].
pub const SWEEP_PARAMS: [&str; 4] = ["p", "D_max", "V", "delta"];

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    /// `(value, aggregate row)` in sweep order.
    pub rows: Vec<(f64, AggregateRow)>,
    pub violations: Vec<String>,
}

/// Runs the experiment once per value, each into its own subdirectory, and
/// writes one aggregated row per (value, algorithm) plus x,y plot series.
pub fn sweep(spec: &ExperimentSpec, param: &str, values: &[f64]) -> Result<SweepReport> {
    let key = match param {
        "p" => "scenario.p",
        "D_max" => "scenario.d_max",
        "V" => "frames.V",
        "delta" => "frames.delta",
        other => return Err(Error::config(format!("cannot sweep '{other}'; expected one of {SWEEP_PARAMS:?}"))),
    };
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let mut report = SweepReport::default();
    let base = spec.output_dir();
    for &value in values {
        let mut s = spec.clone();
        s.set(key, &sig12(value))?;
        s.output = base.join(format!("{param}={}", sig12(value)));
        let r = run_experiment(&s)?;
        report.violations.extend(r.violations.into_iter().map(|v| format!("{param}={}: {v}", sig12(value))));
        report.rows.extend(r.aggregate.into_iter().map(|row| (value, row)));
    }
    let mut w = Writer::new(base)?;
    let mut body = format!("{param},{AGGREGATE_HEADER}");
    for (value, row) in &report.rows {
        body.push_str(&format!("{},{}", sig12(*value), aggregate_line(row)));
    }
    w.write(&format!("sweep_{param}.csv"), &body)?;
    for &algo in &spec.algorithms {
        let mut plot = String::from("x,y\n");
        for (value, row) in report.rows.iter().filter(|(_, r)| r.algorithm == algo) {
            let _ = writeln!(plot, "{},{}", sig12(*value), sig12(row.median_reward));
        }
        w.write(&format!("plot_{param}_{algo}.csv"), &plot)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst residual of the check; non-positive when it passed with margin.
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<28} residual {:>12} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                sig12(c.residual),
                c.detail
            );
        }
        s
    }

    fn push(&mut self, name: &str, residual: f64, detail: String) {
        self.checks.push(CheckResult { name: name.into(), passed: residual <= 0.0, residual, detail });
    }
}

fn numerics_checks(report: &mut ValidationReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut fd, mut pair, mut lemma6) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let f = PowerUtility::new(rng.random_range(0.01..1.0), rng.random_range(0.01..0.99))?;
        let x: f64 = rng.random_range(0.0..25.0);
        let h = 1e-5 * (1.0 + x);
        let lo = (x - h).max(0.0);
        let num = (f.eval(x + h)? - f.eval(lo)?) / (x + h - lo);
        let g = f.grad(x)?;
        let scale = 1.0 + g.abs();
        fd = fd.max((num - g).abs() / scale - 1e-6);
        pair = pair.max((f.eval(x)? + f.conjugate(g)? - x * g).abs() / (1.0 + (x * g).abs()) - 1e-6);
        lemma6 = lemma6.max(-f.eval(x)? - f.conjugate(g)? - 1e-12);
    }
    report.push("gradient finite difference", fd, "1000 samples, tol 1e-6".into());
    report.push("complementary pair", pair, "1000 samples, tol 1e-6".into());
    report.push("conjugate lower bound", lemma6, "f*(grad u) >= -f(u), 1000 samples".into());
    Ok(())
}

fn oracle_check(report: &mut ValidationReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let r = sample_region(&vec![1.0; n], rng.random_range(1..=8), &mut rng)?;
        let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (alloc, val) = r.linear_max(&coeffs)?;
        for v in r.vertices() {
            let dot: f64 = v.iter().zip(&coeffs).map(|(a, b)| a * b).sum();
            worst = worst.max(dot - val - 1e-12);
        }
        if !r.contains(&alloc.rates, 1e-9) {
            worst = worst.max(1.0);
        }
    }
    report.push("linear oracle optimality", worst, "200 random regions".into());
    Ok(())
}

/// Runs the invariant suite on the spec's scenario and seeds and prints
/// nothing; callers render the report.
pub fn validate(spec: &ExperimentSpec) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    numerics_checks(&mut report)?;
    oracle_check(&mut report)?;
    let opts = RunOptions { tolerances: spec.tolerances, solver: spec.solver, ..Default::default() };
    let mut full = LemmaMonitor::new(spec.tolerances);
    let mut light = LemmaMonitor::new(spec.tolerances);
    let (mut duality, mut bound) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut light_duality = f64::NEG_INFINITY;
    for &seed in &spec.seeds {
        let inst = generate_instance(&ScenarioConfig { seed, ..spec.scenario.clone() })?;
        let r = run_online(&inst, Algorithm::Do, &opts)?;
        let (p, d) = (r.primal, r.dual.unwrap_or(f64::NAN));
        duality = duality.max(p - d - 1e-9 * (1.0 + p.abs()));
        bound = bound.max(d - p * r.bound - 1e-6 * p);
        full.merge(r.monitor.as_ref().expect("invariants enabled"));
        let l = run_online(&inst, Algorithm::Lightweight, &opts)?;
        light_duality = light_duality.max(l.primal - l.dual.unwrap_or(f64::NAN) - 1e-9 * (1.0 + l.primal.abs()));
        light.merge(l.monitor.as_ref().expect("invariants enabled"));
    }
    let seeds = format!("{} seeds", spec.seeds.len());
    report.push("weak duality", duality, seeds.clone());
    report.push("competitive bound", bound, seeds.clone());
    for k in 0..5 {
        report.push(&format!("lemma {} (full)", k + 1), full.worst[k], format!("{} checks", full.checks[k]));
    }
    report.push("weak duality (lightweight)", light_duality, seeds);
    for k in 1..5 {
        report.push(&format!("lemma {} (lightweight)", k + 1), light.worst[k], format!("{} checks", light.checks[k]));
    }
    // Queue identities on a short stochastic run.
    let cfg = FrameConfig { num_frames: spec.frames.num_frames.min(200), ..spec.frames.clone() };
    let set = generate_frames(&cfg)?;
    let run = run_frames(&set, &cfg.targets, FramePolicy::Lfdo { v: cfg.v_weight }, &FrameOptions::default())?;
    let rep = stability_report(&run.frames, &cfg.targets, &service_bound(&set, cfg.frame_len))?;
    let slack = rep.violation_slack.iter().copied().fold(f64::INFINITY, f64::min);
    report.push("queue identities", if rep.identities_hold { -slack.max(0.0) } else { 1.0 }, format!("{} frames", rep.frames));
    // Grid oracle agreement.
    let mut agree = f64::NEG_INFINITY;
    for seed in 0..20 {
        let inst = tiny_instance(seed)?;
        let off = offline_solve(&inst, 1e-9)?;
        let bf = brute_force_solve(&inst, 0.1)?;
        agree = agree.max((bf.objective - off.objective).abs() - 0.01 * (1.0 + off.objective.abs()));
    }
    report.push("grid oracle agreement", agree, "20 tiny instances".into());
    // Negative control: a corrupted beta update must be caught.
    let inst = generate_instance(&ScenarioConfig { seed: spec.seeds[0], ..spec.scenario.clone() })?;
    let bad = run_online(&inst, Algorithm::Do, &RunOptions { beta_scale: 0.5, ..opts })?;
    let caught = bad.monitor.as_ref().is_some_and(|m| m.violations[1] > 0);
    report.push("corrupted beta detected", if caught { -1.0 } else { 1.0 }, "beta update scaled by 0.5".into());
    Ok(report)
}
