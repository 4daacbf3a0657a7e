//! Acceptance suite: one PASS/FAIL line per criterion on stderr.
//!
//! Hard gates assert. Soft gates (the comparative reward orderings and the
//! long-run throughput trajectories) report their outcome without failing
//! the build.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::Instant;

use dosched_core::harness::median;
use dosched_core::invariants::LemmaMonitor;
use dosched_core::numerics::{PowerUtility, Utility};
use dosched_core::offline::{brute_force_solve, offline_solve, tiny_instance};
use dosched_core::online::{competitive_bound, competitive_constant};
use dosched_core::sim::{run_online, Algorithm, RunOptions, RunResult};
use dosched_core::solver::SolverOptions;
use dosched_core::stochastic::{
    d_lookahead_frame, run_frames, service_bound, stability_report, FrameOptions, FramePolicy, StochasticRun, VirtualQueue,
};
use dosched_core::workload::{generate_frames, generate_instance, FrameConfig, FrameSet, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n} [{verdict}] {name}: {detail}");
}

fn adversarial(seed: u64) -> ScenarioConfig {
    ScenarioConfig { num_users: 3, horizon: 100, arrival_prob: 0.3, deadline_range: (2, 10), seed, ..Default::default() }
}

struct SuiteRuns {
    full: Vec<RunResult>,
    light: Vec<RunResult>,
    secs: f64,
}

fn suite_runs() -> &'static SuiteRuns {
    static RUNS: OnceLock<SuiteRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t0 = Instant::now();
        let mut full = Vec::new();
        let mut light = Vec::new();
        for seed in 1..=100 {
            let inst = generate_instance(&adversarial(seed)).unwrap();
            full.push(run_online(&inst, Algorithm::Do, &RunOptions::default()).unwrap());
            light.push(run_online(&inst, Algorithm::Lightweight, &RunOptions::default()).unwrap());
        }
        SuiteRuns { full, light, secs: t0.elapsed().as_secs_f64() }
    })
}

#[test]
fn criterion_1_duality_and_competitive_bound() {
    let runs = suite_runs();
    let mut worst_duality = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    let mut pass = true;
    for r in &runs.full {
        let (p, d) = (r.primal, r.dual.unwrap());
        worst_duality = worst_duality.max(p - d);
        worst_ratio = worst_ratio.max(d / p);
        pass &= p <= d && d <= p * r.bound + 1e-6 * p;
    }
    let bound = runs.full.iter().map(|r| r.bound).fold(f64::INFINITY, f64::min);
    report(
        1,
        "weak duality and competitive bound, 100 instances",
        pass,
        &format!("max P-D {worst_duality:.3e}, max D/P {worst_ratio:.4} (bound >= {bound:.4}), {:.1}s", runs.secs),
    );
    assert!(pass);
}

#[test]
fn criterion_2_lemma_checks() {
    let runs = suite_runs();
    let mut full = LemmaMonitor::default();
    let mut light = LemmaMonitor::default();
    let mut light_duality = true;
    let mut ratios = Vec::new();
    for (f, l) in runs.full.iter().zip(&runs.light) {
        full.merge(f.monitor.as_ref().unwrap());
        light.merge(l.monitor.as_ref().unwrap());
        let d = l.dual.unwrap();
        light_duality &= l.primal <= d;
        ratios.push(d / l.primal);
    }
    let light_ok = light.violations[1..].iter().all(|v| *v == 0) && light_duality;
    let pass = full.total_violations() == 0 && light_ok;
    report(
        2,
        "per-slot lemma checks, full and lightweight",
        pass,
        &format!(
            "full violations {:?} over {:?} checks; lightweight violations {:?}, weak duality {}, median D/P {:.4} (recorded)",
            full.violations,
            full.checks,
            &light.violations[1..],
            light_duality,
            median(&ratios)
        ),
    );
    for v in full.first.iter().chain(&light.first).take(5) {
        let _ = writeln!(std::io::stderr(), "    {v}");
    }
    assert!(pass);
}

#[test]
fn criterion_3_offline_matches_grid_oracle() {
    let t0 = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut pass = true;
    for seed in 0..20 {
        let inst = tiny_instance(seed).unwrap();
        let off = offline_solve(&inst, 1e-9).unwrap();
        let bf = brute_force_solve(&inst, 0.1).unwrap();
        let scale = 1.0 + off.objective.abs();
        worst = worst.max((off.objective - bf.objective).abs() / scale);
        worst_gap = worst_gap.max(off.gap / scale);
        pass &= (off.objective - bf.objective).abs() <= 0.01 * scale && off.gap <= 1e-3 * scale;
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    report(
        3,
        "offline solver vs grid oracle, 20 tiny instances",
        pass,
        &format!("max rel diff {worst:.3e}, max rel gap {worst_gap:.3e}, {secs:.1}s"),
    );
    assert!(pass);
}

/// `inf_{x >= 0} alpha x - f(x)` by bracketing and golden section.
fn conjugate_by_search(f: &PowerUtility, alpha: f64) -> f64 {
    let h = |x: f64| alpha * x - f.eval(x).unwrap();
    let slope = |x: f64| (h(x + 1e-7 * (1.0 + x)) - h(x)) / (1e-7 * (1.0 + x));
    if slope(0.0) >= 0.0 {
        return h(0.0).min(0.0);
    }
    let mut hi = 1.0;
    while slope(hi) < 0.0 {
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if h(c) <= h(d) {
            b = d;
        } else {
            a = c;
        }
    }
    h(0.5 * (a + b))
}

#[test]
fn criterion_4_numerics_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut fd, mut conj, mut pair, mut lower) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let f = PowerUtility::new(rng.random_range(0.01..1.0), rng.random_range(0.01..0.99)).unwrap();
        let x: f64 = rng.random_range(0.0..30.0);
        let g = f.grad(x).unwrap();
        let h = 1e-5 * (1.0 + x);
        let lo = (x - h).max(0.0);
        let num = (f.eval(x + h).unwrap() - f.eval(lo).unwrap()) / (x + h - lo);
        fd = fd.max((num - g).abs() / (1.0 + g.abs()));
        let alpha = g * rng.random_range(0.3..1.5);
        let closed = f.conjugate(alpha).unwrap();
        conj = conj.max((closed - conjugate_by_search(&f, alpha)).abs() / (1.0 + closed.abs()));
        pair = pair.max((f.eval(x).unwrap() + f.conjugate(g).unwrap() - x * g).abs() / (1.0 + (x * g).abs()));
        lower = lower.max(-f.eval(x).unwrap() - f.conjugate(g).unwrap());
    }
    let pass = fd <= 1e-6 && conj <= 1e-6 && pair <= 1e-6 && lower <= 1e-12;
    report(
        4,
        "utility numerics, 1000 samples",
        pass,
        &format!("finite diff {fd:.2e}, conjugate vs search {conj:.2e}, pair identity {pair:.2e}, lower bound slack {lower:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_competitive_constants() {
    let c1 = competitive_constant(1.0);
    let c_small = competitive_constant(1e-4);
    let limit = competitive_bound(1e-4);
    let target = 3.0 + 1.0 / (std::f64::consts::E - 1.0);
    let pass = c1 == 2.0 && (c_small - std::f64::consts::E).abs() <= 1e-3 && (limit - target).abs() <= 1e-3;
    report(
        5,
        "competitive constants",
        pass,
        &format!("C(1) = {c1}, C(1e-4) = {c_small:.6}, bound(1e-4) = {limit:.6} vs {target:.6}"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_reward_orderings_soft() {
    let t0 = Instant::now();
    let mut holds = 0;
    let mut parts = [0usize; 3];
    let mut lines = Vec::new();
    for k in 1..=9 {
        let p = k as f64 / 10.0;
        let algos = [Algorithm::Do, Algorithm::Lightweight, Algorithm::Primal, Algorithm::Greedy, Algorithm::Edd];
        let mut rewards = vec![Vec::new(); algos.len()];
        let mut tracking = Vec::new();
        for seed in 1..=50 {
            let inst = generate_instance(&ScenarioConfig { arrival_prob: p, ..adversarial(seed) }).unwrap();
            let opts = RunOptions { check_invariants: false, ..Default::default() };
            for (a, out) in algos.iter().zip(rewards.iter_mut()) {
                let r = run_online(&inst, *a, &opts).unwrap();
                if *a == Algorithm::Do {
                    let d = r.dual.unwrap();
                    tracking.push(if d > 0.0 { r.primal / d } else { 1.0 });
                }
                out.push(r.primal);
            }
        }
        let m: Vec<f64> = rewards.iter().map(|r| median(r)).collect();
        let each = [m[0] >= 0.98 * m[1], m[0] >= m[2], m[2] >= m[3].max(m[4])];
        for (c, e) in parts.iter_mut().zip(each) {
            *c += e as usize;
        }
        let ok = each.iter().all(|e| *e);
        holds += ok as usize;
        lines.push(format!(
            "    p={p:.1} DO {:.2} LW {:.2} Primal {:.2} Greedy {:.2} EDD {:.2} DO/D {:.3} {}",
            m[0],
            m[1],
            m[2],
            m[3],
            m[4],
            median(&tracking),
            if ok { "ok" } else { "ordering broken" }
        ));
    }
    report(
        6,
        "median reward orderings over p (soft)",
        holds >= 7,
        &format!(
            "all orderings hold at {holds}/9 values of p (DO >= 0.98 LW {}/9, DO >= Primal {}/9, Primal >= max(Greedy, EDD) {}/9), {:.0}s",
            parts[0],
            parts[1],
            parts[2],
            t0.elapsed().as_secs_f64()
        ),
    );
    for l in lines {
        let _ = writeln!(std::io::stderr(), "{l}");
    }
}

struct FrameRuns {
    seeds: Vec<(FrameConfig, FrameSet, StochasticRun, StochasticRun)>,
    secs: f64,
}

fn frame_runs() -> &'static FrameRuns {
    static RUNS: OnceLock<FrameRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t0 = Instant::now();
        let seeds = (1..=10)
            .map(|seed| {
                let cfg = FrameConfig::asymmetric_five_user(seed);
                let set = generate_frames(&cfg).unwrap();
                let opts = FrameOptions::default();
                let plain = run_frames(&set, &cfg.targets, FramePolicy::Do, &opts).unwrap();
                let fair = run_frames(&set, &cfg.targets, FramePolicy::Lfdo { v: 0.1 }, &opts).unwrap();
                (cfg, set, plain, fair)
            })
            .collect();
        FrameRuns { seeds, secs: t0.elapsed().as_secs_f64() }
    })
}

#[test]
fn criterion_7_long_term_throughput_soft() {
    let runs = frame_runs();
    let (mut below, mut reached, mut reward_ok) = (0, 0, 0);
    let mut detail = Vec::new();
    for (cfg, set, plain, fair) in &runs.seeds {
        let b = service_bound(set, cfg.frame_len);
        let p = stability_report(&plain.frames, &cfg.targets, &b).unwrap();
        let f = stability_report(&fair.frames, &cfg.targets, &b).unwrap();
        let delta = cfg.targets[0];
        below += (p.avg_throughput[0] < delta) as usize;
        reached += (f.avg_throughput[0] >= 0.95 * delta) as usize;
        let ratio = f.avg_reward / p.avg_reward;
        reward_ok += (ratio >= 0.85) as usize;
        detail.push(format!("{:.4}/{:.4}/{:.3}", p.avg_throughput[0], f.avg_throughput[0], ratio));
    }
    let pass = below >= 9 && reached >= 9 && reward_ok == 10 && runs.secs < 600.0;
    report(
        7,
        "target user throughput, plain vs fair, K=2000, 10 seeds (soft)",
        pass,
        &format!("plain below target {below}/10, fair reaches target {reached}/10, reward ratio >= 0.85 {reward_ok}/10, {:.0}s", runs.secs),
    );
    let _ = writeln!(std::io::stderr(), "    plain b0 / fair b0 / reward ratio: {}", detail.join(" "));
}

#[test]
fn criterion_8_queue_identities_and_stability() {
    let runs = frame_runs();
    let mut identities = true;
    let mut worst_rate = 0.0f64;
    for (cfg, set, plain, fair) in &runs.seeds {
        let b = service_bound(set, cfg.frame_len);
        for run in [plain, fair] {
            let rep = stability_report(&run.frames, &cfg.targets, &b).unwrap();
            identities &= rep.identities_hold;
        }
        let rep = stability_report(&fair.frames, &cfg.targets, &b).unwrap();
        for (q, d) in rep.queue_rate.iter().zip(&cfg.targets) {
            if *d > 0.0 {
                worst_rate = worst_rate.max(q / d);
            }
        }
    }
    let pass = identities && worst_rate <= 0.05;
    report(
        8,
        "queue identities and terminal queue rate",
        pass,
        &format!("identities hold {identities}, max Q/K as a fraction of target {worst_rate:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_9_lookahead_dominates_every_frame() {
    let runs = frame_runs();
    let t0 = Instant::now();
    let opts = SolverOptions::default();
    let mut frames = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    for (cfg, set, _, fair) in &runs.seeds {
        for (frame, r) in set.frames.iter().zip(&fair.frames) {
            let q = VirtualQueue { lengths: r.queue_before.clone(), targets: cfg.targets.clone() };
            let la = d_lookahead_frame(frame, &frame.regions(&set.region_set), &q, 0.1, &opts).unwrap();
            let tol = la.gap + 1e-9 * (1.0 + la.objective.abs());
            worst = worst.max(r.objective - la.objective);
            pass &= la.objective >= r.objective - tol;
            frames += 1;
        }
    }
    report(
        9,
        "frame lookahead dominates the online frame objective",
        pass,
        &format!("{frames} frames, max online excess {worst:.3e}, {:.0}s", t0.elapsed().as_secs_f64()),
    );
    assert!(pass);
}
