//! Jobs, scenario generators and the line-oriented instance format.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::numerics::PowerUtility;
use crate::region::{sample_region, RateRegion};

/// A request `(arrival, deadline, size, reward, user)`; both slot bounds are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: usize,
    pub arrival: usize,
    pub deadline: usize,
    pub size: f64,
    pub utility: PowerUtility,
    pub user: usize,
}

impl Job {
    /// Activity indicator `A_tj`.
    pub fn is_active(&self, t: usize) -> bool {
        self.arrival <= t && t <= self.deadline
    }
}

/// Draws from the open interval `(lo, hi)`.
fn open_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    loop {
        let x = rng.random_range(lo..hi);
        if x > lo {
            return x;
        }
    }
}

fn sample_utility<R: Rng + ?Sized>(rng: &mut R, v: (f64, f64), psi: (f64, f64)) -> Result<PowerUtility> {
    let v = open_uniform(rng, v);
    let psi = open_uniform(rng, psi);
    Ok(PowerUtility::new(v, psi)?)
}

/// Horizon-based scenario with Bernoulli arrivals per user and slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub horizon: usize,
    pub arrival_prob: f64,
    pub size_range: (f64, f64),
    /// Inclusive range of activity-window lengths in slots.
    pub deadline_range: (usize, usize),
    pub v_range: (f64, f64),
    pub psi_range: (f64, f64),
    pub samples_per_region: usize,
    pub rate_caps: Vec<f64>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_users: 3,
            horizon: 200,
            arrival_prob: 0.3,
            size_range: (5.0, 25.0),
            deadline_range: (2, 10),
            v_range: (0.0, 1.0),
            psi_range: (0.01, 0.99),
            samples_per_region: 8,
            rate_caps: vec![4.0; 3],
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.horizon == 0 {
            return Err(Error::config("num_users and horizon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return Err(Error::config("arrival probability must lie in [0, 1]"));
        }
        let (lo, hi) = self.size_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::config("size range must be positive and nonempty"));
        }
        let (dlo, dhi) = self.deadline_range;
        if !(dlo >= 1 && dlo <= dhi) {
            return Err(Error::config("deadline range must be nonempty and start at 1 or more"));
        }
        let (vlo, vhi) = self.v_range;
        if !(vlo >= 0.0 && vlo <= vhi && vhi > 0.0) {
            return Err(Error::config("v range must be nonempty and positive"));
        }
        let (plo, phi) = self.psi_range;
        if !(plo > 0.0 && plo <= phi && phi < 1.0) {
            return Err(Error::config("psi range must lie inside (0, 1)"));
        }
        if self.rate_caps.len() != self.num_users {
            return Err(Error::config("one rate cap per user required"));
        }
        if self.samples_per_region == 0 {
            return Err(Error::config("samples_per_region must be positive"));
        }
        Ok(())
    }
}

/// A finite-horizon instance: jobs plus one region per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub num_users: usize,
    pub jobs: Vec<Job>,
    pub regions: Vec<RateRegion>,
}

impl Instance {
    pub fn new(num_users: usize, jobs: Vec<Job>, regions: Vec<RateRegion>) -> Result<Self> {
        let horizon = regions.len();
        for r in &regions {
            if r.num_users() != num_users {
                return Err(Error::structural("region user count differs from instance"));
            }
        }
        for j in &jobs {
            if j.arrival > j.deadline || j.deadline >= horizon {
                return Err(Error::structural(format!("job {} has an invalid activity window", j.id)));
            }
            if !(j.size > 0.0) || j.user >= num_users {
                return Err(Error::structural(format!("job {} has invalid size or user", j.id)));
            }
        }
        Ok(Self { num_users, jobs, regions })
    }

    pub fn horizon(&self) -> usize {
        self.regions.len()
    }

    /// Largest fraction of any job servable in one slot of its window.
    pub fn f_max(&self) -> f64 {
        jobs_f_max(&self.jobs, &self.regions, 0)
    }

    /// Job indices active at slot `t`, in id order.
    pub fn active_at(&self, t: usize) -> Vec<usize> {
        self.jobs
            .iter()
            .enumerate()
            .filter(|(_, j)| j.is_active(t))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "dosched-instance 1").unwrap();
        writeln!(s, "users {}", self.num_users).unwrap();
        writeln!(s, "horizon {}", self.horizon()).unwrap();
        for j in &self.jobs {
            writeln!(
                s,
                "job {} {} {} {} {} {} {}",
                j.id,
                j.arrival,
                j.deadline,
                sig12(j.size),
                sig12(j.utility.v()),
                sig12(j.utility.psi()),
                j.user
            )
            .unwrap();
        }
        for (t, r) in self.regions.iter().enumerate() {
            write!(s, "region {} {}", t, r.num_vertices()).unwrap();
            for v in r.vertices() {
                for x in v {
                    write!(s, " {}", sig12(*x)).unwrap();
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut users = None;
        let mut horizon = None;
        let mut jobs = Vec::new();
        let mut regions: Vec<Option<RateRegion>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |m: &str| Error::Parse { line: line_no, message: m.to_string() };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| -> Result<f64> {
                fields.get(k).ok_or_else(|| err("missing field"))?.parse::<f64>().map_err(|_| err("bad number"))
            };
            let int = |k: usize| -> Result<usize> {
                fields.get(k).ok_or_else(|| err("missing field"))?.parse::<usize>().map_err(|_| err("bad integer"))
            };
            match fields[0] {
                "dosched-instance" => {
                    if fields.get(1) != Some(&"1") {
                        return Err(err("unsupported format version"));
                    }
                }
                "users" => users = Some(int(1)?),
                "horizon" => {
                    let h = int(1)?;
                    horizon = Some(h);
                    regions = vec![None; h];
                }
                "job" => {
                    let utility = PowerUtility::new(num(5)?, num(6)?).map_err(|e| err(&e.to_string()))?;
                    jobs.push(Job {
                        id: int(1)?,
                        arrival: int(2)?,
                        deadline: int(3)?,
                        size: num(4)?,
                        utility,
                        user: int(7)?,
                    });
                }
                "region" => {
                    let n = users.ok_or_else(|| err("region before users"))?;
                    let t = int(1)?;
                    let m = int(2)?;
                    if fields.len() != 3 + m * n {
                        return Err(err("wrong number of vertex coordinates"));
                    }
                    let verts = (0..m)
                        .map(|v| (0..n).map(|k| num(3 + v * n + k)).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?;
                    let slot = regions.get_mut(t).ok_or_else(|| err("region slot beyond horizon"))?;
                    *slot = Some(RateRegion::new(n, verts).map_err(|e| err(&e.to_string()))?);
                }
                other => return Err(err(&format!("unknown record '{other}'"))),
            }
        }
        let users = users.ok_or_else(|| Error::Parse { line: 0, message: "missing users".into() })?;
        horizon.ok_or_else(|| Error::Parse { line: 0, message: "missing horizon".into() })?;
        let regions = regions
            .into_iter()
            .enumerate()
            .map(|(t, r)| r.ok_or_else(|| Error::Parse { line: 0, message: format!("slot {t} has no region") }))
            .collect::<Result<Vec<_>>>()?;
        Instance::new(users, jobs, regions)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// F_max over a set of jobs whose regions start at absolute slot `start`.
pub(crate) fn jobs_f_max(jobs: &[Job], regions: &[RateRegion], start: usize) -> f64 {
    let mut f = 0.0f64;
    for j in jobs {
        for t in j.arrival..=j.deadline {
            if let Some(r) = regions.get(t - start) {
                f = f.max(r.max_rate(j.user) / j.size);
            }
        }
    }
    f
}

/// Generates one horizon instance. Deterministic in `config.seed`.
pub fn generate_instance(config: &ScenarioConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let horizon = config.horizon;
    let mut jobs = Vec::new();
    let mut regions = Vec::with_capacity(horizon);
    for t in 0..horizon {
        regions.push(sample_region(&config.rate_caps, config.samples_per_region, &mut rng)?);
        for user in 0..config.num_users {
            if !rng.random_bool(config.arrival_prob) {
                continue;
            }
            let size = if config.size_range.0 == config.size_range.1 {
                config.size_range.0
            } else {
                rng.random_range(config.size_range.0..=config.size_range.1)
            };
            let window = rng.random_range(config.deadline_range.0..=config.deadline_range.1);
            let utility = sample_utility(&mut rng, config.v_range, config.psi_range)?;
            jobs.push(Job {
                id: jobs.len(),
                arrival: t,
                deadline: (t + window - 1).min(horizon - 1),
                size,
                utility,
                user,
            });
        }
    }
    Instance::new(config.num_users, jobs, regions)
}

/// A recurring job class of the frame model; each realized job draws its reward
/// parameters from the class ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct JobClass {
    pub user: usize,
    /// Activity-window length in slots, at most the frame length.
    pub deadline: usize,
    pub size: f64,
    pub v_range: (f64, f64),
    pub psi_range: (f64, f64),
    pub arrival_prob: f64,
}

/// Frame-structured stochastic scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub num_users: usize,
    pub frame_len: usize,
    pub num_frames: usize,
    pub classes: Vec<JobClass>,
    pub max_jobs_per_frame: usize,
    /// Per-user timely-throughput targets, in traffic units per frame.
    pub targets: Vec<f64>,
    /// Reward weight of the drift-plus-penalty objective.
    pub v_weight: f64,
    /// Size of the finite region set slots are drawn from.
    pub num_regions: usize,
    pub samples_per_region: usize,
    pub rate_caps: Vec<f64>,
    /// When set, user coordinates of the region set are rescaled so that
    /// serving user `n` at its best rate in every slot yields exactly this
    /// much traffic per frame on average.
    pub throughput_caps: Option<Vec<f64>>,
    pub seed: u64,
}

impl FrameConfig {
    /// Five users, user 0 with a tenth of the others' achievable timely
    /// throughput (0.05 vs 0.5 per frame) and a 0.045 target on user 0.
    pub fn asymmetric_five_user(seed: u64) -> Self {
        let num_users = 5;
        let frame_len = 5;
        let classes = (0..num_users)
            .map(|user| JobClass {
                user,
                deadline: frame_len,
                size: if user == 0 { 0.1 } else { 1.0 },
                v_range: (0.0, 1.0),
                psi_range: (0.01, 0.99),
                arrival_prob: 1.0,
            })
            .collect();
        Self {
            num_users,
            frame_len,
            num_frames: 2000,
            classes,
            max_jobs_per_frame: num_users,
            targets: vec![0.045, 0.0, 0.0, 0.0, 0.0],
            v_weight: 0.1,
            num_regions: 20,
            samples_per_region: 6,
            rate_caps: vec![1.0; num_users],
            throughput_caps: Some(vec![0.05, 0.5, 0.5, 0.5, 0.5]),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.frame_len == 0 {
            return Err(Error::config("num_users and frame_len must be positive"));
        }
        if self.classes.is_empty() {
            return Err(Error::config("at least one job class required"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.deadline == 0 || c.deadline > self.frame_len {
                return Err(Error::config(format!(
                    "class {i} deadline {} exceeds frame length {}",
                    c.deadline, self.frame_len
                )));
            }
            if c.user >= self.num_users || !(c.size > 0.0) || !(0.0..=1.0).contains(&c.arrival_prob) {
                return Err(Error::config(format!("class {i} has invalid user, size or arrival probability")));
            }
            let (plo, phi) = c.psi_range;
            if !(plo > 0.0 && plo <= phi && phi < 1.0) || !(c.v_range.1 > 0.0 && c.v_range.0 <= c.v_range.1) {
                return Err(Error::config(format!("class {i} has invalid reward ranges")));
            }
        }
        if self.targets.len() != self.num_users || self.targets.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::config("one non-negative target per user required"));
        }
        if !(self.v_weight > 0.0) {
            return Err(Error::config("V must be positive"));
        }
        if self.max_jobs_per_frame == 0 || self.num_regions == 0 || self.samples_per_region == 0 {
            return Err(Error::config("M, region set size and samples must be positive"));
        }
        if self.rate_caps.len() != self.num_users {
            return Err(Error::config("one rate cap per user required"));
        }
        if let Some(tc) = &self.throughput_caps {
            if tc.len() != self.num_users || tc.iter().any(|c| !(*c > 0.0)) {
                return Err(Error::config("throughput caps must be positive, one per user"));
            }
        }
        Ok(())
    }

    /// The finite set of regions slots are drawn from.
    pub fn region_set(&self) -> Result<Vec<RateRegion>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0f_7e61_0175);
        let mut set = (0..self.num_regions)
            .map(|_| sample_region(&self.rate_caps, self.samples_per_region, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        if let Some(caps) = &self.throughput_caps {
            let scale: Vec<f64> = (0..self.num_users)
                .map(|n| {
                    let mean_best = set.iter().map(|r| r.max_rate(n)).sum::<f64>() / set.len() as f64;
                    caps[n] / (self.frame_len as f64 * mean_best)
                })
                .collect();
            set = set
                .iter()
                .map(|r| {
                    let verts = r.vertices().map(|v| v.iter().zip(&scale).map(|(x, s)| x * s).collect()).collect();
                    RateRegion::new(self.num_users, verts)
                })
                .collect::<Result<Vec<_>>>()?;
        }
        Ok(set)
    }

    /// F_max implied by the region set and class sizes.
    pub fn f_max(&self, region_set: &[RateRegion]) -> f64 {
        self.classes
            .iter()
            .flat_map(|c| region_set.iter().map(move |r| r.max_rate(c.user) / c.size))
            .fold(0.0, f64::max)
    }
}

/// Jobs and regions of one frame; all jobs arrive at `start` and expire inside the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub start: usize,
    pub jobs: Vec<Job>,
    /// Index into the region set for each slot of the frame.
    pub region_ids: Vec<usize>,
}

impl Frame {
    pub fn regions<'a>(&self, set: &'a [RateRegion]) -> Vec<&'a RateRegion> {
        self.region_ids.iter().map(|&i| &set[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub region_set: Vec<RateRegion>,
    pub frames: Vec<Frame>,
    pub f_max: f64,
}

/// Realizes `config.num_frames` frames. Deterministic in `config.seed`.
pub fn generate_frames(config: &FrameConfig) -> Result<FrameSet> {
    let region_set = config.region_set()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.frame_len;
    let mut frames = Vec::with_capacity(config.num_frames);
    let mut next_id = 0;
    for k in 0..config.num_frames {
        let start = k * d;
        let mut jobs = Vec::new();
        for class in &config.classes {
            if !rng.random_bool(class.arrival_prob) {
                continue;
            }
            let utility = sample_utility(&mut rng, class.v_range, class.psi_range)?;
            if jobs.len() < config.max_jobs_per_frame {
                jobs.push(Job {
                    id: next_id,
                    arrival: start,
                    deadline: start + class.deadline - 1,
                    size: class.size,
                    utility,
                    user: class.user,
                });
                next_id += 1;
            }
        }
        let region_ids = (0..d).map(|_| rng.random_range(0..region_set.len())).collect();
        frames.push(Frame { index: k, start, jobs, region_ids });
    }
    let f_max = config.f_max(&region_set);
    Ok(FrameSet { region_set, frames, f_max })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_arrival_probability_gives_no_jobs() {
        let cfg = ScenarioConfig { arrival_prob: 0.0, horizon: 50, ..Default::default() };
        assert!(generate_instance(&cfg).unwrap().jobs.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig { seed: 7, horizon: 40, ..Default::default() };
        let a = generate_instance(&cfg).unwrap();
        let b = generate_instance(&cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let other = generate_instance(&ScenarioConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.to_text(), other.to_text());
    }

    #[test]
    fn windows_and_f_max() {
        let cfg = ScenarioConfig { num_users: 3, arrival_prob: 0.3, horizon: 100, deadline_range: (2, 10), ..Default::default() };
        let inst = generate_instance(&cfg).unwrap();
        assert!(!inst.jobs.is_empty());
        for j in &inst.jobs {
            assert!(j.arrival <= j.deadline && j.deadline < 100);
            assert!(j.deadline - j.arrival < 10);
            assert!((5.0..=25.0).contains(&j.size));
        }
        let f = inst.f_max();
        assert!(f > 0.0 && f < 4.0 / 5.0);
    }

    #[test]
    fn text_format_round_trip_is_stable() {
        let inst = generate_instance(&ScenarioConfig { horizon: 20, ..Default::default() }).unwrap();
        let text = inst.to_text();
        let back = Instance::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.jobs.len(), inst.jobs.len());
        assert!((back.f_max() - inst.f_max()).abs() < 1e-10);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Instance::from_text("dosched-instance 1\nusers 2\nhorizon 1\nbogus 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }

    #[test]
    fn frames_respect_boundaries() {
        let mut cfg = FrameConfig::asymmetric_five_user(3);
        cfg.num_frames = 50;
        let set = generate_frames(&cfg).unwrap();
        assert_eq!(set.frames.len(), 50);
        for f in &set.frames {
            assert!(f.jobs.len() <= cfg.max_jobs_per_frame);
            for j in &f.jobs {
                assert_eq!(j.arrival, f.start);
                assert!(j.deadline < f.start + cfg.frame_len);
            }
        }
        assert!(set.f_max < 1.0);
    }

    #[test]
    fn throughput_normalization() {
        let cfg = FrameConfig::asymmetric_five_user(11);
        let set = cfg.region_set().unwrap();
        let caps = cfg.throughput_caps.clone().unwrap();
        for n in 0..cfg.num_users {
            let mean: f64 = set.iter().map(|r| r.max_rate(n)).sum::<f64>() / set.len() as f64;
            assert!((mean * cfg.frame_len as f64 - caps[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn region_frequencies_approach_uniform() {
        let mut cfg = FrameConfig::asymmetric_five_user(5);
        cfg.num_frames = 4000;
        cfg.num_regions = 4;
        let set = generate_frames(&cfg).unwrap();
        let mut counts = [0usize; 4];
        for f in &set.frames {
            for &r in &f.region_ids {
                counts[r] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        for c in counts {
            assert!((c as f64 / total as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn class_deadline_beyond_frame_is_rejected() {
        let mut cfg = FrameConfig::asymmetric_five_user(1);
        cfg.classes[0].deadline = cfg.frame_len + 1;
        assert!(matches!(generate_frames(&cfg), Err(Error::Config(_))));
    }
}
