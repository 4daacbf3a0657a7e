//! Log-barrier Newton solver for the budgeted multi-slot concave program
//!
//! ```text
//! maximize   sum_j phi_j(s_j),   s_j = sum_t x_tj
//! subject to per-user sums of x_t in R[t],  0 <= s_j <= B_j
//! ```
//!
//! with `phi_j(s) = scale * (f(offset + s) - f(offset)) + linear * s`.
//!
//! Region membership is expressed through vertex weights `w_t`: user `n`'s
//! jobs may share at most `sum_v w_tv V_vn`, with `w_t >= 0`, `sum w_t <= 1`.
//! The Hessian is block diagonal per slot except for jobs active in several
//! slots, whose rank-one couplings are folded in with the Woodbury identity.
//!
//! Optimality is certified through the concavity bound
//! `Phi(s) <= Phi(s0) + g.(s - s0)` and budget multipliers `lambda >= 0`:
//! `Phi* <= Phi(s0) - g.s0 + sum_t sigma_t(g - lambda) + lambda.B`, where
//! `sigma_t` is the region's job-level support function.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::Utility;
use crate::region::RateRegion;

/// One job's objective term and budget.
#[derive(Debug, Clone, Copy)]
pub struct JobTerm<'a> {
    pub utility: &'a dyn Utility,
    pub scale: f64,
    pub offset: f64,
    pub linear: f64,
    pub budget: f64,
    pub user: usize,
}

impl JobTerm<'_> {
    pub fn value(&self, s: f64) -> Result<f64> {
        let base = self.utility.eval(self.offset)?;
        Ok(self.scale * (self.utility.eval(self.offset + s)? - base) + self.linear * s)
    }

    pub fn slope(&self, s: f64) -> Result<f64> {
        Ok(self.scale * self.utility.grad(self.offset + s)? + self.linear)
    }

    fn curvature(&self, s: f64) -> Result<f64> {
        Ok(self.scale * self.utility.curvature(self.offset + s)?)
    }
}

/// A slot's region and the jobs (indices into the job terms) active in it.
#[derive(Debug, Clone)]
pub struct SlotSpec<'a> {
    pub region: &'a RateRegion,
    pub jobs: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop once `upper - objective <= rel_tol * (1 + |objective|)`.
    pub rel_tol: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, max_newton: 800 }
    }
}

#[derive(Debug, Clone)]
pub struct ProgramSolution {
    /// `rates[t][i]` is the rate of job `slots[t].jobs[i]`.
    pub rates: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
    pub objective: f64,
    /// Certified upper bound on the optimum.
    pub upper: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ProgramSolution {
    pub fn gap(&self) -> f64 {
        (self.upper - self.objective).max(0.0)
    }
}

/// Slacks and their rates of change along a Newton direction.
struct Step {
    slacks: Vec<f64>,
    dslacks: Vec<f64>,
    s: Vec<f64>,
    ds: Vec<f64>,
    amax: f64,
}

struct UserRow {
    /// Coefficient per kept vertex.
    vcoef: Vec<f64>,
    /// Local x positions of this user's free jobs.
    xpos: Vec<usize>,
}

struct Block {
    slot: usize,
    verts: Vec<usize>,
    /// Global indices of the free jobs with variables in this slot.
    jobs: Vec<usize>,
    rows: Vec<UserRow>,
}

impl Block {
    fn m(&self) -> usize {
        self.verts.len()
    }

    fn dim(&self) -> usize {
        self.verts.len() + self.jobs.len()
    }

    fn row_value(&self, row: &UserRow, z: &[f64]) -> f64 {
        let m = self.m();
        let cap: f64 = row.vcoef.iter().zip(&z[..m]).map(|(c, w)| c * w).sum();
        cap - row.xpos.iter().map(|&p| z[m + p]).sum::<f64>()
    }
}

struct Program<'p, 'a> {
    jobs: &'p [JobTerm<'a>],
    slots: &'p [SlotSpec<'a>],
    blocks: Vec<Block>,
    /// Free job -> (block, local x index) occurrences; empty for fixed jobs.
    occ: Vec<Vec<(usize, usize)>>,
    /// Free jobs active in more than one block, in Woodbury column order.
    coupled: Vec<usize>,
    coupled_col: Vec<Option<usize>>,
    /// Jobs whose budget is zero; forced to zero and priced at their slope.
    zero_budget: Vec<bool>,
    num_constraints: usize,
}

const MIN_BUDGET: f64 = 1e-12;
const MIN_CAPACITY: f64 = 1e-14;

impl<'p, 'a> Program<'p, 'a> {
    fn build(jobs: &'p [JobTerm<'a>], slots: &'p [SlotSpec<'a>]) -> Result<Self> {
        let mut zero_budget = vec![false; jobs.len()];
        let mut fixed = vec![false; jobs.len()];
        for (j, term) in jobs.iter().enumerate() {
            if !(term.budget >= 0.0) || !term.scale.is_finite() || !(term.offset >= 0.0) {
                return Err(Error::structural(format!("job term {j} has invalid parameters")));
            }
            if term.budget <= MIN_BUDGET {
                zero_budget[j] = true;
                fixed[j] = true;
            } else if term.slope(0.0)? <= 0.0 {
                // Concave with non-positive slope at zero: the optimum serves nothing.
                fixed[j] = true;
            }
        }
        let mut blocks = Vec::new();
        let mut occ = vec![Vec::new(); jobs.len()];
        for (t, slot) in slots.iter().enumerate() {
            let region = slot.region;
            let mut free = Vec::new();
            for &j in &slot.jobs {
                let term = jobs.get(j).ok_or_else(|| Error::structural(format!("slot {t} lists unknown job {j}")))?;
                if term.user >= region.num_users() {
                    return Err(Error::structural(format!("job {j} user out of range for slot {t}")));
                }
                if !fixed[j] && region.max_rate(term.user) > MIN_CAPACITY {
                    free.push(j);
                }
            }
            if free.is_empty() {
                continue;
            }
            let mut users: Vec<usize> = free.iter().map(|&j| jobs[j].user).collect();
            users.sort_unstable();
            users.dedup();
            let verts: Vec<usize> = (0..region.num_vertices())
                .filter(|&v| users.iter().any(|&n| region.vertex(v)[n] > 0.0))
                .collect();
            let rows = users
                .iter()
                .map(|&n| UserRow {
                    vcoef: verts.iter().map(|&v| region.vertex(v)[n]).collect(),
                    xpos: free.iter().enumerate().filter(|(_, &j)| jobs[j].user == n).map(|(i, _)| i).collect(),
                })
                .collect();
            let b = blocks.len();
            for (i, &j) in free.iter().enumerate() {
                occ[j].push((b, i));
            }
            blocks.push(Block { slot: t, verts, jobs: free, rows });
        }
        let mut coupled = Vec::new();
        let mut coupled_col = vec![None; jobs.len()];
        for (j, o) in occ.iter().enumerate() {
            if o.len() > 1 {
                coupled_col[j] = Some(coupled.len());
                coupled.push(j);
            }
        }
        let num_constraints = blocks.iter().map(|b| b.dim() + 1 + b.rows.len()).sum::<usize>()
            + occ.iter().filter(|o| !o.is_empty()).count();
        Ok(Self { jobs, slots, blocks, occ, coupled, coupled_col, zero_budget, num_constraints })
    }

    fn initial_point(&self) -> Vec<Vec<f64>> {
        let mut z: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .map(|b| {
                let m = b.m();
                let w = 1.0 / (m as f64 + 1.0);
                let mut zb = vec![w; b.dim()];
                for row in &b.rows {
                    let avail: f64 = row.vcoef.iter().sum::<f64>() * w;
                    for &p in &row.xpos {
                        zb[m + p] = avail / (2.0 * row.xpos.len() as f64);
                    }
                }
                zb
            })
            .collect();
        let totals = self.totals(&z);
        for (j, o) in self.occ.iter().enumerate() {
            let half = 0.5 * self.jobs[j].budget;
            if !o.is_empty() && totals[j] > half {
                let k = half / totals[j];
                for &(b, i) in o {
                    let m = self.blocks[b].m();
                    z[b][m + i] *= k;
                }
            }
        }
        z
    }

    fn totals(&self, z: &[Vec<f64>]) -> Vec<f64> {
        let mut s = vec![0.0; self.jobs.len()];
        for (b, block) in self.blocks.iter().enumerate() {
            let m = block.m();
            for (i, &j) in block.jobs.iter().enumerate() {
                s[j] += z[b][m + i];
            }
        }
        s
    }

    fn objective(&self, s: &[f64]) -> Result<f64> {
        let mut phi = 0.0;
        for (j, o) in self.occ.iter().enumerate() {
            if !o.is_empty() {
                phi += self.jobs[j].value(s[j])?;
            }
        }
        Ok(phi)
    }

    /// All barrier slacks in a fixed order. With `affine = false` the constant
    /// parts are dropped, giving the slack change along a direction.
    fn slacks(&self, z: &[Vec<f64>], affine: bool) -> Vec<f64> {
        let one = if affine { 1.0 } else { 0.0 };
        let mut out = Vec::with_capacity(self.num_constraints);
        for (b, block) in self.blocks.iter().enumerate() {
            let zb = &z[b];
            out.extend_from_slice(zb);
            out.push(one - zb[..block.m()].iter().sum::<f64>());
            for row in &block.rows {
                out.push(block.row_value(row, zb));
            }
        }
        let s = self.totals(z);
        for (j, o) in self.occ.iter().enumerate() {
            if !o.is_empty() {
                out.push(one * self.jobs[j].budget - s[j]);
            }
        }
        out
    }

    /// Change of the barrier merit `-tau Phi - sum log(slacks)` along a step;
    /// `None` when the step leaves the domain.
    fn merit_change(&self, cur: &Step, alpha: f64, tau: f64) -> Result<Option<f64>> {
        let mut val = 0.0;
        for (sl, d) in cur.slacks.iter().zip(&cur.dslacks) {
            let r = alpha * d / sl;
            if !(r > -1.0) {
                return Ok(None);
            }
            val -= r.ln_1p();
        }
        for (j, o) in self.occ.iter().enumerate() {
            if o.is_empty() || cur.ds[j] == 0.0 {
                continue;
            }
            let t = &self.jobs[j];
            let d = alpha * cur.ds[j];
            let inc = t.scale * t.utility.increment(t.offset + cur.s[j], d)? + t.linear * d;
            val -= tau * inc;
        }
        Ok(Some(val))
    }

    /// Newton direction for the barrier merit at `z`; returns (direction, decrement^2).
    fn newton_direction(&self, z: &[Vec<f64>], tau: f64) -> Result<Option<(Vec<DVector<f64>>, f64)>> {
        let s = self.totals(z);
        let mut d1 = vec![0.0; self.jobs.len()];
        let mut d2 = vec![0.0; self.jobs.len()];
        for (j, o) in self.occ.iter().enumerate() {
            if o.is_empty() {
                continue;
            }
            let slack = self.jobs[j].budget - s[j];
            d1[j] = -tau * self.jobs[j].slope(s[j])? + 1.0 / slack;
            d2[j] = -tau * self.jobs[j].curvature(s[j])? + 1.0 / (slack * slack);
        }
        let nc = self.coupled.len();
        let mut rhs = Vec::with_capacity(self.blocks.len());
        let mut y = Vec::with_capacity(self.blocks.len());
        let mut xs: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(self.blocks.len());
        let mut mmat = DMatrix::<f64>::zeros(nc, nc);
        let mut ur = DVector::<f64>::zeros(nc);
        for (b, block) in self.blocks.iter().enumerate() {
            let zb = &z[b];
            let m = block.m();
            let n = block.dim();
            let mut h = DMatrix::<f64>::zeros(n, n);
            let mut g = DVector::<f64>::zeros(n);
            for k in 0..n {
                g[k] -= 1.0 / zb[k];
                h[(k, k)] += 1.0 / (zb[k] * zb[k]);
            }
            let r0 = 1.0 - zb[..m].iter().sum::<f64>();
            let q0 = 1.0 / (r0 * r0);
            for a in 0..m {
                g[a] += 1.0 / r0;
                for c in 0..m {
                    h[(a, c)] += q0;
                }
            }
            for row in &block.rows {
                let cval = block.row_value(row, zb);
                let q = 1.0 / (cval * cval);
                let idx: Vec<(usize, f64)> = row
                    .vcoef
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(a, c)| (a, *c))
                    .chain(row.xpos.iter().map(|&p| (m + p, -1.0)))
                    .collect();
                for &(a, ca) in &idx {
                    g[a] -= ca / cval;
                    for &(c, cc) in &idx {
                        h[(a, c)] += q * ca * cc;
                    }
                }
            }
            for (i, &j) in block.jobs.iter().enumerate() {
                g[m + i] += d1[j];
                if self.coupled_col[j].is_none() {
                    h[(m + i, m + i)] += d2[j];
                }
            }
            let chol = factor(h)?;
            let r = -g;
            let yb = chol.solve(&r);
            let local: Vec<(usize, usize)> = block
                .jobs
                .iter()
                .enumerate()
                .filter_map(|(i, &j)| self.coupled_col[j].map(|c| (m + i, c)))
                .collect();
            if local.is_empty() {
                xs.push(None);
            } else {
                let mut e = DMatrix::<f64>::zeros(n, local.len());
                for (k, &(p, _)) in local.iter().enumerate() {
                    e[(p, k)] = 1.0;
                }
                let xb = chol.solve(&e);
                for (k, &(pk, ck)) in local.iter().enumerate() {
                    ur[ck] += yb[pk];
                    for &(pl, cl) in &local {
                        mmat[(cl, ck)] += xb[(pl, k)];
                    }
                }
                xs.push(Some(xb));
            }
            rhs.push(r);
            y.push(yb);
        }
        let mut dirs = y;
        if nc > 0 {
            let sq: Vec<f64> = self.coupled.iter().map(|&j| d2[j].sqrt()).collect();
            let mut k = DMatrix::<f64>::identity(nc, nc);
            for a in 0..nc {
                for c in 0..nc {
                    k[(a, c)] += sq[a] * mmat[(a, c)] * sq[c];
                }
            }
            let rhs_c = DVector::from_iterator(nc, (0..nc).map(|a| sq[a] * ur[a]));
            let qp = factor(k)?.solve(&rhs_c);
            let q: Vec<f64> = (0..nc).map(|a| sq[a] * qp[a]).collect();
            for (b, block) in self.blocks.iter().enumerate() {
                if let Some(xb) = &xs[b] {
                    let cols: Vec<usize> =
                        block.jobs.iter().filter_map(|&j| self.coupled_col[j]).collect();
                    debug_assert_eq!(cols.len(), xb.ncols());
                    for (k, &c) in cols.iter().enumerate() {
                        dirs[b].axpy(-q[c], &xb.column(k), 1.0);
                    }
                }
            }
        }
        let dec: f64 = rhs.iter().zip(&dirs).map(|(r, d)| r.dot(d)).sum();
        if !dec.is_finite() {
            return Ok(None);
        }
        Ok(Some((dirs, dec)))
    }

    fn step(&self, z: &[Vec<f64>], dz: &[DVector<f64>]) -> Step {
        let dzv: Vec<Vec<f64>> = dz.iter().map(|d| d.iter().copied().collect()).collect();
        let slacks = self.slacks(z, true);
        let dslacks = self.slacks(&dzv, false);
        let amax = slacks
            .iter()
            .zip(&dslacks)
            .filter(|(_, d)| **d < 0.0)
            .map(|(sl, d)| -sl / d)
            .fold(f64::INFINITY, f64::min);
        Step { slacks, dslacks, s: self.totals(z), ds: self.totals(&dzv), amax }
    }

    /// Concave upper bound on the optimum at the point with totals `s`.
    ///
    /// Budget prices start from the barrier estimate (clipped to the slope)
    /// and, with `refine`, are then minimized job by job.
    fn upper_bound(&self, s: &[f64], tau: f64, phi: f64, refine: bool) -> Result<f64> {
        let slopes = self.jobs.iter().zip(s).map(|(t, &sj)| t.slope(sj)).collect::<Result<Vec<_>>>()?;
        let base = phi - slopes.iter().zip(s).map(|(g, sj)| g * sj).sum::<f64>();
        let estimate: Vec<f64> = (0..self.jobs.len())
            .map(|j| {
                let cap = slopes[j].max(0.0);
                if self.zero_budget[j] {
                    cap
                } else if !self.occ[j].is_empty() {
                    (1.0 / (tau * (self.jobs[j].budget - s[j]))).min(cap)
                } else {
                    0.0
                }
            })
            .collect();
        let mut lambda = estimate.clone();
        let users: Vec<Vec<usize>> =
            self.slots.iter().map(|sl| sl.jobs.iter().map(|&j| self.jobs[j].user).collect()).collect();
        let sigma = |t: usize, lambda: &[f64]| -> Result<f64> {
            let coeffs: Vec<f64> = self.slots[t].jobs.iter().map(|&j| slopes[j] - lambda[j]).collect();
            Ok(self.slots[t].region.job_linear_max(&users[t], &coeffs)?.1)
        };
        let mut sig = (0..self.slots.len()).map(|t| sigma(t, &lambda)).collect::<Result<Vec<_>>>()?;
        if !refine {
            return Ok(base + lambda.iter().zip(self.jobs).map(|(l, t)| l * t.budget).sum::<f64>() + sig.iter().sum::<f64>());
        }
        let mut job_slots = vec![Vec::new(); self.jobs.len()];
        for (t, sl) in self.slots.iter().enumerate() {
            for &j in &sl.jobs {
                job_slots[j].push(t);
            }
        }
        for j in 0..self.jobs.len() {
            let cap = slopes[j].max(0.0);
            if self.zero_budget[j] || job_slots[j].is_empty() || cap == 0.0 {
                continue;
            }
            let budget = self.jobs[j].budget;
            let eval = |l: f64, lambda: &mut Vec<f64>| -> Result<(f64, Vec<f64>)> {
                lambda[j] = l;
                let cs = job_slots[j].iter().map(|&t| sigma(t, lambda)).collect::<Result<Vec<_>>>()?;
                Ok((l * budget + cs.iter().sum::<f64>(), cs))
            };
            let mut best = (lambda[j], eval(lambda[j], &mut lambda)?);
            let consider = |l: f64, lambda: &mut Vec<f64>, best: &mut (f64, (f64, Vec<f64>))| -> Result<f64> {
                let r = eval(l, lambda)?;
                let v = r.0;
                if v < best.1 .0 {
                    *best = (l, r);
                }
                Ok(v)
            };
            for l in [0.0, cap] {
                consider(l, &mut lambda, &mut best)?;
            }
            // The price objective is convex piecewise linear in lambda_j.
            let (mut a, mut b) = (0.0, cap);
            let ratio = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - ratio * (b - a);
            let mut d = a + ratio * (b - a);
            let mut fc = consider(c, &mut lambda, &mut best)?;
            let mut fd = consider(d, &mut lambda, &mut best)?;
            for _ in 0..60 {
                if b - a <= 1e-14 * cap {
                    break;
                }
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - ratio * (b - a);
                    fc = consider(c, &mut lambda, &mut best)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + ratio * (b - a);
                    fd = consider(d, &mut lambda, &mut best)?;
                }
            }
            lambda[j] = best.0;
            for (k, &t) in job_slots[j].iter().enumerate() {
                sig[t] = best.1 .1[k];
            }
        }
        Ok(base + lambda.iter().zip(self.jobs).map(|(l, t)| l * t.budget).sum::<f64>() + sig.iter().sum::<f64>())
    }
}

fn factor(mut h: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let scale = h.diagonal().amax().max(1.0);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(h.clone()) {
            return Ok(c);
        }
        let bump = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        for k in 0..h.nrows() {
            h[(k, k)] += bump - shift;
        }
        shift = bump;
    }
    Err(Error::Convergence { residual: f64::NAN, iterations: 0 })
}

/// Solves the program; never fails on slow convergence but reports it through
/// `converged` together with the certified bound.
pub fn solve(jobs: &[JobTerm<'_>], slots: &[SlotSpec<'_>], opts: &SolverOptions) -> Result<ProgramSolution> {
    let prog = Program::build(jobs, slots)?;
    let mut z = prog.initial_point();
    let mut s = prog.totals(&z);
    let mut phi = prog.objective(&s)?;
    let ncons = prog.num_constraints as f64;
    let mut tau = if prog.blocks.is_empty() { 1.0 } else { ncons / (1.0 + phi.abs()) };
    let mut iterations = 0;
    // Every certificate is a valid bound and every iterate is feasible, so
    // keep the lowest bound and the best iterate seen.
    let mut upper = prog.upper_bound(&s, tau, phi, false)?;
    let mut best = (phi, z.clone());
    let mut converged = upper - phi <= opts.rel_tol * (1.0 + phi.abs());
    while !converged && iterations < opts.max_newton {
        // Centering.
        let mut inner = 0;
        while iterations < opts.max_newton && inner < 50 {
            let Some((dz, dec)) = prog.newton_direction(&z, tau)? else { break };
            iterations += 1;
            inner += 1;
            if dec <= 1e-9 {
                break;
            }
            let step = prog.step(&z, &dz);
            let mut alpha = (0.99 * step.amax).min(1.0);
            let mut accepted = false;
            for _ in 0..60 {
                if let Some(df) = prog.merit_change(&step, alpha, tau)? {
                    if df <= -0.25 * alpha * dec {
                        for (zb, db) in z.iter_mut().zip(&dz) {
                            for (a, d) in zb.iter_mut().zip(db.iter()) {
                                *a += alpha * d;
                            }
                        }
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        s = prog.totals(&z);
        phi = prog.objective(&s)?;
        if phi > best.0 {
            best = (phi, z.clone());
        }
        let target = opts.rel_tol * (1.0 + best.0.abs());
        let last = ncons / tau < 1e-3 * target || iterations >= opts.max_newton;
        upper = upper.min(prog.upper_bound(&s, tau, phi, false)?);
        if upper - best.0 > target && (ncons / tau <= 1e3 * target || last) {
            // The cheap prices are loose; refine them once the barrier is tight.
            upper = upper.min(prog.upper_bound(&s, tau, phi, true)?);
        }
        converged = upper - best.0 <= target;
        if last {
            // The barrier is already far tighter than the target; further
            // increases only amplify round-off.
            break;
        }
        tau *= 16.0;
    }
    let (phi, z) = best;
    let mut rates: Vec<Vec<f64>> = slots.iter().map(|sl| vec![0.0; sl.jobs.len()]).collect();
    for (b, block) in prog.blocks.iter().enumerate() {
        let m = block.m();
        let t = block.slot;
        for (i, &j) in block.jobs.iter().enumerate() {
            let pos = slots[t].jobs.iter().position(|&k| k == j).expect("job listed in its slot");
            rates[t][pos] = z[b][m + i];
        }
    }
    let mut totals = vec![0.0; jobs.len()];
    for (t, slot) in slots.iter().enumerate() {
        for (i, &j) in slot.jobs.iter().enumerate() {
            totals[j] += rates[t][i];
        }
    }
    Ok(ProgramSolution { rates, totals, objective: phi, upper, converged, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::PowerUtility;

    fn term(u: &PowerUtility, budget: f64, user: usize) -> JobTerm<'_> {
        JobTerm { utility: u, scale: 1.0, offset: 0.0, linear: 0.0, budget, user }
    }

    #[test]
    fn single_job_takes_full_rate() {
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(2, vec![vec![0.7, 0.1], vec![0.2, 0.9]]).unwrap();
        let jobs = [term(&f, 10.0, 0)];
        let slots = [SlotSpec { region: &r, jobs: vec![0] }];
        let sol = solve(&jobs, &slots, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.rates[0][0] - 0.7).abs() < 1e-7, "{:?}", sol.rates);
        assert!(sol.gap() <= 1e-8);
    }

    #[test]
    fn budget_binds() {
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let jobs = [term(&f, 1.5, 0)];
        let slots = [SlotSpec { region: &r, jobs: vec![0] }, SlotSpec { region: &r, jobs: vec![0] }];
        let sol = solve(&jobs, &slots, &SolverOptions::default()).unwrap();
        assert!(sol.converged, "{:?}", sol);
        assert!((sol.totals[0] - 1.5).abs() < 1e-7);
        assert!((sol.objective - f.eval(1.5).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn two_users_split_by_marginal_value() {
        // Simplex region, identical rewards: the optimum splits the slot evenly.
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let jobs = [term(&f, 10.0, 0), term(&f, 10.0, 1)];
        let slots = [SlotSpec { region: &r, jobs: vec![0, 1] }];
        let sol = solve(&jobs, &slots, &SolverOptions::default()).unwrap();
        assert!((sol.rates[0][0] - 0.5).abs() < 1e-6);
        assert!((sol.rates[0][1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn negative_slope_jobs_stay_idle() {
        let f = PowerUtility::new(1.0, 0.5).unwrap();
        let r = RateRegion::new(1, vec![vec![1.0]]).unwrap();
        let jobs = [JobTerm { linear: -10.0, ..term(&f, 5.0, 0) }];
        let slots = [SlotSpec { region: &r, jobs: vec![0] }];
        let sol = solve(&jobs, &slots, &SolverOptions::default()).unwrap();
        assert_eq!(sol.rates[0][0], 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn coupled_jobs_match_slot_separable_optimum() {
        // Budgets far from binding: each slot is solved independently.
        let f = PowerUtility::new(0.8, 0.3).unwrap();
        let g = PowerUtility::new(0.5, 0.7).unwrap();
        let r1 = RateRegion::new(2, vec![vec![1.0, 0.2], vec![0.1, 0.8]]).unwrap();
        let r2 = RateRegion::new(2, vec![vec![0.4, 0.4]]).unwrap();
        let jobs = [term(&f, 100.0, 0), term(&g, 100.0, 1)];
        let slots = [
            SlotSpec { region: &r1, jobs: vec![0, 1] },
            SlotSpec { region: &r2, jobs: vec![0, 1] },
        ];
        let sol = solve(&jobs, &slots, &SolverOptions::default()).unwrap();
        assert!(sol.converged, "gap {}", sol.gap());
        assert!(sol.objective <= sol.upper + 1e-12);
        // A brute-force scan over the hull edge of slot 1 (slot 2 is a single point).
        let mut best = f64::NEG_INFINITY;
        for i in 0..=20_000 {
            let l = i as f64 / 20_000.0;
            let x = [l * 1.0 + (1.0 - l) * 0.1 + 0.4, l * 0.2 + (1.0 - l) * 0.8 + 0.4];
            best = best.max(f.eval(x[0]).unwrap() + g.eval(x[1]).unwrap());
        }
        assert!((sol.objective - best).abs() < 1e-6, "{} vs {}", sol.objective, best);
    }
}
