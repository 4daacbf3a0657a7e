//! Per-slot rate regions: the downward closure of the convex hull of a finite
//! set of per-user rate vectors.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RateRegion {
    num_users: usize,
    /// Row-major, `num_users` entries per vertex.
    vertices: Vec<f64>,
}

/// Per-user rates chosen inside a region.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRateAllocation {
    pub rates: Vec<f64>,
}

impl RateRegion {
    pub fn new(num_users: usize, vertices: Vec<Vec<f64>>) -> Result<Self> {
        if num_users == 0 {
            return Err(Error::structural("rate region needs at least one user"));
        }
        if vertices.is_empty() {
            return Err(Error::structural("rate region has no vertices"));
        }
        let mut flat = Vec::with_capacity(vertices.len() * num_users);
        for (i, v) in vertices.iter().enumerate() {
            if v.len() != num_users {
                return Err(Error::structural(format!(
                    "vertex {i} has {} coordinates, expected {num_users}",
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
                return Err(Error::structural(format!("vertex {i} has invalid rate {bad}")));
            }
            flat.extend_from_slice(v);
        }
        Ok(Self { num_users, vertices: flat })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / self.num_users
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.num_users..(i + 1) * self.num_users]
    }

    pub fn vertices(&self) -> impl Iterator<Item = &[f64]> {
        self.vertices.chunks_exact(self.num_users)
    }

    /// Largest rate user `n` can receive in this region.
    pub fn max_rate(&self, user: usize) -> f64 {
        self.vertices().map(|v| v[user]).fold(0.0, f64::max)
    }

    /// Support function of the region: maximizes `sum_n max(c_n, 0) x_n`.
    ///
    /// Coordinates with non-positive coefficients are dropped to zero, which is
    /// feasible by downward closure. Ties go to the lowest vertex index.
    pub fn linear_max(&self, coeffs: &[f64]) -> Result<(UserRateAllocation, f64)> {
        if coeffs.len() != self.num_users {
            return Err(Error::structural(format!(
                "coefficient vector has {} entries, region has {} users",
                coeffs.len(),
                self.num_users
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::structural("non-finite coefficient"));
        }
        let (best, value) = self.best_vertex(coeffs);
        let rates = self
            .vertex(best)
            .iter()
            .zip(coeffs)
            .map(|(&r, &c)| if c > 0.0 { r } else { 0.0 })
            .collect();
        Ok((UserRateAllocation { rates }, value))
    }

    fn best_vertex(&self, coeffs: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, v) in self.vertices().enumerate() {
            let val: f64 = v.iter().zip(coeffs).map(|(r, c)| r * c.max(0.0)).sum();
            if val > best.1 {
                best = (i, val);
            }
        }
        best
    }

    /// Job-level support function: each job belongs to one user and a user's
    /// rate goes entirely to its highest-coefficient job (lowest index on ties).
    ///
    /// Returns per-job rates and the objective `sum_j max(c_j, 0) x_j`.
    pub fn job_linear_max(&self, job_users: &[usize], job_coeffs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut user_coeff = vec![0.0; self.num_users];
        let mut owner: Vec<Option<usize>> = vec![None; self.num_users];
        for (j, (&u, &c)) in job_users.iter().zip(job_coeffs).enumerate() {
            if u >= self.num_users {
                return Err(Error::structural(format!("job user {u} out of range")));
            }
            if c > user_coeff[u] {
                user_coeff[u] = c;
                owner[u] = Some(j);
            }
        }
        let (alloc, value) = self.linear_max(&user_coeff)?;
        let mut rates = vec![0.0; job_users.len()];
        for (u, o) in owner.iter().enumerate() {
            if let Some(j) = o {
                rates[*j] = alloc.rates[u];
            }
        }
        Ok((rates, value))
    }

    /// Exact membership test: is there a sub-convex combination of vertices
    /// dominating `x - tol` componentwise?
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.num_users {
            return false;
        }
        let demand: Vec<(usize, f64)> = x
            .iter()
            .enumerate()
            .map(|(n, &r)| (n, r - tol))
            .filter(|(_, b)| *b > 0.0)
            .collect();
        if demand.is_empty() {
            return true;
        }
        // min sum(lambda) s.t. V^T lambda >= x - tol, lambda >= 0; member iff optimum <= 1.
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let lambdas: Vec<_> = (0..self.num_vertices())
            .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
            .collect();
        for &(n, b) in &demand {
            let row: Vec<_> = lambdas
                .iter()
                .enumerate()
                .map(|(i, &l)| (l, self.vertex(i)[n]))
                .collect();
            lp.add_constraint(row.as_slice(), ComparisonOp::Ge, b);
        }
        match lp.solve().ok().and_then(|o| o.into_solution().ok()) {
            Some(sol) => sol.objective() <= 1.0 + 1e-12,
            None => false,
        }
    }
}

impl UserRateAllocation {
    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }
}

/// Samples `num_samples` vertices with coordinate `n` uniform on `[0, caps[n]]`.
pub fn sample_region<R: Rng + ?Sized>(caps: &[f64], num_samples: usize, rng: &mut R) -> Result<RateRegion> {
    if num_samples == 0 {
        return Err(Error::config("a region needs at least one sample"));
    }
    if caps.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::config("rate caps must be positive and finite"));
    }
    let vertices = (0..num_samples)
        .map(|_| caps.iter().map(|&c| rng.random::<f64>() * c).collect())
        .collect();
    RateRegion::new(caps.len(), vertices)
}
