//! Lasso on the interval shrinkage coefficients, solved along a
//! regularization path by cyclic coordinate descent with warm starts.
//!
//! The objective is `(1/2m)‖P - Δα‖² + μ₁‖α‖₁` with `m = d·n` rows. The
//! solver works on the Gram form `G = ΔᵀΔ/m`, `c = ΔᵀP/m` and keeps the
//! gradient `r = c - Gα` up to date, so a coordinate update costs `O(D)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Result, SisirError};
use crate::linalg::sym_eigen;
use crate::scalar::Scalar;

/// Hard cap on sweeps for a single value of `μ₁`.
pub const MAX_SWEEPS: usize = 100_000;

/// Relative convergence threshold on the largest coordinate update.
pub const UPDATE_TOL: f64 = 1e-7;

/// Optimality violation, relative to `1 + max|c|`, that also counts as
/// converged.
pub const KKT_TOL: f64 = 1e-10;

/// Sweeps between two Newton refinements.
const REFINE_EVERY: usize = 25;

/// After this many sweeps at one `μ₁`, a point meeting the optimality
/// conditions within [`KKT_TOL_SLOW`] is accepted. Collinear designs can keep
/// coordinate descent shuffling weight between columns long after that.
const SLOW_SWEEPS: usize = 5_000;
/// Cap on one active-set pass before the full sweep is revisited.
const ACTIVE_PASS_SWEEPS: usize = 1_000;
pub const KKT_TOL_SLOW: f64 = 1e-7;

#[inline]
pub fn soft_threshold<F: Scalar>(z: F, t: F) -> F {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        F::zero()
    }
}

/// Gram-form Lasso problem.
#[derive(Debug, Clone)]
pub struct GramProblem<F> {
    pub gram: Array2<F>,
    pub corr: Array1<F>,
    pub rows: usize,
}

impl<F: Scalar> GramProblem<F> {
    pub fn from_design(design: ArrayView2<F>, target: ArrayView1<F>) -> Self {
        let rows = design.nrows().max(1);
        let m = F::from_count(rows);
        let gram = design.t().dot(&design) / m;
        let corr = design.t().dot(&target) / m;
        GramProblem { gram, corr, rows }
    }

    pub fn dim(&self) -> usize {
        self.corr.len()
    }

    /// Smallest `μ₁` with an all-zero solution.
    pub fn mu_max(&self) -> F {
        self.corr.iter().fold(F::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Gradient of the smooth part, negated: `c - Gα`.
    pub fn residual_correlation(&self, alpha: &Array1<F>) -> Array1<F> {
        &self.corr - &self.gram.dot(alpha)
    }

    /// Penalised objective up to the constant `‖P‖²/(2m)`.
    pub fn objective(&self, alpha: &Array1<F>, mu: F) -> F {
        let half = F::lit(0.5);
        let quad = alpha.dot(&self.gram.dot(alpha));
        half * quad - self.corr.dot(alpha) + mu * alpha.iter().map(|a| a.abs()).sum::<F>()
    }
}

/// Coordinate descent state for one [`GramProblem`].
#[derive(Debug, Clone)]
pub struct CoordinateDescent<'a, F> {
    problem: &'a GramProblem<F>,
    alpha: Array1<F>,
    grad: Array1<F>,
    pub sweeps: usize,
}

impl<'a, F: Scalar> CoordinateDescent<'a, F> {
    pub fn new(problem: &'a GramProblem<F>, start: Array1<F>) -> Self {
        let grad = problem.residual_correlation(&start);
        CoordinateDescent { problem, alpha: start, grad, sweeps: 0 }
    }

    pub fn alpha(&self) -> &Array1<F> {
        &self.alpha
    }

    pub fn into_alpha(self) -> Array1<F> {
        self.alpha
    }

    /// One pass over `coords`; returns the largest absolute update.
    pub fn sweep(&mut self, mu: F, coords: impl IntoIterator<Item = usize>) -> F {
        let mut biggest = F::zero();
        for k in coords {
            let gkk = self.problem.gram[[k, k]];
            let old = self.alpha[k];
            let new = if gkk > F::zero() {
                soft_threshold(self.grad[k] + gkk * old, mu) / gkk
            } else {
                F::zero()
            };
            let delta = new - old;
            if delta != F::zero() {
                self.alpha[k] = new;
                let col = self.problem.gram.column(k);
                self.grad.scaled_add(-delta, &col);
                biggest = biggest.max(delta.abs());
            }
        }
        self.sweeps += 1;
        biggest
    }

    fn converged(&self, biggest: F) -> bool {
        let amax = self.alpha.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
        biggest < F::tol(UPDATE_TOL) * (F::one() + amax)
    }

    /// Minimises the objective over the current sign pattern on `active`.
    /// The step is a pseudo-inverse Newton step on the range of the active
    /// Gram block; any part of the gradient orthogonal to that range is a
    /// direction of zero curvature, and we follow it until a coordinate
    /// reaches zero. Steps stop at the first sign change and are kept only
    /// if the objective does not increase.
    fn refine(&mut self, mu: F, active: &[usize]) {
        let active: Vec<usize> = active.iter().copied().filter(|&a| self.alpha[a] != F::zero()).collect();
        let active = active.as_slice();
        let k = active.len();
        if k == 0 {
            return;
        }
        let g = &self.problem.gram;
        let sub = Array2::from_shape_fn((k, k), |(i, j)| g[[active[i], active[j]]]);
        let Ok(eig) = sym_eigen(&sub) else { return };
        let top = eig.values[0];
        if !(top > F::zero()) {
            return;
        }
        let cutoff = F::tol(1e-10) * top;
        let r = Array1::from_shape_fn(k, |i| {
            let a = active[i];
            self.grad[a] - mu * self.alpha[a].signum()
        });
        let mut newton = Array1::zeros(k);
        let mut flat = r.clone();
        for (c, &lambda) in eig.values.iter().enumerate() {
            if lambda <= cutoff {
                break;
            }
            let v = eig.vectors.column(c);
            let coef = v.dot(&r);
            newton.scaled_add(coef / lambda, &v);
            flat.scaled_add(-coef, &v);
        }
        self.line_step(mu, active, &sub, &r, &newton);
        if flat.dot(&flat).sqrt() > F::tol(1e-8) * r.dot(&r).sqrt() {
            let r = Array1::from_shape_fn(k, |i| {
                let a = active[i];
                self.grad[a] - mu * self.alpha[a].signum()
            });
            self.line_step(mu, active, &sub, &r, &flat);
        }
    }

    /// Exact line search along `dir` for the sign-fixed objective whose
    /// negated gradient on `active` is `r`, stopping at the first sign change.
    fn line_step(&mut self, mu: F, active: &[usize], sub: &Array2<F>, r: &Array1<F>, dir: &Array1<F>) {
        if active.iter().any(|&a| self.alpha[a] == F::zero()) {
            return;
        }
        let slope = r.dot(dir);
        if !(slope > F::zero()) {
            return;
        }
        let curvature = dir.dot(&sub.dot(dir));
        let mut step = if curvature > F::zero() { slope / curvature } else { F::infinity() };
        let mut blocking = None;
        for (i, &a) in active.iter().enumerate() {
            let now = self.alpha[a];
            if now * dir[i] < F::zero() {
                let t = -now / dir[i];
                if t < step {
                    step = t;
                    blocking = Some(a);
                }
            }
        }
        if !step.is_finite() || !(step > F::zero()) {
            return;
        }
        let before = self.problem.objective(&self.alpha, mu);
        let saved = self.alpha.clone();
        for (i, &a) in active.iter().enumerate() {
            self.alpha[a] = self.alpha[a] + step * dir[i];
        }
        if let Some(a) = blocking {
            self.alpha[a] = F::zero();
        }
        if self.problem.objective(&self.alpha, mu) > before {
            self.alpha = saved;
            return;
        }
        self.grad = self.problem.residual_correlation(&self.alpha);
    }

    /// Runs full sweeps interleaved with active-set sweeps until a full
    /// sweep moves no coordinate by more than the tolerance.
    pub fn solve(&mut self, mu: F) -> Result<()> {
        let d = self.problem.dim();
        self.grad = self.problem.residual_correlation(&self.alpha);
        let budget = self.sweeps + MAX_SWEEPS;
        let start = self.sweeps;
        let kkt_tol = F::tol(KKT_TOL) * (F::one() + self.problem.mu_max());
        let slow_tol = F::tol(KKT_TOL_SLOW) * (F::one() + self.problem.mu_max());
        let mut last_refine = self.sweeps;
        loop {
            let biggest = self.sweep(mu, 0..d);
            let violation = self.violation(mu);
            if self.converged(biggest) || violation <= kkt_tol {
                return Ok(());
            }
            if self.sweeps - start >= SLOW_SWEEPS && violation <= slow_tol {
                log::debug!("coordinate descent stopped at mu1={mu} after {} sweeps, violation {violation}", self.sweeps - start);
                return Ok(());
            }
            let active: Vec<usize> = (0..d).filter(|&k| self.alpha[k] != F::zero()).collect();
            let pass_start = self.sweeps;
            loop {
                let biggest = self.sweep(mu, active.iter().copied());
                if self.converged(biggest) {
                    break;
                }
                if self.sweeps - last_refine >= REFINE_EVERY {
                    self.refine(mu, &active);
                    last_refine = self.sweeps;
                }
                if self.sweeps > budget || self.sweeps - pass_start >= ACTIVE_PASS_SWEEPS {
                    break;
                }
            }
            if self.sweeps - last_refine >= REFINE_EVERY {
                self.refine(mu, &active);
                last_refine = self.sweeps;
            }
            if self.sweeps > budget {
                return Err(SisirError::NumericalFailure(format!(
                    "coordinate descent did not converge in {MAX_SWEEPS} sweeps at mu1={mu}"
                )));
            }
        }
    }

    /// Largest violation of the optimality conditions at the current point.
    fn violation(&self, mu: F) -> F {
        let mut worst = F::zero();
        for (&a, &g) in self.alpha.iter().zip(self.grad.iter()) {
            let v = if a == F::zero() { (g.abs() - mu).max(F::zero()) } else { (g - mu * a.signum()).abs() };
            worst = worst.max(v);
        }
        worst
    }
}

/// Solves the Lasso at a single `μ₁` from a warm start.
pub fn lasso_solve<F: Scalar>(problem: &GramProblem<F>, mu: F, start: Array1<F>) -> Result<Array1<F>> {
    let mut cd = CoordinateDescent::new(problem, start);
    cd.solve(mu)?;
    Ok(cd.into_alpha())
}

/// Solutions of the Lasso along a decreasing grid of `μ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath<F> {
    pub mu1_grid: Array1<F>,
    /// `G x D`, row `g` solves the problem at `mu1_grid[g]`.
    pub alphas: Array2<F>,
    pub nnz: Vec<usize>,
    pub rss: Array1<F>,
    pub gcv: Array1<F>,
    /// Number of stacked rows `d·n`.
    pub rows: usize,
    /// Set when the target is identically zero (`μ_max = 0`).
    pub degenerate_target: bool,
}

impl<F: Scalar> LassoPath<F> {
    pub fn len(&self) -> usize {
        self.mu1_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu1_grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.alphas.ncols()
    }

    pub fn solution(&self, g: usize) -> ArrayView1<'_, F> {
        self.alphas.row(g)
    }
}

/// `RSS / (m (1 - df/m)²)` with `df` the number of nonzero coefficients;
/// infinite once `df >= m`.
pub fn gcv_score<F: Scalar>(rss: F, nnz: usize, rows: usize) -> F {
    if nnz >= rows {
        return F::infinity();
    }
    let m = F::from_count(rows);
    let shrink = F::one() - F::from_count(nnz) / m;
    rss / (m * shrink * shrink)
}

/// Geometric grid from `mu_max` down to `eps_ratio · mu_max`.
pub fn geometric_grid<F: Scalar>(mu_max: F, grid_size: usize, eps_ratio: F) -> Array1<F> {
    let last = F::from_count(grid_size - 1);
    Array1::from_shape_fn(grid_size, |g| {
        if g == 0 {
            mu_max
        } else {
            mu_max * eps_ratio.powf(F::from_count(g) / last)
        }
    })
}

fn residual_sum_of_squares<F: Scalar>(design: ArrayView2<F>, target: ArrayView1<F>, alpha: ArrayView1<F>) -> F {
    let fitted = design.dot(&alpha);
    target.iter().zip(fitted.iter()).map(|(&t, &f)| (t - f) * (t - f)).sum()
}

/// Computes the full regularization path for a design/target pair.
pub fn lasso_path_raw<F: Scalar>(
    design: ArrayView2<F>,
    target: ArrayView1<F>,
    grid_size: usize,
    eps_ratio: F,
) -> Result<LassoPath<F>> {
    if grid_size < 2 {
        return Err(SisirError::InvalidArgument(format!("grid_size must be >= 2, got {grid_size}")));
    }
    if !(eps_ratio > F::zero() && eps_ratio < F::one()) {
        return Err(SisirError::InvalidArgument(format!("eps_ratio must lie in (0, 1), got {eps_ratio}")));
    }
    if design.nrows() != target.len() {
        return Err(SisirError::InvalidArgument("design and target row counts differ".into()));
    }
    if design.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(SisirError::InvalidData("design or target has non-finite entries".into()));
    }
    let dim = design.ncols();
    let rows = design.nrows();
    let problem = GramProblem::from_design(design, target);
    let mu_max = problem.mu_max();
    if mu_max <= F::zero() {
        let rss = residual_sum_of_squares(design, target, Array1::zeros(dim).view());
        return Ok(LassoPath {
            mu1_grid: Array1::zeros(1),
            alphas: Array2::zeros((1, dim)),
            nnz: vec![0],
            rss: Array1::from_elem(1, rss),
            gcv: Array1::from_elem(1, gcv_score(rss, 0, rows)),
            rows,
            degenerate_target: true,
        });
    }
    let grid = geometric_grid(mu_max, grid_size, eps_ratio);
    let mut alphas = Array2::zeros((grid_size, dim));
    let mut cd = CoordinateDescent::new(&problem, Array1::zeros(dim));
    for (g, &mu) in grid.iter().enumerate() {
        if g > 0 {
            cd.solve(mu)?;
        }
        alphas.row_mut(g).assign(cd.alpha());
    }
    let nnz: Vec<usize> = alphas
        .axis_iter(Axis(0))
        .map(|row| row.iter().filter(|&&v| v != F::zero()).count())
        .collect();
    let rss = Array1::from_iter(alphas.axis_iter(Axis(0)).map(|row| residual_sum_of_squares(design, target, row)));
    let gcv = Array1::from_iter(rss.iter().zip(&nnz).map(|(&r, &k)| gcv_score(r, k, rows)));
    Ok(LassoPath { mu1_grid: grid, alphas, nnz, rss, gcv, rows, degenerate_target: false })
}

/// The solution picked by GCV.
#[derive(Debug, Clone, PartialEq)]
pub struct GcvChoice<F> {
    pub index: usize,
    pub mu1: F,
    pub alpha: Array1<F>,
    /// No solution had a finite GCV score; the sparsest one is returned.
    pub degenerate: bool,
}

/// Minimises GCV along the path; ties go to the larger `μ₁`.
pub fn select_gcv<F: Scalar>(path: &LassoPath<F>) -> Result<GcvChoice<F>> {
    if path.is_empty() {
        return Err(SisirError::InvalidArgument("empty regularization path".into()));
    }
    let mut best = 0;
    for g in 1..path.len() {
        if path.gcv[g] < path.gcv[best] {
            best = g;
        }
    }
    let degenerate = !path.gcv[best].is_finite();
    if degenerate {
        best = 0;
    }
    Ok(GcvChoice {
        index: best,
        mu1: path.mu1_grid[best],
        alpha: path.solution(best).to_owned(),
        degenerate,
    })
}

/// Strong non-zero and strong zero intervals extracted from a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thresholds {
    /// Path index of the sparse reference solution (at most `⌈P·D⌉` nonzeros).
    pub sparse_index: Option<usize>,
    /// Path index of the dense reference solution (at least `⌈P·D⌉` zeros).
    pub dense_index: Option<usize>,
    /// Nonzero in the sparse reference solution.
    pub strong_nonzeros: Vec<usize>,
    /// Zero in the dense reference solution.
    pub strong_zeros: Vec<usize>,
}

/// `⌈prop · D⌉`, robust to the rounding of accumulated proportions.
pub fn proportion_count(prop: f64, dim: usize) -> usize {
    ((prop * dim as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Extracts the two reference solutions and the strong sets for a
/// proportion `prop`.
///
/// Both reference solutions are the first qualifying ones counted from the
/// dense end of the path: the sparse one has at most `⌈prop·D⌉` nonzero
/// coefficients, the dense one at least `⌈prop·D⌉` zero coefficients.
/// Intervals landing in both sets are dropped from both.
pub fn threshold_solutions<F: Scalar>(path: &LassoPath<F>, prop: f64) -> Result<Thresholds> {
    if !(prop > 0.0 && prop.is_finite()) {
        return Err(SisirError::InvalidArgument(format!("proportion must be positive, got {prop}")));
    }
    let dim = path.dim();
    let budget = proportion_count(prop.min(1.0), dim);
    let sparse_index = (0..path.len()).rev().find(|&g| path.nnz[g] <= budget);
    let dense_index = (0..path.len()).rev().find(|&g| dim - path.nnz[g] >= budget);
    let zero = F::zero();
    let mut strong_nonzeros: Vec<usize> = sparse_index
        .map(|g| (0..dim).filter(|&k| path.alphas[[g, k]] != zero).collect())
        .unwrap_or_default();
    let mut strong_zeros: Vec<usize> = dense_index
        .map(|g| (0..dim).filter(|&k| path.alphas[[g, k]] == zero).collect())
        .unwrap_or_default();
    let both: Vec<usize> = strong_nonzeros.iter().copied().filter(|k| strong_zeros.contains(k)).collect();
    if !both.is_empty() {
        strong_nonzeros.retain(|k| !both.contains(k));
        strong_zeros.retain(|k| !both.contains(k));
    }
    Ok(Thresholds { sparse_index, dense_index, strong_nonzeros, strong_zeros })
}

/// Largest violation of the Lasso stationarity conditions at `alpha`.
pub fn kkt_violation<F: Scalar>(problem: &GramProblem<F>, alpha: &Array1<F>, mu: F) -> F {
    let g = problem.residual_correlation(alpha);
    let mut worst = F::zero();
    for k in 0..alpha.len() {
        let v = if alpha[k] == F::zero() {
            (g[k].abs() - mu).max(F::zero())
        } else {
            (g[k] - mu * alpha[k].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn random_instance(rows: usize, dim: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let design = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0));
        let target = Array1::from_shape_fn(rows, |_| rng.random_range(-1.0..1.0));
        (design, target)
    }

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn zero_at_mu_max() {
        let (design, target) = random_instance(12, 4, 1);
        let path = lasso_path_raw(design.view(), target.view(), 20, 1e-3).unwrap();
        assert!(path.solution(0).iter().all(|&v| v == 0.0));
        assert_eq!(path.nnz[0], 0);
        let problem = GramProblem::from_design(design.view(), target.view());
        assert_abs_diff_eq!(path.mu1_grid[0], problem.mu_max(), epsilon = 0.0);
        for w in path.mu1_grid.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn orthonormal_design_without_penalty_is_least_squares() {
        // columns orthogonal with ‖col‖² = m so the normalized Gram is I
        let design = array![[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]] ;
        let target = array![2.0, 0.0, 1.0, 1.0];
        let problem = GramProblem::from_design(design.view(), target.view());
        let alpha = lasso_solve(&problem, 0.0, Array1::zeros(2)).unwrap();
        assert_abs_diff_eq!(alpha, problem.corr, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha, array![1.0, 0.5], epsilon = 1e-12);
    }

    #[test]
    fn kkt_holds_along_path() {
        for seed in 0..10 {
            let (design, target) = random_instance(30, 6, seed);
            let path = lasso_path_raw(design.view(), target.view(), 50, 1e-3).unwrap();
            let problem = GramProblem::from_design(design.view(), target.view());
            for g in 0..path.len() {
                let v = kkt_violation(&problem, &path.solution(g).to_owned(), path.mu1_grid[g]);
                assert!(v <= 1e-6, "seed {seed} point {g}: {v}");
            }
        }
    }

    #[test]
    fn sweeps_never_increase_the_objective() {
        let (design, target) = random_instance(20, 8, 4);
        let problem = GramProblem::from_design(design.view(), target.view());
        let mu = 0.3 * problem.mu_max();
        let mut cd = CoordinateDescent::new(&problem, Array1::zeros(8));
        let mut last = problem.objective(cd.alpha(), mu);
        for _ in 0..200 {
            cd.sweep(mu, 0..8);
            let now = problem.objective(cd.alpha(), mu);
            assert!(now <= last + 1e-15);
            last = now;
        }
    }

    #[test]
    fn refined_grid_agrees_at_shared_points() {
        let (design, target) = random_instance(25, 5, 8);
        let coarse = lasso_path_raw(design.view(), target.view(), 11, 1e-2).unwrap();
        let fine = lasso_path_raw(design.view(), target.view(), 21, 1e-2).unwrap();
        for g in 0..coarse.len() {
            assert_abs_diff_eq!(coarse.mu1_grid[g], fine.mu1_grid[2 * g], epsilon = 1e-12);
            for k in 0..5 {
                assert!((coarse.alphas[[g, k]] - fine.alphas[[2 * g, k]]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn zero_target_is_degenerate() {
        let design = Array2::from_elem((6, 3), 1.0);
        let path = lasso_path_raw(design.view(), Array1::zeros(6).view(), 10, 1e-3).unwrap();
        assert!(path.degenerate_target);
        assert_eq!(path.len(), 1);
        assert!(path.alphas.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn argument_checks() {
        let (design, target) = random_instance(6, 2, 0);
        assert!(lasso_path_raw(design.view(), target.view(), 1, 1e-3).is_err());
        assert!(lasso_path_raw(design.view(), target.view(), 5, 1.0).is_err());
        assert!(lasso_path_raw(design.view(), target.view(), 5, 0.0).is_err());
    }

    fn synthetic_path(nnz_rows: &[&[usize]], dim: usize) -> LassoPath<f64> {
        let g = nnz_rows.len();
        let mut alphas = Array2::zeros((g, dim));
        for (r, nz) in nnz_rows.iter().enumerate() {
            for &k in nz.iter() {
                alphas[[r, k]] = 1.0;
            }
        }
        LassoPath {
            mu1_grid: Array1::from_shape_fn(g, |i| 1.0 / (1 + i) as f64),
            nnz: nnz_rows.iter().map(|r| r.len()).collect(),
            rss: Array1::ones(g),
            gcv: Array1::ones(g),
            alphas,
            rows: 100,
            degenerate_target: false,
        }
    }

    #[test]
    fn gcv_prefers_fewer_nonzeros_at_equal_rss() {
        let mut path = synthetic_path(&[&[0, 1], &[0, 1, 2, 3, 4]], 6);
        path.rows = 12;
        for g in 0..2 {
            path.gcv[g] = gcv_score(path.rss[g], path.nnz[g], path.rows);
        }
        assert_eq!(select_gcv(&path).unwrap().index, 0);
        let single = synthetic_path(&[&[3]], 6);
        assert_eq!(select_gcv(&single).unwrap().index, 0);
    }

    #[test]
    fn gcv_degenerate_when_saturated() {
        let mut path = synthetic_path(&[&[0, 1], &[0, 1, 2]], 3);
        path.rows = 2;
        for g in 0..2 {
            path.gcv[g] = gcv_score(path.rss[g], path.nnz[g], path.rows);
        }
        let choice = select_gcv(&path).unwrap();
        assert!(choice.degenerate);
        assert_eq!(choice.index, 0);
    }

    #[test]
    fn threshold_scan_rule() {
        // nnz = [0, 1, 3, 10] over D = 20; ⌈0.05·20⌉ = 1
        let path = synthetic_path(&[&[], &[4], &[2, 4, 9], &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]], 20);
        let t = threshold_solutions(&path, 0.05).unwrap();
        assert_eq!(t.sparse_index, Some(1));
        assert_eq!(t.strong_nonzeros, vec![4]);
        assert_eq!(t.dense_index, Some(3));
        assert_eq!(t.strong_zeros, (10..20).collect::<Vec<_>>());

        // prop = 1: the dense reference is the empty solution, so every
        // nonzero of the densest solution is ambiguous
        let t = threshold_solutions(&path, 1.0).unwrap();
        assert_eq!(t.sparse_index, Some(3));
        assert_eq!(t.dense_index, Some(0));
        assert!(t.strong_nonzeros.is_empty());
        assert_eq!(t.strong_zeros, (10..20).collect::<Vec<_>>());

        // sparse and dense references disagree on interval 7
        let path = synthetic_path(&[&[], &[7], &[1, 2]], 10);
        let t = threshold_solutions(&path, 0.1).unwrap();
        assert!(t.strong_nonzeros.is_empty());
        assert_eq!(t.strong_zeros, vec![0, 3, 4, 5, 6, 8, 9]);
    }

    #[test]
    fn threshold_on_all_zero_path() {
        let path = synthetic_path(&[&[], &[]], 5);
        let t = threshold_solutions(&path, 0.2).unwrap();
        assert!(t.strong_nonzeros.is_empty());
        assert_eq!(t.strong_zeros, vec![0, 1, 2, 3, 4]);
        let t = threshold_solutions(&path, 1.0).unwrap();
        assert!(t.strong_nonzeros.is_empty());
        assert_eq!(t.strong_zeros, vec![0, 1, 2, 3, 4]);
        assert!(threshold_solutions(&path, 0.0).is_err());
    }

    #[test]
    fn proportion_rounding() {
        assert_eq!(proportion_count(0.05, 20), 1);
        assert_eq!(proportion_count(0.05 * 3.0, 20), 3);
        assert_eq!(proportion_count(0.1 + 0.2, 10), 3);
        assert_eq!(proportion_count(0.05, 3), 1);
    }
}
