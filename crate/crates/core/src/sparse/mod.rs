//! Interval-sparse step: shrink the ridge directions with one coefficient
//! per interval of the grid.
//!
//! The projections of the slice means onto the ridge directions are
//! regressed, without intercept, on the centered predictor restricted to
//! each interval and weighted by the direction. The Lasso coefficients
//! `α_k` then rescale every direction on interval `τ_k`.

mod lasso;
mod partition;

pub use lasso::{
    gcv_score, geometric_grid, kkt_violation, lasso_path_raw, lasso_solve, proportion_count, select_gcv,
    soft_threshold, threshold_solutions, CoordinateDescent, GcvChoice, GramProblem, LassoPath, Thresholds,
    MAX_SWEEPS, UPDATE_TOL,
};
pub use partition::IntervalPartition;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Result, SisirError};
use crate::moments::SliceAssignment;
use crate::ridge_sir::RidgeFit;
use crate::scalar::Scalar;

/// Stacked Lasso problem for a fixed partition.
#[derive(Debug, Clone)]
pub struct SparseProblem<F> {
    /// Length `d·n`: block `j` holds the projections on direction `j`.
    pub target: Array1<F>,
    /// `(d·n) x D`.
    pub design: Array2<F>,
    pub partition: IntervalPartition<F>,
    pub d: usize,
    pub n: usize,
}

impl<F: Scalar> SparseProblem<F> {
    /// Builds target and design for the data the ridge fit was computed on.
    pub fn new(x: ArrayView2<F>, fit: &RidgeFit<F>, partition: &IntervalPartition<F>) -> Result<Self> {
        let target = projection_target(fit, &fit.moments.slices)?;
        let design = interval_design(x, fit, partition)?;
        Ok(SparseProblem { target, design, partition: partition.clone(), d: fit.d, n: x.nrows() })
    }

    pub fn rows(&self) -> usize {
        self.target.len()
    }
}

/// Stacks `C[j, h(i)]` over directions `j` (outer) and observations `i`.
pub(crate) fn stacked_target<F: Scalar>(coefs: &Array2<F>, labels: &[usize]) -> Array1<F> {
    let d = coefs.nrows();
    let n = labels.len();
    Array1::from_shape_fn(d * n, |r| coefs[[r / n, labels[r % n]]])
}

/// Projections `(X̄_{h(i)} - X̄)ᵀ â_j` stacked as a vector of length `d·n`.
pub fn projection_target<F: Scalar>(fit: &RidgeFit<F>, slices: &SliceAssignment<F>) -> Result<Array1<F>> {
    if slices.h != fit.c.ncols() {
        return Err(SisirError::InvalidArgument(format!(
            "fit has {} slices, assignment has {}",
            fit.c.ncols(),
            slices.h
        )));
    }
    Ok(stacked_target(&fit.c, &slices.slice_of))
}

/// Interval design for an already centered predictor.
pub(crate) fn design_from_centered<F: Scalar>(
    centered: ArrayView2<F>,
    a: ArrayView2<F>,
    partition: &IntervalPartition<F>,
) -> Array2<F> {
    let (n, _) = centered.dim();
    let d = a.ncols();
    let big_d = partition.len();
    let mut design = Array2::zeros((d * n, big_d));
    for j in 0..d {
        let aj = a.column(j);
        for (k, &(lo, hi)) in partition.ranges.iter().enumerate() {
            for i in 0..n {
                let row = centered.row(i);
                let mut acc = F::zero();
                for l in lo..=hi {
                    acc = acc + row[l] * aj[l];
                }
                design[[j * n + i, k]] = acc;
            }
        }
    }
    design
}

/// The `(d·n) x D` design: block `j`, column `k` is
/// `Σ_{t_l ∈ τ_k} (x_{·l} - X̄_l) â_{jl}`.
///
/// The predictor is centered with the grand mean of the fit's moments so
/// that `α = 1` reproduces the ridge scores.
pub fn interval_design<F: Scalar>(
    x: ArrayView2<F>,
    fit: &RidgeFit<F>,
    partition: &IntervalPartition<F>,
) -> Result<Array2<F>> {
    let p = x.ncols();
    if p != fit.a.nrows() || partition.p() != p {
        return Err(SisirError::InvalidArgument(format!(
            "predictor has {p} columns, directions {} rows, partition covers {}",
            fit.a.nrows(),
            partition.p()
        )));
    }
    let centered = &x - &fit.moments.grand_mean.view().insert_axis(Axis(0));
    Ok(design_from_centered(centered.view(), fit.a.view(), partition))
}

pub fn lasso_path<F: Scalar>(problem: &SparseProblem<F>, grid_size: usize, eps_ratio: F) -> Result<LassoPath<F>> {
    lasso_path_raw(problem.design.view(), problem.target.view(), grid_size, eps_ratio)
}

/// Sparse EDR directions after interval shrinkage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDirections<F> {
    /// `p x d'` with `d' <= d` retained columns.
    pub a_sparse: Array2<F>,
    pub alpha: Array1<F>,
    /// Intervals with nonzero shrinkage coefficient.
    pub support: Vec<usize>,
    /// Original column indices removed because they vanished.
    pub dropped: Vec<usize>,
    /// No column survived.
    pub empty: bool,
}

/// Applies `α` interval-wise to the ridge directions, then orthonormalizes
/// them under `Σ̂ + metric_ridge·I` with modified Gram-Schmidt.
pub fn sparse_directions<F: Scalar>(
    fit: &RidgeFit<F>,
    alpha: ArrayView1<F>,
    partition: &IntervalPartition<F>,
    metric_ridge: F,
) -> Result<SparseDirections<F>> {
    if alpha.len() != partition.len() {
        return Err(SisirError::InvalidArgument(format!(
            "alpha has {} entries for {} intervals",
            alpha.len(),
            partition.len()
        )));
    }
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(SisirError::InvalidData("alpha has non-finite entries".into()));
    }
    let membership = partition.membership();
    let mut shrunk = fit.a.clone();
    for (l, mut row) in shrunk.outer_iter_mut().enumerate() {
        row *= alpha[membership[l]];
    }
    let sigma = &fit.moments.sigma_hat;
    let inner = |u: &Array1<F>, v: &Array1<F>| sigma.dot(v).dot(u) + metric_ridge * u.dot(v);
    let floor = F::tol(1e-10);
    let mut kept: Vec<Array1<F>> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..shrunk.ncols() {
        let mut v = shrunk.column(j).to_owned();
        for q in &kept {
            let proj = inner(q, &v);
            v.scaled_add(-proj, q);
        }
        let norm = inner(&v, &v).max(F::zero()).sqrt();
        if norm < floor {
            log::warn!("sparse direction {j} vanished after shrinkage and was dropped");
            dropped.push(j);
            continue;
        }
        v /= norm;
        kept.push(v);
    }
    let p = fit.a.nrows();
    let mut a_sparse = Array2::zeros((p, kept.len()));
    for (j, v) in kept.iter().enumerate() {
        a_sparse.column_mut(j).assign(v);
    }
    let support = (0..alpha.len()).filter(|&k| alpha[k] != F::zero()).collect();
    Ok(SparseDirections { empty: kept.is_empty(), a_sparse, alpha: alpha.to_owned(), support, dropped })
}
