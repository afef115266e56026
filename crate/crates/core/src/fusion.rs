//! Iterative interval fusion.
//!
//! Starting from one interval per grid point, each iteration solves the
//! interval Lasso along its path, stores the GCV-selected model with its
//! cross-validation error, and merges intervals with the neighbor and
//! squeeze rules applied to the strong non-zero / strong zero sets. The
//! proportion `P` grows by `P0` whenever it produces no merge. The loop ends
//! once a single interval covers the grid; the stored model with the
//! smallest CV error is selected.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SisirError};
use crate::folds::Folds;
use crate::moments::{compute_moments, make_slices, slice_statistics, Dataset};
use crate::ridge_sir::{RidgeFit, RidgeSolver};
use crate::scalar::Scalar;
use crate::sparse::{
    design_from_centered, lasso_path, lasso_solve, select_gcv, stacked_target, threshold_solutions, GramProblem,
    IntervalPartition, SparseProblem,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Initial proportion `P0`, also the increment of `P`.
    pub p0: f64,
    pub grid_size: usize,
    pub eps_ratio: f64,
    pub cv_folds: usize,
    /// Defaults to `2p` when `None`.
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub cv_directions: CvDirections,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { p0: 0.05, grid_size: 100, eps_ratio: 1e-3, cv_folds: 10, max_iterations: None, seed: 0, cv_directions: CvDirections::Refit }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(SisirError::InvalidArgument(format!("P0 must lie in (0, 1], got {}", self.p0)));
        }
        if self.cv_folds < 2 {
            return Err(SisirError::InvalidArgument(format!("need at least 2 CV folds, got {}", self.cv_folds)));
        }
        if self.grid_size < 2 {
            return Err(SisirError::InvalidArgument("grid_size must be >= 2".into()));
        }
        if !(self.eps_ratio > 0.0 && self.eps_ratio < 1.0) {
            return Err(SisirError::InvalidArgument("eps_ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One candidate model of the fusion trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord<F> {
    pub partition: IntervalPartition<F>,
    pub alpha_star: Array1<F>,
    pub mu1_star: F,
    pub cv_error: F,
    pub iteration: usize,
    /// Proportion that produced the merge out of this partition (`None` for
    /// the last record).
    pub proportion: Option<f64>,
}

impl<F: Scalar> ModelRecord<F> {
    pub fn intervals(&self) -> usize {
        self.partition.len()
    }

    /// Grid indices covered by intervals with nonzero coefficient.
    pub fn support_points(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (k, &(lo, hi)) in self.partition.ranges.iter().enumerate() {
            if self.alpha_star[k] != F::zero() {
                out.extend(lo..=hi);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCollection<F> {
    pub records: Vec<ModelRecord<F>>,
    pub selected: usize,
    /// The iteration cap was hit before reaching a single interval.
    pub hit_max_iterations: bool,
    /// `P` exceeded 1 without any merge; the remaining intervals were fused
    /// into one.
    pub stalled: bool,
    pub warnings: Vec<String>,
}

impl<F: Scalar> ModelCollection<F> {
    pub fn selected_record(&self) -> &ModelRecord<F> {
        &self.records[self.selected]
    }
}

/// Pairs `(k, k+1)` of consecutive intervals linked by the merge rules.
fn merge_links<F: Scalar>(partition: &IntervalPartition<F>, d1: &[bool], d2: &[bool]) -> Vec<bool> {
    let big_d = partition.len();
    let mut link = vec![false; big_d.saturating_sub(1)];
    for k in 0..big_d.saturating_sub(1) {
        if (d1[k] && d1[k + 1]) || (d2[k] && d2[k + 1]) {
            link[k] = true;
        }
    }
    for k in 0..big_d.saturating_sub(2) {
        let l = &partition.lengths;
        let wide = l[k] + l[k + 2] > l[k + 1];
        let squeeze_nonzero = d1[k] && d1[k + 2] && !d2[k + 1];
        let squeeze_zero = d2[k] && d2[k + 2] && !d1[k + 1];
        if wide && (squeeze_nonzero || squeeze_zero) {
            link[k] = true;
            link[k + 1] = true;
        }
    }
    link
}

fn index_mask(indices: &[usize], len: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; len];
    for &k in indices {
        if k >= len {
            return Err(SisirError::InvalidArgument(format!("interval index {k} out of range 0..{len}")));
        }
        mask[k] = true;
    }
    Ok(mask)
}

/// Applies the neighbor and squeeze rules to a partition.
///
/// Both rules are evaluated on the input partition; overlapping groups are
/// united before merging.
pub fn merge_step<F: Scalar>(
    partition: &IntervalPartition<F>,
    strong_nonzeros: &[usize],
    strong_zeros: &[usize],
    grid: &Array1<F>,
) -> Result<IntervalPartition<F>> {
    let big_d = partition.len();
    let d1 = index_mask(strong_nonzeros, big_d)?;
    let d2 = index_mask(strong_zeros, big_d)?;
    if d1.iter().zip(&d2).any(|(a, b)| *a && *b) {
        return Err(SisirError::InvalidArgument("strong non-zero and strong zero sets overlap".into()));
    }
    let link = merge_links(partition, &d1, &d2);
    let mut groups = Vec::new();
    let mut k = 0;
    while k < link.len() {
        if link[k] {
            let start = k;
            while k < link.len() && link[k] {
                k += 1;
            }
            groups.push((start, k));
        } else {
            k += 1;
        }
    }
    if groups.is_empty() {
        return Ok(partition.clone());
    }
    partition.merge_groups(&groups, grid)
}

/// Whether each CV fold re-estimates the ridge directions from its
/// training rows or reuses the directions of the full-data fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvDirections {
    #[default]
    Refit,
    Fixed,
}

/// Partition-independent pieces of one CV fold.
#[derive(Debug, Clone)]
struct FoldData<F> {
    a: Array2<F>,
    train_target: Array1<F>,
    test_target: Array1<F>,
    centered_train: Array2<F>,
    centered_test: Array2<F>,
}

/// Per-fold slicing, directions, and targets, computed once and reused for
/// every partition of a fusion run.
#[derive(Debug, Clone)]
pub struct CvPlan<F> {
    folds: Vec<FoldData<F>>,
    pub warnings: Vec<String>,
}

impl<F: Scalar> CvPlan<F> {
    pub fn new(data: &Dataset<F>, fit: &RidgeFit<F>, folds: &Folds, directions: CvDirections) -> Result<Self> {
        if folds.k < 2 {
            return Err(SisirError::InvalidArgument("need at least 2 folds".into()));
        }
        let built: Vec<Result<(FoldData<F>, Option<String>)>> =
            (0..folds.k).into_par_iter().map(|f| fold_data(data, fit, folds, f, directions)).collect();
        let mut out = Vec::with_capacity(folds.k);
        let mut warnings = Vec::new();
        for b in built {
            let (fd, w) = b?;
            out.push(fd);
            warnings.extend(w);
        }
        Ok(CvPlan { folds: out, warnings })
    }

    /// Mean held-out error of the interval Lasso refitted at `mu1`.
    pub fn error(&self, partition: &IntervalPartition<F>, mu1: F, warm: Option<&Array1<F>>) -> Result<F> {
        let zero = Array1::zeros(partition.len());
        let warm = warm.unwrap_or(&zero);
        let per_fold: Vec<Result<F>> =
            self.folds.par_iter().map(|fd| fold_error(fd, partition, mu1, warm)).collect();
        let mut total = F::zero();
        for e in per_fold {
            total = total + e?;
        }
        Ok(total / F::from_count(self.folds.len()))
    }
}

fn fold_data<F: Scalar>(
    data: &Dataset<F>,
    fit: &RidgeFit<F>,
    folds: &Folds,
    fold: usize,
    directions: CvDirections,
) -> Result<(FoldData<F>, Option<String>)> {
    let train = folds.train_rows(fold);
    let test = folds.test_rows(fold);
    if test.is_empty() {
        return Err(SisirError::InvalidArgument(format!("fold {fold} is empty")));
    }
    let h = fit.c.ncols();
    let mut warning = None;
    let h_fold = h.min(train.len());
    if h_fold < h {
        warning = Some(format!("fold {fold}: {} training rows for {h} slices, slices merged", train.len()));
    }
    let train_data = data.select_rows(&train);
    let slices = make_slices(train_data.y.view(), h_fold.max(2))?;
    let a = match directions {
        CvDirections::Fixed => fit.a.clone(),
        CvDirections::Refit => {
            let moments = Arc::new(compute_moments(&train_data, &slices)?);
            let d = fit.d.min(slices.h - 1);
            RidgeSolver::new(moments)?.fit(fit.mu2, d)?.a
        }
    };
    let (mean, slice_means, _) = slice_statistics(train_data.x.view(), &slices.slice_of, slices.h);
    let coefs = (&slice_means - &mean.view().insert_axis(Axis(0))).dot(&a).reversed_axes();
    let test_labels: Vec<usize> = test.iter().map(|&i| slices.locate(data.y[i])).collect();
    let centered_train = &train_data.x - &mean.view().insert_axis(Axis(0));
    let centered_test = &data.x.select(Axis(0), &test) - &mean.view().insert_axis(Axis(0));
    Ok((
        FoldData {
            train_target: stacked_target(&coefs, &slices.slice_of),
            test_target: stacked_target(&coefs, &test_labels),
            a,
            centered_train,
            centered_test,
        },
        warning,
    ))
}

fn fold_error<F: Scalar>(
    fd: &FoldData<F>,
    partition: &IntervalPartition<F>,
    mu1: F,
    warm: &Array1<F>,
) -> Result<F> {
    let design = design_from_centered(fd.centered_train.view(), fd.a.view(), partition);
    let problem = GramProblem::from_design(design.view(), fd.train_target.view());
    let alpha = lasso_solve(&problem, mu1, warm.clone())?;
    let fitted = design_from_centered(fd.centered_test.view(), fd.a.view(), partition).dot(&alpha);
    let sse: F = fd.test_target.iter().zip(fitted.iter()).map(|(&t, &f)| (t - f) * (t - f)).sum();
    Ok(sse / F::from_count(fd.a.ncols() * fd.centered_test.nrows()))
}

/// K-fold CV error of the interval Lasso at a fixed `μ₁`.
///
/// Each fold re-slices its training responses, rebuilds target and design
/// from the training rows, refits the Lasso at `mu1` (warm-started at
/// `warm`), and scores the held-out rows against the training slice
/// projections. Returns the mean fold error and any warnings.
pub fn cv_model_error<F: Scalar>(
    data: &Dataset<F>,
    fit: &RidgeFit<F>,
    partition: &IntervalPartition<F>,
    mu1: F,
    folds: &Folds,
    directions: CvDirections,
    warm: Option<&Array1<F>>,
) -> Result<(F, Vec<String>)> {
    let plan = CvPlan::new(data, fit, folds, directions)?;
    let e = plan.error(partition, mu1, warm)?;
    Ok((e, plan.warnings))
}

/// Runs the full fusion procedure on the data `fit` was estimated from.
pub fn run_fusion<F: Scalar>(data: &Dataset<F>, fit: &RidgeFit<F>, config: &FusionConfig) -> Result<ModelCollection<F>> {
    config.validate()?;
    let p = data.p();
    if fit.a.nrows() != p || fit.moments.slices.n() != data.n() {
        return Err(SisirError::InvalidArgument("ridge fit does not match the dataset".into()));
    }
    let folds = Folds::stratified(&fit.moments.slices.slice_of, fit.moments.slices.h, config.cv_folds, config.seed)?;
    let max_iterations = config.max_iterations.unwrap_or(2 * p).max(1);
    let eps_ratio = F::lit(config.eps_ratio);
    let plan = CvPlan::new(data, fit, &folds, config.cv_directions)?;
    let mut warnings = plan.warnings.clone();

    let mut partition = IntervalPartition::singletons(&data.grid);
    let mut steps: u64 = 1;
    let mut records: Vec<ModelRecord<F>> = Vec::new();
    let mut stalled = false;
    let mut hit_max_iterations = false;

    for iteration in 0.. {
        let problem = SparseProblem::new(data.x.view(), fit, &partition)?;
        let path = lasso_path(&problem, config.grid_size, eps_ratio)?;
        let choice = select_gcv(&path)?;
        let cv_error = plan.error(&partition, choice.mu1, Some(&choice.alpha))?;
        log::debug!(
            "fusion iteration {iteration}: D={} mu1*={} nnz={} cv={}",
            partition.len(),
            choice.mu1,
            path.nnz[choice.index],
            cv_error
        );
        records.push(ModelRecord {
            partition: partition.clone(),
            alpha_star: choice.alpha,
            mu1_star: choice.mu1,
            cv_error,
            iteration,
            proportion: None,
        });
        if partition.len() == 1 {
            break;
        }
        if iteration + 1 >= max_iterations {
            hit_max_iterations = true;
            warnings.push(format!("stopped after {max_iterations} iterations with {} intervals", partition.len()));
            break;
        }
        // escalate P on the same path until a merge happens
        let merged = loop {
            let prop = config.p0 * steps as f64;
            if prop > 1.0 + 1e-9 {
                break None;
            }
            let t = threshold_solutions(&path, prop)?;
            log::debug!(
                "P={prop:.3}: {} strong non-zeros, {} strong zeros, densest nnz {}",
                t.strong_nonzeros.len(),
                t.strong_zeros.len(),
                path.nnz[path.len() - 1]
            );
            let next = merge_step(&partition, &t.strong_nonzeros, &t.strong_zeros, &data.grid)?;
            if next.len() < partition.len() {
                break Some((next, prop));
            }
            steps += 1;
        };
        match merged {
            Some((next, prop)) => {
                records.last_mut().expect("record just pushed").proportion = Some(prop);
                partition = next;
            }
            None => {
                stalled = true;
                warnings.push(format!(
                    "no merge possible at P=1 with {} intervals; fusing the remaining intervals",
                    partition.len()
                ));
                partition = IntervalPartition::whole(&data.grid);
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let selected = select_min_cv(&records);
    Ok(ModelCollection { records, selected, hit_max_iterations, stalled, warnings })
}

/// Index of the smallest CV error; the earliest record wins ties.
pub fn select_min_cv<F: Scalar>(records: &[ModelRecord<F>]) -> usize {
    let mut best = 0;
    for (i, r) in records.iter().enumerate() {
        if r.cv_error < records[best].cv_error {
            best = i;
        }
    }
    best
}
