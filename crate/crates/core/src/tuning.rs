//! Joint choice of the ridge parameter `μ₂` and the EDR dimension `d`.
//!
//! One cross-validation pass fits ridge SIR on every fold complement for
//! every `μ₂` of the grid. It records two tables. The first is the
//! held-out SIR criterion, evaluated with the statistics of the held-out
//! fold. The second is the projector discrepancy
//! `R̂(d) = d - mean_l Tr(Π̂^{∖l} Π̂)`. The two choices then alternate until
//! they stop moving: `μ₂` minimises the CV error at the current `d`, and
//! `d` comes from the elbow of `R̂` at that `μ₂`.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SisirError};
use crate::folds::Folds;
use crate::linalg::{spd_solve, sym_eigen, SymEigen};
use crate::moments::{compute_moments, covariance, make_slices, slice_statistics, Dataset, SliceAssignment};
use crate::ridge_sir::{RidgeFit, RidgeSolver};
use crate::scalar::Scalar;

const MAX_ROUNDS: usize = 20;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub mu2_values: Vec<f64>,
    pub d0: usize,
    pub folds: usize,
    /// Held-out covariances are ridged by `epsilon · Tr(Σ̂ˡ)/p`.
    pub epsilon: f64,
    pub seed: u64,
}

impl TuneGrid {
    /// `μ₂ ∈ {10⁻², …, 10⁵}`, `d0 = min(H - 1, 10)`, ten folds.
    pub fn for_slices(h: usize) -> Self {
        TuneGrid {
            mu2_values: (-2..=5).map(|e| 10f64.powi(e)).collect(),
            d0: crate::ridge_sir::default_d_max(h),
            folds: 10,
            epsilon: 1e-8,
            seed: 0,
        }
    }

    pub fn validate(&self, h: usize) -> Result<()> {
        if self.mu2_values.is_empty() {
            return Err(SisirError::InvalidArgument("mu2 grid is empty".into()));
        }
        if self.mu2_values.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(SisirError::InvalidArgument("mu2 grid values must be positive and finite".into()));
        }
        if self.d0 == 0 || self.d0 + 1 > h {
            return Err(SisirError::InvalidArgument(format!("d0 must lie in 1..={}, got {}", h.saturating_sub(1), self.d0)));
        }
        if self.folds < 2 {
            return Err(SisirError::InvalidArgument(format!("need at least 2 folds, got {}", self.folds)));
        }
        if !(self.epsilon > 0.0) {
            return Err(SisirError::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult<F> {
    /// `|grid| x d0`.
    pub cv_err: Array2<F>,
    /// `|grid| x d0`.
    pub r_hat: Array2<F>,
    pub mu2_star: F,
    pub d_star: usize,
    /// `(μ₂*, d*)` after each round.
    pub trace: Vec<(F, usize)>,
    pub stabilized: bool,
    pub warnings: Vec<String>,
}

/// `Π = A (AᵀMA)⁻¹ AᵀM`, the `M`-orthogonal projector onto the columns of
/// `A`.
pub fn ridge_projector<F: Scalar>(a: ArrayView2<F>, metric: &Array2<F>) -> Result<Array2<F>> {
    if a.nrows() != metric.nrows() || metric.nrows() != metric.ncols() {
        return Err(SisirError::InvalidArgument("directions and metric dimensions differ".into()));
    }
    let am = a.t().dot(metric);
    let gram = am.dot(&a);
    check_condition(&gram)?;
    Ok(a.dot(&spd_solve(&gram, &am)?))
}

fn check_condition<F: Scalar>(gram: &Array2<F>) -> Result<()> {
    let eig = sym_eigen(gram)?;
    let largest = eig.values[0];
    let smallest = eig.values[eig.values.len() - 1];
    if !(smallest > F::zero()) || largest / smallest > F::lit(MAX_CONDITION) {
        return Err(SisirError::RankDeficient(format!(
            "Gram matrix of the directions has eigenvalues in [{smallest}, {largest}]"
        )));
    }
    Ok(())
}

/// `Tr(Π_d Π̂_d)` for every leading dimension `d`, where `Π_d` projects on
/// the first `d` columns of `a` under `m` and `Π̂_d` likewise for `b`
/// under `mb`.
pub fn projector_traces<F: Scalar>(
    a: ArrayView2<F>,
    m: &Array2<F>,
    b: ArrayView2<F>,
    mb: &Array2<F>,
) -> Result<Array1<F>> {
    let d0 = a.ncols().min(b.ncols());
    let ma = m.dot(&a);
    let mbb = mb.dot(&b);
    let ga = a.t().dot(&ma);
    let gb = b.t().dot(&mbb);
    check_condition(&ga)?;
    check_condition(&gb)?;
    // Tr(A Ga⁻¹ AᵀM B Gb⁻¹ BᵀMb) = Tr(Ga⁻¹ U Gb⁻¹ V)
    let u = ma.t().dot(&b);
    let v = mbb.t().dot(&a);
    let mut out = Array1::zeros(d0);
    for d in 1..=d0 {
        let left = spd_solve(&ga.slice(s![..d, ..d]).to_owned(), &u.slice(s![..d, ..d]).to_owned())?;
        let right = spd_solve(&gb.slice(s![..d, ..d]).to_owned(), &v.slice(s![..d, ..d]).to_owned())?;
        out[d - 1] = crate::linalg::trace_of_product(&left, &right);
    }
    Ok(out)
}

/// Largest drop in the increments of `r`: with `δ_d = r(d+1) - r(d)`,
/// returns the `d` maximising `δ_d - δ_{d+1}`; the smallest such `d` on
/// ties. Curves of length two or less give 1.
pub fn elbow<F: Scalar>(r: &[F]) -> usize {
    if r.len() <= 2 {
        return 1;
    }
    let delta: Vec<F> = r.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = r.iter().fold(F::one(), |acc, v| acc.max(v.abs()));
    let tol = F::tol(1e-12) * scale;
    let mut best = 0;
    let mut best_drop = delta[0] - delta[1];
    for k in 1..delta.len() - 1 {
        let drop = delta[k] - delta[k + 1];
        if drop > best_drop + tol {
            best = k;
            best_drop = drop;
        }
    }
    best + 1
}

/// Outcome of alternating the two choices over precomputed tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alternation {
    pub mu2_index: usize,
    pub d: usize,
    /// `(μ₂ index, d)` after each round.
    pub trace: Vec<(usize, usize)>,
    pub stabilized: bool,
}

fn argmin_column<F: Scalar>(table: &Array2<F>, col: usize) -> usize {
    let mut best = 0;
    for i in 1..table.nrows() {
        if table[[i, col]] < table[[best, col]] {
            best = i;
        }
    }
    best
}

/// Starting from `d = d0`, alternates `μ₂ = argmin CVerr[·, d]` and
/// `d = elbow(R̂[μ₂, ·])` until the next round would repeat the current
/// pair, for at most 20 rounds.
pub fn alternate<F: Scalar>(cv_err: &Array2<F>, r_hat: &Array2<F>) -> Result<Alternation> {
    if cv_err.dim() != r_hat.dim() || cv_err.is_empty() {
        return Err(SisirError::InvalidArgument("CV and R-hat tables must have the same nonempty shape".into()));
    }
    let mut d = cv_err.ncols();
    let mut trace = Vec::new();
    for _ in 0..MAX_ROUNDS {
        let m = argmin_column(cv_err, d - 1);
        d = elbow(r_hat.row(m).as_slice().expect("standard layout"));
        trace.push((m, d));
        if argmin_column(cv_err, d - 1) == m {
            return Ok(Alternation { mu2_index: m, d, trace, stabilized: true });
        }
    }
    let &(m, d) = trace.last().expect("at least one round");
    Ok(Alternation { mu2_index: m, d, trace, stabilized: false })
}

/// Relabels so that every slice of `labels` is nonempty: an empty slice
/// is folded into the next nonempty one (or the previous one at the top).
/// Returns the map from old to new labels and the new slice count.
fn compact_slices(labels: &[usize], h: usize) -> (Vec<usize>, usize) {
    let mut counts = vec![0usize; h];
    for &l in labels {
        counts[l] += 1;
    }
    let nonempty: Vec<usize> = (0..h).filter(|&s| counts[s] > 0).collect();
    let mut map = vec![0; h];
    for (s, slot) in map.iter_mut().enumerate() {
        let target = nonempty.iter().position(|&t| t >= s).unwrap_or(nonempty.len() - 1);
        *slot = target;
    }
    (map, nonempty.len())
}

/// Statistics of one held-out fold in the eigenbasis of its covariance.
struct HeldOut<F> {
    eig: SymEigen<F>,
    eps: F,
    /// Rows: `Eᵀ(X̄_h - X̄)` for each compacted slice.
    rotated_means: Array2<F>,
    freqs: Vec<F>,
}

struct FoldSetup<F> {
    solver: RidgeSolver<F>,
    held_out: HeldOut<F>,
    h_train: usize,
    warning: Option<String>,
}

fn fold_setup<F: Scalar>(
    data: &Dataset<F>,
    slices: &SliceAssignment<F>,
    folds: &Folds,
    fold: usize,
    eps_rel: F,
) -> Result<FoldSetup<F>> {
    let test = folds.test_rows(fold);
    let train = if folds.k == 1 { test.clone() } else { folds.train_rows(fold) };
    if test.is_empty() {
        return Err(SisirError::InvalidArgument(format!("fold {fold} is empty")));
    }
    if train.len() < slices.h {
        return Err(SisirError::InvalidArgument(format!(
            "fold {fold} keeps {} observations for {} slices",
            train.len(),
            slices.h
        )));
    }
    let train_labels: Vec<usize> = train.iter().map(|&i| slices.slice_of[i]).collect();
    let (map, h_train) = compact_slices(&train_labels, slices.h);
    let warning = (h_train < slices.h)
        .then(|| format!("fold {fold}: {} empty training slices merged", slices.h - h_train));
    let train_data = data.select_rows(&train);
    let train_slices =
        SliceAssignment::from_labels(train_data.y.view(), train_labels.iter().map(|&l| map[l]).collect(), h_train)?;
    let solver = RidgeSolver::new(Arc::new(compute_moments(&train_data, &train_slices)?))?;

    let x_test = data.x.select(Axis(0), &test);
    let test_labels: Vec<usize> = test.iter().map(|&i| map[slices.slice_of[i]]).collect();
    let (mean, means, freqs) = slice_statistics(x_test.view(), &test_labels, h_train);
    let sigma = covariance(x_test.view(), &mean);
    let p = data.p();
    let mut eps = eps_rel * sigma.diag().sum() / F::from_count(p);
    if !(eps > F::zero()) {
        eps = eps_rel;
    }
    let eig = sym_eigen(&sigma)?;
    let centered = &means - &mean.view().insert_axis(Axis(0));
    let rotated_means = centered.dot(&eig.vectors);
    Ok(FoldSetup {
        solver,
        held_out: HeldOut { eig, eps, rotated_means, freqs: freqs.to_vec() },
        h_train,
        warning,
    })
}

impl<F: Scalar> HeldOut<F> {
    /// `Σ_h p_h ‖(X̄_h - X̄) - Σ̂ A_d C_h‖²` in the `(Σ̂ + εI)⁻¹` norm, for every
    /// leading dimension `d` of the training fit.
    fn errors(&self, fit: &RidgeFit<F>) -> Array1<F> {
        let d0 = fit.d;
        let lambda = self.eig.values.mapv(|v| v.max(F::zero()));
        // EᵀΣ̂A = diag(λ) EᵀA
        let mut rotated_a = self.eig.vectors.t().dot(&fit.a);
        for (k, mut row) in rotated_a.outer_iter_mut().enumerate() {
            row.mapv_inplace(|v| v * lambda[k]);
        }
        let weight = lambda.mapv(|l| (l + self.eps).recip());
        let mut out = Array1::zeros(d0);
        for (h, &ph) in self.freqs.iter().enumerate() {
            if ph == F::zero() {
                continue;
            }
            let mut r = self.rotated_means.row(h).to_owned();
            for d in 0..d0 {
                r.scaled_add(-fit.c[[d, h]], &rotated_a.column(d));
                let norm: F = r.iter().zip(weight.iter()).filter(|(v, _)| **v != F::zero()).map(|(&v, &w)| v * v * w).sum();
                out[d] = out[d] + ph * norm;
            }
        }
        out
    }
}

/// CV errors and projector traces for one fold over the whole grid.
struct FoldOutcome<F> {
    errors: Array2<F>,
    /// `None` when the fold's directions were rank deficient at that `μ₂`.
    traces: Vec<Option<Array1<F>>>,
    warnings: Vec<String>,
}

fn fold_outcome<F: Scalar>(
    setup: &FoldSetup<F>,
    mu2_values: &[F],
    d0: usize,
    full_fits: Option<&[RidgeFit<F>]>,
    fold: usize,
) -> Result<FoldOutcome<F>> {
    let mut warnings: Vec<String> = setup.warning.iter().cloned().collect();
    let d_fold = d0.min(setup.h_train - 1);
    if d_fold < d0 {
        return Err(SisirError::InvalidArgument(format!(
            "fold {fold} has {} slices, too few for d0 = {d0}",
            setup.h_train
        )));
    }
    let mut errors = Array2::zeros((mu2_values.len(), d0));
    let mut traces = Vec::with_capacity(mu2_values.len());
    for (i, &mu2) in mu2_values.iter().enumerate() {
        let fit = setup.solver.fit(mu2, d0)?;
        errors.row_mut(i).assign(&setup.held_out.errors(&fit));
        if let Some(full) = full_fits {
            let full = &full[i];
            match projector_traces(fit.a.view(), &fit.metric(), full.a.view(), &full.metric()) {
                Ok(t) => traces.push(Some(t)),
                Err(SisirError::RankDeficient(msg)) => {
                    warnings.push(format!("fold {fold}, mu2={mu2}: skipped ({msg})"));
                    traces.push(None);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(FoldOutcome { errors, traces, warnings })
}

struct GridPass<F> {
    cv_err: Array2<F>,
    r_hat: Option<Array2<F>>,
    warnings: Vec<String>,
}

fn grid_pass<F: Scalar>(
    data: &Dataset<F>,
    h: usize,
    mu2_values: &[F],
    d0: usize,
    folds: &Folds,
    eps_rel: F,
    with_r_hat: bool,
) -> Result<GridPass<F>> {
    let slices = make_slices(data.y.view(), h)?;
    if folds.fold_of.len() != data.n() {
        return Err(SisirError::InvalidArgument("fold assignment does not match the dataset".into()));
    }
    let full_fits = if with_r_hat {
        let solver = RidgeSolver::new(Arc::new(compute_moments(data, &slices)?))?;
        Some(mu2_values.iter().map(|&m| solver.fit(m, d0)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let outcomes: Vec<Result<FoldOutcome<F>>> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let setup = fold_setup(data, &slices, folds, f, eps_rel)?;
            fold_outcome(&setup, mu2_values, d0, full_fits.as_deref(), f)
        })
        .collect();
    let g = mu2_values.len();
    let mut cv_err = Array2::zeros((g, d0));
    let mut trace_sum = Array2::<F>::zeros((g, d0));
    let mut valid = vec![0usize; g];
    let mut warnings = Vec::new();
    for outcome in outcomes {
        let o = outcome?;
        cv_err = cv_err + &o.errors;
        for (i, t) in o.traces.iter().enumerate() {
            if let Some(t) = t {
                let mut row = trace_sum.row_mut(i);
                row += t;
                valid[i] += 1;
            }
        }
        warnings.extend(o.warnings);
    }
    cv_err.mapv_inplace(|v| v / F::from_count(folds.k));
    let r_hat = if with_r_hat {
        let mut r = Array2::zeros((g, d0));
        for i in 0..g {
            if 2 * valid[i] < folds.k {
                return Err(SisirError::RankDeficient(format!(
                    "only {} of {} folds gave usable projectors at mu2={}",
                    valid[i], folds.k, mu2_values[i]
                )));
            }
            for d in 0..d0 {
                r[[i, d]] = F::from_count(d + 1) - trace_sum[[i, d]] / F::from_count(valid[i]);
            }
        }
        Some(r)
    } else {
        None
    };
    Ok(GridPass { cv_err, r_hat, warnings })
}

fn grid_values<F: Scalar>(grid: &TuneGrid) -> Vec<F> {
    grid.mu2_values.iter().map(|&m| F::lit(m)).collect()
}

fn tuning_folds<F: Scalar>(data: &Dataset<F>, h: usize, folds: usize, seed: u64) -> Result<Folds> {
    let slices = make_slices(data.y.view(), h)?;
    Folds::stratified(&slices.slice_of, h, folds, seed)
}

/// CV error table (`|grid| x d0`) with slice-stratified folds drawn from
/// `grid.seed`.
pub fn cv_error_grid<F: Scalar>(data: &Dataset<F>, h: usize, grid: &TuneGrid) -> Result<Array2<F>> {
    grid.validate(h)?;
    let folds = tuning_folds(data, h, grid.folds, grid.seed)?;
    cv_error_table(data, h, &grid_values(grid), grid.d0, &folds, F::lit(grid.epsilon))
}

/// CV error table for an explicit fold assignment. A single fold uses the
/// whole dataset both to fit and to evaluate.
pub fn cv_error_table<F: Scalar>(
    data: &Dataset<F>,
    h: usize,
    mu2_values: &[F],
    d0: usize,
    folds: &Folds,
    eps_rel: F,
) -> Result<Array2<F>> {
    Ok(grid_pass(data, h, mu2_values, d0, folds, eps_rel, false)?.cv_err)
}

/// `R̂_{μ₂}(d)` for `d = 1..=d0`.
pub fn r_hat_curve<F: Scalar>(
    data: &Dataset<F>,
    h: usize,
    mu2: F,
    d0: usize,
    folds: usize,
    seed: u64,
) -> Result<Array1<F>> {
    let f = tuning_folds(data, h, folds, seed)?;
    r_hat_for_folds(data, h, mu2, d0, &f)
}

pub fn r_hat_for_folds<F: Scalar>(data: &Dataset<F>, h: usize, mu2: F, d0: usize, folds: &Folds) -> Result<Array1<F>> {
    let pass = grid_pass(data, h, &[mu2], d0, folds, F::lit(1e-8), true)?;
    Ok(pass.r_hat.expect("requested").row(0).to_owned())
}

pub fn joint_tune<F: Scalar>(data: &Dataset<F>, h: usize, grid: &TuneGrid) -> Result<TuneResult<F>> {
    grid.validate(h)?;
    let folds = tuning_folds(data, h, grid.folds, grid.seed)?;
    let values = grid_values(grid);
    let pass = grid_pass(data, h, &values, grid.d0, &folds, F::lit(grid.epsilon), true)?;
    let r_hat = pass.r_hat.expect("requested");
    let alt = alternate(&pass.cv_err, &r_hat)?;
    let mut warnings = pass.warnings;
    if !alt.stabilized {
        warnings.push(format!("(mu2, d) did not stabilize within {MAX_ROUNDS} rounds"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(TuneResult {
        mu2_star: values[alt.mu2_index],
        d_star: alt.d,
        trace: alt.trace.iter().map(|&(m, d)| (values[m], d)).collect(),
        stabilized: alt.stabilized,
        cv_err: pass.cv_err,
        r_hat,
        warnings,
    })
}
