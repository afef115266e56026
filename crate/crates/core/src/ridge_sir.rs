//! Ridge-regularised SIR: the EDR basis from the generalized eigenproblem
//! `Γ̂ a = λ (Σ̂ + μ₂I) a`, solved through the symmetric form
//! `W Γ̂ W` with `W = (Σ̂ + μ₂I)^{-1/2}`.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Result, SisirError};
use crate::linalg::{inv_sqrt_from_eigen, sym_eigen, symmetrize, SymEigen};
use crate::moments::MomentSet;
use crate::scalar::Scalar;

/// Estimated EDR basis and slice coefficients.
#[derive(Debug, Clone)]
pub struct RidgeFit<F> {
    /// `p x d`, columns are `(Σ̂ + μ₂I)`-orthonormal.
    pub a: Array2<F>,
    /// `d x H`, column `h` is `Aᵀ(X̄_h - X̄)`.
    pub c: Array2<F>,
    /// Leading eigenvalues, nonincreasing, length `d`.
    pub eigenvalues: Array1<F>,
    pub mu2: F,
    pub d: usize,
    pub moments: Arc<MomentSet<F>>,
}

impl<F: Scalar> RidgeFit<F> {
    /// Keeps the first `d` directions. Fits are nested in `d`, so this is
    /// the same as refitting with `d_max = d`.
    pub fn truncate(&self, d: usize) -> Result<RidgeFit<F>> {
        if d == 0 || d > self.d {
            return Err(SisirError::InvalidArgument(format!("cannot truncate {} directions to {d}", self.d)));
        }
        Ok(RidgeFit {
            a: self.a.slice(s![.., ..d]).to_owned(),
            c: self.c.slice(s![..d, ..]).to_owned(),
            eigenvalues: self.eigenvalues.slice(s![..d]).to_owned(),
            mu2: self.mu2,
            d,
            moments: Arc::clone(&self.moments),
        })
    }

    /// `Σ̂ + μ₂I`, the metric the columns of `a` are orthonormal under.
    pub fn metric(&self) -> Array2<F> {
        crate::linalg::add_ridge(&self.moments.sigma_hat, self.mu2)
    }
}

/// Default number of retained directions: `min(H - 1, 10)`.
pub fn default_d_max(h: usize) -> usize {
    h.saturating_sub(1).clamp(1, 10)
}

/// Ridge SIR solver that decomposes `Σ̂` once and can then be evaluated
/// for many values of `μ₂`.
#[derive(Debug, Clone)]
pub struct RidgeSolver<F> {
    moments: Arc<MomentSet<F>>,
    sigma_eigen: SymEigen<F>,
    n: usize,
}

impl<F: Scalar> RidgeSolver<F> {
    pub fn new(moments: Arc<MomentSet<F>>) -> Result<Self> {
        let sigma_eigen = sym_eigen(&moments.sigma_hat)?;
        let n = moments.slices.n();
        Ok(RidgeSolver { moments, sigma_eigen, n })
    }

    pub fn moments(&self) -> &Arc<MomentSet<F>> {
        &self.moments
    }

    pub fn fit(&self, mu2: F, d_max: usize) -> Result<RidgeFit<F>> {
        let m = &self.moments;
        let p = m.p();
        let h = m.h();
        if !(mu2 >= F::zero()) || !mu2.is_finite() {
            return Err(SisirError::InvalidArgument(format!("mu2 must be a finite nonnegative value, got {mu2}")));
        }
        if p >= self.n && mu2 <= F::zero() {
            return Err(SisirError::InvalidArgument(format!("mu2 must be positive when p ({p}) >= n ({})", self.n)));
        }
        if d_max == 0 || d_max > p || d_max + 1 > h {
            return Err(SisirError::InvalidArgument(format!(
                "d_max must satisfy 1 <= d_max <= min(p, H-1) = {}, got {d_max}",
                p.min(h.saturating_sub(1))
            )));
        }
        let w = inv_sqrt_from_eigen(&self.sigma_eigen, mu2)?;
        let whitened = symmetrize(&w.dot(&m.gamma_hat).dot(&w));
        let eig = sym_eigen(&whitened)?;
        let b = eig.vectors.slice(s![.., ..d_max]);
        let a = w.dot(&b);
        let c = coefficients(&a.view(), m);
        Ok(RidgeFit {
            a,
            c,
            eigenvalues: eig.values.slice(s![..d_max]).to_owned(),
            mu2,
            d: d_max,
            moments: Arc::clone(&self.moments),
        })
    }
}

/// Closed-form slice coefficients `C_h = Aᵀ(X̄_h - X̄)`.
pub fn coefficients<F: Scalar>(a: &ArrayView2<F>, moments: &MomentSet<F>) -> Array2<F> {
    moments.centered_slice_means().dot(a).reversed_axes()
}

pub fn ridge_sir_fit<F: Scalar>(moments: Arc<MomentSet<F>>, mu2: F, d_max: usize) -> Result<RidgeFit<F>> {
    RidgeSolver::new(moments)?.fit(mu2, d_max)
}

/// The ridge SIR criterion
/// `Σ_h p_h C_hᵀAᵀ(Σ̂+μ₂I)AC_h - 2 Σ_h p_h (X̄_h - X̄)ᵀAC_h`.
pub fn ridge_objective<F: Scalar>(moments: &MomentSet<F>, a: &Array2<F>, c: &Array2<F>, mu2: F) -> F {
    let metric = crate::linalg::add_ridge(&moments.sigma_hat, mu2);
    let ac = a.dot(c);
    let centered = moments.centered_slice_means();
    let mut total = F::zero();
    for h in 0..moments.h() {
        let v = ac.column(h);
        let quad = v.dot(&metric.dot(&v));
        let lin = centered.row(h).dot(&v);
        total = total + moments.freqs[h] * (quad - F::lit(2.0) * lin);
    }
    total
}

/// Projections of the observations onto the EDR directions, `X A`.
pub fn edr_scores<F: Scalar>(x: &ArrayView2<F>, a: &ArrayView2<F>) -> Result<Array2<F>> {
    if x.ncols() != a.nrows() {
        return Err(SisirError::InvalidArgument(format!(
            "predictor has {} columns but directions have {} rows",
            x.ncols(),
            a.nrows()
        )));
    }
    Ok(x.dot(a))
}
