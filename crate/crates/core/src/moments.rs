//! Slicing of the response and the empirical inverse-regression moments.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Result, SisirError};
use crate::linalg::symmetrize;
use crate::scalar::Scalar;

/// A digitized functional predictor with its response.
///
/// Rows of `x` are observations, columns are evaluation points of `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub x: Array2<F>,
    pub y: Array1<F>,
    pub grid: Array1<F>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(x: Array2<F>, y: Array1<F>, grid: Array1<F>) -> Result<Self> {
        let (n, p) = x.dim();
        if n < 2 {
            return Err(SisirError::InvalidArgument(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(SisirError::InvalidArgument("need at least one grid point".into()));
        }
        if y.len() != n {
            return Err(SisirError::InvalidArgument(format!(
                "response has length {}, predictor has {n} rows",
                y.len()
            )));
        }
        if grid.len() != p {
            return Err(SisirError::InvalidArgument(format!(
                "grid has length {}, predictor has {p} columns",
                grid.len()
            )));
        }
        if let Some(j) = grid.windows(2).into_iter().position(|w| w[1] <= w[0]) {
            return Err(SisirError::InvalidData(format!("grid not strictly increasing at index {}", j + 1)));
        }
        if x.iter().chain(y.iter()).chain(grid.iter()).any(|v| !v.is_finite()) {
            return Err(SisirError::InvalidData("dataset contains non-finite values".into()));
        }
        Ok(Dataset { x, y, grid })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Dataset restricted to the given rows (grid unchanged).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset<F> {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            grid: self.grid.clone(),
        }
    }
}

/// Assignment of observations to `h` consecutive slices of the response.
///
/// Slice labels are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceAssignment<F> {
    pub slice_of: Vec<usize>,
    pub h: usize,
    pub counts: Vec<usize>,
    /// Largest response value in each slice; used to place new observations.
    pub upper: Vec<F>,
}

impl<F: Scalar> SliceAssignment<F> {
    /// Builds an assignment from explicit labels. Empty slices are allowed
    /// here; [`compute_moments`] rejects them.
    pub fn from_labels(y: ArrayView1<F>, labels: Vec<usize>, h: usize) -> Result<Self> {
        if labels.len() != y.len() {
            return Err(SisirError::InvalidArgument("labels and response differ in length".into()));
        }
        if h == 0 || labels.iter().any(|&l| l >= h) {
            return Err(SisirError::InvalidArgument(format!("slice labels must lie in 0..{h}")));
        }
        let mut counts = vec![0; h];
        let mut upper = vec![F::neg_infinity(); h];
        for (&l, &v) in labels.iter().zip(y.iter()) {
            counts[l] += 1;
            upper[l] = upper[l].max(v);
        }
        Ok(SliceAssignment { slice_of: labels, h, counts, upper })
    }

    pub fn n(&self) -> usize {
        self.slice_of.len()
    }

    /// Slice a new response value falls into: the first slice whose largest
    /// training value is not below it, or the last slice.
    pub fn locate(&self, value: F) -> usize {
        self.upper
            .iter()
            .enumerate()
            .filter(|(h, _)| self.counts[*h] > 0)
            .find(|(_, &u)| value <= u)
            .map(|(h, _)| h)
            .unwrap_or(self.h - 1)
    }
}

/// Partitions `y` into `h` equal-count slices of the sorted response.
///
/// Ties keep the original index order; the first `n mod h` slices get one
/// extra observation.
pub fn make_slices<F: Scalar>(y: ArrayView1<F>, h: usize) -> Result<SliceAssignment<F>> {
    let n = y.len();
    if h < 2 || h > n {
        return Err(SisirError::InvalidArgument(format!("need 2 <= H <= n, got H={h}, n={n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SisirError::InvalidData("response contains non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).expect("finite"));
    let base = n / h;
    let extra = n % h;
    let mut labels = vec![0; n];
    let mut pos = 0;
    for slice in 0..h {
        let size = base + usize::from(slice < extra);
        for &i in &order[pos..pos + size] {
            labels[i] = slice;
        }
        pos += size;
    }
    SliceAssignment::from_labels(y, labels, h)
}

/// Empirical moments behind every SIR estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet<F> {
    pub grand_mean: Array1<F>,
    /// `H x p`, row `h` is the mean of slice `h`.
    pub slice_means: Array2<F>,
    pub freqs: Array1<F>,
    /// Covariance with divisor `n`.
    pub sigma_hat: Array2<F>,
    /// Between-slice covariance `Σ p_h (X̄_h - X̄)(X̄_h - X̄)ᵀ`.
    pub gamma_hat: Array2<F>,
    pub slices: SliceAssignment<F>,
}

impl<F: Scalar> MomentSet<F> {
    pub fn p(&self) -> usize {
        self.grand_mean.len()
    }

    pub fn h(&self) -> usize {
        self.freqs.len()
    }

    /// Centered slice means, `H x p`.
    pub fn centered_slice_means(&self) -> Array2<F> {
        &self.slice_means - &self.grand_mean.view().insert_axis(Axis(0))
    }
}

/// Grand mean, slice means, and slice frequencies. Empty slices get zero
/// frequency and a mean equal to the grand mean.
pub(crate) fn slice_statistics<F: Scalar>(
    x: ArrayView2<F>,
    labels: &[usize],
    h: usize,
) -> (Array1<F>, Array2<F>, Array1<F>) {
    let (n, p) = x.dim();
    let nf = F::from_count(n);
    let grand = x.sum_axis(Axis(0)) / nf;
    let mut sums = Array2::<F>::zeros((h, p));
    let mut counts = vec![0usize; h];
    for (row, &l) in x.outer_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    let mut freqs = Array1::zeros(h);
    for (l, mut s) in sums.outer_iter_mut().enumerate() {
        if counts[l] == 0 {
            s.assign(&grand);
        } else {
            s /= F::from_count(counts[l]);
            freqs[l] = F::from_count(counts[l]) / nf;
        }
    }
    (grand, sums, freqs)
}

/// `(1/n) Σ (x_i - m)(x_i - m)ᵀ`.
pub(crate) fn covariance<F: Scalar>(x: ArrayView2<F>, mean: &Array1<F>) -> Array2<F> {
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let n = F::from_count(x.nrows());
    symmetrize(&(centered.t().dot(&centered) / n))
}

/// `Σ_h p_h c_h c_hᵀ` for centered slice means `c_h`.
pub(crate) fn between_slice<F: Scalar>(centered_means: &Array2<F>, freqs: &Array1<F>) -> Array2<F> {
    let weighted = centered_means * &freqs.view().insert_axis(Axis(1));
    symmetrize(&centered_means.t().dot(&weighted))
}

pub fn compute_moments<F: Scalar>(data: &Dataset<F>, slices: &SliceAssignment<F>) -> Result<MomentSet<F>> {
    if slices.n() != data.n() {
        return Err(SisirError::InvalidArgument(format!(
            "slice assignment covers {} observations, dataset has {}",
            slices.n(),
            data.n()
        )));
    }
    if let Some(h) = slices.counts.iter().position(|&c| c == 0) {
        return Err(SisirError::InvalidArgument(format!("slice {h} is empty")));
    }
    let (grand_mean, slice_means, freqs) = slice_statistics(data.x.view(), &slices.slice_of, slices.h);
    let sigma_hat = covariance(data.x.view(), &grand_mean);
    let centered = &slice_means - &grand_mean.view().insert_axis(Axis(0));
    let gamma_hat = between_slice(&centered, &freqs);
    Ok(MomentSet {
        grand_mean,
        slice_means,
        freqs,
        sigma_hat,
        gamma_hat,
        slices: slices.clone(),
    })
}
