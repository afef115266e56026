//! Dense symmetric linear algebra used by the ridge and tuning steps.
//!
//! The eigensolver is the classical Householder tridiagonalisation followed
//! by the implicit QL iteration. It is written against [`Scalar`] so the
//! whole pipeline stays generic over the float type, and it is fully
//! deterministic: eigenvalues are sorted nonincreasing and every eigenvector
//! is signed so that its largest-magnitude component is positive.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Result, SisirError};
use crate::scalar::Scalar;

/// Maximum QL iterations per eigenvalue before giving up.
const MAX_QL_ITERATIONS: usize = 60;

/// Spectral decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen<F> {
    /// Eigenvalues, nonincreasing.
    pub values: Array1<F>,
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: Array2<F>,
}

impl<F: Scalar> SymEigen<F> {
    /// Rebuilds `V f(Λ) Vᵀ` for an elementwise spectral function.
    pub fn recombine(&self, f: impl Fn(F) -> F) -> Array2<F> {
        let scaled = &self.vectors * &self.values.mapv(f).insert_axis(Axis(0));
        symmetrize(&scaled.dot(&self.vectors.t()))
    }
}

/// Returns `(M + Mᵀ) / 2`.
pub fn symmetrize<F: Scalar>(m: &Array2<F>) -> Array2<F> {
    let half = F::lit(0.5);
    let mut out = m.clone();
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[[i, j]] + m[[j, i]]) * half;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

fn check_square_finite<F: Scalar>(m: &ArrayView2<F>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(SisirError::InvalidArgument(format!(
            "{what}: matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SisirError::InvalidData(format!("{what}: non-finite entry")));
    }
    Ok(())
}

/// Full spectral decomposition of a symmetric matrix.
///
/// The input is symmetrised first. Eigenvalues come back nonincreasing;
/// near-ties (gap below 1e-12) are ordered by the index of the first
/// nonzero eigenvector component.
pub fn sym_eigen<F: Scalar>(m: &Array2<F>) -> Result<SymEigen<F>> {
    check_square_finite(&m.view(), "sym_eigen")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(SymEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    let sym = symmetrize(m);
    let mut v: Vec<F> = sym.iter().copied().collect();
    let mut d = vec![F::zero(); n];
    let mut e = vec![F::zero(); n];
    tridiagonalize(&mut v, &mut d, &mut e, n);
    // QL rotates pairs of eigenvector columns; keep them as contiguous rows.
    let mut z = vec![F::zero(); n * n];
    for r in 0..n {
        for c in 0..n {
            z[c * n + r] = v[r * n + c];
        }
    }
    ql_implicit(&mut z, &mut d, &mut e, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        values[col] = d[src];
        let row = &z[src * n..(src + 1) * n];
        let mut pivot = 0;
        for k in 1..n {
            if row[k].abs() > row[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if row[pivot] < F::zero() { -F::one() } else { F::one() };
        for k in 0..n {
            vectors[[k, col]] = row[k] * sign;
        }
    }
    order_ties(&mut values, &mut vectors);
    Ok(SymEigen { values, vectors })
}

fn first_nonzero<F: Scalar>(vectors: &Array2<F>, col: usize) -> usize {
    let tiny = F::tol(1e-12);
    vectors
        .column(col)
        .iter()
        .position(|v| v.abs() > tiny)
        .unwrap_or(vectors.nrows())
}

fn order_ties<F: Scalar>(values: &mut Array1<F>, vectors: &mut Array2<F>) {
    let n = values.len();
    let gap = F::tol(1e-12);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[end - 1] - values[end]).abs() < gap {
            end += 1;
        }
        if end - start > 1 {
            let mut group: Vec<usize> = (start..end).collect();
            group.sort_by_key(|&c| first_nonzero(vectors, c));
            let vals: Vec<F> = group.iter().map(|&c| values[c]).collect();
            let cols: Vec<Array1<F>> = group.iter().map(|&c| vectors.column(c).to_owned()).collect();
            for (k, c) in (start..end).enumerate() {
                values[c] = vals[k];
                vectors.column_mut(c).assign(&cols[k]);
            }
        }
        start = end;
    }
}

/// Householder reduction of a row-major symmetric matrix to tridiagonal
/// form, accumulating the orthogonal transform in place.
fn tridiagonalize<F: Scalar>(v: &mut [F], d: &mut [F], e: &mut [F], n: usize) {
    let zero = F::zero();
    let idx = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for k in 0..i {
            scale = scale + d[k].abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = zero;
                v[idx(j, i)] = zero;
            }
        } else {
            for k in 0..i {
                d[k] = d[k] / scale;
                h = h + d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g = g + v[idx(k, j)] * d[k];
                    e[k] = e[k] + v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] = v[idx(k, j)] - (f * e[k] + g * d[k]);
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = zero;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = F::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g = g + v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] = v[idx(k, j)] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = zero;
    }
    v[idx(n - 1, n - 1)] = F::one();
    e[0] = zero;
}

/// Implicit QL on the tridiagonal `(d, e)`; `z` holds eigenvectors as rows.
fn ql_implicit<F: Scalar>(z: &mut [F], d: &mut [F], e: &mut [F], n: usize) -> Result<()> {
    let zero = F::zero();
    let one = F::one();
    let two = F::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;
    let mut f = zero;
    let mut tst1 = zero;
    let eps = F::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(SisirError::NumericalFailure(format!(
                        "symmetric eigensolver did not converge for eigenvalue {l}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_next = &mut hi[..n];
                    for k in 0..n {
                        let hk = row_next[k];
                        row_next[k] = s * row_i[k] + c * hk;
                        row_i[k] = c * row_i[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = zero;
    }
    Ok(())
}

/// `(M + ridge·I)^{-1/2}` through the spectral decomposition of `M`.
pub fn inv_sqrt<F: Scalar>(m: &Array2<F>, ridge: F) -> Result<Array2<F>> {
    if ridge < F::zero() || !ridge.is_finite() {
        return Err(SisirError::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let eig = sym_eigen(m)?;
    inv_sqrt_from_eigen(&eig, ridge)
}

/// Same as [`inv_sqrt`] but reuses an existing decomposition of `M`.
pub fn inv_sqrt_from_eigen<F: Scalar>(eig: &SymEigen<F>, ridge: F) -> Result<Array2<F>> {
    let floor = F::tol(1e-12);
    let smallest = eig.values.iter().fold(F::infinity(), |acc, &v| acc.min(v + ridge));
    if eig.values.is_empty() || smallest <= floor {
        return Err(SisirError::SingularMatrix(format!(
            "smallest ridged eigenvalue {smallest} is not above {floor}"
        )));
    }
    Ok(eig.recombine(|v| (v + ridge).sqrt().recip()))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<F: Scalar>(m: &Array2<F>) -> Result<Array2<F>> {
    check_square_finite(&m.view(), "cholesky")?;
    let n = m.nrows();
    let mut l = Array2::<F>::zeros((n, n));
    for j in 0..n {
        let mut diag = m[[j, j]];
        for k in 0..j {
            diag = diag - l[[j, k]] * l[[j, k]];
        }
        if diag <= F::zero() || !diag.is_finite() {
            return Err(SisirError::NumericalFailure(format!(
                "matrix not positive definite at pivot {j}"
            )));
        }
        let djj = diag.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = m[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `S x = B` for symmetric positive definite `S` (small systems).
pub fn spd_solve<F: Scalar>(s: &Array2<F>, b: &Array2<F>) -> Result<Array2<F>> {
    let l = cholesky(s)?;
    let n = l.nrows();
    let mut x = b.clone();
    for mut col in x.axis_iter_mut(Axis(1)) {
        for i in 0..n {
            let mut v = col[i];
            for k in 0..i {
                v = v - l[[i, k]] * col[k];
            }
            col[i] = v / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = col[i];
            for k in (i + 1)..n {
                v = v - l[[k, i]] * col[k];
            }
            col[i] = v / l[[i, i]];
        }
    }
    Ok(x)
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product<F: Scalar>(a: &Array2<F>, b: &Array2<F>) -> F {
    let mut acc = F::zero();
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc = acc + a[[i, k]] * b[[k, i]];
        }
    }
    acc
}

/// `M + ridge·I`.
pub fn add_ridge<F: Scalar>(m: &Array2<F>, ridge: F) -> Array2<F> {
    let mut out = m.clone();
    out.diag_mut().mapv_inplace(|v| v + ridge);
    out
}
