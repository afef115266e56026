#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = b.clone();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))?;
        if m[[pivot, col]].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap([pivot, k], [col, k]);
            }
            v.swap(pivot, col);
        }
        for r in col + 1..n {
            let f = m[[r, col]] / m[[col, col]];
            for k in col..n {
                m[[r, k]] -= f * m[[col, k]];
            }
            v[r] -= f * v[col];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[[r, k]] * x[k]).sum();
        x[r] = (v[r] - s) / m[[r, r]];
    }
    Some(x)
}

/// Exhaustive Lasso solver for `½ αᵀGα - cᵀα + μ‖α‖₁`: tries every sign
/// pattern, keeps those meeting the optimality conditions, and returns the
/// one with the lowest objective.
pub fn lasso_oracle(gram: &Array2<f64>, corr: &Array1<f64>, mu: f64) -> Array1<f64> {
    let dim = corr.len();
    let objective = |a: &Array1<f64>| 0.5 * a.dot(&gram.dot(a)) - corr.dot(a) + mu * a.iter().map(|v| v.abs()).sum::<f64>();
    let mut best = Array1::zeros(dim);
    let mut best_obj = 0.0;
    let patterns = 3usize.pow(dim as u32);
    for code in 0..patterns {
        let mut signs = vec![0i32; dim];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i32 - 1;
            c /= 3;
        }
        let active: Vec<usize> = (0..dim).filter(|&k| signs[k] != 0).collect();
        if active.is_empty() {
            continue;
        }
        let sub = Array2::from_shape_fn((active.len(), active.len()), |(i, j)| gram[[active[i], active[j]]]);
        let rhs = Array1::from_iter(active.iter().map(|&k| corr[k] - mu * signs[k] as f64));
        let Some(sol) = solve(&sub, &rhs) else { continue };
        if active.iter().zip(sol.iter()).any(|(&k, &v)| v * signs[k] as f64 <= 0.0) {
            continue;
        }
        let mut alpha = Array1::zeros(dim);
        for (&k, &v) in active.iter().zip(sol.iter()) {
            alpha[k] = v;
        }
        let g = corr - &gram.dot(&alpha);
        if (0..dim).any(|k| signs[k] == 0 && g[k].abs() > mu * (1.0 + 1e-9)) {
            continue;
        }
        let obj = objective(&alpha);
        if obj < best_obj {
            best_obj = obj;
            best = alpha;
        }
    }
    best
}

/// Orthogonal projector onto the column span of `a` (Gram-Schmidt).
pub fn span_projector(a: &Array2<f64>) -> Array2<f64> {
    let p = a.nrows();
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for col in a.columns() {
        let mut v = col.to_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.scaled_add(-c, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            basis.push(v / norm);
        }
    }
    let mut out = Array2::zeros((p, p));
    for q in &basis {
        for i in 0..p {
            for j in 0..p {
                out[[i, j]] += q[i] * q[j];
            }
        }
    }
    out
}

pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let b = random_matrix(p, p, rng);
    b.t().dot(&b) / p as f64 + Array2::<f64>::eye(p) * 0.5
}

/// Jaccard index of two index sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let sa: std::collections::BTreeSet<_> = a.iter().collect();
    let sb: std::collections::BTreeSet<_> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Grid indices whose point lies in `[lo, hi]`.
pub fn points_in(grid: &Array1<f64>, lo: f64, hi: f64) -> Vec<usize> {
    (0..grid.len()).filter(|&j| grid[j] >= lo - 1e-12 && grid[j] <= hi + 1e-12).collect()
}
