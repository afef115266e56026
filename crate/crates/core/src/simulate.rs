//! Synthetic functional data: Gaussian-process curves with a quadratic
//! mean and Matérn 3/2 covariance, and a response driven by interval
//! supported sinusoidal directions.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SisirError};
use crate::linalg::cholesky;
use crate::moments::Dataset;
use crate::scalar::Scalar;

const MAX_REDRAWS: usize = 100;
const SINGULAR_PROJECTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimModel {
    M1,
    M2,
}

impl SimModel {
    pub fn default_p(self) -> usize {
        match self {
            SimModel::M1 => 200,
            SimModel::M2 => 300,
        }
    }

    /// Support intervals of the true directions.
    pub fn intervals(self) -> Vec<(f64, f64)> {
        match self {
            SimModel::M1 => vec![(0.2, 0.4)],
            SimModel::M2 => vec![(0.0, 0.1), (0.5, 0.65), (0.65, 0.78)],
        }
    }
}

impl std::str::FromStr for SimModel {
    type Err = SisirError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(SimModel::M1),
            "m2" => Ok(SimModel::M2),
            other => Err(SisirError::InvalidArgument(format!("unknown model '{other}', expected m1 or m2"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub model: SimModel,
    pub n: usize,
    pub p: usize,
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(model: SimModel, seed: u64) -> Self {
        SimSpec { model, n: 100, p: model.default_p(), length_scale: 0.1, signal_var: 1.0, noise_sd: 0.1, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(SisirError::InvalidArgument(format!("p must be at least 2, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(SisirError::InvalidArgument(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.length_scale > 0.0) || !(self.signal_var > 0.0) {
            return Err(SisirError::InvalidArgument("length scale and signal variance must be positive".into()));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(SisirError::InvalidArgument("noise_sd must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Array1<f64> {
        uniform_grid(self.p)
    }
}

/// True directions sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    /// `p x d_true`.
    pub directions: Array2<f64>,
    pub intervals: Vec<(f64, f64)>,
}

/// `p` equispaced points on `[0, 1]`.
pub fn uniform_grid(p: usize) -> Array1<f64> {
    Array1::from_shape_fn(p, |j| j as f64 / (p - 1) as f64)
}

/// Mean curve `-5 + 4t - 4t²`.
pub fn mean_curve(t: f64) -> f64 {
    -5.0 + 4.0 * t - 4.0 * t * t
}

pub fn matern32(s: f64, t: f64, ell: f64, var: f64) -> f64 {
    let u = 3f64.sqrt() * (s - t).abs() / ell;
    var * (1.0 + u) * (-u).exp()
}

pub fn matern_covariance(grid: ArrayView1<f64>, ell: f64, var: f64) -> Array2<f64> {
    let p = grid.len();
    Array2::from_shape_fn((p, p), |(i, j)| matern32(grid[i], grid[j], ell, var))
}

/// Cholesky factor of the covariance, adding jitter `1e-10·var` and
/// raising it a hundredfold on each of up to three retries.
fn covariance_factor(grid: ArrayView1<f64>, ell: f64, var: f64) -> Result<Array2<f64>> {
    let k = matern_covariance(grid, ell, var);
    let mut jitter = 1e-10 * var;
    let mut last = None;
    for _ in 0..4 {
        let mut kj = k.clone();
        kj.diag_mut().mapv_inplace(|v| v + jitter);
        match cholesky(&kj) {
            Ok(l) => return Ok(l),
            Err(e) => last = Some(e),
        }
        jitter *= 100.0;
    }
    Err(SisirError::NumericalFailure(format!(
        "covariance factorization failed after jitter escalation: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

struct PathSampler {
    factor: Array2<f64>,
    mean: Array1<f64>,
    noise_sd: f64,
}

impl PathSampler {
    fn new(grid: ArrayView1<f64>, spec: &SimSpec) -> Result<Self> {
        if grid.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(SisirError::InvalidArgument("grid must lie in [0, 1]".into()));
        }
        Ok(PathSampler {
            factor: covariance_factor(grid, spec.length_scale, spec.signal_var)?,
            mean: grid.mapv(mean_curve),
            noise_sd: spec.noise_sd,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Array1<f64> {
        let p = self.mean.len();
        let z: Array1<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = &self.mean + &self.factor.dot(&z);
        if self.noise_sd > 0.0 {
            x.mapv_inplace(|v| v + self.noise_sd * rng.sample::<f64, _>(StandardNormal));
        }
        x
    }
}

/// Generator for row `i`: the seed picks the stream family, the row its
/// stream, so rows are independent of how many others were drawn.
fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// `n` independent noisy paths on `grid`.
pub fn gp_sample(grid: ArrayView1<f64>, spec: &SimSpec, n: usize) -> Result<Array2<f64>> {
    spec.validate()?;
    let sampler = PathSampler::new(grid, spec)?;
    let mut x = Array2::zeros((n, grid.len()));
    for (i, mut row) in x.outer_iter_mut().enumerate() {
        row.assign(&sampler.draw(&mut row_rng(spec.seed, i)));
    }
    Ok(x)
}

pub fn true_directions(grid: ArrayView1<f64>, model: SimModel) -> TrueModel {
    let intervals = model.intervals();
    let p = grid.len();
    let mut directions = Array2::zeros((p, intervals.len()));
    for (c, &(lo, hi)) in intervals.iter().enumerate() {
        let j = (c + 1) as f64;
        for (l, &t) in grid.iter().enumerate() {
            if t >= lo && t <= hi {
                directions[[l, c]] = (t * (2.0 + j) * PI / 2.0 - (j - 1.0) * PI / 3.0).sin();
            }
        }
    }
    TrueModel { directions, intervals }
}

/// `(1/p) Σ_l x(t_l) a(t_l)`.
pub fn riemann_inner(x: ArrayView1<f64>, a: ArrayView1<f64>) -> f64 {
    x.dot(&a) / x.len() as f64
}

fn response_or_none(x: ArrayView1<f64>, directions: &Array2<f64>) -> Option<f64> {
    let mut y = 0.0;
    for a in directions.columns() {
        let proj = riemann_inner(x, a);
        if proj.abs() < SINGULAR_PROJECTION {
            return None;
        }
        y += proj.abs().ln();
    }
    Some(y)
}

/// `Σ_j log|⟨x_i, a_j⟩|` for every row; fails on a vanishing projection.
pub fn responses(x: &Array2<f64>, directions: &Array2<f64>) -> Result<Array1<f64>> {
    x.outer_iter()
        .enumerate()
        .map(|(i, row)| {
            response_or_none(row, directions)
                .ok_or_else(|| SisirError::SimulationFailure(format!("row {i} is orthogonal to a true direction")))
        })
        .collect()
}

/// Draws until the response is defined, giving up after `MAX_REDRAWS`
/// rejected rows.
fn accepted_row(mut draw: impl FnMut() -> Array1<f64>, directions: &Array2<f64>) -> Result<(Array1<f64>, f64, usize)> {
    for redraws in 0..=MAX_REDRAWS {
        let x = draw();
        if let Some(y) = response_or_none(x.view(), directions) {
            return Ok((x, y, redraws));
        }
    }
    Err(SisirError::SimulationFailure(format!(
        "projection stayed below {SINGULAR_PROJECTION} after {MAX_REDRAWS} redraws"
    )))
}

pub fn simulate_dataset<F: Scalar>(spec: &SimSpec) -> Result<(Dataset<F>, TrueModel)> {
    spec.validate()?;
    let grid = spec.grid();
    let truth = true_directions(grid.view(), spec.model);
    let sampler = PathSampler::new(grid.view(), spec)?;
    let mut x = Array2::zeros((spec.n, spec.p));
    let mut y = Array1::zeros(spec.n);
    for i in 0..spec.n {
        let mut rng = row_rng(spec.seed, i);
        let (row, yi, redraws) = accepted_row(|| sampler.draw(&mut rng), &truth.directions)?;
        if redraws > 0 {
            log::debug!("row {i} redrawn {redraws} times");
        }
        x.row_mut(i).assign(&row);
        y[i] = yi;
    }
    let data = Dataset::new(x.mapv(F::lit), y.mapv(F::lit), grid.mapv(F::lit))?;
    Ok((data, truth))
}
