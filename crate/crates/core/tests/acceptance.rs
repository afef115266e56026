//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test --test acceptance`.

mod common;

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{frobenius, jaccard, lasso_oracle, points_in, random_matrix, random_spd, span_projector};
use sisir::fusion::merge_step;
use sisir::linalg::{cholesky, sym_eigen};
use sisir::moments::{compute_moments, make_slices, Dataset, SliceAssignment};
use sisir::ridge_sir::RidgeSolver;
use sisir::simulate::{simulate_dataset, SimModel, SimSpec};
use sisir::sparse::{kkt_violation, lasso_path, lasso_path_raw, GramProblem, IntervalPartition, SparseProblem};
use sisir::tuning::{joint_tune, projector_traces, ridge_projector, TuneGrid};
use sisir::FusionConfig;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn projector_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(2..=30);
        let d = rng.random_range(1..=p);
        let m = random_spd(p, &mut rng);
        let a = random_matrix(p, d, &mut rng);
        let b = random_matrix(p, d, &mut rng);
        let pi = ridge_projector(a.view(), &m).map_err(|e| e.to_string())?;
        let pi_hat = ridge_projector(b.view(), &m).map_err(|e| e.to_string())?;
        // the identity holds for the symmetric projectors M^{1/2} Π M^{-1/2}
        let eig = sym_eigen(&m).map_err(|e| e.to_string())?;
        let root = eig.recombine(f64::sqrt);
        let inv_root = eig.recombine(|v| 1.0 / v.sqrt());
        let diff = root.dot(&(&pi - &pi_hat)).dot(&inv_root);
        let lhs = 0.5 * frobenius(&diff).powi(2);
        let trace: f64 = pi.dot(&pi_hat).diag().sum();
        let rhs = d as f64 - trace;
        let via_blocks = d as f64 - projector_traces(a.view(), &m, b.view(), &m).map_err(|e| e.to_string())?[d - 1];
        worst = worst.max((lhs - rhs).abs()).max((via_blocks - rhs).abs());
    }
    check(worst <= 1e-10, format!("max deviation {worst:.2e} over 100 fixtures"))
}

fn random_lasso(rng: &mut ChaCha8Rng) -> (Array2<f64>, Array1<f64>) {
    let dim = rng.random_range(1..=5);
    let rows = rng.random_range(dim + 1..=30);
    let design = random_matrix(rows, dim, rng);
    let truth = Array1::from_shape_fn(dim, |_| if rng.random_bool(0.5) { rng.random_range(-2.0..2.0) } else { 0.0 });
    let target = design.dot(&truth) + &random_matrix(rows, 1, rng).column(0).mapv(|v| 0.3 * v);
    (design, target)
}

fn lasso_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for _ in 0..50 {
        let (design, target) = random_lasso(&mut rng);
        let path = lasso_path_raw(design.view(), target.view(), 100, 1e-3).map_err(|e| e.to_string())?;
        let problem = GramProblem::from_design(design.view(), target.view());
        for g in 0..path.len() {
            let oracle = lasso_oracle(&problem.gram, &problem.corr, path.mu1_grid[g]);
            let diff = (&path.solution(g) - &oracle).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            worst = worst.max(diff);
            points += 1;
        }
    }
    check(worst <= 1e-5, format!("max coordinate gap {worst:.2e} over {points} grid points"))
}

fn kkt_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut paths = 0;
    let mut record = |design: &Array2<f64>, target: &Array1<f64>, path: &sisir::LassoPath| {
        let problem = GramProblem::from_design(design.view(), target.view());
        for g in 0..path.len() {
            worst = worst.max(kkt_violation(&problem, &path.solution(g).to_owned(), path.mu1_grid[g]));
        }
        paths += 1;
    };
    for _ in 0..50 {
        let (design, target) = random_lasso(&mut rng);
        let path = lasso_path_raw(design.view(), target.view(), 100, 1e-3).map_err(|e| e.to_string())?;
        record(&design, &target, &path);
    }
    for model in [SimModel::M1, SimModel::M2] {
        let (data, _) = simulate_dataset::<f64>(&SimSpec::new(model, 0)).map_err(|e| e.to_string())?;
        let slices = make_slices(data.y.view(), 10).map_err(|e| e.to_string())?;
        let moments = compute_moments(&data, &slices).map_err(|e| e.to_string())?;
        let fit = RidgeSolver::new(Arc::new(moments)).and_then(|s| s.fit(1.0, 1)).map_err(|e| e.to_string())?;
        let grid = &data.grid;
        let p = data.p();
        let partitions = [
            IntervalPartition::singletons(grid),
            IntervalPartition::from_ranges((0..p / 4).map(|k| (4 * k, 4 * k + 3)).collect(), grid).map_err(|e| e.to_string())?,
            IntervalPartition::from_ranges(vec![(0, p / 3), (p / 3 + 1, p - 1)], grid).map_err(|e| e.to_string())?,
        ];
        for part in &partitions {
            let problem = SparseProblem::new(data.x.view(), &fit, part).map_err(|e| e.to_string())?;
            let path = lasso_path(&problem, 100, 1e-3).map_err(|e| e.to_string())?;
            record(&problem.design, &problem.target, &path);
        }
    }
    check(worst <= 1e-6, format!("max stationarity violation {worst:.2e} over {paths} paths"))
}

fn classical_directions(data: &Dataset<f64>, slices: &SliceAssignment<f64>, d: usize) -> Result<Array2<f64>, String> {
    let m = compute_moments(data, slices).map_err(|e| e.to_string())?;
    let l = cholesky(&m.sigma_hat).map_err(|e| e.to_string())?;
    let p = data.p();
    // K = L⁻¹ Γ L⁻ᵀ; directions are L⁻ᵀ v for the top eigenvectors v of K
    let mut l_inv = Array2::<f64>::eye(p);
    for col in 0..p {
        let e = l_inv.column(col).to_owned();
        let x = common::solve(&l, &e).ok_or("singular Cholesky factor")?;
        l_inv.column_mut(col).assign(&x);
    }
    let k = l_inv.dot(&m.gamma_hat).dot(&l_inv.t());
    let k = (&k + &k.t()) / 2.0;
    let eig = sym_eigen(&k).map_err(|e| e.to_string())?;
    Ok(l_inv.t().dot(&eig.vectors.slice(s![.., ..d])))
}

fn ridge_classical_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (n, p, h) = (200, 10, 5);
        let mix = random_matrix(p, p, &mut rng) + Array2::<f64>::eye(p);
        let x = random_matrix(n, p, &mut rng).dot(&mix);
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] + 0.5 * x[[i, 1]].powi(3) + 0.1 * rng.random_range(-1.0..1.0));
        let data = Dataset::new(x, y, Array1::from_shape_fn(p, |j| j as f64)).map_err(|e| e.to_string())?;
        let slices = make_slices(data.y.view(), h).map_err(|e| e.to_string())?;
        let solver = RidgeSolver::new(Arc::new(compute_moments(&data, &slices).map_err(|e| e.to_string())?)).map_err(|e| e.to_string())?;
        for d in [2, h - 1] {
            let ridge = solver.fit(1e-10, d).map_err(|e| e.to_string())?;
            let classical = classical_directions(&data, &slices, d)?;
            let gap = frobenius(&(span_projector(&ridge.a) - span_projector(&classical)));
            worst = worst.max(gap);
        }
    }
    check(worst <= 1e-6, format!("max subspace distance {worst:.2e} over 20 problems"))
}

fn fit_selected_support(model: SimModel, seed: u64) -> Result<(Vec<usize>, Array1<f64>), String> {
    let (data, _) = simulate_dataset::<f64>(&SimSpec::new(model, seed)).map_err(|e| e.to_string())?;
    let slices = make_slices(data.y.view(), 10).map_err(|e| e.to_string())?;
    let solver = RidgeSolver::new(Arc::new(compute_moments(&data, &slices).map_err(|e| e.to_string())?)).map_err(|e| e.to_string())?;
    let fit = solver.fit(1.0, 1).map_err(|e| e.to_string())?;
    let config = FusionConfig { seed, ..FusionConfig::default() };
    let collection = sisir::run_fusion(&data, &fit, &config).map_err(|e| e.to_string())?;
    Ok((collection.selected_record().support_points(), data.grid))
}

fn m1_recovery() -> Outcome {
    let mut hits = 0;
    let mut scores = Vec::new();
    for seed in 0..10 {
        let (support, grid) = fit_selected_support(SimModel::M1, seed)?;
        let j = jaccard(&support, &points_in(&grid, 0.2, 0.4));
        scores.push(format!("{j:.2}"));
        if j >= 0.5 {
            hits += 1;
        }
    }
    check(hits >= 7, format!("{hits}/10 runs with Jaccard >= 0.5 (need 7); Jaccard per seed [{}]", scores.join(", ")))
}

fn m2_recovery() -> Outcome {
    let mut hits = 0;
    let mut detail = Vec::new();
    for seed in 0..10 {
        let (support, grid) = fit_selected_support(SimModel::M2, seed)?;
        let target = points_in(&grid, 0.5, 0.78);
        let relevant: Vec<usize> = [points_in(&grid, 0.0, 0.1), target.clone()].concat();
        let complement: Vec<usize> = (0..grid.len()).filter(|j| !relevant.contains(j)).collect();
        let covered = target.iter().filter(|j| support.contains(j)).count() as f64 / target.len() as f64;
        let spill = complement.iter().filter(|j| support.contains(j)).count() as f64 / complement.len() as f64;
        detail.push(format!("{covered:.2}/{spill:.2}"));
        if covered >= 0.5 && spill <= 0.4 {
            hits += 1;
        }
    }
    check(hits >= 6, format!("{hits}/10 runs pass (need 6); coverage/spill per seed [{}]", detail.join(", ")))
}

fn tuning_reproduction() -> Outcome {
    let mut d_hits = 0;
    let mut mu_hits = 0;
    let mut picks = Vec::new();
    for seed in 0..10 {
        let (data, _) = simulate_dataset::<f64>(&SimSpec::new(SimModel::M1, seed)).map_err(|e| e.to_string())?;
        let grid = TuneGrid { seed, ..TuneGrid::for_slices(10) };
        let res = joint_tune(&data, 10, &grid).map_err(|e| e.to_string())?;
        picks.push(format!("({}, {})", res.mu2_star, res.d_star));
        if res.d_star == 1 {
            d_hits += 1;
        }
        if [0.1, 1.0, 10.0].iter().any(|&m| (res.mu2_star - m).abs() <= 1e-12 * m) {
            mu_hits += 1;
        }
    }
    check(
        d_hits >= 7 && mu_hits >= 6,
        format!("d* = 1 in {d_hits}/10 (need 7), mu2* within one step of 1 in {mu_hits}/10 (need 6); (mu2*, d*) per seed {}", picks.join(" ")),
    )
}

fn merge_rules() -> Outcome {
    let grid = Array1::from_shape_fn(12, |j| j as f64);
    let part = IntervalPartition::from_ranges(vec![(0, 3), (4, 4), (5, 8), (9, 11)], &grid).map_err(|e| e.to_string())?;
    let run = |d1: &[usize], d2: &[usize]| merge_step(&part, d1, d2, &grid).map(|p| p.ranges).map_err(|e| e.to_string());
    let cases: [(&str, Vec<(usize, usize)>, Vec<(usize, usize)>); 4] = [
        ("neighbor, non-zeros", run(&[0, 1], &[3])?, vec![(0, 4), (5, 8), (9, 11)]),
        ("neighbor, zeros", run(&[0], &[2, 3])?, vec![(0, 3), (4, 4), (5, 11)]),
        ("squeeze, non-zeros", run(&[0, 2], &[])?, vec![(0, 8), (9, 11)]),
        ("squeeze, zeros", run(&[], &[0, 2])?, vec![(0, 8), (9, 11)]),
    ];
    for (name, got, want) in &cases {
        if got != want {
            return Err(format!("{name}: got {got:?}, expected {want:?}"));
        }
    }
    if run(&[0, 2], &[1])? != part.ranges {
        return Err("squeeze fired across a strong zero".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..200 {
        let p = rng.random_range(1..=40);
        let grid = Array1::from_shape_fn(p, |j| j as f64 / p as f64);
        let mut cuts: Vec<usize> = (1..p).filter(|_| rng.random_bool(0.6)).collect();
        cuts.push(p);
        let mut start = 0;
        let ranges: Vec<(usize, usize)> = cuts
            .iter()
            .map(|&c| {
                let r = (start, c - 1);
                start = c;
                r
            })
            .collect();
        let part = IntervalPartition::from_ranges(ranges, &grid).map_err(|e| e.to_string())?;
        let (mut d1, mut d2) = (Vec::new(), Vec::new());
        for k in 0..part.len() {
            match rng.random_range(0..3) {
                0 => d1.push(k),
                1 => d2.push(k),
                _ => {}
            }
        }
        let merged = merge_step(&part, &d1, &d2, &grid).map_err(|e| e.to_string())?;
        if !merged.is_valid_cover(p) || merged.len() > part.len() {
            return Err(format!("fuzz case {trial} broke the partition: {:?}", merged.ranges));
        }
    }
    Ok("4 configurations exact, 200 fuzzed inputs valid".into())
}

fn moments_suite() -> Outcome {
    let slices = make_slices(Array1::from_shape_fn(10, |i| (i + 1) as f64).view(), 2).map_err(|e| e.to_string())?;
    if slices.slice_of != [0, 0, 0, 0, 0, 1, 1, 1, 1, 1] || slices.counts != [5, 5] {
        return Err("equal split of 1..10".into());
    }
    let slices = make_slices(Array1::from_elem(10, 2.0).view(), 2).map_err(|e| e.to_string())?;
    if slices.slice_of != [0, 0, 0, 0, 0, 1, 1, 1, 1, 1] {
        return Err("ties not kept in index order".into());
    }
    let slices = make_slices(ndarray::array![3.0, 1.0, 2.0].view(), 3).map_err(|e| e.to_string())?;
    if slices.slice_of != [2, 0, 1] || slices.counts != [1, 1, 1] {
        return Err("one point per slice".into());
    }
    let data = Dataset::new(
        ndarray::array![[0.0], [0.0], [1.0], [1.0]],
        ndarray::array![1.0, 2.0, 3.0, 4.0],
        ndarray::array![0.0],
    )
    .map_err(|e| e.to_string())?;
    let m = compute_moments(&data, &make_slices(data.y.view(), 2).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    if m.grand_mean[0] != 0.5 || m.slice_means.column(0).to_vec() != [0.0, 1.0] || m.sigma_hat[[0, 0]] != 0.25 || m.gamma_hat[[0, 0]] != 0.25 {
        return Err("hand-computed moments differ".into());
    }
    let flat = Dataset::new(Array2::from_elem((6, 3), 1.5), Array1::from_shape_fn(6, |i| i as f64), Array1::from_shape_fn(3, |j| j as f64))
        .map_err(|e| e.to_string())?;
    let m = compute_moments(&flat, &make_slices(flat.y.view(), 3).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    if m.sigma_hat.iter().chain(m.gamma_hat.iter()).any(|&v| v != 0.0) {
        return Err("identical rows should give zero moments".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let one = SliceAssignment::from_labels(Array1::from_shape_fn(5, |i| i as f64).view(), vec![0; 5], 1).map_err(|e| e.to_string())?;
    let data = Dataset::new(random_matrix(5, 2, &mut rng), Array1::from_shape_fn(5, |i| i as f64), ndarray::array![0.0, 1.0])
        .map_err(|e| e.to_string())?;
    let m = compute_moments(&data, &one).map_err(|e| e.to_string())?;
    if m.gamma_hat.iter().any(|&v| v != 0.0) {
        return Err("a single slice should give zero between-slice covariance".into());
    }
    let mut lowest = f64::INFINITY;
    for _ in 0..100 {
        let n = rng.random_range(4..60);
        let p = rng.random_range(1..25);
        let h = rng.random_range(2..=n.min(12));
        let data = Dataset::new(random_matrix(n, p, &mut rng), Array1::from_shape_fn(n, |_| rng.random::<f64>()), Array1::from_shape_fn(p, |j| j as f64))
            .map_err(|e| e.to_string())?;
        let m = compute_moments(&data, &make_slices(data.y.view(), h).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let gap = sym_eigen(&(&m.sigma_hat - &m.gamma_hat)).map_err(|e| e.to_string())?;
        lowest = lowest.min(gap.values[gap.values.len() - 1]);
    }
    check(lowest >= -1e-10, format!("examples exact; smallest eigenvalue of sigma - gamma {lowest:.2e}"))
}

fn cli_on_generic_csv() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (n, p) = (215, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let grid = Array1::from_shape_fn(p, |j| 850.0 + 2.0 * j as f64);
    let mut x = Array2::zeros((n, p));
    for mut row in x.rows_mut() {
        let coefs: Vec<f64> = (1..=6).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (j, v) in row.iter_mut().enumerate() {
            let t = j as f64 / (p - 1) as f64;
            *v = 3.0 + coefs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * t).sin() / (k + 1) as f64).sum::<f64>();
        }
    }
    let y = Array1::from_shape_fn(n, |i| x.slice(s![i, 30..50]).sum() / 20.0 + 0.05 * rng.random_range(-1.0..1.0));
    let data = Dataset::new(x, y, grid.clone()).map_err(|e| e.to_string())?;
    let csv = dir.path().join("data.csv");
    sisir::save_csv(&data, &csv).map_err(|e| e.to_string())?;

    let bin = env!("CARGO_BIN_EXE_sisir");
    let run = |args: &[&str]| -> Result<String, String> {
        let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} exited with {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    };
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    run(&["fit", "--data", &path("data.csv"), "--h", "10", "--mu2", "1", "--d", "1", "--out", &path("fit.json"), "--selected", &path("model.json")])?;
    let table = run(&["report", "--model", &path("model.json")])?;
    let rows: Vec<Vec<f64>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).take(2).map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    let tiles = !rows.is_empty()
        && rows[0][0] == grid[0]
        && rows[rows.len() - 1][1] == grid[p - 1]
        && rows.windows(2).all(|w| w[0][1] == w[1][0] && w[0][0] < w[0][1]);
    let selected = table.lines().filter(|l| l.ends_with(",true")).count();
    check(tiles, format!("{} intervals tile [{}, {}], {selected} selected", rows.len(), grid[0], grid[p - 1]))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("projector identity", projector_identity, Duration::from_secs(1)),
        ("lasso oracle equivalence", lasso_oracle_equivalence, Duration::from_secs(10)),
        ("KKT suite", kkt_suite, Duration::from_secs(5)),
        ("ridge-classical consistency", ridge_classical_consistency, Duration::from_secs(5)),
        ("M1 recovery", m1_recovery, Duration::from_secs(300)),
        ("M2 recovery", m2_recovery, Duration::from_secs(600)),
        ("tuning reproduction", tuning_reproduction, Duration::from_secs(1200)),
        ("merge rules", merge_rules, Duration::from_secs(1)),
        ("moments and degenerate inputs", moments_suite, Duration::from_secs(5)),
        ("CLI on a 215x100 CSV", cli_on_generic_csv, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<30} {}  ({:.2?} of {:?}) {detail}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            elapsed,
            limit
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
