use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sisir::io::{
    format_table, load_collection, load_csv, load_model, save_collection, save_csv, save_model, write_atomic,
    CollectionFile, Provenance,
};
use sisir::moments::{compute_moments, make_slices};
use sisir::ridge_sir::{edr_scores, RidgeSolver};
use sisir::simulate::{simulate_dataset, SimModel, SimSpec};
use sisir::tuning::{joint_tune, TuneGrid};
use sisir::{CvDirections, FusionConfig, Result, SisirError};

#[derive(Parser, Debug)]
#[command(name = "sisir", version, about = "Interval-sparse sliced inverse regression")]
struct Cli {
    /// TOML file with defaults for any command; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    show_config: bool,

    /// Worker threads (also read from SISIR_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from one of the simulated models.
    Simulate(SimulateArgs),
    /// Choose the ridge parameter and the dimension by cross-validation.
    Tune(TuneArgs),
    /// Run the interval fusion loop and write every visited model.
    Fit(FitArgs),
    /// Extract one model from a fit collection.
    Select(SelectArgs),
    /// Project curves onto the sparse directions of a model.
    Project(ProjectArgs),
    /// Print the interval table of a model.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: Option<SimModel>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    length_scale: Option<f64>,
    #[arg(long)]
    signal_var: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Also write the true directions as a CSV table.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    d0: Option<usize>,
    /// Comma-separated grid of ridge parameters.
    #[arg(long, value_delimiter = ',')]
    mu2: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    /// Collection of every model visited.
    #[arg(long)]
    out: PathBuf,
    /// Also write the CV-selected model.
    #[arg(long)]
    selected: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    eps_ratio: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long, value_enum)]
    cv_directions: Option<CvDirectionsArg>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum CvDirectionsArg {
    Refit,
    Fixed,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    collection: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Record to extract instead of the CV-selected one.
    #[arg(long)]
    index: Option<usize>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Write the table here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    seed: u64,
    simulate: SimulateConfig,
    tune: TuneConfig,
    fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    model: SimModel,
    n: usize,
    /// 0 selects the model's own grid size.
    p: usize,
    length_scale: f64,
    signal_var: f64,
    noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TuneConfig {
    h: usize,
    folds: usize,
    /// 0 selects min(H - 1, 10).
    d0: usize,
    mu2: Vec<f64>,
    epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitConfig {
    h: usize,
    mu2: f64,
    d: usize,
    fusion: FusionConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config { seed: 0, simulate: SimulateConfig::default(), tune: TuneConfig::default(), fit: FitConfig::default() }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let spec = SimSpec::new(SimModel::M1, 0);
        SimulateConfig {
            model: spec.model,
            n: spec.n,
            p: 0,
            length_scale: spec.length_scale,
            signal_var: spec.signal_var,
            noise_sd: spec.noise_sd,
        }
    }
}

impl Default for TuneConfig {
    fn default() -> Self {
        let grid = TuneGrid::for_slices(10);
        TuneConfig { h: 10, folds: grid.folds, d0: 0, mu2: grid.mu2_values, epsilon: grid.epsilon }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { h: 10, mu2: 1.0, d: 1, fusion: FusionConfig::default() }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| SisirError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| SisirError::InvalidArgument(format!("{}: {e}", path.display())))
    }

    fn apply(&mut self, command: &Command) {
        match command {
            Command::Simulate(a) => {
                set(&mut self.seed, a.seed);
                let s = &mut self.simulate;
                set(&mut s.model, a.model);
                set(&mut s.n, a.n);
                set(&mut s.p, a.p);
                set(&mut s.length_scale, a.length_scale);
                set(&mut s.signal_var, a.signal_var);
                set(&mut s.noise_sd, a.noise_sd);
            }
            Command::Tune(a) => {
                set(&mut self.seed, a.seed);
                let t = &mut self.tune;
                set(&mut t.h, a.h);
                set(&mut t.folds, a.folds);
                set(&mut t.d0, a.d0);
                set(&mut t.mu2, a.mu2.clone());
                set(&mut t.epsilon, a.epsilon);
            }
            Command::Fit(a) => {
                set(&mut self.seed, a.seed);
                let f = &mut self.fit;
                set(&mut f.h, a.h);
                set(&mut f.mu2, a.mu2);
                set(&mut f.d, a.d);
                set(&mut f.fusion.p0, a.p0);
                set(&mut f.fusion.grid_size, a.grid_size);
                set(&mut f.fusion.eps_ratio, a.eps_ratio);
                set(&mut f.fusion.cv_folds, a.folds);
                if a.max_iterations.is_some() {
                    f.fusion.max_iterations = a.max_iterations;
                }
                set(
                    &mut f.fusion.cv_directions,
                    a.cv_directions.map(|c| match c {
                        CvDirectionsArg::Refit => CvDirections::Refit,
                        CvDirectionsArg::Fixed => CvDirections::Fixed,
                    }),
                );
            }
            Command::Select(_) | Command::Project(_) | Command::Report(_) => {}
        }
        self.fit.fusion.seed = self.seed;
    }

    fn sim_spec(&self) -> SimSpec {
        let s = &self.simulate;
        SimSpec {
            model: s.model,
            n: s.n,
            p: if s.p == 0 { s.model.default_p() } else { s.p },
            length_scale: s.length_scale,
            signal_var: s.signal_var,
            noise_sd: s.noise_sd,
            seed: self.seed,
        }
    }

    fn tune_grid(&self) -> TuneGrid {
        let t = &self.tune;
        let mut grid = TuneGrid::for_slices(t.h);
        grid.mu2_values = t.mu2.clone();
        grid.folds = t.folds;
        grid.epsilon = t.epsilon;
        grid.seed = self.seed;
        if t.d0 != 0 {
            grid.d0 = t.d0;
        }
        grid
    }
}

fn stem_with(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| SisirError::InvalidArgument(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn simulate(config: &Config, args: &SimulateArgs) -> Result<()> {
    let spec = config.sim_spec();
    let (data, truth) = simulate_dataset::<f64>(&spec)?;
    save_csv(&data, &args.out)?;
    if let Some(path) = &args.truth {
        let k = truth.directions.ncols();
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|j| format!("a{j}")));
        let rows: Vec<Vec<f64>> = data
            .grid
            .iter()
            .enumerate()
            .map(|(i, &t)| std::iter::once(t).chain(truth.directions.row(i).iter().copied()).collect())
            .collect();
        write_text(path, &format_table(&header, &rows))?;
    }
    log::info!("wrote {} curves on {} grid points to {}", data.n(), data.p(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TuneOutput<'a> {
    mu2_values: &'a [f64],
    d0: usize,
    cv_err: Vec<Vec<f64>>,
    r_hat: Vec<Vec<f64>>,
    mu2_star: f64,
    d_star: usize,
    trace: &'a [(f64, usize)],
    stabilized: bool,
    warnings: &'a [String],
    provenance: Provenance,
}

fn grid_table(values: &[f64], table: &ndarray::Array2<f64>) -> String {
    let mut header = vec!["mu2".to_string()];
    header.extend((1..=table.ncols()).map(|d| format!("d{d}")));
    let rows: Vec<Vec<f64>> = values
        .iter()
        .zip(table.outer_iter())
        .map(|(&m, row)| std::iter::once(m).chain(row.iter().copied()).collect())
        .collect();
    format_table(&header, &rows)
}

fn tune(config: &Config, args: &TuneArgs) -> Result<()> {
    let data = load_csv::<f64>(&args.data)?;
    let grid = config.tune_grid();
    let result = joint_tune(&data, config.tune.h, &grid)?;
    let rows = |t: &ndarray::Array2<f64>| t.outer_iter().map(|r| r.to_vec()).collect();
    let out = TuneOutput {
        mu2_values: &grid.mu2_values,
        d0: grid.d0,
        cv_err: rows(&result.cv_err),
        r_hat: rows(&result.r_hat),
        mu2_star: result.mu2_star,
        d_star: result.d_star,
        trace: &result.trace,
        stabilized: result.stabilized,
        warnings: &result.warnings,
        provenance: Provenance::new(config.seed, &("tune", &config.tune))?,
    };
    write_text(&args.out, &json(&out)?)?;
    write_text(&stem_with(&args.out, "_cv_err.csv"), &grid_table(&grid.mu2_values, &result.cv_err))?;
    write_text(&stem_with(&args.out, "_r_hat.csv"), &grid_table(&grid.mu2_values, &result.r_hat))?;
    println!("mu2* = {}", result.mu2_star);
    println!("d* = {}", result.d_star);
    if !result.stabilized {
        println!("warning: did not stabilize");
    }
    Ok(())
}

fn fit(config: &Config, args: &FitArgs) -> Result<()> {
    let data = load_csv::<f64>(&args.data)?;
    let f = &config.fit;
    let slices = make_slices(data.y.view(), f.h)?;
    let ridge = RidgeSolver::new(Arc::new(compute_moments(&data, &slices)?))?.fit(f.mu2, f.d)?;
    let collection = sisir::run_fusion(&data, &ridge, &f.fusion)?;
    let provenance = Provenance::new(config.seed, &("fit", f))?;
    let file = CollectionFile::new(&collection, &ridge, &data.grid, provenance)?;
    save_collection(&file, &args.out)?;

    let header: Vec<String> =
        ["iteration", "intervals", "mu1", "cv_error", "proportion", "selected"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<f64>> = collection
        .records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            vec![
                r.iteration as f64,
                r.intervals() as f64,
                r.mu1_star,
                r.cv_error,
                r.proportion.unwrap_or(f64::NAN),
                if k == collection.selected { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    write_text(&stem_with(&args.out, "_trace.csv"), &format_table(&header, &rows))?;

    if let Some(path) = &args.selected {
        save_model(&file.model(None)?, path)?;
    }
    let sel = collection.selected_record();
    println!("models: {}", collection.records.len());
    println!("selected: {} intervals, cv error {}", sel.intervals(), sel.cv_error);
    Ok(())
}

fn select(args: &SelectArgs) -> Result<()> {
    let collection = load_collection(&args.collection)?;
    let model = collection.model(args.index)?;
    save_model(&model, &args.out)?;
    println!("selected: {} intervals", model.partition.len());
    Ok(())
}

fn project(args: &ProjectArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let data = load_csv::<f64>(&args.data)?;
    let same_grid = data.grid.len() == model.grid.len()
        && data.grid.iter().zip(&model.grid).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    if !same_grid {
        return Err(SisirError::InvalidData("dataset grid differs from the model grid".into()));
    }
    let a = model.a_sparse_matrix::<f64>();
    let scores = edr_scores(&data.x.view(), &a.view())?;
    let header: Vec<String> = (1..=scores.ncols()).map(|j| format!("score{j}")).collect();
    let rows: Vec<Vec<f64>> = scores.outer_iter().map(|r| r.to_vec()).collect();
    write_text(&args.out, &format_table(&header, &rows))
}

/// Interval boundaries sit halfway between neighbouring grid points, so the
/// rows tile `[t_1, t_p]`.
fn report_table(model: &sisir::ModelFile) -> String {
    let g = &model.grid;
    let mut out = String::from("interval,t_lo,t_hi,first,last,alpha,selected\n");
    for (k, &(lo, hi)) in model.partition.iter().enumerate() {
        let t_lo = if lo == 0 { g[0] } else { 0.5 * (g[lo - 1] + g[lo]) };
        let t_hi = if hi + 1 == g.len() { g[hi] } else { 0.5 * (g[hi] + g[hi + 1]) };
        let alpha = model.alpha_star[k];
        out.push_str(&format!("{k},{t_lo},{t_hi},{lo},{hi},{alpha},{}\n", alpha != 0.0));
    }
    out
}

fn report(args: &ReportArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let table = report_table(&model);
    print!("{table}");
    if let Some(path) = &args.out {
        write_text(path, &table)?;
    }
    Ok(())
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let from_env = std::env::var("SISIR_THREADS").ok().filter(|s| !s.trim().is_empty());
    let threads = match (flag, from_env) {
        (Some(n), _) => n,
        (None, Some(s)) => s
            .trim()
            .parse()
            .map_err(|_| SisirError::InvalidArgument(format!("SISIR_THREADS must be a positive integer, got '{s}'")))?,
        (None, None) => return Ok(()),
    };
    if threads == 0 {
        return Err(SisirError::InvalidArgument("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| SisirError::InvalidArgument(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(command) = &cli.command {
        config.apply(command);
    }
    if cli.show_config {
        let text = toml::to_string(&config).map_err(|e| SisirError::InvalidArgument(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }
    match cli.command.as_ref().expect("checked in main") {
        Command::Simulate(a) => simulate(&config, a),
        Command::Tune(a) => tune(&config, a),
        Command::Fit(a) => fit(&config, a),
        Command::Select(a) => select(a),
        Command::Project(a) => project(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.command.is_none() && !cli.show_config {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.category(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
