//! Dataset CSV files, model files, and plot-ready tables.
//!
//! A dataset CSV has a header row whose first cell names the response and
//! whose remaining cells are the grid points `t_1 < … < t_p`; each data row
//! holds `y` followed by the `p` curve values. Model files are pretty JSON
//! carrying a `format_version`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SisirError};
use crate::fusion::{ModelCollection, ModelRecord};
use crate::moments::Dataset;
use crate::ridge_sir::RidgeFit;
use crate::scalar::Scalar;
use crate::sparse::{sparse_directions, IntervalPartition};

pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| SisirError::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp: PathBuf = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| SisirError::Io(format!("{}: {e}", path.display())))
}

fn parse_cell<F: Scalar>(cell: &str, line: usize, column: usize) -> Result<F> {
    let v: f64 = cell.trim().parse().map_err(|_| SisirError::Parse {
        line,
        column,
        message: format!("'{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(SisirError::Parse { line, column, message: format!("'{cell}' is not finite") });
    }
    Ok(F::lit(v))
}

pub fn parse_csv<F: Scalar>(reader: impl std::io::Read) -> Result<Dataset<F>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(SisirError::Parse { line: 1, column: 1, message: "missing header row".into() }),
    };
    if header.len() < 2 {
        return Err(SisirError::Parse { line: 1, column: header.len().max(1), message: "header needs a response and at least one grid point".into() });
    }
    let width = header.len();
    let mut grid = Vec::with_capacity(width - 1);
    for (j, cell) in header.iter().enumerate().skip(1) {
        let t: F = parse_cell(cell, 1, j + 1)?;
        if let Some(&prev) = grid.last() {
            if !(t > prev) {
                return Err(SisirError::Parse { line: 1, column: j + 1, message: format!("grid is not increasing at {cell}") });
            }
        }
        grid.push(t);
    }
    let mut y = Vec::new();
    let mut values = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(SisirError::Parse {
                line,
                column: record.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v = parse_cell(cell, line, j + 1)?;
            if j == 0 {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, width - 1), values).expect("rows checked for width");
    Dataset::new(x, Array1::from(y), Array1::from(grid))
}

fn csv_error(e: csv::Error) -> SisirError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    SisirError::Parse { line, column: 0, message: e.to_string() }
}

pub fn load_csv<F: Scalar>(path: &Path) -> Result<Dataset<F>> {
    let file = fs::File::open(path).map_err(|e| SisirError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(std::io::BufReader::new(file))
}

pub fn format_csv<F: Scalar>(data: &Dataset<F>) -> String {
    let mut out = String::from("y");
    for t in data.grid.iter() {
        out.push_str(&format!(",{t}"));
    }
    out.push('\n');
    for (i, row) in data.x.outer_iter().enumerate() {
        out.push_str(&data.y[i].to_string());
        for v in row.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn save_csv<F: Scalar>(data: &Dataset<F>, path: &Path) -> Result<()> {
    write_atomic(path, format_csv(data).as_bytes())
}

/// A numeric table with a header row, for plotting.
pub fn format_table<F: Scalar>(header: &[String], rows: &[Vec<F>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the canonical JSON of the run configuration.
    pub config_hash: String,
}

impl Provenance {
    pub fn new<C: Serialize>(seed: u64, config: &C) -> Result<Self> {
        Ok(Provenance { seed, config_hash: config_hash(config)? })
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let json = serde_json::to_vec(config).map_err(|e| SisirError::InvalidArgument(e.to_string()))?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPoint {
    pub intervals: usize,
    pub cv_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub grid: Vec<f64>,
    /// Inclusive grid-index ranges.
    pub partition: Vec<(usize, usize)>,
    pub alpha_star: Vec<f64>,
    pub mu1_star: f64,
    pub mu2: f64,
    pub d: usize,
    /// `p` rows of the sparse directions; may hold fewer than `d` columns.
    pub a_sparse: Vec<Vec<f64>>,
    pub cv_trace: Vec<CvPoint>,
    pub provenance: Provenance,
}

fn to_f64s<F: Scalar>(v: impl IntoIterator<Item = F>) -> Vec<f64> {
    v.into_iter().map(|x| x.as_f64()).collect()
}

fn matrix_rows<F: Scalar>(m: &Array2<F>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| to_f64s(r.iter().copied())).collect()
}

fn cv_trace<F: Scalar>(records: &[ModelRecord<F>]) -> Vec<CvPoint> {
    records.iter().map(|r| CvPoint { intervals: r.intervals(), cv_error: r.cv_error.as_f64() }).collect()
}

impl ModelFile {
    pub fn from_record<F: Scalar>(
        record: &ModelRecord<F>,
        fit: &RidgeFit<F>,
        grid: &Array1<F>,
        trace: Vec<CvPoint>,
        provenance: Provenance,
    ) -> Result<Self> {
        let dirs = sparse_directions(fit, record.alpha_star.view(), &record.partition, fit.mu2)?;
        Ok(ModelFile {
            format_version: FORMAT_VERSION,
            grid: to_f64s(grid.iter().copied()),
            partition: record.partition.ranges.clone(),
            alpha_star: to_f64s(record.alpha_star.iter().copied()),
            mu1_star: record.mu1_star.as_f64(),
            mu2: fit.mu2.as_f64(),
            d: fit.d,
            a_sparse: matrix_rows(&dirs.a_sparse),
            cv_trace: trace,
            provenance,
        })
    }

    pub fn p(&self) -> usize {
        self.grid.len()
    }

    /// Columns actually stored in `a_sparse`.
    pub fn directions(&self) -> usize {
        self.a_sparse.first().map_or(0, Vec::len)
    }

    pub fn a_sparse_matrix<F: Scalar>(&self) -> Array2<F> {
        let (p, k) = (self.p(), self.directions());
        Array2::from_shape_fn((p, k), |(i, j)| F::lit(self.a_sparse[i][j]))
    }

    pub fn partition<F: Scalar>(&self) -> Result<IntervalPartition<F>> {
        let grid = Array1::from_iter(self.grid.iter().map(|&t| F::lit(t)));
        IntervalPartition::from_ranges(self.partition.clone(), &grid)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SisirError::ModelFile(m));
        if self.grid.is_empty() || self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("grid must be nonempty and increasing".into());
        }
        if self.partition::<f64>().is_err() {
            return bad("partition does not tile the grid".into());
        }
        if self.alpha_star.len() != self.partition.len() {
            return bad(format!("{} coefficients for {} intervals", self.alpha_star.len(), self.partition.len()));
        }
        if self.a_sparse.len() != self.p() {
            return bad(format!("a_sparse has {} rows for {} grid points", self.a_sparse.len(), self.p()));
        }
        let k = self.directions();
        if k > self.d || self.a_sparse.iter().any(|r| r.len() != k) {
            return bad(format!("a_sparse rows must all hold the same number (at most d = {}) of columns", self.d));
        }
        let numbers = self.alpha_star.iter().chain(self.a_sparse.iter().flatten()).chain([&self.mu1_star, &self.mu2]);
        if numbers.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| SisirError::ModelFile(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ModelFile = parse_versioned(text)?;
        model.validate()?;
        Ok(model)
    }
}

/// Checks `format_version` before the schema so that newer files fail
/// with a version error rather than a schema error.
fn parse_versioned<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| SisirError::ModelFile(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| SisirError::ModelFile("missing format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        let found = u32::try_from(version).unwrap_or(u32::MAX);
        return Err(SisirError::UnsupportedVersion { found, expected: FORMAT_VERSION });
    }
    serde_json::from_value(value).map_err(|e| SisirError::ModelFile(e.to_string()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| SisirError::Io(format!("{}: {e}", path.display())))
}

pub fn save_model(model: &ModelFile, path: &Path) -> Result<()> {
    model.validate()?;
    write_atomic(path, model.to_json()?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::from_json(&read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub iteration: usize,
    pub partition: Vec<(usize, usize)>,
    pub alpha_star: Vec<f64>,
    pub mu1_star: f64,
    pub cv_error: f64,
    pub proportion: Option<f64>,
    pub a_sparse: Vec<Vec<f64>>,
}

/// Every model visited by the fusion loop, with enough to rebuild any of
/// them as a [`ModelFile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionFile {
    pub format_version: u32,
    pub grid: Vec<f64>,
    pub mu2: f64,
    pub d: usize,
    pub records: Vec<RecordEntry>,
    pub selected: usize,
    pub hit_max_iterations: bool,
    pub stalled: bool,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

impl CollectionFile {
    pub fn new<F: Scalar>(
        collection: &ModelCollection<F>,
        fit: &RidgeFit<F>,
        grid: &Array1<F>,
        provenance: Provenance,
    ) -> Result<Self> {
        let records = collection
            .records
            .iter()
            .map(|r| {
                let dirs = sparse_directions(fit, r.alpha_star.view(), &r.partition, fit.mu2)?;
                Ok(RecordEntry {
                    iteration: r.iteration,
                    partition: r.partition.ranges.clone(),
                    alpha_star: to_f64s(r.alpha_star.iter().copied()),
                    mu1_star: r.mu1_star.as_f64(),
                    cv_error: r.cv_error.as_f64(),
                    proportion: r.proportion,
                    a_sparse: matrix_rows(&dirs.a_sparse),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CollectionFile {
            format_version: FORMAT_VERSION,
            grid: to_f64s(grid.iter().copied()),
            mu2: fit.mu2.as_f64(),
            d: fit.d,
            records,
            selected: collection.selected,
            hit_max_iterations: collection.hit_max_iterations,
            stalled: collection.stalled,
            warnings: collection.warnings.clone(),
            provenance,
        })
    }

    /// The model at `index`, or the CV-selected one.
    pub fn model(&self, index: Option<usize>) -> Result<ModelFile> {
        let k = index.unwrap_or(self.selected);
        let r = self
            .records
            .get(k)
            .ok_or_else(|| SisirError::InvalidArgument(format!("collection has {} models, no index {k}", self.records.len())))?;
        let model = ModelFile {
            format_version: FORMAT_VERSION,
            grid: self.grid.clone(),
            partition: r.partition.clone(),
            alpha_star: r.alpha_star.clone(),
            mu1_star: r.mu1_star,
            mu2: self.mu2,
            d: self.d,
            a_sparse: r.a_sparse.clone(),
            cv_trace: self.records.iter().map(|r| CvPoint { intervals: r.partition.len(), cv_error: r.cv_error }).collect(),
            provenance: self.provenance.clone(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() || self.selected >= self.records.len() {
            return Err(SisirError::ModelFile("collection has no selectable model".into()));
        }
        (0..self.records.len()).try_for_each(|k| self.model(Some(k)).map(|_| ()))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| SisirError::ModelFile(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CollectionFile = parse_versioned(text)?;
        c.validate()?;
        Ok(c)
    }
}

/// Model file for the CV-selected record of a collection.
pub fn selected_model<F: Scalar>(
    collection: &ModelCollection<F>,
    fit: &RidgeFit<F>,
    grid: &Array1<F>,
    provenance: Provenance,
) -> Result<ModelFile> {
    ModelFile::from_record(collection.selected_record(), fit, grid, cv_trace(&collection.records), provenance)
}

pub fn save_collection(c: &CollectionFile, path: &Path) -> Result<()> {
    write_atomic(path, c.to_json()?.as_bytes())
}

pub fn load_collection(path: &Path) -> Result<CollectionFile> {
    CollectionFile::from_json(&read_text(path)?)
}
