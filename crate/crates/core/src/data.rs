//! Tabular data handling: metadata, CSV ingestion, min-max scaling, splits,
//! teacher partitioning, and audit dataset construction.
//!
//! The engine's data contract is numerical and binary columns only. Binary
//! columns always use the fixed domain {0, 1}; numerical columns carry
//! per-column bounds that are either declared public or extracted
//! empirically. Empirical extraction is not private — callers get an
//! explicit machine-readable marker in the metadata rather than a silent
//! default.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Column type: continuous in [lower, upper], or binary {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numerical,
    Binary,
}

/// Where the numeric bounds came from. Empirical bounds leak information
/// about the data and are flagged, never assumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsProvenance {
    Public,
    Empirical,
}

/// One column: name, kind, and scaling bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub lower: f64,
    pub upper: f64,
}

impl ColumnSpec {
    pub fn numerical(name: &str, lower: f64, upper: f64) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numerical,
            lower,
            upper,
        }
    }

    pub fn binary(name: &str) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Binary,
            lower: 0.0,
            upper: 1.0,
        }
    }
}

/// Schema for a dataset: ordered columns plus the label column index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub columns: Vec<ColumnSpec>,
    pub label_index: usize,
    pub bounds_provenance: BoundsProvenance,
}

impl Metadata {
    pub fn new(
        columns: Vec<ColumnSpec>,
        label_index: usize,
        bounds_provenance: BoundsProvenance,
    ) -> Result<Self> {
        let meta = Metadata {
            columns,
            label_index,
            bounds_provenance,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() < 2 {
            return Err(Error::Metadata("need at least two columns".into()));
        }
        let mut names = HashSet::new();
        for col in &self.columns {
            if !names.insert(col.name.as_str()) {
                return Err(Error::Metadata(format!("duplicate column name {:?}", col.name)));
            }
            match col.kind {
                ColumnKind::Numerical => {
                    if !(col.lower < col.upper) {
                        return Err(Error::Metadata(format!(
                            "column {:?}: lower {} must be < upper {}",
                            col.name, col.lower, col.upper
                        )));
                    }
                }
                ColumnKind::Binary => {
                    if col.lower != 0.0 || col.upper != 1.0 {
                        return Err(Error::Metadata(format!(
                            "binary column {:?} must have bounds [0, 1]",
                            col.name
                        )));
                    }
                }
            }
        }
        if self.label_index >= self.columns.len() {
            return Err(Error::Metadata("label index out of range".into()));
        }
        if self.columns[self.label_index].kind != ColumnKind::Binary {
            return Err(Error::Metadata("label column must be binary".into()));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let meta: Metadata = serde_json::from_str(text)?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }

    /// Recompute numerical bounds from observed data. Not private: the
    /// returned metadata is marked [`BoundsProvenance::Empirical`].
    pub fn with_empirical_bounds(&self, ds: &Dataset) -> Result<Metadata> {
        let mut columns = self.columns.clone();
        for (c, col) in columns.iter_mut().enumerate() {
            if col.kind != ColumnKind::Numerical {
                continue;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for r in 0..ds.len() {
                let v = ds.rows[r][c];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !(lo < hi) {
                // constant column: widen so the scale map stays invertible
                hi = lo + 1.0;
            }
            col.lower = lo;
            col.upper = hi;
        }
        log::warn!("bounds extracted empirically from data; this is not a private operation");
        Metadata::new(columns, self.label_index, BoundsProvenance::Empirical)
    }
}

/// A table of rows conforming to a [`Metadata`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub meta: Arc<Metadata>,
}

/// Which way [`scale_minmax`] maps values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleDirection {
    Forward,
    Inverse,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, meta: Arc<Metadata>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("dataset needs at least one row".into()));
        }
        let d = meta.width();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Data(format!(
                    "row {} has width {}, metadata expects {}",
                    i,
                    row.len(),
                    d
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Data(format!("non-finite value in row {i}, column {c}")));
                }
                if meta.columns[c].kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::Data(format!(
                        "binary domain violation in row {i}, column {:?}: {v}",
                        meta.columns[c].name
                    )));
                }
            }
        }
        Ok(Dataset { rows, meta })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.meta.width()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    /// Sub-dataset of the given row indices (cloned rows).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            meta: Arc::clone(&self.meta),
        }
    }

    /// Dataset with one row removed; errors if it would become empty.
    pub fn without_row(&self, index: usize) -> Result<Dataset> {
        if index >= self.len() {
            return Err(Error::Data(format!("row index {index} out of range")));
        }
        if self.len() == 1 {
            return Err(Error::Data("cannot remove the only row".into()));
        }
        let rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, r)| r.clone())
            .collect();
        Ok(Dataset {
            rows,
            meta: Arc::clone(&self.meta),
        })
    }

    /// Per-column mean over all rows.
    pub fn mean_row(&self) -> Vec<f64> {
        let d = self.width();
        let mut mean = vec![0.0; d];
        for row in &self.rows {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Write rows as CSV with the metadata header.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.meta.columns.iter().map(|c| c.name.as_str()))
            .map_err(|e| Error::Csv(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_cell(*v)))
                .map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_cell(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        // shortest round-trip representation
        format!("{v}")
    }
}

/// Parse a CSV file against the given metadata.
///
/// The dialect is strict: comma separated, one header row that must match the
/// metadata column names in order, "." decimal points, no quoting.
pub fn load_csv(path: &Path, meta: &Arc<Metadata>) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::Data(format!("missing file: {}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let expected: Vec<&str> = meta.columns.iter().map(|c| c.name.as_str()).collect();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Csv(format!(
            "header mismatch: expected {expected:?}, got {got:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() != meta.width() {
            return Err(Error::Csv(format!(
                "row {} has {} cells, expected {}",
                i,
                record.len(),
                meta.width()
            )));
        }
        let mut row = Vec::with_capacity(meta.width());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Csv(format!("non-numeric cell {:?} in row {}, column {}", cell, i, c))
            })?;
            if !v.is_finite() {
                return Err(Error::Csv(format!("non-finite cell in row {i}, column {c}")));
            }
            let col = &meta.columns[c];
            match col.kind {
                ColumnKind::Binary => {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::Data(format!(
                            "binary domain violation in row {i}, column {:?}: {v}",
                            col.name
                        )));
                    }
                }
                ColumnKind::Numerical => {
                    if meta.bounds_provenance == BoundsProvenance::Public
                        && (v < col.lower || v > col.upper)
                    {
                        return Err(Error::Data(format!(
                            "value {v} outside declared bounds [{}, {}] in row {i}, column {:?}",
                            col.lower, col.upper, col.name
                        )));
                    }
                }
            }
            row.push(v);
        }
        rows.push(row);
    }
    Dataset::new(rows, Arc::clone(meta))
}

/// Min-max scale (forward: x -> (x-lower)/(upper-lower)) or its exact
/// inverse. Binary columns pass through unchanged.
pub fn scale_minmax(ds: &Dataset, direction: ScaleDirection) -> Result<Dataset> {
    let rows = scale_rows(&ds.rows, &ds.meta, direction, true)?;
    Ok(Dataset {
        rows,
        meta: Arc::clone(&ds.meta),
    })
}

/// Same transform, but without the range precondition. Used when applying a
/// scaler fitted on one sample (training data) to another (test data), where
/// values may land slightly outside the fitted interval.
pub fn scale_minmax_unchecked(ds: &Dataset, direction: ScaleDirection) -> Dataset {
    let rows = scale_rows(&ds.rows, &ds.meta, direction, false).expect("unchecked scale");
    Dataset {
        rows,
        meta: Arc::clone(&ds.meta),
    }
}

fn scale_rows(
    rows: &[Vec<f64>],
    meta: &Metadata,
    direction: ScaleDirection,
    check_range: bool,
) -> Result<Vec<Vec<f64>>> {
    const TOL: f64 = 1e-9;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let mut new_row = Vec::with_capacity(row.len());
        for (c, &v) in row.iter().enumerate() {
            let col = &meta.columns[c];
            if col.kind == ColumnKind::Binary {
                new_row.push(v);
                continue;
            }
            let width = col.upper - col.lower;
            if width <= 0.0 {
                return Err(Error::Data(format!(
                    "zero-width bounds for column {:?}",
                    col.name
                )));
            }
            let scaled = match direction {
                ScaleDirection::Forward => {
                    if check_range && (v < col.lower - TOL || v > col.upper + TOL) {
                        return Err(Error::Data(format!(
                            "value {v} out of range [{}, {}] in row {i}, column {:?}",
                            col.lower, col.upper, col.name
                        )));
                    }
                    (v - col.lower) / width
                }
                ScaleDirection::Inverse => {
                    if check_range && !(-TOL..=1.0 + TOL).contains(&v) {
                        return Err(Error::Data(format!(
                            "value {v} outside [0, 1] in row {i}, column {:?}",
                            col.name
                        )));
                    }
                    v * width + col.lower
                }
            };
            new_row.push(scaled);
        }
        out.push(new_row);
    }
    Ok(out)
}

/// Shuffled disjoint train/test split; train gets floor(fraction * N) rows.
pub fn split_train_test(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} must be in (0, 1)"
        )));
    }
    if ds.len() < 2 {
        return Err(Error::Data("need at least two rows to split".into()));
    }
    let n_train = ((ds.len() as f64) * train_fraction).floor() as usize;
    if n_train == 0 || n_train == ds.len() {
        return Err(Error::Config(format!(
            "fraction {train_fraction} leaves an empty side for {} rows",
            ds.len()
        )));
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut rng = rng_from(seed, &[0x5b17]);
    indices.shuffle(&mut rng);
    let train = ds.select(&indices[..n_train]);
    let test = ds.select(&indices[n_train..]);
    Ok((train, test))
}

/// How teacher views of the data are constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// k pairwise-disjoint subsets covering the dataset (sizes differ by at
    /// most one; the first N mod k subsets get the extra record).
    Disjoint,
    /// Every teacher gets a reference to the final subset of the disjoint
    /// split; the rest of the data is never used.
    AllLast,
    /// No fixed view: each teacher draws its batch from the full dataset
    /// every iteration.
    ResampleAll,
}

/// Teacher views: fixed per-teacher index sets, or resampling from the full
/// row range each iteration.
#[derive(Debug, Clone)]
pub enum Partition {
    Fixed(Vec<Vec<usize>>),
    /// Sampler over the full dataset; holds (k, N).
    Resample { teachers: usize, n_rows: usize },
}

impl Partition {
    pub fn teachers(&self) -> usize {
        match self {
            Partition::Fixed(sets) => sets.len(),
            Partition::Resample { teachers, .. } => *teachers,
        }
    }

    /// Draw a batch of row indices for teacher `t`.
    pub fn sample_batch(&self, t: usize, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        match self {
            Partition::Fixed(sets) => {
                let set = &sets[t];
                (0..batch).map(|_| set[rng.gen_range(0..set.len())]).collect()
            }
            Partition::Resample { n_rows, .. } => {
                (0..batch).map(|_| rng.gen_range(0..*n_rows)).collect()
            }
        }
    }

    /// The full fixed view of teacher `t`, when one exists.
    pub fn fixed_view(&self, t: usize) -> Option<&[usize]> {
        match self {
            Partition::Fixed(sets) => Some(&sets[t]),
            Partition::Resample { .. } => None,
        }
    }
}

/// Split row indices into k teacher views according to `mode`.
pub fn partition_teachers(
    ds: &Dataset,
    k: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<Partition> {
    if k < 1 {
        return Err(Error::Config("need at least one teacher".into()));
    }
    if k > ds.len() {
        return Err(Error::Config(format!(
            "{k} teachers cannot partition {} rows",
            ds.len()
        )));
    }
    if mode == PartitionMode::ResampleAll {
        return Ok(Partition::Resample {
            teachers: k,
            n_rows: ds.len(),
        });
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut rng = rng_from(seed, &[0x9a27]);
    indices.shuffle(&mut rng);
    let n = ds.len();
    let base = n / k;
    let extra = n % k;
    let mut sets = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        sets.push(indices[start..start + size].to_vec());
        start += size;
    }
    match mode {
        PartitionMode::Disjoint => Ok(Partition::Fixed(sets)),
        PartitionMode::AllLast => {
            let last = sets.last().expect("k >= 1").clone();
            Ok(Partition::Fixed(vec![last; k]))
        }
        PartitionMode::ResampleAll => unreachable!(),
    }
}

/// Crafted audit dataset: `n_repeat` copies of the all-zero record over three
/// binary columns, plus the out-of-distribution target record (1, 1, 1).
pub fn build_worstcase(n_repeat: usize) -> Result<(Dataset, Vec<f64>)> {
    if n_repeat < 1 {
        return Err(Error::Config("need at least one repeated record".into()));
    }
    let meta = Arc::new(Metadata::new(
        vec![
            ColumnSpec::binary("a"),
            ColumnSpec::binary("b"),
            ColumnSpec::binary("y"),
        ],
        2,
        BoundsProvenance::Public,
    )?);
    let rows = vec![vec![0.0, 0.0, 0.0]; n_repeat];
    let ds = Dataset::new(rows, meta)?;
    Ok((ds, vec![1.0, 1.0, 1.0]))
}

/// Indices of the `n_candidates` records farthest (Euclidean distance on the
/// rows as given, i.e. after scaling) from the dataset mean, most distant
/// first. Ties break toward the lower row index.
pub fn outlier_candidates(ds: &Dataset, n_candidates: usize) -> Result<Vec<usize>> {
    if n_candidates > ds.len() {
        return Err(Error::Config(format!(
            "{n_candidates} candidates requested from {} rows",
            ds.len()
        )));
    }
    let mean = ds.mean_row();
    let mut scored: Vec<(usize, f64)> = ds
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let d2: f64 = row.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
            (i, d2)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(n_candidates).map(|(i, _)| i).collect())
}

/// Pick the most vulnerable record: rank outlier candidates, score each with
/// a caller-supplied attack oracle (candidate row index, number of games,
/// derived seed) -> attack AUC, and return the candidate with the highest
/// AUC. Ties break toward the earlier candidate in distance order.
pub fn select_target<F>(
    ds: &Dataset,
    n_candidates: usize,
    n_mini_games: usize,
    seed: u64,
    mini_mia_auc: F,
) -> Result<usize>
where
    F: Fn(usize, usize, u64) -> f64,
{
    if n_mini_games < 2 {
        return Err(Error::Config("need at least two mini games".into()));
    }
    let candidates = outlier_candidates(ds, n_candidates)?;
    let mut best = candidates[0];
    let mut best_auc = f64::NEG_INFINITY;
    for (rank, &cand) in candidates.iter().enumerate() {
        let auc = mini_mia_auc(cand, n_mini_games, crate::rng::derive_seed(seed, &[rank as u64]));
        if auc > best_auc {
            best_auc = auc;
            best = cand;
        }
    }
    Ok(best)
}
