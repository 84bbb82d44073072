//! Multi-source datasets, CSV ingestion and fold assignment.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{MimalError, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// The observations `(y, X, Z)` of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDataset {
    pub source_id: usize,
    pub label: String,
    pub y: DVector<f64>,
    /// Exposure block, `n × p`.
    pub x: DMatrix<f64>,
    /// Adjustment block, `n × k` (`k` may be zero).
    pub z: DMatrix<f64>,
    /// Time keys when the sources are aligned.
    pub time: Option<Vec<String>>,
}

impl SourceDataset {
    pub fn new(
        source_id: usize,
        label: impl Into<String>,
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(MimalError::Shape(format!("source {source_id} has no rows")));
        }
        if x.nrows() != n || z.nrows() != n {
            return Err(MimalError::Shape(format!(
                "source {source_id}: y has {n} rows, X has {}, Z has {}",
                x.nrows(),
                z.nrows()
            )));
        }
        if y.iter().chain(x.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(MimalError::Input(format!(
                "source {source_id} contains non-finite values"
            )));
        }
        Ok(SourceDataset {
            source_id,
            label: label.into(),
            y,
            x,
            z,
            time: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Rows `idx` of this source, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> SourceDataset {
        SourceDataset {
            source_id: self.source_id,
            label: self.label.clone(),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            x: self.x.select_rows(idx),
            z: self.z.select_rows(idx),
            time: self
                .time
                .as_ref()
                .map(|t| idx.iter().map(|&i| t[i].clone()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSourceDataset {
    pub sources: Vec<SourceDataset>,
    pub paired: bool,
    /// `rho[m] = n_m / n_1`.
    pub rho: Vec<f64>,
    pub exposure_names: Vec<String>,
    pub adjust_names: Vec<String>,
}

impl MultiSourceDataset {
    /// Assembles a dataset with `M >= 2` sources.
    pub fn new(
        sources: Vec<SourceDataset>,
        exposure_names: Vec<String>,
        adjust_names: Vec<String>,
        paired: bool,
    ) -> Result<Self> {
        if sources.len() < 2 {
            return Err(MimalError::Shape(format!(
                "need at least 2 sources, got {}",
                sources.len()
            )));
        }
        Self::build(sources, exposure_names, adjust_names, paired)
    }

    /// A one-source dataset, used for source-specific importance.
    pub fn single(source: SourceDataset, exposure_names: Vec<String>, adjust_names: Vec<String>) -> Result<Self> {
        Self::build(vec![source], exposure_names, adjust_names, false)
    }

    fn build(
        mut sources: Vec<SourceDataset>,
        exposure_names: Vec<String>,
        adjust_names: Vec<String>,
        paired: bool,
    ) -> Result<Self> {
        let p = exposure_names.len();
        let k = adjust_names.len();
        for (m, s) in sources.iter_mut().enumerate() {
            if s.x.ncols() != p || s.z.ncols() != k {
                return Err(MimalError::Shape(format!(
                    "source {m}: expected {p} exposure and {k} adjustment columns, got {} and {}",
                    s.x.ncols(),
                    s.z.ncols()
                )));
            }
            s.source_id = m;
        }
        let n1 = sources[0].n() as f64;
        if paired && sources.iter().any(|s| s.n() != sources[0].n()) {
            return Err(MimalError::Pairing(
                "paired design requires equal source sizes".into(),
            ));
        }
        let rho = sources.iter().map(|s| s.n() as f64 / n1).collect();
        Ok(MultiSourceDataset {
            sources,
            paired,
            rho,
            exposure_names,
            adjust_names,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n(&self, m: usize) -> usize {
        self.sources[m].n()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sources.iter().map(|s| s.n()).collect()
    }

    pub fn n_min(&self) -> usize {
        self.sources.iter().map(|s| s.n()).min().unwrap_or(0)
    }

    pub fn num_exposures(&self) -> usize {
        self.exposure_names.len()
    }

    pub fn num_adjust(&self) -> usize {
        self.adjust_names.len()
    }

    /// Restricts every source to the given row indices.
    pub fn subset(&self, rows: &[Vec<usize>]) -> MultiSourceDataset {
        let sources = self
            .sources
            .iter()
            .zip(rows)
            .map(|(s, idx)| s.select_rows(idx))
            .collect::<Vec<_>>();
        let n1 = sources[0].n() as f64;
        MultiSourceDataset {
            rho: sources.iter().map(|s| s.n() as f64 / n1).collect(),
            sources,
            paired: self.paired,
            exposure_names: self.exposure_names.clone(),
            adjust_names: self.adjust_names.clone(),
        }
    }

    /// The single-source dataset holding source `m` only.
    pub fn source_only(&self, m: usize) -> Result<MultiSourceDataset> {
        let s = self
            .sources
            .get(m)
            .ok_or_else(|| MimalError::Input(format!("source index {m} out of range")))?;
        Self::single(s.clone(), self.exposure_names.clone(), self.adjust_names.clone())
    }

    /// Names of all predictor columns: exposures followed by adjustments.
    pub fn predictor_names(&self) -> Vec<String> {
        self.exposure_names
            .iter()
            .chain(&self.adjust_names)
            .cloned()
            .collect()
    }

    /// Re-partitions the pooled predictor columns `[X | Z]` into a new exposure
    /// block and adjustment block.
    pub fn regroup(&self, exposure: &[usize], adjust: &[usize]) -> Result<MultiSourceDataset> {
        let names = self.predictor_names();
        let total = names.len();
        if exposure.is_empty() {
            return Err(MimalError::Input("empty exposure block".into()));
        }
        if let Some(&bad) = exposure.iter().chain(adjust).find(|&&c| c >= total) {
            return Err(MimalError::Input(format!("predictor column {bad} out of range")));
        }
        let sources = self
            .sources
            .iter()
            .map(|s| {
                let pooled = hcat(&s.x, &s.z);
                SourceDataset {
                    source_id: s.source_id,
                    label: s.label.clone(),
                    y: s.y.clone(),
                    x: pooled.select_columns(exposure),
                    z: pooled.select_columns(adjust),
                    time: s.time.clone(),
                }
            })
            .collect();
        Ok(MultiSourceDataset {
            sources,
            paired: self.paired,
            rho: self.rho.clone(),
            exposure_names: exposure.iter().map(|&c| names[c].clone()).collect(),
            adjust_names: adjust.iter().map(|&c| names[c].clone()).collect(),
        })
    }
}

pub(crate) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Binds CSV columns to their roles.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ColumnSchema {
    pub source: String,
    pub outcome: String,
    pub exposure: Vec<String>,
    #[serde(default)]
    pub adjust: Vec<String>,
    #[serde(default)]
    pub time: Option<String>,
}

pub fn load_multisource_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<MultiSourceDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| MimalError::io(path.display().to_string(), e))?;
    read_multisource_csv(file, schema)
}

/// Parses a multi-source CSV. Sources are ordered by first appearance; when a
/// time column is bound, every source must carry each time key exactly once and
/// rows are sorted by time.
pub fn read_multisource_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<MultiSourceDataset> {
    if schema.exposure.is_empty() {
        return Err(MimalError::Config("at least one exposure column is required".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MimalError::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| MimalError::Config(format!("column `{name}` not found in header")))
    };
    let source_col = col(&schema.source)?;
    let outcome_col = col(&schema.outcome)?;
    let exposure_cols = schema.exposure.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let adjust_cols = schema.adjust.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let time_col = schema.time.as_deref().map(col).transpose()?;

    struct Rows {
        label: String,
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        time: Vec<String>,
    }
    let mut order: Vec<Rows> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    for (i, record) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| MimalError::Parse {
            row,
            message: e.to_string(),
        })?;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(MimalError::Parse {
                    row,
                    message: format!("missing value in column `{}`", &headers[c]),
                });
            }
            let v: f64 = raw.parse().map_err(|_| MimalError::Parse {
                row,
                message: format!("non-numeric value `{raw}` in column `{}`", &headers[c]),
            })?;
            if !v.is_finite() {
                return Err(MimalError::Parse {
                    row,
                    message: format!("non-finite value in column `{}`", &headers[c]),
                });
            }
            Ok(v)
        };
        let label = record.get(source_col).unwrap_or("").trim().to_string();
        if label.is_empty() {
            return Err(MimalError::Parse {
                row,
                message: "missing source label".into(),
            });
        }
        let slot = *index.entry(label.clone()).or_insert_with(|| {
            order.push(Rows {
                label: label.clone(),
                y: Vec::new(),
                x: Vec::new(),
                z: Vec::new(),
                time: Vec::new(),
            });
            order.len() - 1
        });
        let y = cell(outcome_col)?;
        let x = exposure_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?;
        let z = adjust_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?;
        let entry = &mut order[slot];
        entry.y.push(y);
        entry.x.push(x);
        entry.z.push(z);
        if let Some(tc) = time_col {
            let t = record.get(tc).unwrap_or("").trim().to_string();
            if t.is_empty() {
                return Err(MimalError::Parse {
                    row,
                    message: "missing time value".into(),
                });
            }
            entry.time.push(t);
        }
    }

    if order.len() < 2 {
        return Err(MimalError::Shape(format!(
            "need at least 2 sources, found {}",
            order.len()
        )));
    }

    let paired = time_col.is_some();
    if paired {
        check_pairing(&order.iter().map(|r| (r.label.as_str(), &r.time)).collect::<Vec<_>>())?;
    }

    let p = exposure_cols.len();
    let k = adjust_cols.len();
    let mut sources = Vec::with_capacity(order.len());
    for (m, rows) in order.into_iter().enumerate() {
        let mut perm: Vec<usize> = (0..rows.y.len()).collect();
        if paired {
            perm.sort_by(|&a, &b| compare_time(&rows.time[a], &rows.time[b]));
        }
        let n = perm.len();
        let y = DVector::from_iterator(n, perm.iter().map(|&i| rows.y[i]));
        let x = DMatrix::from_fn(n, p, |r, c| rows.x[perm[r]][c]);
        let z = DMatrix::from_fn(n, k, |r, c| rows.z[perm[r]][c]);
        let mut s = SourceDataset::new(m, rows.label, y, x, z)?;
        if paired {
            s.time = Some(perm.iter().map(|&i| rows.time[i].clone()).collect());
        }
        sources.push(s);
    }
    MultiSourceDataset::new(sources, schema.exposure.clone(), schema.adjust.clone(), paired)
}

fn check_pairing(sources: &[(&str, &Vec<String>)]) -> Result<()> {
    let mut reference: Option<Vec<&String>> = None;
    for (label, times) in sources {
        let mut sorted: Vec<&String> = times.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(MimalError::Pairing(format!(
                "source `{label}` has repeated time values"
            )));
        }
        match &reference {
            None => reference = Some(sorted),
            Some(r) if *r != sorted => {
                return Err(MimalError::Pairing(format!(
                    "source `{label}` has {} rows whose time values do not match the first source ({} rows)",
                    times.len(),
                    r.len()
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

fn compare_time(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Writes the dataset in the layout read back by [`read_multisource_csv`]
/// with the schema returned by [`default_schema`].
pub fn write_multisource_csv<W: Write>(data: &MultiSourceDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| MimalError::Input(format!("csv write failed: {e}"));
    let mut header = vec!["source".to_string()];
    if data.paired {
        header.push("time".into());
    }
    header.push("y".into());
    header.extend(data.exposure_names.iter().cloned());
    header.extend(data.adjust_names.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for s in &data.sources {
        for i in 0..s.n() {
            let mut rec = vec![s.label.clone()];
            if data.paired {
                rec.push(s.time.as_ref().map(|t| t[i].clone()).unwrap_or_else(|| i.to_string()));
            }
            rec.push(format!("{:?}", s.y[i]));
            rec.extend(s.x.row(i).iter().map(|v| format!("{v:?}")));
            rec.extend(s.z.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(err)?;
        }
    }
    w.flush().map_err(|e| MimalError::Input(format!("csv write failed: {e}")))?;
    Ok(())
}

/// The schema matching [`write_multisource_csv`] output.
pub fn default_schema(data: &MultiSourceDataset) -> ColumnSchema {
    ColumnSchema {
        source: "source".into(),
        outcome: "y".into(),
        exposure: data.exposure_names.clone(),
        adjust: data.adjust_names.clone(),
        time: data.paired.then(|| "time".to_string()),
    }
}

/// Per-source K-fold partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// `folds[m][k]` holds the sorted row indices of fold `k` in source `m`.
    pub folds: Vec<Vec<Vec<usize>>>,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<Vec<usize>> {
        self.folds.iter().map(|f| f[fold].clone()).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<Vec<usize>> {
        self.folds
            .iter()
            .map(|f| {
                let mut rows: Vec<usize> = f
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != fold)
                    .flat_map(|(_, idx)| idx.iter().copied())
                    .collect();
                rows.sort_unstable();
                rows
            })
            .collect()
    }
}

fn partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, &i) in perm.iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Random K-fold split of every source. Paired data share one partition of the
/// time index.
pub fn split_kfolds(data: &MultiSourceDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(MimalError::Fold(format!("K must be at least 2, got {k}")));
    }
    let n_min = data.n_min();
    if k > n_min {
        return Err(MimalError::Fold(format!(
            "K = {k} exceeds the smallest source size {n_min}"
        )));
    }
    let folds = if data.paired {
        let shared = partition(data.n(0), k, derive_seed(seed, "folds", 0));
        vec![shared; data.num_sources()]
    } else {
        (0..data.num_sources())
            .map(|m| partition(data.n(m), k, derive_seed(seed, "folds", m as u64)))
            .collect()
    };
    Ok(FoldAssignment { k, seed, folds })
}
