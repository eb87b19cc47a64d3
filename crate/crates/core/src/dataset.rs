//! Loading, encoding, splitting, and partitioning of fairness-sensitive
//! tabular datasets.
//!
//! A dataset is described by a small TOML manifest naming the CSV file, the
//! column kinds/roles, and how the sensitive and label columns binarize. After
//! loading, the sensitive attribute `a` and the label `y` are bits; rows with
//! missing or malformed values are dropped and counted.
//!
//! Model inputs are the encoded feature columns with the sensitive bit
//! appended as the last column, so a classifier sees the attribute it is
//! audited on.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Feature,
    Sensitive,
    Label,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "default_role")]
    pub role: ColumnRole,
}

fn default_role() -> ColumnRole {
    ColumnRole::Feature
}

/// One cell: a numeric value or a code into the column's vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellValue {
    Num(f64),
    Cat(u32),
}

impl CellValue {
    pub fn as_num(&self) -> f64 {
        match self {
            CellValue::Num(v) => *v,
            CellValue::Cat(c) => *c as f64,
        }
    }

    pub fn as_cat(&self) -> u32 {
        match self {
            CellValue::Cat(c) => *c,
            CellValue::Num(v) => *v as u32,
        }
    }
}

/// Raw tabular data after loading: schema, per-column vocabularies for
/// categoricals, one bit per row for sensitive/label, and the drop count.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    pub schema: Vec<ColumnSchema>,
    /// Vocabulary per column (empty for numeric columns). Codes index here.
    pub vocabs: Vec<Vec<String>>,
    pub rows: Vec<Vec<CellValue>>,
    pub dropped_rows: usize,
}

impl TabularDataset {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn col_count(&self) -> usize {
        self.schema.len()
    }

    pub fn sensitive_col(&self) -> usize {
        self.schema
            .iter()
            .position(|c| c.role == ColumnRole::Sensitive)
            .expect("schema validated at load")
    }

    pub fn label_col(&self) -> usize {
        self.schema
            .iter()
            .position(|c| c.role == ColumnRole::Label)
            .expect("schema validated at load")
    }

    pub fn sensitive_bits(&self) -> Vec<u8> {
        let c = self.sensitive_col();
        self.rows.iter().map(|r| r[c].as_cat() as u8).collect()
    }

    pub fn label_bits(&self) -> Vec<u8> {
        let c = self.label_col();
        self.rows.iter().map(|r| r[c].as_cat() as u8).collect()
    }

    /// Render a cell back to its original textual form.
    pub fn cell_to_string(&self, col: usize, cell: &CellValue) -> String {
        match (self.schema[col].kind, cell) {
            (ColumnKind::Numeric, CellValue::Num(v)) => format!("{v}"),
            (_, CellValue::Cat(c)) => self.vocabs[col]
                .get(*c as usize)
                .cloned()
                .unwrap_or_else(|| format!("#{c}")),
            (_, CellValue::Num(v)) => format!("{v}"),
        }
    }
}

/// TOML manifest describing a CSV dataset.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub csv: String,
    pub columns: Vec<ColumnSchema>,
    #[serde(default)]
    pub sensitive: GroupEncoding,
    #[serde(default)]
    pub label: GroupEncoding,
}

/// How a sensitive or label column maps to a bit: rows equal to
/// `positive_value` become 1, everything else 0. When absent, the column must
/// carry exactly two distinct values, mapped in sorted order.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupEncoding {
    pub positive_value: Option<String>,
}

impl DatasetManifest {
    pub fn from_path(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let manifest: DatasetManifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let csv_path = base.join(&manifest.csv);
        Ok((manifest, csv_path))
    }
}

/// Load a dataset through its manifest.
pub fn load_from_manifest(path: &Path) -> Result<TabularDataset> {
    let (manifest, csv_path) = DatasetManifest::from_path(path)?;
    load_csv(
        &csv_path,
        &manifest.columns,
        manifest.sensitive.positive_value.as_deref(),
        manifest.label.positive_value.as_deref(),
    )
}

fn is_missing(raw: &str) -> bool {
    let t = raw.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na")
}

/// Load and binarize a CSV per the given schema.
///
/// Rows with missing or unparseable values are dropped and counted. The
/// sensitive and label columns must end up binary: either through a declared
/// `positive_value`, or by carrying exactly two distinct raw values.
pub fn load_csv(
    path: &Path,
    schema: &[ColumnSchema],
    sensitive_positive: Option<&str>,
    label_positive: Option<&str>,
) -> Result<TabularDataset> {
    let n_sensitive = schema.iter().filter(|c| c.role == ColumnRole::Sensitive).count();
    let n_label = schema.iter().filter(|c| c.role == ColumnRole::Label).count();
    if n_sensitive != 1 || n_label != 1 {
        return Err(Error::Schema(format!(
            "schema must have exactly one sensitive and one label column (got {n_sensitive} sensitive, {n_label} label)"
        )));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let mut col_pos = Vec::with_capacity(schema.len());
    for col in schema {
        let pos = headers.iter().position(|h| h == col.name).ok_or_else(|| {
            Error::Schema(format!("column '{}' not found in {}", col.name, path.display()))
        })?;
        col_pos.push(pos);
    }

    // First pass: keep raw strings for the schema columns, dropping bad rows.
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let mut row = Vec::with_capacity(schema.len());
        let mut ok = true;
        for (col, &pos) in schema.iter().zip(&col_pos) {
            let raw = record.get(pos).unwrap_or("");
            if is_missing(raw) {
                ok = false;
                break;
            }
            if col.kind == ColumnKind::Numeric
                && col.role == ColumnRole::Feature
                && raw.parse::<f64>().map(|v| !v.is_finite()).unwrap_or(true)
            {
                ok = false;
                break;
            }
            row.push(raw.to_string());
        }
        if ok {
            raw_rows.push(row);
        } else {
            dropped += 1;
        }
    }

    if raw_rows.is_empty() {
        return Err(Error::Data(format!("no usable rows in {}", path.display())));
    }

    // Build vocabularies, then encode cells.
    let mut vocabs: Vec<Vec<String>> = vec![Vec::new(); schema.len()];
    for (j, col) in schema.iter().enumerate() {
        match col.role {
            ColumnRole::Sensitive | ColumnRole::Label => {
                let positive = match col.role {
                    ColumnRole::Sensitive => sensitive_positive,
                    _ => label_positive,
                };
                let distinct: BTreeSet<&str> = raw_rows.iter().map(|r| r[j].as_str()).collect();
                match positive {
                    Some(p) => {
                        if !distinct.contains(p) {
                            return Err(Error::Schema(format!(
                                "declared positive value '{p}' never occurs in column '{}'",
                                col.name
                            )));
                        }
                        if distinct.len() < 2 {
                            return Err(Error::Schema(format!(
                                "column '{}' has a single distinct value; need two groups",
                                col.name
                            )));
                        }
                        let others: Vec<&&str> = distinct.iter().filter(|v| **v != p).collect();
                        let other_name = if others.len() == 1 {
                            others[0].to_string()
                        } else {
                            "Other".to_string()
                        };
                        vocabs[j] = vec![other_name, p.to_string()];
                    }
                    None => {
                        if distinct.len() != 2 {
                            return Err(Error::Schema(format!(
                                "column '{}' has {} distinct values; need exactly 2 (or declare a positive_value)",
                                col.name,
                                distinct.len()
                            )));
                        }
                        let mut vals: Vec<&str> = distinct.into_iter().collect();
                        vals.sort_unstable();
                        vocabs[j] = vec![vals[0].to_string(), vals[1].to_string()];
                    }
                }
            }
            ColumnRole::Feature => {
                if col.kind == ColumnKind::Categorical {
                    // First-appearance order keeps codes stable for a given file.
                    for r in &raw_rows {
                        if !vocabs[j].iter().any(|v| v == &r[j]) {
                            vocabs[j].push(r[j].clone());
                        }
                    }
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(raw_rows.len());
    for raw in &raw_rows {
        let mut row = Vec::with_capacity(schema.len());
        for (j, col) in schema.iter().enumerate() {
            let cell = match col.role {
                ColumnRole::Sensitive | ColumnRole::Label => {
                    let positive = &vocabs[j][1];
                    CellValue::Cat(u32::from(&raw[j] == positive))
                }
                ColumnRole::Feature => match col.kind {
                    ColumnKind::Numeric => {
                        CellValue::Num(raw[j].parse::<f64>().expect("validated"))
                    }
                    ColumnKind::Categorical => {
                        let code =
                            vocabs[j].iter().position(|v| v == &raw[j]).expect("in vocab");
                        CellValue::Cat(code as u32)
                    }
                },
            };
            row.push(cell);
        }
        rows.push(row);
    }

    // Both groups must actually occur.
    let ds = TabularDataset { schema: schema.to_vec(), vocabs, rows, dropped_rows: dropped };
    for (bits, what) in [(ds.sensitive_bits(), "sensitive"), (ds.label_bits(), "label")] {
        let ones = bits.iter().filter(|&&b| b == 1).count();
        if ones == 0 || ones == bits.len() {
            return Err(Error::Schema(format!(
                "{what} column is constant after binarization; need both groups present"
            )));
        }
    }
    Ok(ds)
}

/// Per-column encoder state fitted on a row subset.
#[derive(Debug, Clone)]
enum ColEncoder {
    /// Z-scoring with population statistics; `std == 0` marks a constant
    /// column, encoded as all zeros.
    Numeric { mean: f64, std: f64 },
    /// One-hot over the codes seen in the fitting split (ascending order).
    Categorical { seen: Vec<u32> },
    /// Sensitive / label columns pass through as bits.
    Bit,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    cols: Vec<ColEncoder>,
    /// Names of columns that were constant on the fitting split.
    pub zero_variance_cols: Vec<String>,
    feature_width: usize,
}

impl Encoder {
    /// Fit encoder state on the given rows of `data`.
    pub fn fit(data: &TabularDataset, fit_on: &[usize]) -> Result<Self> {
        if fit_on.is_empty() {
            return Err(Error::Data("encoder fitting split is empty".into()));
        }
        let mut cols = Vec::with_capacity(data.schema.len());
        let mut zero_variance = Vec::new();
        for (j, col) in data.schema.iter().enumerate() {
            let enc = match col.role {
                ColumnRole::Sensitive | ColumnRole::Label => ColEncoder::Bit,
                ColumnRole::Feature => match col.kind {
                    ColumnKind::Numeric => {
                        let n = fit_on.len() as f64;
                        let mean =
                            fit_on.iter().map(|&i| data.rows[i][j].as_num()).sum::<f64>() / n;
                        let var = fit_on
                            .iter()
                            .map(|&i| {
                                let d = data.rows[i][j].as_num() - mean;
                                d * d
                            })
                            .sum::<f64>()
                            / n;
                        let std = var.sqrt();
                        if std <= 1e-12 {
                            zero_variance.push(col.name.clone());
                            ColEncoder::Numeric { mean, std: 0.0 }
                        } else {
                            ColEncoder::Numeric { mean, std }
                        }
                    }
                    ColumnKind::Categorical => {
                        let seen: BTreeSet<u32> =
                            fit_on.iter().map(|&i| data.rows[i][j].as_cat()).collect();
                        ColEncoder::Categorical { seen: seen.into_iter().collect() }
                    }
                },
            };
            cols.push(enc);
        }
        let feature_width = cols
            .iter()
            .map(|c| match c {
                ColEncoder::Numeric { .. } => 1,
                ColEncoder::Categorical { seen } => seen.len(),
                ColEncoder::Bit => 0,
            })
            .sum();
        Ok(Self { cols, zero_variance_cols: zero_variance, feature_width })
    }

    /// Width of the encoded feature block (sensitive bit not included).
    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    /// Encode rows of data that shares the fitted schema.
    pub fn transform(
        &self,
        data: &TabularDataset,
        indices: Option<&[usize]>,
    ) -> Result<EncodedDataset> {
        let all: Vec<usize>;
        let idx: &[usize] = match indices {
            Some(ix) => ix,
            None => {
                all = (0..data.row_count()).collect();
                &all
            }
        };
        if data.schema.len() != self.cols.len() {
            return Err(Error::Schema("encoder/schema arity mismatch".into()));
        }
        let n = idx.len();
        let mut features = Array2::zeros((n, self.feature_width));
        let mut sensitive = vec![0u8; n];
        let mut labels = vec![0u8; n];
        let sens_col = data.sensitive_col();
        let label_col = data.label_col();

        for (out_i, &i) in idx.iter().enumerate() {
            let row = &data.rows[i];
            let mut f = 0usize;
            for (j, enc) in self.cols.iter().enumerate() {
                match enc {
                    ColEncoder::Numeric { mean, std } => {
                        features[[out_i, f]] =
                            if *std > 0.0 { (row[j].as_num() - mean) / std } else { 0.0 };
                        f += 1;
                    }
                    ColEncoder::Categorical { seen } => {
                        let code = row[j].as_cat();
                        if let Some(pos) = seen.iter().position(|&c| c == code) {
                            features[[out_i, f + pos]] = 1.0;
                        }
                        // Unseen categories leave the block all-zero.
                        f += seen.len();
                    }
                    ColEncoder::Bit => {}
                }
            }
            sensitive[out_i] = row[sens_col].as_cat() as u8;
            labels[out_i] = row[label_col].as_cat() as u8;
        }
        Ok(EncodedDataset { features, sensitive, labels, encoder: self.clone() })
    }
}

/// Encoded rows: z-scored/one-hot features plus sensitive and label bits.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    pub features: Array2<f64>,
    pub sensitive: Vec<u8>,
    pub labels: Vec<u8>,
    pub encoder: Encoder,
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        let mut features = Array2::zeros((indices.len(), self.features.ncols()));
        let mut sensitive = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for (out_i, &i) in indices.iter().enumerate() {
            features.row_mut(out_i).assign(&self.features.row(i));
            sensitive.push(self.sensitive[i]);
            labels.push(self.labels[i]);
        }
        EncodedDataset { features, sensitive, labels, encoder: self.encoder.clone() }
    }

    /// Assemble model-ready inputs: features with the sensitive bit appended
    /// as the last column.
    pub fn model_data(&self) -> ModelData {
        let n = self.n_rows();
        let w = self.features.ncols();
        let mut inputs = Array2::zeros((n, w + 1));
        for i in 0..n {
            for j in 0..w {
                inputs[[i, j]] = self.features[[i, j]];
            }
            inputs[[i, w]] = f64::from(self.sensitive[i]);
        }
        ModelData { inputs, sensitive: self.sensitive.clone(), labels: self.labels.clone() }
    }
}

/// Model-ready rows: inputs (features + sensitive bit), plus the bits used by
/// the fairness metrics. The sensitive bit is always the last input column.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub inputs: Array2<f64>,
    pub sensitive: Vec<u8>,
    pub labels: Vec<u8>,
}

impl ModelData {
    pub fn n_rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn subset(&self, indices: &[usize]) -> ModelData {
        let mut inputs = Array2::zeros((indices.len(), self.inputs.ncols()));
        let mut sensitive = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for (out_i, &i) in indices.iter().enumerate() {
            inputs.row_mut(out_i).assign(&self.inputs.row(i));
            sensitive.push(self.sensitive[i]);
            labels.push(self.labels[i]);
        }
        ModelData { inputs, sensitive, labels }
    }
}

/// Distribute `total` items proportionally to `weights` (largest remainder).
pub(crate) fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if sum <= 0.0 {
        let mut out = vec![0; weights.len()];
        out[0] = total;
        return out;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..total.saturating_sub(assigned) {
        counts[order[k % order.len()]] += 1;
    }
    counts
}

fn cell_of(a: u8, y: u8) -> usize {
    (a as usize) * 2 + y as usize
}

/// Stratified train/test split over row indices by (sensitive, label) cell.
///
/// Cells with at least two rows contribute to both sides; smaller cells fall
/// back to an unstratified random assignment and emit a warning. Deterministic
/// in `seed`.
pub fn stratified_split_indices(
    sensitive: &[u8],
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<String>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let n = sensitive.len();
    if n < 2 {
        return Err(Error::Data("need at least 2 rows to split".into()));
    }
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for i in 0..n {
        cells[cell_of(sensitive[i], labels[i])].push(i);
    }

    let mut warnings = Vec::new();
    let mut leftover = Vec::new();
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    for (c, cell_rows) in cells.iter().enumerate() {
        if cell_rows.is_empty() {
            continue;
        }
        if cell_rows.len() < 2 {
            warnings.push(format!(
                "cell (a={}, y={}) has {} row(s); falling back to unstratified assignment",
                c / 2,
                c % 2,
                cell_rows.len()
            ));
            leftover.extend_from_slice(cell_rows);
        } else {
            buckets.push(cell_rows.clone());
        }
    }
    let n_strata = buckets.len();
    if !leftover.is_empty() {
        buckets.push(leftover);
    }

    // Exact global test count, distributed proportionally over cells.
    let target = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let sizes: Vec<f64> = buckets.iter().map(|b| b.len() as f64).collect();
    let mut quotas = apportion(target, &sizes);

    // Keep every stratified cell present on both sides when the target allows
    // it; the leftover bucket (if any) has no such constraint.
    let train_target = n - target;
    let clamp_cells = target >= n_strata && train_target >= n_strata;
    let bounds: Vec<(usize, usize)> = buckets
        .iter()
        .enumerate()
        .map(|(k, b)| {
            if k < n_strata && clamp_cells {
                (1, b.len() - 1)
            } else {
                (0, b.len())
            }
        })
        .collect();
    for (q, &(lo, hi)) in quotas.iter_mut().zip(&bounds) {
        *q = (*q).clamp(lo, hi);
    }
    // Clamping may have drifted off the target; repair deterministically.
    loop {
        let total: usize = quotas.iter().sum();
        match total.cmp(&target) {
            std::cmp::Ordering::Equal => break,
            std::cmp::Ordering::Less => {
                let k = (0..quotas.len())
                    .filter(|&k| quotas[k] < bounds[k].1)
                    .max_by_key(|&k| bounds[k].1 - quotas[k])
                    .expect("target <= n - 1 leaves slack");
                quotas[k] += 1;
            }
            std::cmp::Ordering::Greater => {
                let k = (0..quotas.len())
                    .filter(|&k| quotas[k] > bounds[k].0)
                    .max_by_key(|&k| quotas[k] - bounds[k].0)
                    .expect("target >= 1 leaves slack");
                quotas[k] -= 1;
            }
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut rng = stream_rng(seed, "stratified-split", &[]);
    for (bucket, &q) in buckets.iter().zip(&quotas) {
        let mut rows = bucket.clone();
        rows.shuffle(&mut rng);
        test.extend_from_slice(&rows[..q]);
        train.extend_from_slice(&rows[q..]);
    }

    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test, warnings))
}

/// Stratified train/test split of an encoded dataset.
pub fn split_train_test(
    data: &EncodedDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(EncodedDataset, EncodedDataset, Vec<String>)> {
    let (train_idx, test_idx, warnings) =
        stratified_split_indices(&data.sensitive, &data.labels, test_fraction, seed)?;
    Ok((data.subset(&train_idx), data.subset(&test_idx), warnings))
}

/// Pick `round(fraction * n)` root rows, stratified by (a, y); returns
/// (root indices, remaining indices). Deterministic in `seed`.
pub fn extract_root_indices(
    sensitive: &[u8],
    labels: &[u8],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("root fraction must be in (0,1), got {fraction}")));
    }
    let n = sensitive.len();
    let target = (fraction * n as f64).round() as usize;
    if target == 0 {
        return Err(Error::Data(format!(
            "root fraction {fraction} of {n} rows yields 0 root rows"
        )));
    }
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for i in 0..n {
        cells[cell_of(sensitive[i], labels[i])].push(i);
    }
    let weights: Vec<f64> = cells.iter().map(|c| c.len() as f64).collect();
    let mut quotas = apportion(target, &weights);
    for (q, c) in quotas.iter_mut().zip(&cells) {
        *q = (*q).min(c.len());
    }

    let mut rng = stream_rng(seed, "root-extract", &[]);
    let mut root = Vec::new();
    let mut rest = Vec::new();
    for (cell_rows, &q) in cells.iter().zip(&quotas) {
        if cell_rows.is_empty() {
            continue;
        }
        let mut rows = cell_rows.clone();
        rows.shuffle(&mut rng);
        root.extend_from_slice(&rows[..q]);
        rest.extend_from_slice(&rows[q..]);
    }
    root.sort_unstable();
    rest.sort_unstable();
    Ok((root, rest))
}

/// Stratified root extraction on an encoded dataset.
pub fn extract_root(
    data: &EncodedDataset,
    fraction: f64,
    seed: u64,
) -> Result<(EncodedDataset, EncodedDataset)> {
    let (root_idx, rest_idx) =
        extract_root_indices(&data.sensitive, &data.labels, fraction, seed)?;
    Ok((data.subset(&root_idx), data.subset(&rest_idx)))
}

/// One client's share of the pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientPartition {
    pub client: usize,
    /// Row indices into the pool dataset.
    pub rows: Vec<usize>,
}

impl ClientPartition {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn dirichlet_proportions(alpha: f64, n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.into_iter().map(|g| g / sum).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Partition `pool` rows across `n_clients` with per-label-class Dirichlet
/// proportions. Small `alpha` skews label mixtures per client; very large
/// `alpha` approaches IID. Every client ends up with at least one row.
pub fn dirichlet_partition(
    pool: &[usize],
    labels: &[u8],
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<ClientPartition>> {
    if n_clients == 0 {
        return Err(Error::Config("n_clients must be >= 1".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be > 0, got {alpha}")));
    }
    if labels.len() != pool.len() {
        return Err(Error::Data("labels must align with the pool".into()));
    }
    if pool.len() < n_clients {
        return Err(Error::Data(format!(
            "pool of {} rows cannot feed {} clients",
            pool.len(),
            n_clients
        )));
    }
    if n_clients == 1 {
        return Ok(vec![ClientPartition { client: 0, rows: pool.to_vec() }]);
    }

    let mut rng = stream_rng(seed, "dirichlet-partition", &[]);
    let mut parts: Vec<ClientPartition> =
        (0..n_clients).map(|c| ClientPartition { client: c, rows: Vec::new() }).collect();

    for class in 0u8..=1 {
        let mut rows: Vec<usize> = pool
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(&r, _)| r)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let props = dirichlet_proportions(alpha, n_clients, &mut rng);
        rows.shuffle(&mut rng);
        let counts = apportion(rows.len(), &props);
        let mut cursor = 0usize;
        for (part, &count) in parts.iter_mut().zip(&counts) {
            part.rows.extend_from_slice(&rows[cursor..cursor + count]);
            cursor += count;
        }
    }

    // Repair: every client must own at least one row.
    loop {
        let empty = match parts.iter().position(|p| p.is_empty()) {
            Some(i) => i,
            None => break,
        };
        let largest = parts
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("non-empty parts");
        let moved = parts[largest].rows.pop().expect("largest client has rows");
        parts[empty].rows.push(moved);
    }

    for p in &mut parts {
        p.rows.sort_unstable();
    }
    Ok(parts)
}
