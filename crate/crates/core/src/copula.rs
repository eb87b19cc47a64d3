//! Gaussian-copula synthesis of tabular rows.
//!
//! Fitting maps every column through its empirical marginal CDF into
//! uniform space (midrank plotting positions, clamped away from 0 and 1),
//! then through the standard-normal quantile. The covariance of the
//! Gaussianized matrix captures cross-column dependence. Sampling reverses
//! the pipeline: draw from N(0, Σ), push through Φ, and invert each marginal
//! (interpolated quantiles for numeric columns, cumulative-boundary lookup
//! for categorical ones).
//!
//! Sensitive and label columns ride along as categorical columns, so sampled
//! rows carry a full (features, a, y) triple.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CellValue, ColumnKind, TabularDataset};
use crate::error::{Error, Result};
use crate::gauss::{phi_cdf, phi_inv};
use crate::seed::stream_rng;

const SIGMA_RIDGE: f64 = 1e-6;

/// Empirical marginal CDF of one column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MarginalCdf {
    /// Sorted observed values; plotting positions (k + 0.5) / r.
    Numeric { sorted: Vec<f64> },
    /// Observed category codes with cumulative boundaries; `cum[j]..cum[j+1]`
    /// is the mass of `codes[j]`.
    Categorical { codes: Vec<u32>, cum: Vec<f64> },
}

impl MarginalCdf {
    fn fit_numeric(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        MarginalCdf::Numeric { sorted }
    }

    fn fit_categorical(codes_seen: &[u32]) -> Self {
        let mut uniq: Vec<u32> = codes_seen.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        let n = codes_seen.len() as f64;
        let mut cum = Vec::with_capacity(uniq.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &c in &uniq {
            acc += codes_seen.iter().filter(|&&x| x == c).count() as f64 / n;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        MarginalCdf::Categorical { codes: uniq, cum }
    }

    /// Forward map into (0, 1); midrank for numerics, span midpoint for
    /// categories.
    fn to_uniform(&self, cell: &CellValue) -> Result<f64> {
        match self {
            MarginalCdf::Numeric { sorted } => {
                let x = cell.as_num();
                let r = sorted.len() as f64;
                let less = sorted.partition_point(|v| *v < x);
                let leq = sorted.partition_point(|v| *v <= x);
                Ok((less as f64 + 0.5 * (leq - less) as f64) / r)
            }
            MarginalCdf::Categorical { codes, cum } => {
                let c = cell.as_cat();
                let j = codes.iter().position(|&k| k == c).ok_or_else(|| {
                    Error::Data(format!("category code {c} not seen at fit time"))
                })?;
                Ok(0.5 * (cum[j] + cum[j + 1]))
            }
        }
    }

    /// Inverse map from (0, 1) back into the data space.
    fn from_uniform(&self, u: f64) -> CellValue {
        match self {
            MarginalCdf::Numeric { sorted } => {
                let r = sorted.len();
                let pos = |k: usize| (k as f64 + 0.5) / r as f64;
                if u <= pos(0) {
                    return CellValue::Num(sorted[0]);
                }
                if u >= pos(r - 1) {
                    return CellValue::Num(sorted[r - 1]);
                }
                // k with pos(k) <= u < pos(k + 1)
                let k = ((u * r as f64) - 0.5).floor() as usize;
                let (p0, p1) = (pos(k), pos(k + 1));
                let t = (u - p0) / (p1 - p0);
                CellValue::Num(sorted[k] + t * (sorted[k + 1] - sorted[k]))
            }
            MarginalCdf::Categorical { codes, cum } => {
                let mut j = 0;
                while j + 1 < codes.len() && u > cum[j + 1] {
                    j += 1;
                }
                CellValue::Cat(codes[j])
            }
        }
    }
}

/// Fitted copula: marginals, covariance of the Gaussianized data, and a
/// factor of it used for sampling.
#[derive(Debug, Clone)]
pub struct CopulaModel {
    pub marginals: Vec<MarginalCdf>,
    pub sigma: DMatrix<f64>,
    factor: DMatrix<f64>,
    pub n_fit_rows: usize,
}

#[derive(Serialize, Deserialize)]
struct CopulaDoc {
    version: u32,
    n_fit_rows: usize,
    marginals: Vec<MarginalCdf>,
    dim: usize,
    /// Column-major entries of sigma and its factor.
    sigma: Vec<f64>,
    factor: Vec<f64>,
}

impl CopulaModel {
    /// Fit marginals and the Gaussian-space covariance on `rows` of `data`.
    pub fn fit(data: &TabularDataset, rows: &[usize]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Data(format!(
                "copula fitting needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        if data.col_count() == 0 {
            return Err(Error::Data("copula fitting needs at least 1 column".into()));
        }
        let d = data.col_count();
        let r = rows.len();

        let mut marginals = Vec::with_capacity(d);
        for (j, col) in data.schema.iter().enumerate() {
            let marginal = match effective_kind(col.kind, j, data) {
                ColumnKind::Numeric => {
                    let values: Vec<f64> =
                        rows.iter().map(|&i| data.rows[i][j].as_num()).collect();
                    MarginalCdf::fit_numeric(&values)
                }
                ColumnKind::Categorical => {
                    let codes: Vec<u32> =
                        rows.iter().map(|&i| data.rows[i][j].as_cat()).collect();
                    MarginalCdf::fit_categorical(&codes)
                }
            };
            marginals.push(marginal);
        }

        let model_stub = CopulaModel {
            marginals,
            sigma: DMatrix::zeros(d, d),
            factor: DMatrix::zeros(d, d),
            n_fit_rows: r,
        };

        // Gaussianize for covariance estimation. Ties (categories, repeated
        // numerics) get consecutive ranks spread across their CDF span; a
        // midrank mapping would shrink the column variance and skew sampled
        // category frequencies. The within-tie order is a per-column hash of
        // the row position: a tie-break shared across columns would
        // manufacture correlation between heavily tied columns.
        let mut z = DMatrix::zeros(r, d);
        for j in 0..d {
            let constant = match effective_kind(data.schema[j].kind, j, data) {
                ColumnKind::Numeric => {
                    let first = data.rows[rows[0]][j].as_num();
                    rows.iter().all(|&i| data.rows[i][j].as_num() == first)
                }
                ColumnKind::Categorical => {
                    let first = data.rows[rows[0]][j].as_cat();
                    rows.iter().all(|&i| data.rows[i][j].as_cat() == first)
                }
            };
            if constant {
                continue; // z column stays zero; sigma picks up only the ridge
            }
            let tie_key =
                |i: usize| crate::seed::derive_seed(0x5eed_c0_97_1a, "tie-break", &[j as u64, i as u64]);
            let mut order: Vec<usize> = (0..r).collect();
            match effective_kind(data.schema[j].kind, j, data) {
                ColumnKind::Numeric => order.sort_by(|&a, &b| {
                    let va = data.rows[rows[a]][j].as_num();
                    let vb = data.rows[rows[b]][j].as_num();
                    va.partial_cmp(&vb).unwrap().then(tie_key(a).cmp(&tie_key(b)))
                }),
                ColumnKind::Categorical => order.sort_by(|&a, &b| {
                    let va = data.rows[rows[a]][j].as_cat();
                    let vb = data.rows[rows[b]][j].as_cat();
                    va.cmp(&vb).then(tie_key(a).cmp(&tie_key(b)))
                }),
            }
            for (rank, &i) in order.iter().enumerate() {
                let u = (rank as f64 + 0.5) / r as f64;
                z[(i, j)] = phi_inv(u);
            }
        }
        let mut sigma = DMatrix::zeros(d, d);
        for a in 0..d {
            let mean_a = z.column(a).mean();
            for b in a..d {
                let mean_b = z.column(b).mean();
                let cov = (0..r)
                    .map(|i| (z[(i, a)] - mean_a) * (z[(i, b)] - mean_b))
                    .sum::<f64>()
                    / r as f64;
                sigma[(a, b)] = cov;
                sigma[(b, a)] = cov;
            }
        }
        for k in 0..d {
            sigma[(k, k)] += SIGMA_RIDGE;
        }

        let factor = factorize(&sigma)?;
        Ok(CopulaModel { sigma, factor, ..model_stub })
    }

    /// Map one raw row into Gaussian space; every coordinate is finite thanks
    /// to the [1/(2r), 1 - 1/(2r)] clamp on the uniforms.
    pub fn transform_to_gaussian(&self, row: &[CellValue]) -> Result<Vec<f64>> {
        if row.len() != self.marginals.len() {
            return Err(Error::Data(format!(
                "row arity {} != model arity {}",
                row.len(),
                self.marginals.len()
            )));
        }
        let delta = 1.0 / (2.0 * self.n_fit_rows as f64);
        row.iter()
            .zip(&self.marginals)
            .map(|(cell, m)| {
                let u = m.to_uniform(cell)?.clamp(delta, 1.0 - delta);
                Ok(phi_inv(u))
            })
            .collect()
    }

    /// Draw `m` synthetic rows; deterministic in `seed`.
    pub fn sample_rows(&self, m: usize, seed: u64) -> Result<Vec<Vec<CellValue>>> {
        if m == 0 {
            return Err(Error::Data("sample count must be >= 1".into()));
        }
        let d = self.marginals.len();
        let delta = 1.0 / (2.0 * self.n_fit_rows as f64);
        let mut rng = stream_rng(seed, "copula-sample", &[]);
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            let xi = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let z = &self.factor * xi;
            let row: Vec<CellValue> = (0..d)
                .map(|j| {
                    let u = phi_cdf(z[j]).clamp(delta, 1.0 - delta);
                    self.marginals[j].from_uniform(u)
                })
                .collect();
            out.push(row);
        }
        Ok(out)
    }

    /// Versioned text form of the fitted model.
    pub fn to_json(&self) -> String {
        let d = self.sigma.nrows();
        serde_json::to_string(&CopulaDoc {
            version: 1,
            n_fit_rows: self.n_fit_rows,
            marginals: self.marginals.clone(),
            dim: d,
            sigma: self.sigma.as_slice().to_vec(),
            factor: self.factor.as_slice().to_vec(),
        })
        .expect("copula serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CopulaDoc = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad copula document: {e}")))?;
        if doc.version != 1 {
            return Err(Error::Config(format!("unsupported copula version {}", doc.version)));
        }
        Ok(CopulaModel {
            marginals: doc.marginals,
            sigma: DMatrix::from_column_slice(doc.dim, doc.dim, &doc.sigma),
            factor: DMatrix::from_column_slice(doc.dim, doc.dim, &doc.factor),
            n_fit_rows: doc.n_fit_rows,
        })
    }
}

/// Sensitive/label columns are bits regardless of the declared kind.
fn effective_kind(kind: ColumnKind, col: usize, data: &TabularDataset) -> ColumnKind {
    use crate::dataset::ColumnRole;
    match data.schema[col].role {
        ColumnRole::Feature => kind,
        _ => ColumnKind::Categorical,
    }
}

/// Cholesky with an eigenvalue-clipping fallback for near-singular matrices
/// (constant or duplicated one-hot columns produce those).
fn factorize(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = nalgebra::Cholesky::new(sigma.clone()) {
        return Ok(chol.l());
    }
    let eig = nalgebra::SymmetricEigen::new(sigma.clone());
    let mut lambda = eig.eigenvalues.clone();
    for v in lambda.iter_mut() {
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite eigenvalue in covariance".into()));
        }
        *v = v.max(SIGMA_RIDGE).sqrt();
    }
    let mut factor = eig.eigenvectors.clone();
    for (j, s) in lambda.iter().enumerate() {
        factor.column_mut(j).scale_mut(*s);
    }
    Ok(factor)
}

/// Whether a row came from real root data or was synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Root,
    Synthesized,
}

/// Root rows plus copula samples, in the original data space.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub data: TabularDataset,
    pub provenance: Vec<Provenance>,
}

impl SyntheticDataset {
    pub fn n_rows(&self) -> usize {
        self.data.row_count()
    }

    pub fn n_synthesized(&self) -> usize {
        self.provenance.iter().filter(|p| **p == Provenance::Synthesized).count()
    }

    /// Dump rows (with a provenance column) for inspection.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.data.schema.iter().map(|c| c.name.clone()).collect();
        header.push("provenance".into());
        w.write_record(&header)?;
        for (row, prov) in self.data.rows.iter().zip(&self.provenance) {
            let mut record: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, cell)| self.data.cell_to_string(j, cell))
                .collect();
            record.push(match prov {
                Provenance::Root => "root".into(),
                Provenance::Synthesized => "synthesized".into(),
            });
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Root rows plus `round(synth_fraction_of_total * total_train_size)` copula
/// samples fitted on those roots.
pub fn build_root_plus_synth(
    data: &TabularDataset,
    root_rows: &[usize],
    synth_fraction_of_total: f64,
    total_train_size: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    if root_rows.is_empty() {
        return Err(Error::Data("root set is empty".into()));
    }
    if !(0.0..1.0).contains(&synth_fraction_of_total) {
        return Err(Error::Config(format!(
            "synthetic fraction must be in [0,1), got {synth_fraction_of_total}"
        )));
    }
    let mut rows: Vec<Vec<CellValue>> = root_rows.iter().map(|&i| data.rows[i].clone()).collect();
    let mut provenance = vec![Provenance::Root; rows.len()];

    let m = (synth_fraction_of_total * total_train_size as f64).round() as usize;
    if m > 0 {
        let model = CopulaModel::fit(data, root_rows)?;
        let sampled = model.sample_rows(m, seed)?;
        provenance.extend(std::iter::repeat_n(Provenance::Synthesized, sampled.len()));
        rows.extend(sampled);
    }

    Ok(SyntheticDataset {
        data: TabularDataset {
            schema: data.schema.clone(),
            vocabs: data.vocabs.clone(),
            rows,
            dropped_rows: 0,
        },
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnRole, ColumnSchema};
    use approx::assert_abs_diff_eq;
    use rand::RngExt;

    fn numeric_ds(cols: Vec<Vec<f64>>) -> TabularDataset {
        let n = cols[0].len();
        let schema: Vec<ColumnSchema> = (0..cols.len())
            .map(|j| ColumnSchema {
                name: format!("c{j}"),
                kind: ColumnKind::Numeric,
                role: ColumnRole::Feature,
            })
            .collect();
        let rows: Vec<Vec<CellValue>> =
            (0..n).map(|i| cols.iter().map(|c| CellValue::Num(c[i])).collect()).collect();
        TabularDataset { schema, vocabs: vec![Vec::new(); cols.len()], rows, dropped_rows: 0 }
    }

    fn cat_ds(codes: Vec<u32>) -> TabularDataset {
        let schema = vec![ColumnSchema {
            name: "c0".into(),
            kind: ColumnKind::Categorical,
            role: ColumnRole::Feature,
        }];
        let vocab: Vec<String> = (0..=codes.iter().max().copied().unwrap_or(0))
            .map(|c| format!("cat{c}"))
            .collect();
        let rows = codes.into_iter().map(|c| vec![CellValue::Cat(c)]).collect();
        TabularDataset { schema, vocabs: vec![vocab], rows, dropped_rows: 0 }
    }

    fn all_rows(ds: &TabularDataset) -> Vec<usize> {
        (0..ds.row_count()).collect()
    }

    fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
        let vx = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>() / n;
        let vy = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>() / n;
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn perfectly_correlated_pair_has_high_sigma_correlation() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let ds = numeric_ds(vec![x, y]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let corr = model.sigma[(0, 1)] / (model.sigma[(0, 0)] * model.sigma[(1, 1)]).sqrt();
        assert!(corr >= 0.99, "corr {corr}");
    }

    #[test]
    fn constant_column_degenerates_cleanly() {
        let ds = numeric_ds(vec![vec![3.5; 50]]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        assert_abs_diff_eq!(model.sigma[(0, 0)], SIGMA_RIDGE, epsilon = 1e-12);
        let samples = model.sample_rows(20, 1).unwrap();
        assert!(samples.iter().all(|r| r[0].as_num() == 3.5));
        // Gaussianized constant is exactly zero.
        let z = model.transform_to_gaussian(&ds.rows[0]).unwrap();
        assert_abs_diff_eq!(z[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn independent_columns_have_low_correlation() {
        let mut rng = stream_rng(5, "test-indep", &[]);
        let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let ds = numeric_ds(vec![x, y]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let corr = model.sigma[(0, 1)] / (model.sigma[(0, 0)] * model.sigma[(1, 1)]).sqrt();
        assert!(corr.abs() <= 0.1, "corr {corr}");
    }

    #[test]
    fn median_maps_near_zero() {
        let x: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let ds = numeric_ds(vec![x]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let z = model.transform_to_gaussian(&[CellValue::Num(50.0)]).unwrap();
        assert!(z[0].abs() <= 0.05, "z {}", z[0]);
    }

    #[test]
    fn minimum_maps_to_clamp_bound() {
        let x: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let r = x.len() as f64;
        let ds = numeric_ds(vec![x]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let z = model.transform_to_gaussian(&[CellValue::Num(0.0)]).unwrap();
        assert!(z[0].is_finite());
        assert_abs_diff_eq!(z[0], phi_inv(1.0 / (2.0 * r)), epsilon = 1e-12);
    }

    #[test]
    fn category_spanning_center_maps_to_zero() {
        // Frequencies 25% / 50% / 25%: the middle category's span midpoint
        // sits exactly at 0.5.
        let mut codes = vec![0u32; 25];
        codes.extend(vec![1u32; 50]);
        codes.extend(vec![2u32; 25]);
        let ds = cat_ds(codes);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let z = model.transform_to_gaussian(&[CellValue::Cat(1)]).unwrap();
        assert_abs_diff_eq!(z[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sampled_standard_normal_moments() {
        let mut rng = stream_rng(7, "test-normal", &[]);
        let x: Vec<f64> = (0..1000)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g
            })
            .collect();
        let ds = numeric_ds(vec![x]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let samples = model.sample_rows(1000, 3).unwrap();
        let vals: Vec<f64> = samples.iter().map(|r| r[0].as_num()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / vals.len() as f64)
            .sqrt();
        assert!((-0.15..=0.15).contains(&mean), "mean {mean}");
        assert!((0.85..=1.15).contains(&std), "std {std}");
    }

    #[test]
    fn sampled_pair_keeps_correlation() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let ds = numeric_ds(vec![x, y]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let samples = model.sample_rows(1000, 9).unwrap();
        let xs: Vec<f64> = samples.iter().map(|r| r[0].as_num()).collect();
        let ys: Vec<f64> = samples.iter().map(|r| r[1].as_num()).collect();
        let corr = pearson(&xs, &ys);
        assert!(corr >= 0.9, "corr {corr}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let x: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        let ds = numeric_ds(vec![x]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let a = model.sample_rows(50, 4).unwrap();
        let b = model.sample_rows(50, 4).unwrap();
        assert_eq!(a, b);
        let c = model.sample_rows(50, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn samples_stay_in_root_range_and_vocab() {
        let x: Vec<f64> = (0..80).map(|i| 10.0 + (i as f64).cos() * 3.0).collect();
        let (lo, hi) = x.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let ds = numeric_ds(vec![x]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        for row in model.sample_rows(500, 8).unwrap() {
            let v = row[0].as_num();
            assert!(v >= lo && v <= hi);
        }

        let cat = cat_ds(vec![0, 0, 2, 2, 2, 5, 5, 5, 5, 5]);
        let model = CopulaModel::fit(&cat, &all_rows(&cat)).unwrap();
        for row in model.sample_rows(300, 8).unwrap() {
            assert!([0u32, 2, 5].contains(&row[0].as_cat()));
        }
    }

    #[test]
    fn roundtrip_recovers_distinct_values() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 1.7 - 3.0).collect();
        let ds = numeric_ds(vec![x]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        for row in &ds.rows {
            let z = model.transform_to_gaussian(row).unwrap();
            let u = phi_cdf(z[0]);
            let back = model.marginals[0].from_uniform(u);
            assert_abs_diff_eq!(back.as_num(), row[0].as_num(), epsilon = 1e-9);
        }
    }

    #[test]
    fn marginal_fidelity_ks_and_categories() {
        // Numeric column: two-sample KS between root and synthetic.
        let mut rng = stream_rng(13, "test-ks", &[]);
        let root: Vec<f64> = (0..400)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * 2.0 + 5.0
            })
            .collect();
        let ds = numeric_ds(vec![root.clone()]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let synth: Vec<f64> = model
            .sample_rows(2000, 21)
            .unwrap()
            .into_iter()
            .map(|r| r[0].as_num())
            .collect();
        let ks = ks_statistic(&root, &synth);
        assert!(ks <= 0.08, "ks {ks}");

        // Categorical column: per-category frequency drift.
        let mut codes = vec![0u32; 300];
        codes.extend(vec![1u32; 150]);
        codes.extend(vec![2u32; 50]);
        let cat = cat_ds(codes.clone());
        let model = CopulaModel::fit(&cat, &all_rows(&cat)).unwrap();
        let samples = model.sample_rows(2000, 22).unwrap();
        for c in 0..3u32 {
            let root_freq =
                codes.iter().filter(|&&k| k == c).count() as f64 / codes.len() as f64;
            if root_freq < 0.05 {
                continue;
            }
            let synth_freq = samples.iter().filter(|r| r[0].as_cat() == c).count() as f64
                / samples.len() as f64;
            assert!(
                (root_freq - synth_freq).abs() <= 0.05,
                "cat {c}: {root_freq} vs {synth_freq}"
            );
        }
    }

    fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
        let mut sa = a.to_vec();
        let mut sb = b.to_vec();
        sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut points: Vec<f64> = sa.iter().chain(sb.iter()).copied().collect();
        points.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut worst = 0.0f64;
        for p in points {
            let fa = sa.partition_point(|v| *v <= p) as f64 / sa.len() as f64;
            let fb = sb.partition_point(|v| *v <= p) as f64 / sb.len() as f64;
            worst = worst.max((fa - fb).abs());
        }
        worst
    }

    #[test]
    fn build_root_plus_synth_counts() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ds = numeric_ds(vec![x]);
        let root: Vec<usize> = all_rows(&ds);

        let out = build_root_plus_synth(&ds, &root, 0.04, 10_000, 2).unwrap();
        assert_eq!(out.n_rows(), 100 + 400);
        assert_eq!(out.n_synthesized(), 400);

        let out = build_root_plus_synth(&ds, &root, 0.0, 10_000, 2).unwrap();
        assert_eq!(out.n_rows(), 100);
        assert_eq!(out.n_synthesized(), 0);

        let out = build_root_plus_synth(&ds, &root, 0.09, 10_000, 2).unwrap();
        assert_eq!(out.n_rows(), 100 + 900);
    }

    #[test]
    fn copula_json_roundtrip() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| -v + 7.0).collect();
        let ds = numeric_ds(vec![x, y]);
        let model = CopulaModel::fit(&ds, &all_rows(&ds)).unwrap();
        let rt = CopulaModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model.sigma, rt.sigma);
        assert_eq!(model.sample_rows(10, 3).unwrap(), rt.sample_rows(10, 3).unwrap());
    }

    #[test]
    fn export_csv_includes_provenance() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let ds = numeric_ds(vec![x]);
        let out = build_root_plus_synth(&ds, &all_rows(&ds), 0.1, 100, 4).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        out.export_csv(tmp.path()).unwrap();
        let text = std::fs::read_to_string(tmp.path()).unwrap();
        assert!(text.starts_with("c0,provenance"));
        assert!(text.contains("synthesized"));
        assert_eq!(text.lines().count(), 1 + 30 + 10);
    }
}
