//! Bundled synthetic benchmark generators.
//!
//! Real recidivism/income datasets are user-supplied (licensing varies), so
//! the repo ships deterministic stand-in generators shaped like them: a
//! recidivism-style table (`compas_like`) and an income-style table
//! (`adult_like`). Both embed a confounded score column `z - c*a` while the
//! label depends only on the latent `z`, so a well-trained model carries a
//! real coefficient on the sensitive bit yet shows (near-)zero group gaps —
//! until an attacker flips `a` and drags that coefficient the wrong way.
//!
//! Scale constants are chosen so the Bayes accuracy sits near the high 60s
//! (recidivism-style) and high 80s (income-style).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    CompasLike,
    AdultLike,
}

impl BenchmarkKind {
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkKind::CompasLike => "compas_like",
            BenchmarkKind::AdultLike => "adult_like",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "compas_like" | "compas-like" => Some(BenchmarkKind::CompasLike),
            "adult_like" | "adult-like" => Some(BenchmarkKind::AdultLike),
            _ => None,
        }
    }

    /// Accuracy threshold under which fairness numbers are not meaningful
    /// for this task.
    pub fn accuracy_threshold(&self) -> f64 {
        match self {
            BenchmarkKind::CompasLike => 0.60,
            BenchmarkKind::AdultLike => 0.80,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// CSV text of the benchmark table.
pub fn benchmark_csv(kind: BenchmarkKind, rows: usize, seed: u64) -> String {
    let mut rng = stream_rng(seed, "benchmark", &[kind as u64]);
    let mut out = String::new();

    match kind {
        BenchmarkKind::CompasLike => {
            const K: f64 = 1.05;
            const CONFOUND: f64 = 0.25;
            out.push_str("age,priors_count,charge_degree,risk_score,race_group,outcome\n");
            for _ in 0..rows {
                let a = f64::from(rng.random::<f64>() < 0.45);
                let age = (35.0 + 12.0 * normal(&mut rng)).clamp(18.0, 75.0).round();
                let priors = ((normal(&mut rng).abs()) * 2.5).floor().clamp(0.0, 20.0);
                let felony = f64::from(rng.random::<f64>() < 0.4);
                let risk = round3(normal(&mut rng) - CONFOUND * a);
                let u = -0.25 * (age - 35.0) / 12.0 + 0.55 * (priors - 2.0) / 2.5
                    + 0.45 * felony;
                let logit = K * (u + risk + CONFOUND * a);
                let y = u8::from(rng.random::<f64>() < sigmoid(logit));
                let charge = if felony == 1.0 { "felony" } else { "misdemeanor" };
                let group = if a == 1.0 { "groupB" } else { "groupA" };
                writeln!(out, "{age},{priors},{charge},{risk},{group},{y}").unwrap();
            }
        }
        BenchmarkKind::AdultLike => {
            const K: f64 = 3.5;
            const CONFOUND: f64 = 1.0;
            const B0: f64 = -0.7;
            out.push_str(
                "age,education_num,hours_per_week,workclass,marital_status,asset_index,gender,income\n",
            );
            for _ in 0..rows {
                let a = f64::from(rng.random::<f64>() < 0.47); // 1 = Female
                let age = (38.0 + 12.0 * normal(&mut rng)).clamp(17.0, 80.0).round();
                let edu = (10.0 + 2.5 * normal(&mut rng)).round().clamp(1.0, 16.0);
                let hours = (40.0 + 10.0 * normal(&mut rng)).round().clamp(5.0, 80.0);
                let wk_draw: f64 = rng.random();
                let (wk, wk_term) = if wk_draw < 0.70 {
                    ("private", 0.0)
                } else if wk_draw < 0.85 {
                    ("government", 0.1)
                } else {
                    ("self_employed", 0.25)
                };
                let mar_draw: f64 = rng.random();
                let (marital, mar_term) = if mar_draw < 0.48 {
                    ("married", 1.0)
                } else if mar_draw < 0.83 {
                    ("never_married", 0.0)
                } else {
                    ("divorced", 0.0)
                };
                let asset = round3(normal(&mut rng) - CONFOUND * a);
                let u = 0.3 * (age - 38.0) / 12.0
                    + 0.7 * (edu - 10.0) / 2.5
                    + 0.45 * (hours - 40.0) / 10.0
                    + wk_term
                    + mar_term;
                let logit = K * (u + asset + CONFOUND * a + B0);
                let y = u8::from(rng.random::<f64>() < sigmoid(logit));
                let gender = if a == 1.0 { "Female" } else { "Male" };
                let income = if y == 1 { ">50K" } else { "<=50K" };
                writeln!(
                    out,
                    "{age},{edu},{hours},{wk},{marital},{asset},{gender},{income}"
                )
                .unwrap();
            }
        }
    }
    out
}

/// TOML manifest describing the benchmark CSV.
pub fn benchmark_manifest(kind: BenchmarkKind) -> String {
    match kind {
        BenchmarkKind::CompasLike => r#"name = "compas_like"
csv = "compas_like.csv"

[[columns]]
name = "age"
kind = "numeric"
role = "feature"

[[columns]]
name = "priors_count"
kind = "numeric"
role = "feature"

[[columns]]
name = "charge_degree"
kind = "categorical"
role = "feature"

[[columns]]
name = "risk_score"
kind = "numeric"
role = "feature"

[[columns]]
name = "race_group"
kind = "categorical"
role = "sensitive"

[[columns]]
name = "outcome"
kind = "categorical"
role = "label"

[sensitive]
positive_value = "groupB"

[label]
positive_value = "1"
"#
        .to_string(),
        BenchmarkKind::AdultLike => r#"name = "adult_like"
csv = "adult_like.csv"

[[columns]]
name = "age"
kind = "numeric"
role = "feature"

[[columns]]
name = "education_num"
kind = "numeric"
role = "feature"

[[columns]]
name = "hours_per_week"
kind = "numeric"
role = "feature"

[[columns]]
name = "workclass"
kind = "categorical"
role = "feature"

[[columns]]
name = "marital_status"
kind = "categorical"
role = "feature"

[[columns]]
name = "asset_index"
kind = "numeric"
role = "feature"

[[columns]]
name = "gender"
kind = "categorical"
role = "sensitive"

[[columns]]
name = "income"
kind = "categorical"
role = "label"

[sensitive]
positive_value = "Female"

[label]
positive_value = ">50K"
"#
        .to_string(),
    }
}

/// Write `<name>.csv` and `<name>.toml` into `dir`; returns the manifest path.
pub fn write_benchmark(
    dir: &Path,
    kind: BenchmarkKind,
    rows: usize,
    seed: u64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", kind.name()));
    let manifest_path = dir.join(format!("{}.toml", kind.name()));
    std::fs::write(&csv_path, benchmark_csv(kind, rows, seed))?;
    std::fs::write(&manifest_path, benchmark_manifest(kind))?;
    Ok(manifest_path)
}
