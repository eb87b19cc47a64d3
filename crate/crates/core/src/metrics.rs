//! Accuracy and group-fairness metrics, plus the accuracy-gated validity rule.
//!
//! The two fairness gaps are absolute differences of empirical rates across
//! the binary sensitive groups: positive-prediction rates (ASPD) and true
//! positive rates (AEOD). A model that has collapsed can look perfectly fair,
//! so reports carry a `fairness_valid` flag that is true only when accuracy
//! clears the task threshold.

use serde::{Deserialize, Serialize};

use crate::dataset::ModelData;
use crate::error::{Error, Result};
use crate::nn::MlpModel;

/// Per-group prediction/label counts backing the fairness metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupConfusion {
    pub predicted_positive: [usize; 2],
    pub positives: [usize; 2],
    pub true_positives: [usize; 2],
    pub total: [usize; 2],
}

impl GroupConfusion {
    /// Count predictions against labels, grouped by the sensitive bit.
    pub fn tally(predictions: &[u8], data: &ModelData) -> Self {
        let mut c = GroupConfusion::default();
        for ((&p, &a), &y) in predictions.iter().zip(&data.sensitive).zip(&data.labels) {
            let g = a as usize;
            c.total[g] += 1;
            if p == 1 {
                c.predicted_positive[g] += 1;
            }
            if y == 1 {
                c.positives[g] += 1;
                if p == 1 {
                    c.true_positives[g] += 1;
                }
            }
        }
        c
    }
}

/// Fraction of rows where the argmax prediction (ties toward class 0)
/// matches the label.
pub fn accuracy(model: &MlpModel, data: &ModelData) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(Error::Data("empty evaluation data".into()));
    }
    let preds = model.predict(&data.inputs)?;
    let hits = preds.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.n_rows() as f64)
}

/// Absolute gap in positive-prediction rates between the sensitive groups.
pub fn aspd(model: &MlpModel, data: &ModelData) -> Result<f64> {
    let preds = model.predict(&data.inputs)?;
    let c = GroupConfusion::tally(&preds, data);
    aspd_from_confusion(&c)
}

pub fn aspd_from_confusion(c: &GroupConfusion) -> Result<f64> {
    for g in 0..2 {
        if c.total[g] == 0 {
            return Err(Error::UndefinedMetric(format!(
                "sensitive group a={g} absent; positive-rate gap undefined"
            )));
        }
    }
    let r0 = c.predicted_positive[0] as f64 / c.total[0] as f64;
    let r1 = c.predicted_positive[1] as f64 / c.total[1] as f64;
    Ok((r0 - r1).abs())
}

/// Absolute gap in true-positive rates between the sensitive groups.
pub fn aeod(model: &MlpModel, data: &ModelData) -> Result<f64> {
    let preds = model.predict(&data.inputs)?;
    let c = GroupConfusion::tally(&preds, data);
    aeod_from_confusion(&c)
}

pub fn aeod_from_confusion(c: &GroupConfusion) -> Result<f64> {
    for g in 0..2 {
        if c.positives[g] == 0 {
            return Err(Error::UndefinedMetric(format!(
                "sensitive group a={g} has no positive labels; TPR gap undefined"
            )));
        }
    }
    let t0 = c.true_positives[0] as f64 / c.positives[0] as f64;
    let t1 = c.true_positives[1] as f64 / c.positives[1] as f64;
    Ok((t0 - t1).abs())
}

/// Per-client fairness index: the equal-opportunity gap of the client's model
/// evaluated on the server's synthetic dataset. Higher means less fair.
pub fn fairness_index(model: &MlpModel, synth: &ModelData) -> Result<f64> {
    aeod(model, synth)
}

/// One model evaluation: accuracy, both fairness gaps, and the validity gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` when the gap is undefined on this data (an absent group cell).
    pub aspd: Option<f64>,
    pub aeod: Option<f64>,
    /// Messages explaining any undefined metric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metric_errors: Vec<String>,
    pub accuracy_threshold: f64,
    /// Fairness numbers are meaningful only above the accuracy threshold.
    pub fairness_valid: bool,
}

/// Compose accuracy + fairness metrics and apply the validity gate.
pub fn evaluate(model: &MlpModel, data: &ModelData, accuracy_threshold: f64) -> Result<EvalReport> {
    let acc = accuracy(model, data)?;
    let preds = model.predict(&data.inputs)?;
    let c = GroupConfusion::tally(&preds, data);
    let mut metric_errors = Vec::new();
    let aspd = match aspd_from_confusion(&c) {
        Ok(v) => Some(v),
        Err(e) => {
            metric_errors.push(e.to_string());
            None
        }
    };
    let aeod = match aeod_from_confusion(&c) {
        Ok(v) => Some(v),
        Err(e) => {
            metric_errors.push(e.to_string());
            None
        }
    };
    Ok(EvalReport {
        accuracy: acc,
        aspd,
        aeod,
        metric_errors,
        accuracy_threshold,
        fairness_valid: acc >= accuracy_threshold,
    })
}
