//! Server-side aggregation strategies.
//!
//! Besides the plain baselines (size-weighted FedAvg, coordinate-wise
//! median, an FLTrust-style cosine reweighting), this module implements the
//! trust-scored selective aggregator: the server keeps a synthetic dataset,
//! trains a fairness-aware reference model on it each round with
//! group/label reweighting, and scores every client update by
//!
//! * a deviation index — ReLU-clipped cosine similarity against the
//!   reference update, and
//! * a fairness index — the equal-opportunity gap of the client's model on
//!   the synthetic data,
//!
//! combined as `trust = dev * exp(-tau * fair)`. Only clients whose trust
//! exceeds the threshold join an unweighted mean step.

use serde::{Deserialize, Serialize};

use crate::dataset::ModelData;
use crate::error::{Error, Result};
use crate::metrics;
use crate::nn::{self, MlpModel, TrainConfig, UpdateVector};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Size-weighted average of client updates applied to the base model.
pub fn fedavg(
    base: &MlpModel,
    updates: &[UpdateVector],
    sizes: &[usize],
    eta: f64,
) -> Result<MlpModel> {
    if updates.is_empty() {
        return Err(Error::Aggregation("no updates to aggregate".into()));
    }
    if updates.len() != sizes.len() {
        return Err(Error::Aggregation(format!(
            "{} updates but {} dataset sizes",
            updates.len(),
            sizes.len()
        )));
    }
    let len = updates[0].len();
    // Reduce sizes by their gcd: same weighting, and equal sizes become the
    // exact unweighted mean (weight 1.0 multiplications are lossless).
    let g = sizes.iter().fold(0usize, |acc, &s| gcd(acc, s));
    if g == 0 {
        return Err(Error::Aggregation("dataset sizes sum to zero".into()));
    }
    let total: f64 = sizes.iter().map(|&s| (s / g) as f64).sum();
    let mut acc = vec![0.0; len];
    for (u, &s) in updates.iter().zip(sizes) {
        if u.len() != len {
            return Err(Error::Aggregation("update length mismatch".into()));
        }
        let w = (s / g) as f64;
        for (a, v) in acc.iter_mut().zip(&u.values) {
            *a += w * v;
        }
    }
    for a in acc.iter_mut() {
        *a /= total;
    }
    MlpModel::apply_update(base, &UpdateVector { values: acc }, eta)
}

/// Coordinate-wise median; an even count takes the mean of the two middle
/// values.
pub fn coordinate_median(updates: &[UpdateVector]) -> Result<UpdateVector> {
    if updates.is_empty() {
        return Err(Error::Aggregation("no updates to aggregate".into()));
    }
    let len = updates[0].len();
    if updates.iter().any(|u| u.len() != len) {
        return Err(Error::Aggregation("update length mismatch".into()));
    }
    let n = updates.len();
    let mut column = vec![0.0; n];
    let mut out = vec![0.0; len];
    for (j, o) in out.iter_mut().enumerate() {
        for (i, u) in updates.iter().enumerate() {
            column[i] = u.values[j];
        }
        let mid = n / 2;
        let (_, upper_mid, _) =
            column.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
        let hi = *upper_mid;
        *o = if n % 2 == 1 {
            hi
        } else {
            let (_, lower_mid, _) =
                column.select_nth_unstable_by(mid - 1, |a, b| a.partial_cmp(b).unwrap());
            (*lower_mid + hi) / 2.0
        };
    }
    Ok(UpdateVector { values: out })
}

/// FLTrust-style baseline: clients are weighted by the ReLU-clipped cosine
/// against a server update and rescaled to its norm before averaging. A
/// round where every weight clips to zero leaves the model unchanged.
pub fn fltrust_baseline(
    base: &MlpModel,
    updates: &[UpdateVector],
    server_update: &UpdateVector,
    eta: f64,
) -> Result<MlpModel> {
    let s_norm = server_update.norm();
    if s_norm == 0.0 {
        return Err(Error::Aggregation("server reference update is zero".into()));
    }
    let len = server_update.len();
    let mut acc = vec![0.0; len];
    let mut weight_sum = 0.0;
    for u in updates {
        if u.len() != len {
            return Err(Error::Aggregation("update length mismatch".into()));
        }
        let n = u.norm();
        if n == 0.0 {
            continue;
        }
        let cos = u.dot(server_update) / (n * s_norm);
        let w = cos.max(0.0);
        if w == 0.0 {
            continue;
        }
        let rescale = s_norm / n;
        for (a, v) in acc.iter_mut().zip(&u.values) {
            *a += w * rescale * v;
        }
        weight_sum += w;
    }
    if weight_sum == 0.0 {
        return Ok(base.clone());
    }
    for a in acc.iter_mut() {
        *a /= weight_sum;
    }
    MlpModel::apply_update(base, &UpdateVector { values: acc }, eta)
}

/// Reweighting that makes the sensitive bit statistically independent of the
/// label: w(a, y) = Pr(a) * Pr(y) / Pr(a, y) from empirical counts.
pub fn compute_reweights(sensitive: &[u8], labels: &[u8]) -> Result<Vec<f64>> {
    let n = sensitive.len();
    if n == 0 || labels.len() != n {
        return Err(Error::Data("reweighting needs aligned, non-empty bits".into()));
    }
    let mut cell = [[0usize; 2]; 2];
    for (&a, &y) in sensitive.iter().zip(labels) {
        cell[a as usize][y as usize] += 1;
    }
    for a in 0..2 {
        for y in 0..2 {
            if cell[a][y] == 0 {
                return Err(Error::Data(format!(
                    "(a={a}, y={y}) cell is empty; reweighting undefined — sample more synthetic rows"
                )));
            }
        }
    }
    let nf = n as f64;
    let pa = [
        (cell[0][0] + cell[0][1]) as f64 / nf,
        (cell[1][0] + cell[1][1]) as f64 / nf,
    ];
    let py = [
        (cell[0][0] + cell[1][0]) as f64 / nf,
        (cell[0][1] + cell[1][1]) as f64 / nf,
    ];
    let w = |a: usize, y: usize| pa[a] * py[y] / (cell[a][y] as f64 / nf);
    Ok(sensitive
        .iter()
        .zip(labels)
        .map(|(&a, &y)| w(a as usize, y as usize))
        .collect())
}

/// Server-held state backing the trust-scored aggregator.
#[derive(Debug, Clone)]
pub struct GuardFedState {
    /// Encoded synthetic dataset (root + copula samples).
    pub synth: ModelData,
    /// Per-sample reweighting for reference training.
    pub weights: Vec<f64>,
    /// Fairness penalty strength in the trust score.
    pub tau: f64,
    /// Selection threshold on the trust score.
    pub gamma: f64,
    /// Local-training hyperparameters reused for the reference model
    /// (the per-round seed is supplied by the caller).
    pub ref_cfg: TrainConfig,
}

impl GuardFedState {
    pub fn new(synth: ModelData, tau: f64, gamma: f64, ref_cfg: TrainConfig) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
        }
        let weights = compute_reweights(&synth.sensitive, &synth.labels)?;
        Ok(Self { synth, weights, tau, gamma, ref_cfg })
    }
}

/// Train the fairness-aware reference model from the current global model
/// and return it with its update.
pub fn train_reference(
    state: &GuardFedState,
    base: &MlpModel,
    seed: u64,
) -> Result<(MlpModel, UpdateVector)> {
    let cfg = TrainConfig { seed, ..state.ref_cfg.clone() };
    let reference = nn::train_local(
        base,
        &state.synth.inputs,
        &state.synth.labels,
        Some(&state.weights),
        &cfg,
    )?;
    let update = MlpModel::compute_update(&reference, base)?;
    Ok((reference, update))
}

/// ReLU-clipped cosine similarity against the reference update. A zero
/// client update scores 0 (cosine undefined, never selected); a zero
/// reference update is an error.
pub fn deviation_index(g_n: &UpdateVector, g_s: &UpdateVector) -> Result<f64> {
    if g_n.len() != g_s.len() {
        return Err(Error::Aggregation(format!(
            "update length {} != reference length {}",
            g_n.len(),
            g_s.len()
        )));
    }
    let s_norm = g_s.norm();
    if s_norm == 0.0 {
        return Err(Error::Aggregation("reference update is zero".into()));
    }
    let n_norm = g_n.norm();
    if n_norm == 0.0 {
        return Ok(0.0);
    }
    Ok((g_n.dot(g_s) / (n_norm * s_norm)).max(0.0))
}

/// `dev * exp(-tau * fair)`: deviation gated by an exponential fairness
/// penalty; stable under small fairness fluctuations, sharp under large ones.
pub fn trust_score(dev: f64, fair: f64, tau: f64) -> f64 {
    dev * (-tau * fair).exp()
}

/// One client's scoring outcome for a round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientTrust {
    pub client: usize,
    pub fair: f64,
    /// True when the fairness index was undefined and pinned to 1.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fair_undefined: bool,
    pub dev: f64,
    pub trust: f64,
    pub selected: bool,
}

/// Scoring record for every client of one aggregation round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrustReport {
    pub round: usize,
    pub clients: Vec<ClientTrust>,
    /// Set when no client cleared the threshold and the round was skipped.
    pub empty_selection: bool,
}

/// Score clients with hand-supplied indices and pick the trusted set.
/// Factored out so the selection rule is testable in isolation.
pub fn score_and_select(
    client_ids: &[usize],
    devs: &[f64],
    fairs: &[(f64, bool)],
    tau: f64,
    gamma: f64,
    round: usize,
) -> TrustReport {
    let clients: Vec<ClientTrust> = client_ids
        .iter()
        .zip(devs)
        .zip(fairs)
        .map(|((&client, &dev), &(fair, fair_undefined))| {
            let trust = trust_score(dev, fair, tau);
            ClientTrust { client, fair, fair_undefined, dev, trust, selected: trust > gamma }
        })
        .collect();
    let empty_selection = clients.iter().all(|c| !c.selected);
    TrustReport { round, clients, empty_selection }
}

/// Full trust-scored aggregation round.
///
/// Computes the reference update, scores every client, and applies an
/// unweighted mean over the selected set. An empty selection leaves the
/// model unchanged and flags the round.
pub fn guardfed_round(
    state: &GuardFedState,
    base: &MlpModel,
    client_ids: &[usize],
    updates: &[UpdateVector],
    eta: f64,
    round: usize,
    ref_seed: u64,
) -> Result<(MlpModel, TrustReport)> {
    if updates.is_empty() {
        return Err(Error::Aggregation("no updates to aggregate".into()));
    }
    if updates.len() != client_ids.len() {
        return Err(Error::Aggregation("client id / update count mismatch".into()));
    }
    let (_, g_s) = train_reference(state, base, ref_seed)?;

    let mut devs = Vec::with_capacity(updates.len());
    let mut fairs = Vec::with_capacity(updates.len());
    for g_n in updates {
        devs.push(deviation_index(g_n, &g_s)?);
        // A client whose model cannot be fairness-audited gets the maximal
        // index (never trusted by default).
        let fair = if g_n.is_finite() {
            let model_n = MlpModel::apply_update(base, g_n, 1.0)?;
            match metrics::fairness_index(&model_n, &state.synth) {
                Ok(v) => (v, false),
                Err(Error::UndefinedMetric(_)) => (1.0, true),
                Err(e) => return Err(e),
            }
        } else {
            (1.0, true)
        };
        fairs.push(fair);
    }

    let report = score_and_select(client_ids, &devs, &fairs, state.tau, state.gamma, round);
    if report.empty_selection {
        return Ok((base.clone(), report));
    }

    let len = updates[0].len();
    let mut acc = vec![0.0; len];
    let mut count = 0usize;
    for (c, u) in report.clients.iter().zip(updates) {
        if c.selected {
            for (a, v) in acc.iter_mut().zip(&u.values) {
                *a += v;
            }
            count += 1;
        }
    }
    for a in acc.iter_mut() {
        *a /= count as f64;
    }
    let new_model = MlpModel::apply_update(base, &UpdateVector { values: acc }, eta)?;
    Ok((new_model, report))
}
