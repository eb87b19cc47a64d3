//! Adversarial client behaviors: sensitive-attribute flipping, Gaussian
//! update noise, scaled-mean (FOE-style) updates, and the dual-facet
//! combinations that target fairness and utility at once.
//!
//! An attack has two stages. The data stage happens before local training
//! (flipping `a` in the attacker's copy of its data); the update stage
//! happens after (adding noise, or replacing the update with a scaled mean
//! of the honest-looking updates visible to the colluding set). The round
//! loop computes every locally-trained update first, hands that set to the
//! update stage, and only then finalizes malicious updates.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::ModelData;
use crate::error::{Error, Result};
use crate::nn::{self, MlpModel, TrainConfig, UpdateVector};
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    /// Flip the sensitive attribute in local training data.
    FlipFair,
    /// Add Gaussian noise to the local update.
    GaussPerf,
    /// Emit a scaled coordinate-wise mean of the visible updates.
    FoePerf,
    /// Every attacker runs both the fairness and the performance attack.
    SDfa,
    /// Attackers split into a fairness subgroup and a performance subgroup.
    SpDfa,
}

/// Which performance primitive dual-facet attackers use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerfMode {
    Gauss,
    Foe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub kind: AttackKind,
    /// Std-dev of the Gaussian update noise.
    pub sigma: f64,
    /// Scale of the FOE mean; negative values flip the update direction.
    pub lambda: f64,
    /// Fraction of split-attack clients assigned to the fairness subgroup.
    pub split_ratio: f64,
    /// Performance primitive for the dual-facet kinds.
    pub perf_mode: PerfMode,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            sigma: 0.5,
            lambda: 1.1,
            split_ratio: 0.5,
            perf_mode: PerfMode::Foe,
        }
    }
}

impl AdversarySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.lambda == 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be nonzero and finite, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(Error::Config(format!(
                "split_ratio must be in [0,1], got {}",
                self.split_ratio
            )));
        }
        Ok(())
    }

    fn effective_perf_mode(&self) -> PerfMode {
        match self.kind {
            AttackKind::GaussPerf => PerfMode::Gauss,
            AttackKind::FoePerf => PerfMode::Foe,
            _ => self.perf_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    FairnessAttacker,
    PerformanceAttacker,
    Dual,
}

impl Role {
    /// Whether this role trains on attribute-flipped data.
    pub fn trains_on_flipped(&self) -> bool {
        matches!(self, Role::FairnessAttacker | Role::Dual)
    }

    /// Whether this role perturbs or replaces its update afterwards.
    pub fn attacks_update(&self) -> bool {
        matches!(self, Role::PerformanceAttacker | Role::Dual)
    }
}

/// Malicious client id -> role for one experiment (or one round, under
/// per-round attacker marking).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoleAssignment {
    map: BTreeMap<usize, Role>,
}

impl RoleAssignment {
    pub fn get(&self, client: usize) -> Option<Role> {
        self.map.get(&client).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Role)> + '_ {
        self.map.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Assign attack roles to the malicious ids. Split attacks shuffle the ids
/// (seeded) and send `round(split_ratio * n)` of them to the fairness
/// subgroup; the subgroups are disjoint and cover all ids.
pub fn assign_roles(malicious: &[usize], spec: &AdversarySpec, seed: u64) -> RoleAssignment {
    let mut map = BTreeMap::new();
    match spec.kind {
        AttackKind::None => {}
        AttackKind::FlipFair => {
            for &id in malicious {
                map.insert(id, Role::FairnessAttacker);
            }
        }
        AttackKind::GaussPerf | AttackKind::FoePerf => {
            for &id in malicious {
                map.insert(id, Role::PerformanceAttacker);
            }
        }
        AttackKind::SDfa => {
            for &id in malicious {
                map.insert(id, Role::Dual);
            }
        }
        AttackKind::SpDfa => {
            let mut ids = malicious.to_vec();
            ids.sort_unstable();
            let mut rng = stream_rng(seed, "role-split", &[]);
            ids.shuffle(&mut rng);
            let n_fair = (spec.split_ratio * ids.len() as f64).round() as usize;
            for (i, id) in ids.into_iter().enumerate() {
                let role = if i < n_fair {
                    Role::FairnessAttacker
                } else {
                    Role::PerformanceAttacker
                };
                map.insert(id, role);
            }
        }
    }
    RoleAssignment { map }
}

/// Replace the sensitive bit with its complement. Feature columns and labels
/// are untouched; the appended sensitive input column flips with the bit.
pub fn flip_sensitive(data: &ModelData) -> ModelData {
    let mut flipped = data.clone();
    let last = flipped.input_dim() - 1;
    for (i, a) in flipped.sensitive.iter_mut().enumerate() {
        *a = 1 - *a;
        flipped.inputs[[i, last]] = 1.0 - flipped.inputs[[i, last]];
    }
    flipped
}

/// Element-wise Gaussian noise; `sigma = 0` is the exact identity.
pub fn inject_noise(g: &UpdateVector, sigma: f64, seed: u64) -> UpdateVector {
    if sigma == 0.0 {
        return g.clone();
    }
    let mut rng = stream_rng(seed, "update-noise", &[]);
    UpdateVector {
        values: g
            .values
            .iter()
            .map(|v| {
                let delta: f64 = StandardNormal.sample(&mut rng);
                v + sigma * delta
            })
            .collect(),
    }
}

/// Scaled coordinate-wise mean of the visible honest-looking updates. Every
/// FOE attacker in a round emits this same vector.
pub fn foe_update(visible: &[UpdateVector], lambda: f64) -> Result<UpdateVector> {
    let first = visible
        .first()
        .ok_or_else(|| Error::Aggregation("FOE needs at least one visible update".into()))?;
    let len = first.len();
    let mut mean = vec![0.0; len];
    for u in visible {
        if u.len() != len {
            return Err(Error::Aggregation("update length mismatch in FOE mean".into()));
        }
        for (m, v) in mean.iter_mut().zip(&u.values) {
            *m += v;
        }
    }
    let scale = lambda / visible.len() as f64;
    for m in mean.iter_mut() {
        *m *= scale;
    }
    Ok(UpdateVector { values: mean })
}

/// Apply the update-stage attack to a locally-trained update.
pub fn finalize_update(
    role: Role,
    spec: &AdversarySpec,
    own: UpdateVector,
    visible: &[UpdateVector],
    noise_seed: u64,
) -> Result<UpdateVector> {
    if !role.attacks_update() {
        return Ok(own);
    }
    match spec.effective_perf_mode() {
        PerfMode::Gauss => Ok(inject_noise(&own, spec.sigma, noise_seed)),
        PerfMode::Foe => foe_update(visible, spec.lambda),
    }
}

/// Full malicious-client pipeline: train on (possibly flipped) local data,
/// then run the update-stage attack.
pub fn adversarial_update(
    role: Role,
    spec: &AdversarySpec,
    base: &MlpModel,
    local: &ModelData,
    cfg: &TrainConfig,
    visible: &[UpdateVector],
    noise_seed: u64,
) -> Result<UpdateVector> {
    let trained = if role.trains_on_flipped() {
        let flipped = flip_sensitive(local);
        nn::train_local(base, &flipped.inputs, &flipped.labels, None, cfg)?
    } else {
        nn::train_local(base, &local.inputs, &local.labels, None, cfg)?
    };
    let own = MlpModel::compute_update(&trained, base)?;
    finalize_update(role, spec, own, visible, noise_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn toy_data(n: usize, correlated: bool) -> ModelData {
        // x0 carries the label signal; `a` correlates with y when asked.
        let mut rows = Vec::new();
        for i in 0..n {
            let y = (i % 2) as u8;
            let a = if correlated { y } else { ((i / 2) % 2) as u8 };
            let x = if y == 1 { 0.8 } else { -0.8 };
            rows.push((x + (i as f64 * 0.37).sin() * 0.1, a, y));
        }
        let inputs = Array2::from_shape_fn((n, 2), |(i, j)| match j {
            0 => rows[i].0,
            _ => f64::from(rows[i].1),
        });
        ModelData {
            inputs,
            sensitive: rows.iter().map(|r| r.1).collect(),
            labels: rows.iter().map(|r| r.2).collect(),
        }
    }

    fn spec_of(kind: AttackKind) -> AdversarySpec {
        AdversarySpec { kind, ..AdversarySpec::default() }
    }

    #[test]
    fn flip_is_involution_and_preserves_features_labels() {
        let data = toy_data(40, true);
        let once = flip_sensitive(&data);
        let twice = flip_sensitive(&once);
        assert_eq!(data, twice);
        // Features and labels untouched by a single flip.
        for i in 0..data.n_rows() {
            assert_eq!(data.inputs[[i, 0]], once.inputs[[i, 0]]);
            assert_eq!(data.sensitive[i], 1 - once.sensitive[i]);
        }
        assert_eq!(data.labels, once.labels);
    }

    #[test]
    fn flip_turns_all_zero_into_all_one() {
        let mut data = toy_data(10, false);
        for (i, a) in data.sensitive.iter_mut().enumerate() {
            *a = 0;
            data.inputs[[i, 1]] = 0.0;
        }
        let flipped = flip_sensitive(&data);
        assert!(flipped.sensitive.iter().all(|&a| a == 1));
        assert!((0..10).all(|i| flipped.inputs[[i, 1]] == 1.0));
    }

    #[test]
    fn flip_swaps_group_positive_rates() {
        // Model ignores `a` (zero weight on the last column), so predictions
        // are fixed and only group membership moves.
        let mut params = vec![0.0; 2 * 2 + 2];
        params[2] = 10.0; // class-1 logit = 10 * x0
        let model = MlpModel::from_flat(&[2, 2], params).unwrap();
        let data = toy_data(60, false);
        let rate = |d: &ModelData, group: u8| {
            let preds = model.predict(&d.inputs).unwrap();
            let mut pos = 0usize;
            let mut tot = 0usize;
            for (p, &a) in preds.iter().zip(&d.sensitive) {
                if a == group {
                    tot += 1;
                    if *p == 1 {
                        pos += 1;
                    }
                }
            }
            pos as f64 / tot as f64
        };
        let flipped = flip_sensitive(&data);
        assert_eq!(rate(&data, 0), rate(&flipped, 1));
        assert_eq!(rate(&data, 1), rate(&flipped, 0));
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let g = UpdateVector { values: vec![1.0, -2.0, 3.5] };
        let out = inject_noise(&g, 0.0, 99);
        assert_eq!(g, out);
    }

    #[test]
    fn noise_moments_and_determinism() {
        let g = UpdateVector::zeros(10_000);
        let noisy = inject_noise(&g, 1.0, 7);
        let mean = noisy.values.iter().sum::<f64>() / noisy.len() as f64;
        let std = (noisy.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / noisy.len() as f64)
            .sqrt();
        assert!(mean.abs() <= 0.05, "mean {mean}");
        assert!((0.97..=1.03).contains(&std), "std {std}");

        assert_eq!(inject_noise(&g, 1.0, 7), noisy);
        assert_ne!(inject_noise(&g, 1.0, 8), noisy);
    }

    #[test]
    fn foe_mean_and_scale() {
        let g = UpdateVector { values: vec![0.5, -1.5] };
        let out = foe_update(std::slice::from_ref(&g), 1.0).unwrap();
        assert_eq!(out, g);

        let a = UpdateVector { values: vec![1.0, 0.0] };
        let b = UpdateVector { values: vec![0.0, 1.0] };
        let out = foe_update(&[a.clone(), b.clone()], 2.0).unwrap();
        assert_eq!(out.values, vec![1.0, 1.0]);

        let out = foe_update(&[a, b], -1.0).unwrap();
        assert_eq!(out.values, vec![-0.5, -0.5]);

        assert!(foe_update(&[], 1.0).is_err());
    }

    #[test]
    fn role_split_is_disjoint_and_exhaustive() {
        let ids = vec![3, 9, 11, 17];
        let spec = spec_of(AttackKind::SpDfa);
        let roles = assign_roles(&ids, &spec, 5);
        let fair: Vec<usize> = roles
            .iter()
            .filter(|(_, r)| *r == Role::FairnessAttacker)
            .map(|(id, _)| id)
            .collect();
        let perf: Vec<usize> = roles
            .iter()
            .filter(|(_, r)| *r == Role::PerformanceAttacker)
            .map(|(id, _)| id)
            .collect();
        assert_eq!(fair.len(), 2);
        assert_eq!(perf.len(), 2);
        assert_eq!(roles.len(), 4);

        // Every size and ratio keeps the split disjoint and exhaustive.
        for n in 1..=9usize {
            for ratio in [0.0, 0.3, 0.5, 0.8, 1.0] {
                let ids: Vec<usize> = (0..n).collect();
                let spec = AdversarySpec { split_ratio: ratio, ..spec_of(AttackKind::SpDfa) };
                let roles = assign_roles(&ids, &spec, 11);
                assert_eq!(roles.len(), n);
                let n_fair =
                    roles.iter().filter(|(_, r)| *r == Role::FairnessAttacker).count();
                assert_eq!(n_fair, (ratio * n as f64).round() as usize);
            }
        }
    }

    #[test]
    fn synchronized_attack_marks_everyone_dual() {
        let roles = assign_roles(&[1, 2, 3], &spec_of(AttackKind::SDfa), 0);
        assert!(roles.iter().all(|(_, r)| r == Role::Dual));
    }

    #[test]
    fn zero_ratio_gives_all_performance() {
        let spec = AdversarySpec { split_ratio: 0.0, ..spec_of(AttackKind::SpDfa) };
        let roles = assign_roles(&[1, 2, 3], &spec, 0);
        assert!(roles.iter().all(|(_, r)| r == Role::PerformanceAttacker));
    }

    #[test]
    fn none_assigns_nothing() {
        let roles = assign_roles(&[1, 2], &spec_of(AttackKind::None), 0);
        assert!(roles.is_empty());
    }

    fn train_cfg(seed: u64) -> TrainConfig {
        TrainConfig { epochs: 3, batch_size: 8, learning_rate: 0.1, seed }
    }

    #[test]
    fn dual_with_zero_sigma_matches_fairness_only() {
        let data = toy_data(32, true);
        let base = MlpModel::init(&[2, 4, 2], 1).unwrap();
        let spec = AdversarySpec {
            sigma: 0.0,
            perf_mode: PerfMode::Gauss,
            ..spec_of(AttackKind::SDfa)
        };
        let dual =
            adversarial_update(Role::Dual, &spec, &base, &data, &train_cfg(4), &[], 9).unwrap();
        let fair = adversarial_update(
            Role::FairnessAttacker,
            &spec,
            &base,
            &data,
            &train_cfg(4),
            &[],
            9,
        )
        .unwrap();
        assert_eq!(dual, fair);
    }

    #[test]
    fn noise_composition_decomposes_exactly() {
        let data = toy_data(32, true);
        let base = MlpModel::init(&[2, 4, 2], 1).unwrap();
        let spec = AdversarySpec {
            sigma: 0.7,
            perf_mode: PerfMode::Gauss,
            ..spec_of(AttackKind::SDfa)
        };
        let dual =
            adversarial_update(Role::Dual, &spec, &base, &data, &train_cfg(4), &[], 21).unwrap();
        let fair_only = adversarial_update(
            Role::FairnessAttacker,
            &spec,
            &base,
            &data,
            &train_cfg(4),
            &[],
            21,
        )
        .unwrap();
        assert_eq!(dual, inject_noise(&fair_only, spec.sigma, 21));
    }

    #[test]
    fn foe_performance_role_emits_the_shared_vector() {
        let data = toy_data(32, false);
        let base = MlpModel::init(&[2, 4, 2], 1).unwrap();
        let visible = vec![
            UpdateVector { values: vec![1.0; base.param_count()] },
            UpdateVector { values: vec![3.0; base.param_count()] },
        ];
        let spec = AdversarySpec { lambda: -5.0, ..spec_of(AttackKind::FoePerf) };
        let out = adversarial_update(
            Role::PerformanceAttacker,
            &spec,
            &base,
            &data,
            &train_cfg(2),
            &visible,
            0,
        )
        .unwrap();
        assert_eq!(out, foe_update(&visible, -5.0).unwrap());
    }

    #[test]
    fn fairness_attack_changes_the_update_when_attribute_matters() {
        let data = toy_data(64, true); // `a` perfectly tracks y here
        let base = MlpModel::init(&[2, 6, 2], 2).unwrap();
        let honest = nn::train_local(&base, &data.inputs, &data.labels, None, &train_cfg(3))
            .map(|m| MlpModel::compute_update(&m, &base).unwrap())
            .unwrap();
        let spec = spec_of(AttackKind::FlipFair);
        let attacked = adversarial_update(
            Role::FairnessAttacker,
            &spec,
            &base,
            &data,
            &train_cfg(3),
            &[],
            0,
        )
        .unwrap();
        let dist: f64 = honest
            .values
            .iter()
            .zip(&attacked.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 1e-3, "flip left the update unchanged (distance {dist})");
    }

    #[test]
    fn spec_validation_rejects_bad_values() {
        let mut s = AdversarySpec::default();
        s.sigma = -1.0;
        assert!(s.validate().is_err());
        let mut s = AdversarySpec::default();
        s.lambda = 0.0;
        assert!(s.validate().is_err());
        let mut s = AdversarySpec::default();
        s.split_ratio = 1.5;
        assert!(s.validate().is_err());
        assert!(AdversarySpec::default().validate().is_ok());
    }

    #[test]
    fn noise_scale_sanity() {
        // Larger sigma produces proportionally larger perturbations.
        let g = UpdateVector::zeros(4096);
        let small = inject_noise(&g, 0.1, 3);
        let large = inject_noise(&g, 1.0, 3);
        for (s, l) in small.values.iter().zip(&large.values) {
            assert_abs_diff_eq!(l / 10.0, *s, epsilon = 1e-12);
        }
    }
}
