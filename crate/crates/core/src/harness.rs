//! Experiment orchestration: config parsing, the federated round loop with
//! attack wiring, result emission, sweeps, and summary tables.
//!
//! A run is fully determined by its config file (TOML) and master seed.
//! Every randomized subsystem draws from a named stream derived from that
//! seed, so the per-round fan-out over clients can run on a thread pool
//! without affecting results.
//!
//! Results are newline-delimited JSON: one `meta` line, one `round` line per
//! round, and a final `summary` line.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{self, GuardFedState, TrustReport};
use crate::attacks::{self, AdversarySpec, AttackKind, PerfMode, Role, RoleAssignment};
use crate::copula;
use crate::dataset::{self, Encoder, ModelData};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::nn::{self, MlpModel, TrainConfig, UpdateVector};
use crate::seed::derive_seed;

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    Fedavg,
    Median,
    Fltrust,
    Guardfed,
}

impl AggregatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            AggregatorKind::Fedavg => "fedavg",
            AggregatorKind::Median => "median",
            AggregatorKind::Fltrust => "fltrust",
            AggregatorKind::Guardfed => "guardfed",
        }
    }
}

fn default_seed() -> u64 {
    42
}
fn default_rounds() -> usize {
    100
}
fn default_pool() -> usize {
    100
}
fn default_cpr() -> usize {
    20
}
fn default_alpha() -> f64 {
    5000.0
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_threshold() -> f64 {
    0.6
}
fn default_fraction() -> f64 {
    0.2
}
fn default_sigma() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    1.1
}
fn default_split_ratio() -> f64 {
    0.5
}
fn default_perf_mode() -> PerfMode {
    PerfMode::Foe
}
fn default_agg_kind() -> AggregatorKind {
    AggregatorKind::Guardfed
}
fn default_tau() -> f64 {
    2.0
}
fn default_gamma() -> f64 {
    0.1
}
fn default_eta() -> f64 {
    1.0
}
fn default_epochs() -> usize {
    1
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    0.005
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_root_fraction() -> f64 {
    0.01
}
fn default_synth_fraction() -> f64 {
    0.04
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "AttackConfig::default_kind")]
    pub kind: AttackKind,
    /// Fraction of the pool controlled by adversaries.
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
    #[serde(default = "default_perf_mode")]
    pub perf_mode: PerfMode,
    /// Mark exactly floor(fraction * clients_per_round) of each round's
    /// sample as malicious instead of flagging pool members up front.
    #[serde(default)]
    pub exact_per_round: bool,
}

impl AttackConfig {
    fn default_kind() -> AttackKind {
        AttackKind::None
    }

    pub fn spec(&self) -> AdversarySpec {
        AdversarySpec {
            kind: self.kind,
            sigma: self.sigma,
            lambda: self.lambda,
            split_ratio: self.split_ratio,
            perf_mode: self.perf_mode,
        }
    }
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            fraction: default_fraction(),
            sigma: default_sigma(),
            lambda: default_lambda(),
            split_ratio: default_split_ratio(),
            perf_mode: default_perf_mode(),
            exact_per_round: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorConfig {
    #[serde(default = "default_agg_kind")]
    pub kind: AggregatorKind,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_eta")]
    pub eta_global: f64,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            kind: default_agg_kind(),
            tau: default_tau(),
            gamma: default_gamma(),
            eta_global: default_eta(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            hidden_dims: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_root_fraction")]
    pub root_fraction: f64,
    #[serde(default = "default_synth_fraction")]
    pub synth_fraction: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            root_fraction: default_root_fraction(),
            synth_fraction: default_synth_fraction(),
        }
    }
}

/// Every knob of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset manifest path, relative to the config file.
    pub manifest: String,
    /// Run tag carried into results; defaults to a composed name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_pool")]
    pub pool_clients: usize,
    #[serde(default = "default_cpr")]
    pub clients_per_round: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_threshold")]
    pub accuracy_threshold: f64,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub aggregator: AggregatorConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub server: ServerConfig,
}

impl ExperimentConfig {
    fn check_ranges(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.pool_clients == 0 {
            return Err(Error::Config("pool_clients must be >= 1".into()));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.pool_clients {
            return Err(Error::Config(format!(
                "clients_per_round must be in 1..=pool_clients ({}), got {}",
                self.pool_clients, self.clients_per_round
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must be in (0,1), got {}",
                self.test_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(Error::Config(format!(
                "accuracy_threshold must be in [0,1], got {}",
                self.accuracy_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.attack.fraction) {
            return Err(Error::Config(format!(
                "attack.fraction must be in [0,1), got {}",
                self.attack.fraction
            )));
        }
        if self.attack.fraction > 0.5 {
            warnings.push(format!(
                "attack.fraction {} exceeds 0.5: a majority-adversary regime",
                self.attack.fraction
            ));
        }
        self.attack.spec().validate()?;
        if !(self.aggregator.tau >= 0.0) {
            return Err(Error::Config(format!(
                "aggregator.tau must be >= 0, got {}",
                self.aggregator.tau
            )));
        }
        if !(self.aggregator.eta_global > 0.0) {
            return Err(Error::Config(format!(
                "aggregator.eta_global must be > 0, got {}",
                self.aggregator.eta_global
            )));
        }
        if !(self.server.root_fraction > 0.0 && self.server.root_fraction < 1.0) {
            return Err(Error::Config(format!(
                "server.root_fraction must be in (0,1), got {}",
                self.server.root_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.server.synth_fraction) {
            return Err(Error::Config(format!(
                "server.synth_fraction must be in [0,1), got {}",
                self.server.synth_fraction
            )));
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be >= 1".into()));
        }
        if !(self.train.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "train.learning_rate must be > 0, got {}",
                self.train.learning_rate
            )));
        }
        Ok(warnings)
    }

    pub fn run_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!(
                "{}-{:?}-a{}-s{}",
                self.aggregator.kind.name(),
                self.attack.kind,
                self.alpha,
                self.seed
            )
            .to_lowercase()
        })
    }

    fn train_cfg(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed,
        }
    }
}

/// Parse and range-check a config file's text. Parse errors carry the TOML
/// line/column; range errors name the key. Returns soft warnings alongside.
pub fn validate_config(text: &str) -> Result<(ExperimentConfig, Vec<String>)> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let warnings = cfg.check_ranges()?;
    Ok((cfg, warnings))
}

/// Read, validate, and anchor a config file (manifest resolved against the
/// config's directory).
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let (cfg, warnings) = validate_config(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok((cfg, base, warnings))
}

/// One sampled client's role in a round, as logged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledClient {
    pub client: usize,
    pub malicious: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

/// Everything recorded about one round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub eval: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust: Option<TrustReport>,
    pub sampled: Vec<SampledClient>,
    /// Wall clock of the round; excluded from the serialized stream so two
    /// runs of the same config emit byte-identical results.
    #[serde(skip)]
    pub duration: Duration,
}

/// Identity and grouping tags of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub name: String,
    /// Flat key/value tags used by `summarize --group-by`.
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds: usize,
    pub final_eval: EvalReport,
    /// Rounds where the trust-gated selection came up empty.
    pub empty_selection_rounds: usize,
}

/// One line of the results stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultLine {
    Meta(RunMeta),
    Round(RoundRecord),
    Summary(RunSummary),
}

#[derive(Debug)]
pub struct RunOutput {
    pub meta: RunMeta,
    pub records: Vec<RoundRecord>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&ResultLine::Meta(self.meta.clone())).unwrap());
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(&ResultLine::Round(r.clone())).unwrap());
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&ResultLine::Summary(self.summary.clone())).unwrap());
        out.push('\n');
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_ndjson().as_bytes())?;
        Ok(())
    }
}

fn meta_tags(cfg: &ExperimentConfig, dataset: &str, swept: Option<(&str, &str)>) -> RunMeta {
    let mut tags = BTreeMap::new();
    tags.insert("dataset".into(), dataset.to_string());
    tags.insert("aggregator".into(), cfg.aggregator.kind.name().to_string());
    tags.insert(
        "attack".into(),
        serde_json::to_value(cfg.attack.kind).unwrap().as_str().unwrap().to_string(),
    );
    tags.insert("alpha".into(), format!("{}", cfg.alpha));
    tags.insert("seed".into(), format!("{}", cfg.seed));
    tags.insert("tau".into(), format!("{}", cfg.aggregator.tau));
    tags.insert("gamma".into(), format!("{}", cfg.aggregator.gamma));
    tags.insert("sigma".into(), format!("{}", cfg.attack.sigma));
    tags.insert("lambda".into(), format!("{}", cfg.attack.lambda));
    tags.insert("attack_fraction".into(), format!("{}", cfg.attack.fraction));
    tags.insert("root_fraction".into(), format!("{}", cfg.server.root_fraction));
    tags.insert("synth_fraction".into(), format!("{}", cfg.server.synth_fraction));
    tags.insert("rounds".into(), format!("{}", cfg.rounds));
    if let Some((k, v)) = swept {
        tags.insert("swept_param".into(), k.to_string());
        tags.insert("swept_value".into(), v.to_string());
    }
    RunMeta { schema_version: RESULTS_SCHEMA_VERSION, name: cfg.run_name(), tags }
}

struct RoundContext<'a> {
    cfg: &'a ExperimentConfig,
    spec: AdversarySpec,
    global: MlpModel,
    client_data: Vec<ModelData>,
    client_sizes: Vec<usize>,
    test: ModelData,
    guard_state: Option<GuardFedState>,
    /// Synthetic data for the unweighted FLTrust reference.
    fltrust_synth: Option<ModelData>,
    pool_malicious: Vec<bool>,
    pool_roles: RoleAssignment,
}

/// Run the full experiment loop; deterministic in the config.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<RunOutput> {
    run_experiment_tagged(cfg, base_dir, None)
}

pub fn run_experiment_tagged(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    swept: Option<(&str, &str)>,
) -> Result<RunOutput> {
    cfg.check_ranges()?;
    let seed = cfg.seed;
    let manifest_path = base_dir.join(&cfg.manifest);
    let raw = dataset::load_from_manifest(&manifest_path)?;
    let (manifest, _) = dataset::DatasetManifest::from_path(&manifest_path)?;

    // Train/test split, then root extraction inside the train split.
    let sens = raw.sensitive_bits();
    let labels = raw.label_bits();
    let (train_idx, test_idx, _warnings) = dataset::stratified_split_indices(
        &sens,
        &labels,
        cfg.test_fraction,
        derive_seed(seed, "split", &[]),
    )?;
    let train_sens: Vec<u8> = train_idx.iter().map(|&i| sens[i]).collect();
    let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let (root_rel, pool_rel) = dataset::extract_root_indices(
        &train_sens,
        &train_labels,
        cfg.server.root_fraction,
        derive_seed(seed, "root", &[]),
    )?;
    let root_idx: Vec<usize> = root_rel.iter().map(|&i| train_idx[i]).collect();
    let pool_idx: Vec<usize> = pool_rel.iter().map(|&i| train_idx[i]).collect();

    // Shared encoder fitted on the whole train split.
    let encoder = Encoder::fit(&raw, &train_idx)?;
    let pool_enc = encoder.transform(&raw, Some(&pool_idx))?;
    let test_md = encoder.transform(&raw, Some(&test_idx))?.model_data();

    // Server data: root rows plus copula samples, encoded with the shared
    // encoder.
    let synth = copula::build_root_plus_synth(
        &raw,
        &root_idx,
        cfg.server.synth_fraction,
        train_idx.len(),
        derive_seed(seed, "copula", &[]),
    )?;
    let synth_md = encoder.transform(&synth.data, None)?.model_data();

    // Client pool.
    let pool_positions: Vec<usize> = (0..pool_enc.n_rows()).collect();
    let parts = dataset::dirichlet_partition(
        &pool_positions,
        &pool_enc.labels,
        cfg.pool_clients,
        cfg.alpha,
        derive_seed(seed, "partition", &[]),
    )?;
    let pool_md = pool_enc.model_data();
    let client_data: Vec<ModelData> = parts.iter().map(|p| pool_md.subset(&p.rows)).collect();
    let client_sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();

    // Adversary placement on the pool.
    let spec = cfg.attack.spec();
    let mut pool_malicious = vec![false; cfg.pool_clients];
    let mut pool_roles = RoleAssignment::default();
    if spec.kind != AttackKind::None && !cfg.attack.exact_per_round {
        let n_mal = (cfg.attack.fraction * cfg.pool_clients as f64).floor() as usize;
        let mut ids: Vec<usize> = (0..cfg.pool_clients).collect();
        let mut rng = crate::seed::stream_rng(seed, "malicious", &[]);
        ids.shuffle(&mut rng);
        let chosen: Vec<usize> = ids.into_iter().take(n_mal).collect();
        for &id in &chosen {
            pool_malicious[id] = true;
        }
        pool_roles = attacks::assign_roles(&chosen, &spec, derive_seed(seed, "roles", &[]));
    }

    let input_dim = pool_md.input_dim();
    let mut dims = vec![input_dim];
    dims.extend_from_slice(&cfg.train.hidden_dims);
    dims.push(2);
    let global = MlpModel::init(&dims, derive_seed(seed, "init", &[]))?;

    let guard_state = if cfg.aggregator.kind == AggregatorKind::Guardfed {
        Some(GuardFedState::new(
            synth_md.clone(),
            cfg.aggregator.tau,
            cfg.aggregator.gamma,
            cfg.train_cfg(0),
        )?)
    } else {
        None
    };
    let fltrust_synth = if cfg.aggregator.kind == AggregatorKind::Fltrust {
        Some(synth_md.clone())
    } else {
        None
    };

    let mut ctx = RoundContext {
        cfg,
        spec,
        global,
        client_data,
        client_sizes,
        test: test_md,
        guard_state,
        fltrust_synth,
        pool_malicious,
        pool_roles,
    };

    let mut records = Vec::with_capacity(cfg.rounds);
    let mut empty_rounds = 0usize;
    for t in 1..=cfg.rounds {
        let record = run_round(&mut ctx, t)?;
        if record.trust.as_ref().is_some_and(|tr| tr.empty_selection) {
            empty_rounds += 1;
        }
        records.push(record);
    }

    let final_eval = records.last().expect("rounds >= 1").eval.clone();
    Ok(RunOutput {
        meta: meta_tags(cfg, &manifest.name, swept),
        records,
        summary: RunSummary {
            rounds: cfg.rounds,
            final_eval,
            empty_selection_rounds: empty_rounds,
        },
    })
}

fn run_round(ctx: &mut RoundContext<'_>, t: usize) -> Result<RoundRecord> {
    let started = Instant::now();
    let cfg = ctx.cfg;
    let seed = cfg.seed;
    let tu = t as u64;

    // Sample this round's participants.
    let mut ids: Vec<usize> = (0..cfg.pool_clients).collect();
    let mut rng = crate::seed::stream_rng(seed, "round-sample", &[tu]);
    ids.shuffle(&mut rng);
    let sampled: Vec<usize> = ids.into_iter().take(cfg.clients_per_round).collect();

    // Attacker marking: pool flags, or an exact per-round count.
    let (malicious, roles): (Vec<bool>, RoleAssignment) =
        if ctx.spec.kind != AttackKind::None && cfg.attack.exact_per_round {
            let n_mal = (cfg.attack.fraction * cfg.clients_per_round as f64).floor() as usize;
            let mut order = sampled.clone();
            let mut rng = crate::seed::stream_rng(seed, "round-malicious", &[tu]);
            order.shuffle(&mut rng);
            let chosen: Vec<usize> = order.into_iter().take(n_mal).collect();
            let roles =
                attacks::assign_roles(&chosen, &ctx.spec, derive_seed(seed, "roles", &[tu]));
            (sampled.iter().map(|id| chosen.contains(id)).collect(), roles)
        } else {
            (
                sampled.iter().map(|id| ctx.pool_malicious[*id]).collect(),
                ctx.pool_roles.clone(),
            )
        };

    // Stage 1: local training for every participant (flipped data for
    // fairness-role attackers). Parallel fan-out; seeds are per (round,
    // client), so scheduling cannot change results.
    let stage1: Vec<UpdateVector> = sampled
        .par_iter()
        .zip(malicious.par_iter())
        .map(|(&id, &is_mal)| {
            let role = if is_mal { ctx.pool_or_round_role(&roles, id) } else { None };
            let data = &ctx.client_data[id];
            let cfg_n = cfg.train_cfg(derive_seed(seed, "train", &[tu, id as u64]));
            let trained = if role.is_some_and(|r| r.trains_on_flipped()) {
                let flipped = attacks::flip_sensitive(data);
                nn::train_local(&ctx.global, &flipped.inputs, &flipped.labels, None, &cfg_n)
            } else {
                nn::train_local(&ctx.global, &data.inputs, &data.labels, None, &cfg_n)
            }
            .map_err(|e| Error::Training(format!("round {t}, client {id}: {e}")))?;
            MlpModel::compute_update(&trained, &ctx.global)
        })
        .collect::<Result<Vec<_>>>()?;

    // Stage 2: update-level attacks see the full honest-looking set.
    let mut updates = Vec::with_capacity(stage1.len());
    for ((pos, &id), own) in sampled.iter().enumerate().zip(&stage1).map(|(a, b)| (a, b)) {
        let role = if malicious[pos] { ctx.pool_or_round_role(&roles, id) } else { None };
        let u = match role {
            Some(r) if r.attacks_update() => attacks::finalize_update(
                r,
                &ctx.spec,
                own.clone(),
                &stage1,
                derive_seed(seed, "noise", &[tu, id as u64]),
            )
            .map_err(|e| Error::Aggregation(format!("round {t}, client {id}: {e}")))?,
            _ => own.clone(),
        };
        updates.push(u);
    }

    // Aggregate.
    let mut trust = None;
    let sizes: Vec<usize> = sampled.iter().map(|&id| ctx.client_sizes[id]).collect();
    let eta = cfg.aggregator.eta_global;
    ctx.global = match cfg.aggregator.kind {
        AggregatorKind::Fedavg => aggregation::fedavg(&ctx.global, &updates, &sizes, eta)?,
        AggregatorKind::Median => {
            let median = aggregation::coordinate_median(&updates)?;
            MlpModel::apply_update(&ctx.global, &median, eta)?
        }
        AggregatorKind::Fltrust => {
            let synth = ctx.fltrust_synth.as_ref().expect("fltrust state");
            let ref_cfg = cfg.train_cfg(derive_seed(seed, "reference", &[tu]));
            let reference =
                nn::train_local(&ctx.global, &synth.inputs, &synth.labels, None, &ref_cfg)
                    .map_err(|e| Error::Training(format!("round {t}, reference: {e}")))?;
            let g_s = MlpModel::compute_update(&reference, &ctx.global)?;
            aggregation::fltrust_baseline(&ctx.global, &updates, &g_s, eta)?
        }
        AggregatorKind::Guardfed => {
            let state = ctx.guard_state.as_ref().expect("guardfed state");
            let (model, report) = aggregation::guardfed_round(
                state,
                &ctx.global,
                &sampled,
                &updates,
                eta,
                t,
                derive_seed(seed, "reference", &[tu]),
            )
            .map_err(|e| Error::Aggregation(format!("round {t}: {e}")))?;
            trust = Some(report);
            model
        }
    };

    let eval = metrics::evaluate(&ctx.global, &ctx.test, cfg.accuracy_threshold)?;
    let sampled_log: Vec<SampledClient> = sampled
        .iter()
        .enumerate()
        .map(|(pos, &id)| SampledClient {
            client: id,
            malicious: malicious[pos],
            role: if malicious[pos] { ctx.pool_or_round_role(&roles, id) } else { None },
        })
        .collect();

    Ok(RoundRecord {
        round: t,
        eval,
        trust,
        sampled: sampled_log,
        duration: started.elapsed(),
    })
}

impl RoundContext<'_> {
    fn pool_or_round_role(&self, round_roles: &RoleAssignment, id: usize) -> Option<Role> {
        round_roles.get(id).or_else(|| self.pool_roles.get(id))
    }
}

/// Parameters addressable by `sweep`.
pub const SWEEPABLE: &[&str] = &[
    "tau",
    "gamma",
    "eta_global",
    "alpha",
    "attack_fraction",
    "sigma",
    "lambda",
    "split_ratio",
    "root_fraction",
    "synth_fraction",
    "rounds",
    "seed",
    "clients_per_round",
    "pool_clients",
    "epochs",
    "batch_size",
    "learning_rate",
    "test_fraction",
    "accuracy_threshold",
];

/// Return a copy of `cfg` with one named parameter replaced.
pub fn apply_param(cfg: &ExperimentConfig, param: &str, value: &str) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    let bad_num = |e: std::num::ParseFloatError| {
        Error::Config(format!("value '{value}' for {param}: {e}"))
    };
    let bad_int = |e: std::num::ParseIntError| {
        Error::Config(format!("value '{value}' for {param}: {e}"))
    };
    match param {
        "tau" => out.aggregator.tau = value.parse().map_err(bad_num)?,
        "gamma" => out.aggregator.gamma = value.parse().map_err(bad_num)?,
        "eta_global" => out.aggregator.eta_global = value.parse().map_err(bad_num)?,
        "alpha" => out.alpha = value.parse().map_err(bad_num)?,
        "attack_fraction" => out.attack.fraction = value.parse().map_err(bad_num)?,
        "sigma" => out.attack.sigma = value.parse().map_err(bad_num)?,
        "lambda" => out.attack.lambda = value.parse().map_err(bad_num)?,
        "split_ratio" => out.attack.split_ratio = value.parse().map_err(bad_num)?,
        "root_fraction" => out.server.root_fraction = value.parse().map_err(bad_num)?,
        "synth_fraction" => out.server.synth_fraction = value.parse().map_err(bad_num)?,
        "rounds" => out.rounds = value.parse().map_err(bad_int)?,
        "seed" => out.seed = value.parse().map_err(bad_int)?,
        "clients_per_round" => out.clients_per_round = value.parse().map_err(bad_int)?,
        "pool_clients" => out.pool_clients = value.parse().map_err(bad_int)?,
        "epochs" => out.train.epochs = value.parse().map_err(bad_int)?,
        "batch_size" => out.train.batch_size = value.parse().map_err(bad_int)?,
        "learning_rate" => out.train.learning_rate = value.parse().map_err(bad_num)?,
        "test_fraction" => out.test_fraction = value.parse().map_err(bad_num)?,
        "accuracy_threshold" => out.accuracy_threshold = value.parse().map_err(bad_num)?,
        _ => {
            return Err(Error::Config(format!(
                "unknown sweep parameter '{param}' (known: {})",
                SWEEPABLE.join(", ")
            )))
        }
    }
    out.check_ranges()?;
    Ok(out)
}

/// Run the config once per value of the swept parameter, with derived seeds
/// per run and results tagged by the swept value.
pub fn sweep(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    param: &str,
    values: &[String],
) -> Result<Vec<RunOutput>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut outputs = Vec::with_capacity(values.len());
    for v in values {
        let mut run_cfg = apply_param(cfg, param, v)?;
        if param != "seed" {
            // Independent seed stream per swept value; the master seed still
            // pins everything.
            run_cfg.seed = derive_seed(cfg.seed, "sweep", &[outputs.len() as u64]);
        }
        run_cfg.name = Some(format!("{}-{param}{v}", cfg.run_name()));
        outputs.push(run_experiment_tagged(&run_cfg, base_dir, Some((param, v)))?);
    }
    Ok(outputs)
}

/// Aggregated view of one or more result files.
#[derive(Debug, Clone)]
pub struct SummaryTable {
    pub group_by: Vec<String>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub key: Vec<String>,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub aeod_mean: Option<f64>,
    pub aeod_std: Option<f64>,
    pub aspd_mean: Option<f64>,
    pub aspd_std: Option<f64>,
    /// Mean accuracy cleared the task threshold (fairness numbers valid).
    pub fairness_valid: bool,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Parse result files and group final-round metrics by the given tag keys.
pub fn summarize(paths: &[PathBuf], group_by: &[String]) -> Result<SummaryTable> {
    if paths.is_empty() {
        return Err(Error::Results("no result files given".into()));
    }
    struct Cell {
        accs: Vec<f64>,
        aeods: Vec<f64>,
        aspds: Vec<f64>,
        thresholds: Vec<f64>,
    }
    let mut cells: BTreeMap<Vec<String>, Cell> = BTreeMap::new();

    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let mut meta: Option<RunMeta> = None;
        let mut summary: Option<RunSummary> = None;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ResultLine = serde_json::from_str(line).map_err(|e| {
                Error::Results(format!("{}: bad line: {e}", path.display()))
            })?;
            match parsed {
                ResultLine::Meta(m) => {
                    if m.schema_version != RESULTS_SCHEMA_VERSION {
                        return Err(Error::Results(format!(
                            "{}: results schema version {} (expected {})",
                            path.display(),
                            m.schema_version,
                            RESULTS_SCHEMA_VERSION
                        )));
                    }
                    meta = Some(m);
                }
                ResultLine::Summary(s) => summary = Some(s),
                ResultLine::Round(_) => {}
            }
        }
        let meta = meta
            .ok_or_else(|| Error::Results(format!("{}: missing meta line", path.display())))?;
        let summary = summary
            .ok_or_else(|| Error::Results(format!("{}: missing summary line", path.display())))?;

        let key: Vec<String> = group_by
            .iter()
            .map(|k| meta.tags.get(k).cloned().unwrap_or_else(|| "-".into()))
            .collect();
        let cell = cells.entry(key).or_insert_with(|| Cell {
            accs: Vec::new(),
            aeods: Vec::new(),
            aspds: Vec::new(),
            thresholds: Vec::new(),
        });
        cell.accs.push(summary.final_eval.accuracy);
        if let Some(v) = summary.final_eval.aeod {
            cell.aeods.push(v);
        }
        if let Some(v) = summary.final_eval.aspd {
            cell.aspds.push(v);
        }
        cell.thresholds.push(summary.final_eval.accuracy_threshold);
    }

    let rows = cells
        .into_iter()
        .map(|(key, cell)| {
            let (acc_mean, acc_std) = mean_std(&cell.accs);
            let (aeod_mean, aeod_std) = if cell.aeods.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&cell.aeods);
                (Some(m), Some(s))
            };
            let (aspd_mean, aspd_std) = if cell.aspds.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&cell.aspds);
                (Some(m), Some(s))
            };
            let threshold =
                cell.thresholds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            SummaryRow {
                runs: cell.accs.len(),
                acc_mean,
                acc_std,
                aeod_mean,
                aeod_std,
                aspd_mean,
                aspd_std,
                fairness_valid: acc_mean >= threshold,
                key,
            }
        })
        .collect();
    Ok(SummaryTable { group_by: group_by.to_vec(), rows })
}

impl SummaryTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let headers: Vec<String> = self
            .group_by
            .iter()
            .cloned()
            .chain(["runs", "acc", "aeod", "aspd"].map(String::from))
            .collect();
        let mut table: Vec<Vec<String>> = vec![headers];
        for r in &self.rows {
            let fmt_pair = |m: Option<f64>, s: Option<f64>| match (m, s) {
                (Some(m), Some(s)) => {
                    let marker = if r.fairness_valid { "" } else { " (invalid)" };
                    format!("{m:.3} ± {s:.3}{marker}")
                }
                _ => "undefined".to_string(),
            };
            let mut row: Vec<String> = r.key.clone();
            row.push(format!("{}", r.runs));
            row.push(format!("{:.3} ± {:.3}", r.acc_mean, r.acc_std));
            row.push(fmt_pair(r.aeod_mean, r.aeod_std));
            row.push(fmt_pair(r.aspd_mean, r.aspd_std));
            table.push(row);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for row in &table {
            for (cell, w) in row.iter().zip(&widths) {
                out.push_str(&format!("{cell:<w$}  "));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self, mut w: impl Write) -> Result<()> {
        let mut header: Vec<String> = self.group_by.clone();
        header.extend(
            [
                "runs",
                "acc_mean",
                "acc_std",
                "aeod_mean",
                "aeod_std",
                "aspd_mean",
                "aspd_std",
                "fairness_valid",
            ]
            .map(String::from),
        );
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            let mut row = r.key.clone();
            row.push(format!("{}", r.runs));
            row.push(format!("{}", r.acc_mean));
            row.push(format!("{}", r.acc_std));
            row.push(opt(r.aeod_mean));
            row.push(opt(r.aeod_std));
            row.push(opt(r.aspd_mean));
            row.push(opt(r.aspd_std));
            row.push(format!("{}", r.fairness_valid));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Build the synthetic server dataset for a config and return it in raw form
/// (for `synth-export`).
pub fn build_synth_for_config(
    cfg: &ExperimentConfig,
    base_dir: &Path,
) -> Result<copula::SyntheticDataset> {
    let manifest_path = base_dir.join(&cfg.manifest);
    let raw = dataset::load_from_manifest(&manifest_path)?;
    let sens = raw.sensitive_bits();
    let labels = raw.label_bits();
    let (train_idx, _, _) = dataset::stratified_split_indices(
        &sens,
        &labels,
        cfg.test_fraction,
        derive_seed(cfg.seed, "split", &[]),
    )?;
    let train_sens: Vec<u8> = train_idx.iter().map(|&i| sens[i]).collect();
    let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let (root_rel, _) = dataset::extract_root_indices(
        &train_sens,
        &train_labels,
        cfg.server.root_fraction,
        derive_seed(cfg.seed, "root", &[]),
    )?;
    let root_idx: Vec<usize> = root_rel.iter().map(|&i| train_idx[i]).collect();
    copula::build_root_plus_synth(
        &raw,
        &root_idx,
        cfg.server.synth_fraction,
        train_idx.len(),
        derive_seed(cfg.seed, "copula", &[]),
    )
}
