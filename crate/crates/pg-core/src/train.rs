//! The child training loop: collect rollouts across the target terrains,
//! blend the cloning and RL losses per the transition schedule, update with
//! Adam over minibatch epochs, and periodically score the policy per
//! terrain. Fully deterministic per `(spec.seed, single rollout thread)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Actor, EnvError, EnvParams, EvalConfig, Observation, TerrainUniverse};
use crate::losses::{combined_loss, LossError, RlConfig};
use crate::policy::checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointError};
use crate::policy::{adam_step, AdamState, Architecture, PolicyError, PolicyParams, Workspace};
use crate::rng::{self, stream};
use crate::rollout::{compute_advantages, EnvPool, ExpertSet, RolloutError};
use crate::schedule::{ScheduleError, TransitionSchedule};
use crate::TerrainId;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train spec: {0}")]
    BadSpec(String),
    #[error("no expert covers target terrain `{terrain}`")]
    ExpertCoverage { terrain: TerrainId },
    #[error("parent checkpoint `{0}` incompatible: {1}")]
    ParentMismatch(String, String),
    #[error("loss failed at iteration {iter}: {source}")]
    LossAt { iter: u32, source: LossError },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("no object stored under key `{0}`")]
    NotFound(String),
    #[error("storage failure: {0}")]
    Io(String),
}

/// Keyed blob storage for checkpoints and metrics. The wire protocol moves
/// keys, never payloads.
pub trait CheckpointStore {
    fn put(&mut self, key: &str, bytes: &[u8]) -> Result<(), StoreError>;
    fn get(&self, key: &str) -> Result<Vec<u8>, StoreError>;
}

/// In-memory store for tests and single-process runs.
#[derive(Clone, Debug, Default)]
pub struct MemStore {
    map: BTreeMap<String, Vec<u8>>,
}

impl CheckpointStore for MemStore {
    fn put(&mut self, key: &str, bytes: &[u8]) -> Result<(), StoreError> {
        self.map.insert(key.to_string(), bytes.to_vec());
        Ok(())
    }

    fn get(&self, key: &str) -> Result<Vec<u8>, StoreError> {
        self.map
            .get(key)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(key.to_string()))
    }
}

/// Inner-loop hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub n_envs: usize,
    pub steps_per_env: usize,
    /// Update epochs per collected batch.
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub rl: RlConfig,
    /// Score all target terrains every this many iterations (0 = final only).
    pub eval_every: u32,
    pub eval: EvalConfig,
    pub hidden: Vec<usize>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            n_envs: 16,
            steps_per_env: 64,
            epochs: 4,
            minibatch: 256,
            lr: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            rl: RlConfig::default(),
            eval_every: 100,
            eval: EvalConfig::default(),
            hidden: vec![64, 64],
        }
    }
}

/// One parent: where its checkpoint lives and which niches it masters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParentSpec {
    pub checkpoint_ref: String,
    pub terrains: BTreeSet<TerrainId>,
}

/// Everything that defines one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub terrains: BTreeSet<TerrainId>,
    pub schedule: TransitionSchedule,
    pub seed: u64,
    pub iterations: u32,
    pub parents: Vec<ParentSpec>,
}

/// Per-iteration log record. BC fields are present only when experts exist;
/// score fields only at evaluation points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: u32,
    pub w_bc: f64,
    pub bc_mu: Option<f64>,
    pub bc_sigma: Option<f64>,
    pub surrogate: Option<f64>,
    pub kl: Option<f64>,
    pub value: Option<f64>,
    pub reward_mean: f64,
    pub scores: Option<BTreeMap<TerrainId, f64>>,
}

/// Output of [`train_child`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<IterRecord>,
    pub final_scores: BTreeMap<TerrainId, f64>,
    pub checkpoint_key: String,
}

impl TrainReport {
    /// Sum of final scores over all target terrains.
    pub fn union_score(&self) -> f64 {
        self.final_scores.values().sum()
    }
}

/// Greedy deterministic policy: acts with the mean head, no sampling.
pub struct MeanActor<'a> {
    params: &'a PolicyParams,
    ws: Workspace,
    flat: Vec<f64>,
}

impl<'a> MeanActor<'a> {
    pub fn new(params: &'a PolicyParams) -> Self {
        Self {
            params,
            ws: Workspace::new(params.arch()),
            flat: Vec::new(),
        }
    }
}

impl Actor for MeanActor<'_> {
    fn act(&mut self, obs: &Observation) -> [f64; 2] {
        obs.flatten_into(&mut self.flat);
        self.params
            .forward_mean_ws(&self.flat, &mut self.ws)
            .expect("observation dimension fixed by universe");
        [self.ws.mean()[0], self.ws.mean()[1]]
    }
}

/// Scores the frozen policy mean on each terrain. Deterministic per seed.
pub fn evaluate(
    params: &PolicyParams,
    universe: &TerrainUniverse,
    terrains: &BTreeSet<TerrainId>,
    env_params: &EnvParams,
    eval: &EvalConfig,
    seed: u64,
) -> Result<BTreeMap<TerrainId, f64>, TrainError> {
    let mut scores = BTreeMap::new();
    for terrain in terrains {
        let mut actor = MeanActor::new(params);
        let score =
            crate::env::terrain_score(&mut actor, universe, terrain, env_params, eval, seed)?;
        scores.insert(terrain.clone(), score);
    }
    Ok(scores)
}

/// Resolves a per-terrain expert set from the parents: the first listed
/// parent covering a terrain supplies its expert.
fn build_experts(
    parents: &[(ParentSpec, PolicyParams)],
    terrains: &BTreeSet<TerrainId>,
) -> Result<ExpertSet, TrainError> {
    let mut experts = ExpertSet::new();
    if parents.is_empty() {
        return Ok(experts);
    }
    for terrain in terrains {
        let expert = parents
            .iter()
            .find(|(spec, _)| spec.terrains.contains(terrain))
            .map(|(_, params)| params.clone())
            .ok_or_else(|| TrainError::ExpertCoverage {
                terrain: terrain.clone(),
            })?;
        experts.insert(terrain.clone(), expert);
    }
    Ok(experts)
}

fn load_parents(
    spec: &TrainSpec,
    universe: &TerrainUniverse,
    store: &dyn CheckpointStore,
) -> Result<Vec<(ParentSpec, PolicyParams)>, TrainError> {
    let mut out = Vec::with_capacity(spec.parents.len());
    for parent in &spec.parents {
        let bytes = store.get(&parent.checkpoint_ref)?;
        let params = decode_checkpoint(&bytes)?;
        if params.arch().obs_dim != universe.obs_dim() || params.arch().act_dim != 2 {
            return Err(TrainError::ParentMismatch(
                parent.checkpoint_ref.clone(),
                format!(
                    "expects obs_dim {} act_dim 2, checkpoint has obs_dim {} act_dim {}",
                    universe.obs_dim(),
                    params.arch().obs_dim,
                    params.arch().act_dim
                ),
            ));
        }
        out.push((parent.clone(), params));
    }
    Ok(out)
}

fn shuffle(indices: &mut [usize], rng: &mut rand_chacha::ChaCha8Rng) {
    // Fisher-Yates.
    for i in (1..indices.len()).rev() {
        let j = rand::Rng::gen_range(rng, 0..=i);
        indices.swap(i, j);
    }
}

/// Trains one child policy end to end and checkpoints it under
/// `checkpoint_key`. Roots (no parents) must use a zero-BC schedule since
/// there is nothing to clone from.
pub fn train_child(
    spec: &TrainSpec,
    tcfg: &TrainerConfig,
    env_params: &EnvParams,
    universe: &TerrainUniverse,
    store: &mut dyn CheckpointStore,
    checkpoint_key: &str,
) -> Result<TrainReport, TrainError> {
    spec.schedule.validate()?;
    if spec.terrains.is_empty() {
        return Err(TrainError::BadSpec("no target terrains".into()));
    }
    if spec.iterations == 0 {
        return Err(TrainError::BadSpec("iteration budget must be > 0".into()));
    }
    for t in &spec.terrains {
        if universe.index_of(t).is_none() {
            return Err(TrainError::BadSpec(format!("terrain `{t}` not in universe")));
        }
    }

    let parents = load_parents(spec, universe, store)?;
    let experts = build_experts(&parents, &spec.terrains)?;

    let arch = Architecture::with_hidden(universe.obs_dim(), 2, tcfg.hidden.clone());
    let mut student = PolicyParams::init(&arch, spec.seed)?;
    let mut adam = AdamState::new(student.data().len());
    let mut grad = vec![0.0; student.data().len()];

    let terrain_list: Vec<TerrainId> = spec.terrains.iter().cloned().collect();
    let mut pool = EnvPool::new(universe, env_params, &terrain_list, tcfg.n_envs, spec.seed)?;

    let eval_seed = rng::derive_seed(spec.seed, &[stream::EVAL]);
    let mut records = Vec::with_capacity(spec.iterations as usize);
    let mut indices: Vec<usize> = Vec::new();

    for iter in 0..spec.iterations {
        let w = spec.schedule.bc_weight(iter);
        let mut batch = pool.collect(&student, &experts, tcfg.steps_per_env)?;
        compute_advantages(&mut batch, tcfg.gamma, tcfg.gae_lambda);

        indices.clear();
        indices.extend(0..batch.len());
        let mut sums = TermSums::default();
        for epoch in 0..tcfg.epochs {
            let mut srng =
                rng::stream_rng(spec.seed, &[stream::SHUFFLE, u64::from(iter), epoch as u64]);
            shuffle(&mut indices, &mut srng);
            for chunk in indices.chunks(tcfg.minibatch.max(1)) {
                for g in grad.iter_mut() {
                    *g = 0.0;
                }
                let report = combined_loss(&student, &batch, chunk, w, &tcfg.rl, Some(&mut grad))
                    .map_err(|source| TrainError::LossAt { iter, source })?;
                adam_step(&mut student, &grad, &mut adam, tcfg.lr);
                sums.add(&report);
            }
        }

        let scores = if tcfg.eval_every > 0 && (iter + 1) % tcfg.eval_every == 0 {
            Some(evaluate(
                &student,
                universe,
                &spec.terrains,
                env_params,
                &tcfg.eval,
                eval_seed,
            )?)
        } else {
            None
        };
        records.push(sums.into_record(iter, w, batch.mean_reward(), scores));
    }

    let final_scores = evaluate(
        &student,
        universe,
        &spec.terrains,
        env_params,
        &tcfg.eval,
        eval_seed,
    )?;
    if let Some(last) = records.last_mut() {
        if last.scores.is_none() {
            last.scores = Some(final_scores.clone());
        }
    }

    store.put(checkpoint_key, &encode_checkpoint(&student))?;
    Ok(TrainReport {
        records,
        final_scores,
        checkpoint_key: checkpoint_key.to_string(),
    })
}

#[derive(Default)]
struct TermSums {
    bc_n: u32,
    bc_mu: f64,
    bc_sigma: f64,
    rl_n: u32,
    surrogate: f64,
    kl: f64,
    value: f64,
}

impl TermSums {
    fn add(&mut self, report: &crate::losses::LossReport) {
        if let Some(bc) = report.bc {
            self.bc_n += 1;
            self.bc_mu += bc.mu;
            self.bc_sigma += bc.sigma;
        }
        if let Some(rl) = report.rl {
            self.rl_n += 1;
            self.surrogate += rl.surrogate;
            self.kl += rl.kl;
            self.value += rl.value;
        }
    }

    fn into_record(
        self,
        iter: u32,
        w: f64,
        reward_mean: f64,
        scores: Option<BTreeMap<TerrainId, f64>>,
    ) -> IterRecord {
        let avg = |sum: f64, n: u32| if n > 0 { Some(sum / f64::from(n)) } else { None };
        IterRecord {
            iter,
            w_bc: w,
            bc_mu: avg(self.bc_mu, self.bc_n),
            bc_sigma: avg(self.bc_sigma, self.bc_n),
            surrogate: avg(self.surrogate, self.rl_n),
            kl: avg(self.kl, self.rl_n),
            value: avg(self.value, self.rl_n),
            reward_mean,
            scores,
        }
    }
}
