//! Rollout collection and advantage estimation.
//!
//! A [`RolloutBatch`] stores `(steps_per_env, n_envs)` trajectories in
//! struct-of-arrays form, flattened so sample `s = t * n_envs + e`. The
//! student acts; for every visited state the matching terrain's expert is
//! queried for its action distribution but never acts — expert targets are
//! gathered on the student's own state distribution.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{update_curriculum, EnvError, EnvParams, EnvState, Observation, TerrainUniverse};
use crate::policy::{log_prob_parts, PolicyError, PolicyParams, Workspace};
use crate::rng::{self, stream};
use crate::TerrainId;

/// Experts keyed by the terrain they specialize in.
pub type ExpertSet = BTreeMap<TerrainId, PolicyParams>;

#[derive(Debug, Error, PartialEq)]
pub enum RolloutError {
    #[error("no expert available for visited terrain `{0}`")]
    MissingExpert(String),
    #[error("no target terrains")]
    EmptyTerrains,
    #[error("environment action dimension is 2, policy has act_dim {0}")]
    BadActDim(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Expert targets recorded alongside the student trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpertRecord {
    /// `(samples, act_dim)` expert means on the student's states.
    pub mean: Vec<f64>,
    /// `(samples, act_dim)` expert log-stds.
    pub log_std: Vec<f64>,
}

/// Trajectories of one collection pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub n_steps: usize,
    pub n_envs: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// `(samples, obs_dim)` flattened observations.
    pub obs: Vec<f64>,
    /// `(samples, act_dim)` raw sampled actions (pre-clamp).
    pub actions: Vec<f64>,
    pub log_prob_old: Vec<f64>,
    pub values_old: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Universe index of each sample's terrain.
    pub terrain_index: Vec<usize>,
    /// `(samples, act_dim)` student means at collection time (for KL).
    pub mean_old: Vec<f64>,
    /// `(samples, act_dim)` student stds at collection time.
    pub std_old: Vec<f64>,
    /// Expert targets; `None` for root training without parents.
    pub expert: Option<ExpertRecord>,
    /// Value bootstrap per environment for the state after the last step.
    pub last_values: Vec<f64>,
    /// Normalized advantages (filled by [`compute_advantages`]).
    pub advantages: Vec<f64>,
    /// Value targets (filled by [`compute_advantages`]).
    pub returns: Vec<f64>,
    pub advantages_ready: bool,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn obs_row(&self, s: usize) -> &[f64] {
        &self.obs[s * self.obs_dim..(s + 1) * self.obs_dim]
    }

    pub fn action_row(&self, s: usize) -> &[f64] {
        &self.actions[s * self.act_dim..(s + 1) * self.act_dim]
    }

    pub fn mean_old_row(&self, s: usize) -> &[f64] {
        &self.mean_old[s * self.act_dim..(s + 1) * self.act_dim]
    }

    pub fn std_old_row(&self, s: usize) -> &[f64] {
        &self.std_old[s * self.act_dim..(s + 1) * self.act_dim]
    }

    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

/// One persistent environment instance plus its sampling stream.
struct EnvRunner {
    env: EnvState,
    obs: Observation,
    terrain_id: TerrainId,
    terrain_index: usize,
    action_rng: ChaCha8Rng,
}

/// Trainer view of the curriculum state of one environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvCurriculum {
    pub terrain: TerrainId,
    pub spawn_radius: f64,
    pub episodes: u32,
}

/// A set of persistent environments, split evenly over the target terrains,
/// each with independent RNG streams. Episodes continue across collection
/// calls; the success curriculum advances at every episode boundary.
pub struct EnvPool {
    runners: Vec<EnvRunner>,
    params: EnvParams,
    flat: Vec<f64>,
}

impl EnvPool {
    pub fn new(
        universe: &TerrainUniverse,
        params: &EnvParams,
        terrains: &[TerrainId],
        n_envs: usize,
        seed: u64,
    ) -> Result<Self, RolloutError> {
        if terrains.is_empty() || n_envs == 0 {
            return Err(RolloutError::EmptyTerrains);
        }
        let mut runners = Vec::with_capacity(n_envs);
        for e in 0..n_envs {
            let terrain_id = terrains[e % terrains.len()].clone();
            let terrain_index = universe
                .index_of(&terrain_id)
                .ok_or_else(|| EnvError::TerrainNotInUniverse(terrain_id.clone()))?;
            let env_seed = rng::derive_seed(seed, &[stream::ENV, e as u64]);
            let (env, obs) = EnvState::reset(
                universe,
                &terrain_id,
                params.clone(),
                params.start_radius,
                env_seed,
            )?;
            runners.push(EnvRunner {
                env,
                obs,
                terrain_id,
                terrain_index,
                action_rng: rng::stream_rng(seed, &[stream::ACTION, e as u64]),
            });
        }
        Ok(Self {
            runners,
            params: params.clone(),
            flat: Vec::new(),
        })
    }

    pub fn n_envs(&self) -> usize {
        self.runners.len()
    }

    pub fn curricula(&self) -> Vec<EnvCurriculum> {
        self.runners
            .iter()
            .map(|r| EnvCurriculum {
                terrain: r.terrain_id.clone(),
                spawn_radius: r.env.spawn_radius,
                episodes: r.env.episode_count,
            })
            .collect()
    }

    /// Collects `steps` transitions per environment. The student samples
    /// actions; experts (when provided) are queried on every visited state.
    /// An empty expert set records no expert fields; a non-empty set must
    /// cover every terrain in the pool.
    pub fn collect(
        &mut self,
        student: &PolicyParams,
        experts: &ExpertSet,
        steps: usize,
    ) -> Result<RolloutBatch, RolloutError> {
        let arch = student.arch();
        if arch.act_dim != 2 {
            return Err(RolloutError::BadActDim(arch.act_dim));
        }
        let has_experts = !experts.is_empty();
        if has_experts {
            for r in &self.runners {
                if !experts.contains_key(&r.terrain_id) {
                    return Err(RolloutError::MissingExpert(r.terrain_id.clone()));
                }
            }
        }

        let n_envs = self.runners.len();
        let samples = steps * n_envs;
        let act_dim = arch.act_dim;
        let mut batch = RolloutBatch {
            n_steps: steps,
            n_envs,
            obs_dim: arch.obs_dim,
            act_dim,
            obs: Vec::with_capacity(samples * arch.obs_dim),
            actions: Vec::with_capacity(samples * act_dim),
            log_prob_old: Vec::with_capacity(samples),
            values_old: Vec::with_capacity(samples),
            rewards: Vec::with_capacity(samples),
            dones: Vec::with_capacity(samples),
            terrain_index: Vec::with_capacity(samples),
            mean_old: Vec::with_capacity(samples * act_dim),
            std_old: Vec::with_capacity(samples * act_dim),
            expert: has_experts.then(|| ExpertRecord {
                mean: Vec::with_capacity(samples * act_dim),
                log_std: Vec::with_capacity(samples * act_dim),
            }),
            last_values: Vec::with_capacity(n_envs),
            advantages: Vec::new(),
            returns: Vec::new(),
            advantages_ready: false,
        };

        let std = student.std_vec();
        let mut ws = Workspace::new(arch);
        let mut expert_ws = Workspace::new(arch);
        let mut action = [0.0f64; 2];

        for _ in 0..steps {
            for e in 0..n_envs {
                let runner = &mut self.runners[e];
                runner.obs.flatten_into(&mut self.flat);
                student.forward_ws(&self.flat, &mut ws)?;

                for (d, a) in action.iter_mut().enumerate() {
                    let z: f64 =
                        rand::Rng::sample(&mut runner.action_rng, rand_distr::StandardNormal);
                    *a = ws.mean()[d] + std[d] * z;
                }
                let lp = log_prob_parts(ws.mean(), &std, &action);

                batch.obs.extend_from_slice(&self.flat);
                batch.actions.extend_from_slice(&action);
                batch.mean_old.extend_from_slice(ws.mean());
                batch.std_old.extend_from_slice(&std);
                batch.log_prob_old.push(lp);
                batch.values_old.push(ws.value());
                batch.terrain_index.push(runner.terrain_index);

                if let Some(rec) = batch.expert.as_mut() {
                    let expert = &experts[&runner.terrain_id];
                    expert.forward_mean_ws(&self.flat, &mut expert_ws)?;
                    rec.mean.extend_from_slice(expert_ws.mean());
                    rec.log_std.extend_from_slice(expert.log_std());
                }

                let result = runner.env.step(action)?;
                batch.rewards.push(result.reward);
                batch.dones.push(result.done);
                if result.done {
                    let next_radius = update_curriculum(
                        &self.params,
                        runner.env.spawn_radius,
                        runner.env.fetched_this_episode(),
                    );
                    runner.obs = runner.env.begin_episode(next_radius)?;
                } else {
                    runner.obs = result.obs;
                }
            }
        }
        for runner in &self.runners {
            runner.obs.flatten_into(&mut self.flat);
            student.forward_ws(&self.flat, &mut ws)?;
            batch.last_values.push(ws.value());
        }
        debug_assert_eq!(batch.len(), samples);
        Ok(batch)
    }
}

/// Generalized advantage estimation with episode-boundary masking, followed
/// by per-batch normalization of the advantages to zero mean / unit
/// variance. Returns (value targets) stay raw: `R = A + V`.
pub fn compute_advantages(batch: &mut RolloutBatch, gamma: f64, gae_lambda: f64) {
    let (t_max, n_envs) = (batch.n_steps, batch.n_envs);
    let n = batch.len();
    batch.advantages.clear();
    batch.advantages.resize(n, 0.0);
    batch.returns.clear();
    batch.returns.resize(n, 0.0);

    for e in 0..n_envs {
        let mut next_adv = 0.0;
        for t in (0..t_max).rev() {
            let s = t * n_envs + e;
            let nonterminal = if batch.dones[s] { 0.0 } else { 1.0 };
            let next_value = if t + 1 == t_max {
                batch.last_values[e]
            } else {
                batch.values_old[(t + 1) * n_envs + e]
            };
            let delta = batch.rewards[s] + gamma * next_value * nonterminal - batch.values_old[s];
            next_adv = delta + gamma * gae_lambda * nonterminal * next_adv;
            batch.advantages[s] = next_adv;
            batch.returns[s] = next_adv + batch.values_old[s];
        }
    }

    let mean = batch.advantages.iter().sum::<f64>() / n as f64;
    let var = batch
        .advantages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n as f64;
    let denom = libm::sqrt(var) + 1e-8;
    for a in &mut batch.advantages {
        *a = (*a - mean) / denom;
    }
    batch.advantages_ready = true;
}
