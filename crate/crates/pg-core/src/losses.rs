//! Training losses and their exact gradients.
//!
//! Three entry points share one per-sample engine:
//!
//! - [`bc_loss`] — behavior cloning: mean-squared error between the student
//!   mean and the recorded expert mean, plus mean-squared error between the
//!   student `log_std` and the expert `log_std`, each averaged over samples
//!   and action dimensions.
//! - [`rl_loss`] — minimization-form policy loss
//!   `-L_clip + c · KL(old ‖ new) + β · L_value`, where `L_clip` is the
//!   clipped-ratio surrogate on (ratio, advantage), the KL term penalizes
//!   drift from the rollout policy, and `L_value` is the mean squared error
//!   of the value head against the computed returns.
//! - [`combined_loss`] — `w · L_BC + (1 - w) · L_RL` with `w` from the
//!   transition schedule. By construction the combination is exactly linear
//!   in `w` and matches the standalone losses bit-for-bit at the endpoints.
//!
//! Gradients are accumulated through the policy's reverse-mode adjoints; the
//! clipped surrogate contributes `A·r` through the log-probability when the
//! unclipped branch is active and zero otherwise.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::policy::{kl_parts, PolicyError, PolicyParams, Scratch, Workspace};
use crate::rollout::RolloutBatch;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("batch records no expert targets but the BC term has weight {0}")]
    MissingExpertData(f64),
    #[error("advantages not computed for this batch")]
    AdvantagesMissing,
    #[error("non-finite probability ratio at sample {0} (degenerate std)")]
    DegenerateRatio(usize),
    #[error("non-finite loss")]
    NonFinite,
    #[error("empty minibatch")]
    EmptyBatch,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// PPO-side coefficients of the RL loss.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RlConfig {
    /// Ratio clip half-width ε.
    pub clip: f64,
    /// KL penalty coefficient c.
    pub kl_coef: f64,
    /// Value loss coefficient β.
    pub value_coef: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            kl_coef: 0.5,
            value_coef: 0.5,
        }
    }
}

/// Behavior-cloning terms; total is `mu + sigma`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BcTerms {
    pub mu: f64,
    pub sigma: f64,
}

impl BcTerms {
    pub fn total(&self) -> f64 {
        self.mu + self.sigma
    }
}

/// RL terms; total is `-surrogate + c · kl + β · value`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RlTerms {
    pub surrogate: f64,
    pub kl: f64,
    pub value: f64,
}

impl RlTerms {
    pub fn total(&self, cfg: &RlConfig) -> f64 {
        -self.surrogate + cfg.kl_coef * self.kl + cfg.value_coef * self.value
    }
}

/// Scalar loss with its per-term breakdown.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub w_bc: f64,
    pub bc: Option<BcTerms>,
    pub rl: Option<RlTerms>,
}

struct EngineRequest<'a> {
    /// Compute BC scalar terms (requires expert targets in the batch).
    bc: bool,
    /// Gradient scale on the BC term (0 skips accumulation).
    bc_scale: f64,
    /// Compute RL scalar terms (requires advantages).
    rl: bool,
    rl_scale: f64,
    cfg: &'a RlConfig,
}

fn engine(
    student: &PolicyParams,
    batch: &RolloutBatch,
    idx: &[usize],
    req: &EngineRequest,
    mut grad: Option<&mut [f64]>,
) -> Result<(Option<BcTerms>, Option<RlTerms>), LossError> {
    if idx.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let act_dim = batch.act_dim;
    let m = idx.len() as f64;
    let md = m * act_dim as f64;
    let expert = batch.expert.as_ref();
    if req.bc && expert.is_none() {
        return Err(LossError::MissingExpertData(req.bc_scale));
    }
    if req.rl && !batch.advantages_ready {
        return Err(LossError::AdvantagesMissing);
    }

    let log_std = student.log_std().to_vec();
    let std: Vec<f64> = log_std.iter().map(|&l| libm::exp(l)).collect();
    let log_std_off = student.layout().log_std;
    let half_ln_2pi = 0.5 * libm::log(core::f64::consts::TAU);

    let mut ws = Workspace::new(student.arch());
    let mut scratch = Scratch::default();
    let mut d_mean = vec![0.0; act_dim];

    let mut bc_mu_sum = 0.0;
    let mut bc_sigma_sum = 0.0;
    let mut surr_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut value_sum = 0.0;

    for &s in idx {
        let obs = batch.obs_row(s);
        student.forward_ws(obs, &mut ws)?;
        let mut d_value = 0.0;
        for d in d_mean.iter_mut() {
            *d = 0.0;
        }

        if req.bc {
            let rec = expert.expect("checked above");
            let e_mean = &rec.mean[s * act_dim..(s + 1) * act_dim];
            let e_log_std = &rec.log_std[s * act_dim..(s + 1) * act_dim];
            for d in 0..act_dim {
                let dm = ws.mean()[d] - e_mean[d];
                bc_mu_sum += dm * dm;
                let dls = log_std[d] - e_log_std[d];
                bc_sigma_sum += dls * dls;
                if let Some(g) = grad.as_deref_mut() {
                    if req.bc_scale != 0.0 {
                        d_mean[d] += req.bc_scale * 2.0 * dm / md;
                        g[log_std_off + d] += req.bc_scale * 2.0 * dls / md;
                    }
                }
            }
        }

        if req.rl {
            let action = batch.action_row(s);
            let mean_o = batch.mean_old_row(s);
            let std_o = batch.std_old_row(s);

            let mut lp_new = 0.0;
            for d in 0..act_dim {
                let z = (action[d] - ws.mean()[d]) / std[d];
                lp_new -= 0.5 * z * z + log_std[d] + half_ln_2pi;
            }
            let ratio = libm::exp(lp_new - batch.log_prob_old[s]);
            if !ratio.is_finite() {
                return Err(LossError::DegenerateRatio(s));
            }
            let adv = batch.advantages[s];
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(1.0 - req.cfg.clip, 1.0 + req.cfg.clip) * adv;
            surr_sum += unclipped.min(clipped);

            kl_sum += kl_parts(mean_o, std_o, ws.mean(), &std);

            let dv = ws.value() - batch.returns[s];
            value_sum += dv * dv;

            if let Some(g) = grad.as_deref_mut() {
                if req.rl_scale != 0.0 {
                    // d surrogate / d lp: active only on the unclipped branch.
                    let dsurr_dlp = if unclipped <= clipped { adv * ratio } else { 0.0 };
                    for d in 0..act_dim {
                        let z = (action[d] - ws.mean()[d]) / std[d];
                        let dlp_dmean = z / std[d];
                        let dlp_dls = z * z - 1.0;
                        let dkl_dmean = (ws.mean()[d] - mean_o[d]) / (std[d] * std[d]);
                        let vo = std_o[d] * std_o[d];
                        let dmo = mean_o[d] - ws.mean()[d];
                        let dkl_dls = 1.0 - (vo + dmo * dmo) / (std[d] * std[d]);
                        d_mean[d] += req.rl_scale
                            * (-dsurr_dlp * dlp_dmean + req.cfg.kl_coef * dkl_dmean)
                            / m;
                        g[log_std_off + d] += req.rl_scale
                            * (-dsurr_dlp * dlp_dls + req.cfg.kl_coef * dkl_dls)
                            / m;
                    }
                    d_value = req.rl_scale * req.cfg.value_coef * 2.0 * dv / m;
                }
            }
        }

        if let Some(g) = grad.as_deref_mut() {
            student.backward_ws(obs, &ws, &mut scratch, &d_mean, d_value, g);
        }
    }

    let bc = req.bc.then(|| BcTerms {
        mu: bc_mu_sum / md,
        sigma: bc_sigma_sum / md,
    });
    let rl = req.rl.then(|| RlTerms {
        surrogate: surr_sum / m,
        kl: kl_sum / m,
        value: value_sum / m,
    });
    Ok((bc, rl))
}

/// Behavior-cloning loss over `idx`; errors when the batch has no expert
/// targets. Gradients accumulate into `grad` when provided.
pub fn bc_loss(
    student: &PolicyParams,
    batch: &RolloutBatch,
    idx: &[usize],
    grad: Option<&mut [f64]>,
) -> Result<BcTerms, LossError> {
    let (bc, _) = engine(
        student,
        batch,
        idx,
        &EngineRequest {
            bc: true,
            bc_scale: 1.0,
            rl: false,
            rl_scale: 0.0,
            cfg: &RlConfig::default(),
        },
        grad,
    )?;
    Ok(bc.expect("bc requested"))
}

/// Minimization-form RL loss over `idx`; requires advantages.
pub fn rl_loss(
    student: &PolicyParams,
    batch: &RolloutBatch,
    idx: &[usize],
    cfg: &RlConfig,
    grad: Option<&mut [f64]>,
) -> Result<RlTerms, LossError> {
    let (_, rl) = engine(
        student,
        batch,
        idx,
        &EngineRequest {
            bc: false,
            bc_scale: 0.0,
            rl: true,
            rl_scale: 1.0,
            cfg,
        },
        grad,
    )?;
    Ok(rl.expect("rl requested"))
}

/// `w · L_BC + (1 - w) · L_RL` with gradients scaled accordingly.
///
/// The BC terms are computed (for reporting) whenever the batch carries
/// expert targets, even at `w = 0`; they only contribute gradient when
/// `w > 0`. Symmetrically the RL terms require advantages unless `w = 1`
/// is the sole contribution.
pub fn combined_loss(
    student: &PolicyParams,
    batch: &RolloutBatch,
    idx: &[usize],
    w: f64,
    cfg: &RlConfig,
    grad: Option<&mut [f64]>,
) -> Result<LossReport, LossError> {
    debug_assert!((0.0..=1.0).contains(&w));
    let has_expert = batch.expert.is_some();
    if w > 0.0 && !has_expert {
        return Err(LossError::MissingExpertData(w));
    }
    let want_rl = batch.advantages_ready;
    if w < 1.0 && !want_rl {
        return Err(LossError::AdvantagesMissing);
    }
    let (bc, rl) = engine(
        student,
        batch,
        idx,
        &EngineRequest {
            bc: has_expert,
            bc_scale: w,
            rl: want_rl,
            rl_scale: 1.0 - w,
            cfg,
        },
        grad,
    )?;
    let bc_total = bc.map(|b| b.total()).unwrap_or(0.0);
    let rl_total = rl.map(|r| r.total(cfg)).unwrap_or(0.0);
    let total = w * bc_total + (1.0 - w) * rl_total;
    if !total.is_finite() {
        return Err(LossError::NonFinite);
    }
    Ok(LossReport {
        total,
        w_bc: w,
        bc,
        rl,
    })
}
