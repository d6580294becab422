//! PPO over sampled responses, with optional dense PRM rewards and critic
//! initialization from the PRM.
//!
//! Per-token reward: a PRM shaping term scaled by a pass/fail coefficient
//! and (by default) normalized by response length, minus a KL penalty
//! against the frozen starting policy; the unit-test reward lands on the
//! terminal token. Advantages come from GAE and are standardized per batch.

use crate::labeler::COLLECT_TOP_P;
use crate::minilang::{passes_all, Program, Token};
use crate::net::{AdamConfig, AdamState, Gradients};
use crate::policy::{featurize, log_softmax, PolicyModel, ValueModel};
use crate::prm::PrmModel;
use crate::rng::Stream;
use crate::taskgen::Task;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

/// Sampling temperature for training rollouts (full-support decoding).
pub const ROLLOUT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlMode {
    /// Unit-test reward and KL penalty only.
    SparseBaseline,
    /// Adds per-token PRM rewards.
    Dense,
    /// Sparse rewards, critic initialized from the PRM.
    ValueInit,
    /// Dense rewards and PRM-initialized critic.
    DenseAndValueInit,
}

impl RlMode {
    pub const ALL: [RlMode; 4] = [
        RlMode::SparseBaseline,
        RlMode::Dense,
        RlMode::ValueInit,
        RlMode::DenseAndValueInit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RlMode::SparseBaseline => "sparse_baseline",
            RlMode::Dense => "dense",
            RlMode::ValueInit => "value_init",
            RlMode::DenseAndValueInit => "dense_and_value_init",
        }
    }

    pub fn uses_dense(self) -> bool {
        matches!(self, RlMode::Dense | RlMode::DenseAndValueInit)
    }

    pub fn uses_value_init(self) -> bool {
        matches!(self, RlMode::ValueInit | RlMode::DenseAndValueInit)
    }
}

impl fmt::Display for RlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RlMode {
    type Err = String;

    fn from_str(s: &str) -> Result<RlMode, String> {
        RlMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown rl mode {s:?}"))
    }
}

#[derive(Debug)]
pub enum RlError {
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    ConfigInvalid(String),
    Io(std::io::Error),
}

impl fmt::Display for RlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RlError::LengthMismatch { what, expected, got } => {
                write!(f, "{what}: expected length {expected}, got {got}")
            }
            RlError::ConfigInvalid(msg) => write!(f, "invalid rl config: {msg}"),
            RlError::Io(e) => write!(f, "rl io: {e}"),
        }
    }
}

impl std::error::Error for RlError {}

impl From<std::io::Error> for RlError {
    fn from(e: std::io::Error) -> RlError {
        RlError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// PRM coefficient when the response fails its tests.
    pub lambda_fail: f64,
    /// PRM coefficient when the response passes (shaping mostly off).
    pub lambda_pass: f64,
    /// KL penalty strength against the frozen reference policy.
    pub kl_beta: f64,
    /// Divide the PRM term by response length. Turning this off lets long
    /// responses accumulate unbounded shaping reward.
    pub length_normalization: bool,
}

impl Default for RewardConfig {
    fn default() -> RewardConfig {
        RewardConfig {
            lambda_fail: 0.25,
            lambda_pass: 0.025,
            kl_beta: 0.01,
            length_normalization: true,
        }
    }
}

/// Per-token rewards for one response. `prm_scores[t]` scores the prefix
/// through token t; None disables the dense term. The unit-test reward
/// `unit_reward` is added on the final token. All slices must have the
/// response's length.
pub fn compose_rewards(
    response_len: usize,
    unit_reward: f64,
    prm_scores: Option<&[f64]>,
    logp: &[f64],
    ref_logp: &[f64],
    cfg: &RewardConfig,
) -> Result<Vec<f64>, RlError> {
    let t_len = response_len;
    let check = |what: &'static str, got: usize| {
        if got != t_len {
            return Err(RlError::LengthMismatch { what, expected: t_len, got });
        }
        Ok(())
    };
    check("logp", logp.len())?;
    check("ref_logp", ref_logp.len())?;
    if let Some(s) = prm_scores {
        check("prm_scores", s.len())?;
    }
    let mut rewards = Vec::with_capacity(t_len);
    let passed = unit_reward > 0.5;
    let lambda = if passed { cfg.lambda_pass } else { cfg.lambda_fail };
    let norm = if cfg.length_normalization { 1.0 / t_len.max(1) as f64 } else { 1.0 };
    for t in 0..t_len {
        let dense = prm_scores.map_or(0.0, |s| lambda * norm * s[t]);
        let kl = cfg.kl_beta * (logp[t] - ref_logp[t]);
        rewards.push(dense - kl);
    }
    if let Some(last) = rewards.last_mut() {
        *last += unit_reward;
    }
    Ok(rewards)
}

/// Generalized advantage estimation with terminal bootstrap 0.
/// Returns (advantages, returns) where returns[t] = advantages[t] + values[t].
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    if values.len() != rewards.len() {
        return Err(RlError::LengthMismatch {
            what: "values",
            expected: rewards.len(),
            got: values.len(),
        });
    }
    let t_len = rewards.len();
    let mut advantages = vec![0.0; t_len];
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let next_value = if t + 1 < t_len { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * lambda * acc;
        advantages[t] = acc;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts and scales to mean 0, standard deviation 1 (population), with a
/// 1e-8 floor on the deviation.
pub fn standardize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for x in xs {
        *x = (*x - mean) / std;
    }
}

/// Everything PPO needs about one sampled response.
#[derive(Debug, Clone)]
pub struct RolloutResponse {
    pub task_idx: usize,
    pub tokens: Program,
    /// State features per position (prefix before each token).
    pub features: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub behavior_logp: Vec<f64>,
    pub ref_logp: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub unit_reward: f64,
    /// Dense (PRM) component of the summed reward, for metric decomposition.
    pub dense_sum: f64,
    /// Sum of logp - ref_logp over tokens.
    pub kl_sum: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub responses: Vec<RolloutResponse>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip_epsilon: f64,
}

impl Default for PpoConfig {
    fn default() -> PpoConfig {
        PpoConfig { epochs: 4, minibatch_size: 64, clip_epsilon: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// Gradients and losses of the clipped surrogate and value MSE over a set
/// of (response, token) items, averaged within the set.
pub(crate) fn minibatch_grads(
    policy: &PolicyModel,
    value: &ValueModel,
    batch: &RolloutBatch,
    items: &[(usize, usize)],
    clip_epsilon: f64,
    policy_acc: &mut Gradients,
    value_acc: &mut Gradients,
) -> PpoStats {
    policy_acc.clear();
    value_acc.clear();
    let n = items.len() as f64;
    let mut stats = PpoStats::default();
    for &(ri, t) in items {
        let resp = &batch.responses[ri];
        let x = &resp.features[t];
        let adv = resp.advantages[t];
        let action = resp.actions[t];

        let cache = policy.net().forward(x).expect("feature width is fixed");
        let lsm = log_softmax(cache.output());
        let ratio = (lsm[action] - resp.behavior_logp[t]).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * adv;
        stats.policy_loss -= unclipped.min(clipped) / n;
        if unclipped <= clipped {
            // Gradient flows only through the unclipped branch when it is
            // the active minimum.
            let coeff = -adv * ratio / n;
            let mut grad: Vec<f64> = lsm.iter().map(|lp| -coeff * lp.exp()).collect();
            grad[action] += coeff;
            policy
                .net()
                .backward_accumulate(&cache, &grad, policy_acc)
                .expect("grad width is fixed");
        }

        let vcache = value.net().forward(x).expect("feature width is fixed");
        let diff = vcache.output()[0] - resp.returns[t];
        stats.value_loss += diff * diff / n;
        value
            .net()
            .backward_accumulate(&vcache, &[2.0 * diff / n], value_acc)
            .expect("grad width is fixed");
    }
    stats
}

/// Runs clipped-surrogate PPO epochs over the batch, updating the policy
/// and value networks with their own optimizers. Returns losses averaged
/// over all minibatches.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut PolicyModel,
    value: &mut ValueModel,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    policy_adam: &mut AdamState,
    value_adam: &mut AdamState,
    stream: &Stream,
) -> PpoStats {
    let mut items: Vec<(usize, usize)> = Vec::new();
    for (ri, resp) in batch.responses.iter().enumerate() {
        for t in 0..resp.tokens.len() {
            items.push((ri, t));
        }
    }
    if items.is_empty() {
        return PpoStats::default();
    }
    let mut policy_acc = Gradients::zeros_like(policy.net());
    let mut value_acc = Gradients::zeros_like(value.net());
    let mut totals = PpoStats::default();
    let mut n_minibatches = 0usize;
    for epoch in 0..cfg.epochs {
        stream.derive(epoch as u64).shuffle(&mut items);
        for chunk in items.chunks(cfg.minibatch_size.max(1)) {
            let stats = minibatch_grads(
                policy,
                value,
                batch,
                chunk,
                cfg.clip_epsilon,
                &mut policy_acc,
                &mut value_acc,
            );
            policy_adam.apply(policy.net_mut(), &policy_acc);
            value_adam.apply(value.net_mut(), &value_acc);
            totals.policy_loss += stats.policy_loss;
            totals.value_loss += stats.value_loss;
            n_minibatches += 1;
        }
    }
    PpoStats {
        policy_loss: totals.policy_loss / n_minibatches as f64,
        value_loss: totals.value_loss / n_minibatches as f64,
    }
}

/// One row of the training metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub mode: String,
    pub pass_rate: f64,
    pub mean_reward: f64,
    pub mean_dense: f64,
    pub mean_kl: f64,
    pub mean_len: f64,
    pub mean_nop: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

pub const METRICS_HEADER: &str =
    "step,mode,pass_rate,mean_reward,mean_dense,mean_kl,mean_len,mean_nop,policy_loss,value_loss";

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), RlError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.mode,
            r.pass_rate,
            r.mean_reward,
            r.mean_dense,
            r.mean_kl,
            r.mean_len,
            r.mean_nop,
            r.policy_loss,
            r.value_loss
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, RlError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(RlError::ConfigInvalid(format!("bad metrics header: {other:?}")));
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 10 {
            return Err(RlError::ConfigInvalid(format!("bad metrics row: {line:?}")));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|e| RlError::ConfigInvalid(e.to_string()));
        rows.push(MetricsRow {
            step: parts[0].parse().map_err(|_| RlError::ConfigInvalid("bad step".into()))?,
            mode: parts[1].to_string(),
            pass_rate: f(parts[2])?,
            mean_reward: f(parts[3])?,
            mean_dense: f(parts[4])?,
            mean_kl: f(parts[5])?,
            mean_len: f(parts[6])?,
            mean_nop: f(parts[7])?,
            policy_loss: f(parts[8])?,
            value_loss: f(parts[9])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub mode: RlMode,
    pub steps: usize,
    pub rollouts_per_step: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub reward: RewardConfig,
    pub ppo: PpoConfig,
    pub policy_lr: f64,
    pub value_lr: f64,
    /// Number of evenly spaced checkpoints kept over the run.
    pub checkpoints: usize,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> RlConfig {
        RlConfig {
            mode: RlMode::DenseAndValueInit,
            steps: 200,
            rollouts_per_step: 256,
            gamma: 1.0,
            gae_lambda: 0.95,
            reward: RewardConfig::default(),
            ppo: PpoConfig::default(),
            policy_lr: 3e-4,
            value_lr: 1e-3,
            checkpoints: 4,
            seed: 0,
        }
    }
}

/// A policy/value snapshot taken after the update at `step`.
#[derive(Debug, Clone)]
pub struct RlCheckpoint {
    pub step: usize,
    pub policy: PolicyModel,
    pub value: ValueModel,
}

#[derive(Debug, Clone)]
pub struct RlRunResult {
    pub metrics: Vec<MetricsRow>,
    pub checkpoints: Vec<RlCheckpoint>,
    pub final_policy: PolicyModel,
    pub final_value: ValueModel,
}

/// Steps at which checkpoints are captured: `count` evenly spaced steps
/// ending at `steps`.
pub fn checkpoint_steps(steps: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=count)
        .map(|i| (steps as f64 * i as f64 / count as f64).ceil() as usize)
        .filter(|&s| s >= 1)
        .collect();
    out.dedup();
    out
}

/// Trains a policy with PPO. The critic starts fresh, or from the PRM in
/// value-init modes; dense modes score every prefix with the PRM. The
/// reference policy for the KL penalty is the frozen initial policy.
pub fn train_rl(
    tasks: &[Task],
    policy_init: &PolicyModel,
    prm: Option<&PrmModel>,
    cfg: &RlConfig,
) -> Result<RlRunResult, RlError> {
    if tasks.is_empty() {
        return Err(RlError::ConfigInvalid("no tasks to train on".into()));
    }
    if cfg.rollouts_per_step == 0 {
        return Err(RlError::ConfigInvalid("rollouts_per_step must be positive".into()));
    }
    if (cfg.mode.uses_dense() || cfg.mode.uses_value_init()) && prm.is_none() {
        return Err(RlError::ConfigInvalid(format!(
            "mode {} requires a trained reward model",
            cfg.mode
        )));
    }

    let root = Stream::from_seed(cfg.seed).derive_str("rl");
    let mut policy = policy_init.clone();
    let reference = policy_init.clone();
    let mut value = if cfg.mode.uses_value_init() {
        prm.expect("checked above").to_value_init()
    } else {
        ValueModel::new(&mut root.derive_str("fresh-value"))
    };
    let mut policy_adam = AdamState::new(policy.net(), AdamConfig::with_lr(cfg.policy_lr));
    let mut value_adam = AdamState::new(value.net(), AdamConfig::with_lr(cfg.value_lr));
    let ckpt_steps = checkpoint_steps(cfg.steps, cfg.checkpoints);

    let mut metrics = Vec::with_capacity(cfg.steps);
    let mut checkpoints = Vec::with_capacity(ckpt_steps.len());

    for step in 1..=cfg.steps {
        let step_stream = root.derive_str("rollout").derive(step as u64);
        let dense = cfg.mode.uses_dense();
        let policy_ref = &policy;
        let value_ref = &value;
        let reference_ref = &reference;
        let mut responses: Vec<RolloutResponse> = (0..cfg.rollouts_per_step)
            .into_par_iter()
            .map(|i| {
                let sub = step_stream.derive(i as u64);
                let task_idx = sub.derive_str("task").next_range(tasks.len());
                let task = &tasks[task_idx];
                let mut sample_stream = sub.derive_str("sample");
                let (tokens, behavior_logp) = policy_ref.sample_response(
                    task,
                    ROLLOUT_TEMPERATURE,
                    COLLECT_TOP_P,
                    &mut sample_stream,
                );
                let t_len = tokens.len();
                let unit_reward = if passes_all(&tokens, &task.tests).0 { 1.0 } else { 0.0 };
                let mut features = Vec::with_capacity(t_len);
                let mut values_v = Vec::with_capacity(t_len);
                let mut ref_logp = Vec::with_capacity(t_len);
                let mut actions = Vec::with_capacity(t_len);
                for t in 0..t_len {
                    let x = featurize(task, &tokens.tokens()[..t]);
                    values_v.push(value_ref.net().output(&x).expect("fixed width")[0]);
                    let ref_lsm = log_softmax(
                        &reference_ref.net().output(&x).expect("fixed width"),
                    );
                    ref_logp.push(ref_lsm[tokens.tokens()[t].id()]);
                    actions.push(tokens.tokens()[t].id());
                    features.push(x);
                }
                let prm_scores: Option<Vec<f64>> = if dense {
                    let model = prm.expect("dense requires prm");
                    Some(
                        (0..t_len)
                            .map(|t| model.score(task, &tokens.tokens()[..t + 1]))
                            .collect(),
                    )
                } else {
                    None
                };
                let rewards = compose_rewards(
                    t_len,
                    unit_reward,
                    prm_scores.as_deref(),
                    &behavior_logp,
                    &ref_logp,
                    &cfg.reward,
                )
                .expect("lengths agree by construction");
                let lambda = if unit_reward > 0.5 {
                    cfg.reward.lambda_pass
                } else {
                    cfg.reward.lambda_fail
                };
                let norm =
                    if cfg.reward.length_normalization { 1.0 / t_len.max(1) as f64 } else { 1.0 };
                let dense_sum = prm_scores
                    .as_ref()
                    .map_or(0.0, |s| s.iter().map(|x| lambda * norm * x).sum());
                let kl_sum = behavior_logp
                    .iter()
                    .zip(&ref_logp)
                    .map(|(a, b)| a - b)
                    .sum();
                RolloutResponse {
                    task_idx,
                    tokens,
                    features,
                    actions,
                    behavior_logp,
                    ref_logp,
                    values: values_v,
                    rewards,
                    advantages: Vec::new(),
                    returns: Vec::new(),
                    unit_reward,
                    dense_sum,
                    kl_sum,
                }
            })
            .collect();

        let mut all_adv = Vec::new();
        for resp in &mut responses {
            let (adv, ret) = gae(&resp.rewards, &resp.values, cfg.gamma, cfg.gae_lambda)?;
            all_adv.extend_from_slice(&adv);
            resp.advantages = adv;
            resp.returns = ret;
        }
        standardize(&mut all_adv);
        let mut cursor = 0;
        for resp in &mut responses {
            let n = resp.advantages.len();
            resp.advantages.copy_from_slice(&all_adv[cursor..cursor + n]);
            cursor += n;
        }

        let batch = RolloutBatch { responses };
        let n = batch.responses.len() as f64;
        let pass_rate = batch.responses.iter().map(|r| r.unit_reward).sum::<f64>() / n;
        let mean_reward =
            batch.responses.iter().map(|r| r.rewards.iter().sum::<f64>()).sum::<f64>() / n;
        let mean_dense = batch.responses.iter().map(|r| r.dense_sum).sum::<f64>() / n;
        let mean_kl = batch.responses.iter().map(|r| r.kl_sum).sum::<f64>() / n;
        let mean_len =
            batch.responses.iter().map(|r| r.tokens.len() as f64).sum::<f64>() / n;
        let mean_nop = batch
            .responses
            .iter()
            .map(|r| r.tokens.tokens().iter().filter(|&&t| t == Token::Nop).count() as f64)
            .sum::<f64>()
            / n;

        let stats = ppo_update(
            &mut policy,
            &mut value,
            &batch,
            &cfg.ppo,
            &mut policy_adam,
            &mut value_adam,
            &root.derive_str("ppo").derive(step as u64),
        );

        metrics.push(MetricsRow {
            step,
            mode: cfg.mode.name().to_string(),
            pass_rate,
            mean_reward,
            mean_dense,
            mean_kl,
            mean_len,
            mean_nop,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
        });

        if ckpt_steps.contains(&step) {
            checkpoints.push(RlCheckpoint {
                step,
                policy: policy.clone(),
                value: value.clone(),
            });
        }
    }

    Ok(RlRunResult { metrics, checkpoints, final_policy: policy, final_value: value })
}
