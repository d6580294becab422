//! Run configuration: one JSON document holding every stage's
//! hyperparameters, persisted fully resolved so a run directory can be
//! reproduced from its `config.json` alone.

use crate::stages::CliError;
use procrl_core::evalkit::EvalConfig;
use procrl_core::labeler::{CollectConfig, SelectionStrategy};
use procrl_core::policy::SftConfig;
use procrl_core::prm::PrmTrainConfig;
use procrl_core::rl::{PpoConfig, RewardConfig, RlConfig, RlMode};
use procrl_core::net::AdamConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Every stage derives its own streams from it, so one
    /// value pins the whole pipeline.
    pub seed: u64,
    pub taskgen: TaskgenSection,
    pub sft: SftSection,
    pub collect: CollectSection,
    pub prm: PrmSection,
    pub rl: RlSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 0,
            taskgen: TaskgenSection::default(),
            sft: SftSection::default(),
            collect: CollectSection::default(),
            prm: PrmSection::default(),
            rl: RlSection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskgenSection {
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub arity_mix: f64,
    pub tests_per_task: usize,
    pub train_fraction: f64,
}

impl Default for TaskgenSection {
    fn default() -> TaskgenSection {
        TaskgenSection {
            count: 600,
            min_len: 3,
            max_len: 10,
            arity_mix: 0.5,
            tests_per_task: 5,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for SftSection {
    fn default() -> SftSection {
        let d = SftConfig::default();
        SftSection { epochs: d.epochs, batch_size: d.batch_size, lr: d.adam.lr }
    }
}

impl SftSection {
    pub fn to_core(&self, seed: u64) -> SftConfig {
        SftConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig::with_lr(self.lr),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub n_per_prompt: f64,
    pub k_completions: u32,
    pub neutral_labels: bool,
    pub step_group_size: usize,
    /// Which records train-prm keeps. The sweep compares all strategies;
    /// the default pipeline keeps everything.
    pub strategy: SelectionStrategy,
}

impl Default for CollectSection {
    fn default() -> CollectSection {
        let d = CollectConfig::default();
        CollectSection {
            n_per_prompt: d.n_per_prompt,
            k_completions: d.k_completions,
            neutral_labels: d.neutral_labels,
            step_group_size: d.step_group_size,
            strategy: SelectionStrategy::Full,
        }
    }
}

impl CollectSection {
    pub fn to_core(&self, seed: u64) -> CollectConfig {
        CollectConfig {
            n_per_prompt: self.n_per_prompt,
            k_completions: self.k_completions,
            neutral_labels: self.neutral_labels,
            step_group_size: self.step_group_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrmSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for PrmSection {
    fn default() -> PrmSection {
        let d = PrmTrainConfig::default();
        PrmSection { epochs: d.epochs, batch_size: d.batch_size, lr: d.lr }
    }
}

impl PrmSection {
    pub fn to_core(&self, seed: u64) -> PrmTrainConfig {
        PrmTrainConfig { epochs: self.epochs, batch_size: self.batch_size, lr: self.lr, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub lambda_fail: f64,
    pub lambda_pass: f64,
    pub kl_beta: f64,
    pub length_normalization: bool,
}

impl Default for RewardSection {
    fn default() -> RewardSection {
        let d = RewardConfig::default();
        RewardSection {
            lambda_fail: d.lambda_fail,
            lambda_pass: d.lambda_pass,
            kl_beta: d.kl_beta,
            length_normalization: d.length_normalization,
        }
    }
}

impl RewardSection {
    pub fn to_core(&self) -> RewardConfig {
        RewardConfig {
            lambda_fail: self.lambda_fail,
            lambda_pass: self.lambda_pass,
            kl_beta: self.kl_beta,
            length_normalization: self.length_normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoSection {
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip_epsilon: f64,
}

impl Default for PpoSection {
    fn default() -> PpoSection {
        let d = PpoConfig::default();
        PpoSection {
            epochs: d.epochs,
            minibatch_size: d.minibatch_size,
            clip_epsilon: d.clip_epsilon,
        }
    }
}

impl PpoSection {
    pub fn to_core(&self) -> PpoConfig {
        PpoConfig {
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            clip_epsilon: self.clip_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    /// Mode for the rl-psgpo stage; rl-baseline always runs sparse.
    pub mode: RlMode,
    pub steps: usize,
    pub rollouts_per_step: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub reward: RewardSection,
    pub ppo: PpoSection,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub checkpoints: usize,
}

impl Default for RlSection {
    fn default() -> RlSection {
        let d = RlConfig::default();
        RlSection {
            mode: d.mode,
            steps: d.steps,
            rollouts_per_step: d.rollouts_per_step,
            gamma: d.gamma,
            gae_lambda: d.gae_lambda,
            reward: RewardSection::default(),
            ppo: PpoSection::default(),
            policy_lr: d.policy_lr,
            value_lr: d.value_lr,
            checkpoints: d.checkpoints,
        }
    }
}

impl RlSection {
    pub fn to_core(&self, mode: RlMode, seed: u64) -> RlConfig {
        RlConfig {
            mode,
            steps: self.steps,
            rollouts_per_step: self.rollouts_per_step,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            reward: self.reward.to_core(),
            ppo: self.ppo.to_core(),
            policy_lr: self.policy_lr,
            value_lr: self.value_lr,
            checkpoints: self.checkpoints,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_samples: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub k_max: usize,
    pub length_bin_edges: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> EvalSection {
        let d = EvalConfig::default();
        EvalSection {
            n_samples: d.n_samples,
            temperature: d.temperature,
            top_p: d.top_p,
            k_max: 30,
            length_bin_edges: vec![0, 6, 12, 18, 24],
        }
    }
}

impl EvalSection {
    pub fn to_core(&self, seed: u64) -> EvalConfig {
        EvalConfig {
            n_samples: self.n_samples,
            temperature: self.temperature,
            top_p: self.top_p,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub strategies: Vec<SelectionStrategy>,
    pub n_per_prompt_grid: Vec<f64>,
    /// RL budget per sweep cell; the full grid retrains once per cell.
    pub rl_steps: usize,
    pub rollouts_per_step: usize,
    pub eval_samples: usize,
}

impl Default for SweepSection {
    fn default() -> SweepSection {
        SweepSection {
            strategies: SelectionStrategy::ALL.to_vec(),
            n_per_prompt_grid: vec![0.25, 1.0, 2.0, 4.0, 8.0],
            rl_steps: 40,
            rollouts_per_step: 64,
            eval_samples: 5,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!("cannot parse config {}: {e}", p.display()))
                })
            }
        }
    }

    /// Applies `key.path=value` overrides. Only leaves that already exist
    /// in the resolved config may be set, so typos fail loudly instead of
    /// adding dead keys. Values parse as JSON first, falling back to a
    /// bare string (so `rl.mode=dense` needs no quoting).
    pub fn apply_overrides(self, overrides: &[String]) -> Result<RunConfig, CliError> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut tree = serde_json::to_value(&self).expect("config serializes");
        for entry in overrides {
            let (path, raw) = entry.split_once('=').ok_or_else(|| {
                CliError::Config(format!("override {entry:?} must look like key.path=value"))
            })?;
            let new_value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let mut node = &mut tree;
            let segments: Vec<&str> = path.split('.').collect();
            for (i, seg) in segments.iter().enumerate() {
                let obj = node.as_object_mut().ok_or_else(|| {
                    CliError::Config(format!("{}: not a config section", segments[..i].join(".")))
                })?;
                node = obj.get_mut(*seg).ok_or_else(|| {
                    CliError::Config(format!("unknown config key {path:?} (at {seg:?})"))
                })?;
            }
            *node = new_value;
        }
        serde_json::from_value(tree)
            .map_err(|e| CliError::Config(format!("override produced invalid config: {e}")))
    }

    /// Persists the fully resolved config as `config.json` in the run
    /// directory. Stable field order and a trailing newline keep repeated
    /// writes byte-identical.
    pub fn persist(&self, run_dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(run_dir)
            .map_err(|e| CliError::Other(anyhow::Error::new(e).context("creating run dir")))?;
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        std::fs::write(run_dir.join("config.json"), text)
            .map_err(|e| CliError::Other(anyhow::Error::new(e).context("writing config.json")))?;
        Ok(())
    }
}
