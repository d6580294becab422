//! Process reward model: a scalar net over prefix states, regressed by MSE
//! onto prefix labels in {-1, 0, +1}.
//!
//! The PRM shares the value network's architecture, so weights transplant
//! in both directions: it can be initialized from a trained value function,
//! and its trained weights can seed a PPO critic.

use crate::labeler::PrefixLabelRecord;
use crate::minilang::Token;
use crate::net::{AdamConfig, AdamState, DenseNet, Gradients, NetError};
use crate::policy::{featurize, scalar_dims, ValueModel};
use crate::rng::Stream;
use crate::taskgen::Task;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum PrmError {
    EmptyDataset,
    UnknownTask(String),
    Net(NetError),
}

impl fmt::Display for PrmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrmError::EmptyDataset => write!(f, "no records to train on"),
            PrmError::UnknownTask(id) => write!(f, "record references unknown task {id:?}"),
            PrmError::Net(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PrmError {}

impl From<NetError> for PrmError {
    fn from(e: NetError) -> PrmError {
        PrmError::Net(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrmModel {
    net: DenseNet,
}

impl PrmModel {
    pub fn new(stream: &mut Stream) -> PrmModel {
        PrmModel { net: DenseNet::new(&scalar_dims(), stream) }
    }

    /// Starts the PRM from a trained value function's weights.
    pub fn from_value(value: &ValueModel) -> PrmModel {
        PrmModel { net: value.net().clone() }
    }

    /// Exports the PRM weights as a critic initialization.
    pub fn to_value_init(&self) -> ValueModel {
        ValueModel::from_net(self.net.clone())
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn raw_score(&self, task: &Task, prefix: &[Token]) -> f64 {
        self.net.output(&featurize(task, prefix)).expect("feature width is fixed")[0]
    }

    /// Score clipped to the label range [-1, 1].
    pub fn score(&self, task: &Task, prefix: &[Token]) -> f64 {
        self.raw_score(task, prefix).clamp(-1.0, 1.0)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        self.net.save(path, "prm")
    }

    pub fn load(path: &Path) -> Result<PrmModel, NetError> {
        Ok(PrmModel { net: DenseNet::load_expecting(path, "prm")? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PrmTrainConfig {
    fn default() -> PrmTrainConfig {
        PrmTrainConfig { epochs: 4, batch_size: 64, lr: 1e-3, seed: 0 }
    }
}

/// Trains `init` on prefix-label records by minibatch MSE regression.
/// Returns the trained model and the mean loss per epoch.
pub fn train_prm(
    records: &[PrefixLabelRecord],
    tasks: &[Task],
    init: PrmModel,
    cfg: &PrmTrainConfig,
) -> Result<(PrmModel, Vec<f64>), PrmError> {
    if records.is_empty() {
        return Err(PrmError::EmptyDataset);
    }
    let by_id: BTreeMap<&str, &Task> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    // Resolve features up front so a missing task fails before training.
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        let task = by_id
            .get(r.task_id.as_str())
            .ok_or_else(|| PrmError::UnknownTask(r.task_id.clone()))?;
        let x = featurize(task, &r.tokens.tokens()[..r.prefix_len as usize]);
        samples.push((x, r.label as f64));
    }

    let mut model = init;
    let mut adam = AdamState::new(&model.net, AdamConfig::with_lr(cfg.lr));
    let mut acc = Gradients::zeros_like(&model.net);
    let stream = Stream::from_seed(cfg.seed).derive_str("prm");
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        stream.derive(epoch as u64).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            acc.clear();
            for &si in batch {
                let (x, target) = &samples[si];
                let cache = model.net.forward(x)?;
                let diff = cache.output()[0] - target;
                epoch_loss += diff * diff;
                model.net.backward_accumulate(&cache, &[2.0 * diff / batch.len() as f64], &mut acc)?;
            }
            adam.apply(&mut model.net, &acc);
        }
        history.push(epoch_loss / samples.len() as f64);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::ResponseType;
    use crate::minilang::Program;
    use crate::taskgen::generate_corpus;

    #[test]
    fn value_transplant_is_bit_exact_both_ways() {
        let tasks = generate_corpus(3, 51, 3, 6, 0.5, 5).unwrap();
        let mut s = Stream::from_seed(1);
        let value = ValueModel::new(&mut s);
        let prm = PrmModel::from_value(&value);
        let back = prm.to_value_init();
        for task in &tasks {
            for m in 0..task.reference.len() {
                let prefix = &task.reference.tokens()[..m];
                let v = value.value(task, prefix);
                assert_eq!(v.to_bits(), prm.raw_score(task, prefix).to_bits());
                assert_eq!(v.to_bits(), back.value(task, prefix).to_bits());
            }
        }
        assert_eq!(value.net(), back.net());
    }

    #[test]
    fn score_is_clamped_to_label_range() {
        let tasks = generate_corpus(1, 52, 3, 5, 0.0, 5).unwrap();
        let mut s = Stream::from_seed(2);
        let mut prm = PrmModel::new(&mut s);
        // Push the output bias far outside the label range.
        let last = prm.net.dims().len() - 2;
        prm.net.biases_mut(last)[0] = 5.0;
        let raw = prm.raw_score(&tasks[0], &[]);
        assert!(raw > 1.0);
        assert_eq!(prm.score(&tasks[0], &[]), 1.0);
        prm.net.biases_mut(last)[0] = -5.0;
        assert_eq!(prm.score(&tasks[0], &[]), -1.0);
    }

    fn labeled_records(tasks: &[Task]) -> Vec<PrefixLabelRecord> {
        // Reference prefixes labeled +1; a junk failing response labeled -1;
        // NOP positions 0.
        let mut records = Vec::new();
        for task in tasks {
            let good = task.reference.clone();
            for m in 1..=good.len() {
                records.push(PrefixLabelRecord {
                    task_id: task.id.clone(),
                    checkpoint_id: 0,
                    response_id: 0,
                    tokens: good.clone(),
                    m: m as u32,
                    prefix_len: m as u32,
                    label: 1,
                    response_type: ResponseType::Correct,
                });
            }
            let bad = Program::new(vec![Token::Push1, Token::Nop, Token::Swap]).unwrap();
            for m in 1..=bad.len() {
                records.push(PrefixLabelRecord {
                    task_id: task.id.clone(),
                    checkpoint_id: 0,
                    response_id: 1,
                    tokens: bad.clone(),
                    m: m as u32,
                    prefix_len: m as u32,
                    label: if m == 2 { 0 } else { -1 },
                    response_type: ResponseType::Wrong,
                });
            }
        }
        records
    }

    #[test]
    fn regression_separates_label_signs() {
        let tasks = generate_corpus(4, 53, 3, 6, 0.5, 5).unwrap();
        let records = labeled_records(&tasks);
        let mut s = Stream::from_seed(3);
        let init = PrmModel::new(&mut s);
        let cfg = PrmTrainConfig { epochs: 300, batch_size: 16, lr: 3e-3, seed: 4 };
        let (prm, history) = train_prm(&records, &tasks, init, &cfg).unwrap();
        assert_eq!(history.len(), 300);
        assert!(history.last().unwrap() < &0.1, "final loss {history:?}");
        assert!(history[0] > 4.0 * history[history.len() - 1]);
        for task in &tasks {
            let good = prm.score(task, &task.reference.tokens()[..2]);
            assert!(good > 0.5, "positive prefix scored {good}");
        }
        let bad_prefix = [Token::Push1, Token::Nop, Token::Swap];
        for task in &tasks {
            let bad = prm.score(task, &bad_prefix);
            assert!(bad < -0.3, "negative prefix scored {bad}");
        }
    }

    #[test]
    fn neutral_targets_pull_scores_toward_zero() {
        let tasks = generate_corpus(1, 54, 3, 5, 0.0, 5).unwrap();
        let task = &tasks[0];
        let tokens = Program::new(vec![Token::Nop, Token::Nop, Token::Nop]).unwrap();
        let records: Vec<PrefixLabelRecord> = (1..=3)
            .map(|m| PrefixLabelRecord {
                task_id: task.id.clone(),
                checkpoint_id: 0,
                response_id: 0,
                tokens: tokens.clone(),
                m,
                prefix_len: m,
                label: 0,
                response_type: ResponseType::Wrong,
            })
            .collect();
        let mut s = Stream::from_seed(5);
        let init = PrmModel::new(&mut s);
        let cfg = PrmTrainConfig { epochs: 200, batch_size: 4, lr: 3e-3, seed: 6 };
        let (prm, _) = train_prm(&records, &tasks, init, &cfg).unwrap();
        for m in 1..=3usize {
            let s = prm.raw_score(task, &tokens.tokens()[..m]);
            assert!(s.abs() < 0.15, "neutral prefix scored {s}");
        }
    }

    #[test]
    fn training_errors_are_typed() {
        let tasks = generate_corpus(1, 55, 3, 5, 0.0, 5).unwrap();
        let mut s = Stream::from_seed(7);
        let init = PrmModel::new(&mut s);
        assert!(matches!(
            train_prm(&[], &tasks, init.clone(), &PrmTrainConfig::default()),
            Err(PrmError::EmptyDataset)
        ));
        let mut records = labeled_records(&tasks);
        records[0].task_id = "missing".into();
        assert!(matches!(
            train_prm(&records, &tasks, init, &PrmTrainConfig::default()),
            Err(PrmError::UnknownTask(_))
        ));
    }

    #[test]
    fn save_load_round_trip_with_role() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prm.bin");
        let mut s = Stream::from_seed(8);
        let prm = PrmModel::new(&mut s);
        prm.save(&path).unwrap();
        assert_eq!(PrmModel::load(&path).unwrap(), prm);
        let vpath = dir.path().join("value.bin");
        prm.to_value_init().save(&vpath).unwrap();
        assert!(PrmModel::load(&vpath).is_err(), "role tags are enforced");
    }
}
