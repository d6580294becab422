//! Prefix labeling by binary search over completion probes.
//!
//! For a failed response, the smallest prefix length whose best-of-K
//! completion also fails is located by binary search (the probe predicate is
//! treated as monotone in the prefix length). Everything strictly before
//! that failure point is labeled +1, the rest -1; responses that already
//! pass skip probing and are all +1. NOP positions can optionally be
//! relabeled 0, since they cannot affect execution.

use crate::minilang::{passes_all, Program, Token};
use crate::policy::PolicyModel;
use crate::rng::Stream;
use crate::taskgen::Task;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

/// Temperature and top-p used for completion probes and response sampling
/// during data collection.
pub const COLLECT_TEMPERATURE: f64 = 1.0;
pub const COLLECT_TOP_P: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseType {
    /// Passed all unit tests as sampled.
    Correct,
    /// Failed, but some nonempty prefix could be completed to a pass.
    Revised,
    /// Failed with no completable prefix: the failure point is 1.
    Wrong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptClass {
    /// Every sampled response was Correct.
    Easy,
    /// Mixed outcomes.
    Medium,
    /// Every sampled response was Wrong.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Keep every record.
    Full,
    /// Drop records belonging to Hard prompts.
    RemoveHard,
    /// Keep only records belonging to Medium prompts.
    MediumOnly,
    /// Keep only records of Revised responses.
    RevisedOnly,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 4] = [
        SelectionStrategy::Full,
        SelectionStrategy::RemoveHard,
        SelectionStrategy::MediumOnly,
        SelectionStrategy::RevisedOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionStrategy::Full => "full",
            SelectionStrategy::RemoveHard => "remove_hard",
            SelectionStrategy::MediumOnly => "medium_only",
            SelectionStrategy::RevisedOnly => "revised_only",
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<SelectionStrategy, String> {
        SelectionStrategy::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown selection strategy {s:?}"))
    }
}

#[derive(Debug)]
pub enum LabelerError {
    LengthMismatch { labels: usize, tokens: usize },
    InvalidConfig(String),
    Io(std::io::Error),
    Parse { line: usize, message: String },
}

impl fmt::Display for LabelerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelerError::LengthMismatch { labels, tokens } => {
                write!(f, "{labels} labels for {tokens} tokens")
            }
            LabelerError::InvalidConfig(msg) => write!(f, "invalid collect config: {msg}"),
            LabelerError::Io(e) => write!(f, "label io: {e}"),
            LabelerError::Parse { line, message } => write!(f, "records line {line}: {message}"),
        }
    }
}

impl std::error::Error for LabelerError {}

impl From<std::io::Error> for LabelerError {
    fn from(e: std::io::Error) -> LabelerError {
        LabelerError::Io(e)
    }
}

/// Result of labeling one response. `failure_point` is the 1-based index of
/// the first failing step, in 1..=steps+1; steps+1 means nothing failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelOutcome {
    pub labels: Vec<i8>,
    pub failure_point: usize,
    /// Midpoints probed, in probe order; empty when the search is skipped.
    pub probes: Vec<usize>,
}

/// Binary search for the first failing prefix among `len` steps.
///
/// `completes(m)` must report whether the prefix of m steps can be finished
/// into a passing program. A response that already passes skips the search
/// entirely. Step t (1-based) is labeled +1 iff t < failure_point.
pub fn binary_search_with(
    len: usize,
    passes_raw: bool,
    mut completes: impl FnMut(usize) -> bool,
) -> LabelOutcome {
    let mut failure_point = len + 1;
    let mut probes = Vec::new();
    if !passes_raw {
        let (mut lo, mut hi) = (1usize, len);
        while lo <= hi {
            let mid = (lo + hi) / 2;
            probes.push(mid);
            if completes(mid) {
                lo = mid + 1;
            } else {
                failure_point = mid;
                hi = mid - 1;
            }
        }
    }
    let labels = (1..=len).map(|t| if t < failure_point { 1 } else { -1 }).collect();
    LabelOutcome { labels, failure_point, probes }
}

/// Tries up to `k` sampled continuations of `prefix`; true as soon as one
/// passes every unit test. A terminal prefix (END or at the length cap)
/// admits exactly one candidate, so it gets a single attempt.
pub fn best_of_k_completes(
    policy: &PolicyModel,
    task: &Task,
    prefix: &[Token],
    k: u32,
    stream: &Stream,
) -> bool {
    for attempt in 0..k.max(1) {
        let mut s = stream.derive(attempt as u64);
        let (candidate, sampled) =
            policy.sample_continuation(task, prefix, COLLECT_TEMPERATURE, COLLECT_TOP_P, &mut s);
        if passes_all(&candidate, &task.tests).0 {
            return true;
        }
        if sampled.is_empty() {
            return false; // terminal prefix: every attempt is the same program
        }
    }
    false
}

/// Labels a whole response at token granularity using best-of-K completion
/// probes. Probe m draws from a substream keyed by m, so the outcome does
/// not depend on probe order.
pub fn binary_search_label(
    policy: &PolicyModel,
    task: &Task,
    response: &Program,
    k: u32,
    stream: &Stream,
) -> LabelOutcome {
    let (passes, _) = passes_all(response, &task.tests);
    let probe_root = stream.derive_str("probe");
    binary_search_with(response.len(), passes, |m| {
        best_of_k_completes(policy, task, &response.tokens()[..m], k, &probe_root.derive(m as u64))
    })
}

/// Relabels NOP positions 0: they cannot change execution, so neither
/// credit nor blame attaches to them.
pub fn apply_neutral_labels(labels: &[i8], response: &Program) -> Result<Vec<i8>, LabelerError> {
    if labels.len() != response.len() {
        return Err(LabelerError::LengthMismatch {
            labels: labels.len(),
            tokens: response.len(),
        });
    }
    Ok(labels
        .iter()
        .zip(response.tokens())
        .map(|(&l, &t)| if t == Token::Nop { 0 } else { l })
        .collect())
}

pub fn response_type(passes: bool, failure_point: usize) -> ResponseType {
    if passes {
        ResponseType::Correct
    } else if failure_point == 1 {
        ResponseType::Wrong
    } else {
        ResponseType::Revised
    }
}

/// Classifies a prompt from the types of its sampled responses.
pub fn classify_prompt(types: &[ResponseType]) -> PromptClass {
    assert!(!types.is_empty(), "a prompt needs at least one response");
    if types.iter().all(|&t| t == ResponseType::Correct) {
        PromptClass::Easy
    } else if types.iter().all(|&t| t == ResponseType::Wrong) {
        PromptClass::Hard
    } else {
        PromptClass::Medium
    }
}

/// One labeled step of one response. `m` is the 1-based step index;
/// `prefix_len` is the number of tokens covered through step m (equal to m
/// when steps are single tokens).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixLabelRecord {
    pub task_id: String,
    pub checkpoint_id: u32,
    pub response_id: u32,
    pub tokens: Program,
    pub m: u32,
    pub prefix_len: u32,
    pub label: i8,
    pub response_type: ResponseType,
}

/// Applies a dataset selection strategy, preserving record order.
pub fn select(records: Vec<PrefixLabelRecord>, strategy: SelectionStrategy) -> Vec<PrefixLabelRecord> {
    match strategy {
        SelectionStrategy::Full => records,
        SelectionStrategy::RevisedOnly => records
            .into_iter()
            .filter(|r| r.response_type == ResponseType::Revised)
            .collect(),
        SelectionStrategy::RemoveHard | SelectionStrategy::MediumOnly => {
            let mut types: BTreeMap<(u32, String), BTreeMap<u32, ResponseType>> = BTreeMap::new();
            for r in &records {
                types
                    .entry((r.checkpoint_id, r.task_id.clone()))
                    .or_default()
                    .insert(r.response_id, r.response_type);
            }
            let classes: BTreeMap<(u32, String), PromptClass> = types
                .into_iter()
                .map(|(k, by_resp)| {
                    let ts: Vec<ResponseType> = by_resp.into_values().collect();
                    (k, classify_prompt(&ts))
                })
                .collect();
            records
                .into_iter()
                .filter(|r| {
                    let class = classes[&(r.checkpoint_id, r.task_id.clone())];
                    match strategy {
                        SelectionStrategy::RemoveHard => class != PromptClass::Hard,
                        _ => class == PromptClass::Medium,
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectConfig {
    /// Responses per prompt when >= 1 (rounded); when < 1, the fraction of
    /// prompts kept, each with a single response.
    pub n_per_prompt: f64,
    /// K in the best-of-K completion probe.
    pub k_completions: u32,
    /// Relabel NOP steps 0.
    pub neutral_labels: bool,
    /// Tokens per labeling step; 1 labels every token position.
    pub step_group_size: usize,
    pub seed: u64,
}

impl Default for CollectConfig {
    fn default() -> CollectConfig {
        CollectConfig {
            n_per_prompt: 5.0,
            k_completions: 20,
            neutral_labels: true,
            step_group_size: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub neutral: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTypeCounts {
    pub correct: usize,
    pub revised: usize,
    pub wrong: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptClassCounts {
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
}

/// Aggregate statistics of a collection run; written next to the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub n_checkpoints: usize,
    pub n_tasks: usize,
    /// (checkpoint, task) pairs actually sampled, after any subsampling.
    pub n_prompts: usize,
    pub n_responses: usize,
    pub n_records: usize,
    pub n_per_prompt: f64,
    pub k_completions: u32,
    pub neutral_labels: bool,
    pub step_group_size: usize,
    pub label_counts: LabelCounts,
    pub response_types: ResponseTypeCounts,
    pub prompt_classes: PromptClassCounts,
    /// Failure positions of Revised responses, as fractions of response
    /// length, in ten equal bins over (0, 1].
    pub failure_position_histogram: [usize; 10],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectOutput {
    pub records: Vec<PrefixLabelRecord>,
    pub summary: CollectSummary,
}

/// Samples responses from each checkpoint on each task and labels them.
/// Fully deterministic: every response and probe draws from a substream
/// keyed by (checkpoint, task, response, probe), so parallel and sequential
/// runs agree byte for byte.
pub fn collect_prm_dataset(
    checkpoints: &[PolicyModel],
    tasks: &[Task],
    cfg: &CollectConfig,
) -> Result<CollectOutput, LabelerError> {
    if cfg.n_per_prompt <= 0.0 {
        return Err(LabelerError::InvalidConfig(format!(
            "n_per_prompt {} must be positive",
            cfg.n_per_prompt
        )));
    }
    if cfg.k_completions == 0 {
        return Err(LabelerError::InvalidConfig("k_completions must be at least 1".into()));
    }
    if cfg.step_group_size == 0 {
        return Err(LabelerError::InvalidConfig("step_group_size must be at least 1".into()));
    }

    let root = Stream::from_seed(cfg.seed).derive_str("collect");
    let fractional = cfg.n_per_prompt < 1.0;
    let n_responses = if fractional { 1 } else { cfg.n_per_prompt.round() as usize };
    let g = cfg.step_group_size;

    let mut units: Vec<(u32, usize)> = Vec::new();
    for ci in 0..checkpoints.len() as u32 {
        for (ti, task) in tasks.iter().enumerate() {
            if fractional {
                let mut coin = root.derive_str("subsample").derive(ci as u64).derive_str(&task.id);
                if coin.next_f64() >= cfg.n_per_prompt {
                    continue;
                }
            }
            units.push((ci, ti));
        }
    }

    struct UnitOut {
        records: Vec<PrefixLabelRecord>,
        types: Vec<ResponseType>,
        failure_fractions: Vec<f64>,
    }

    let unit_outputs: Vec<UnitOut> = units
        .par_iter()
        .map(|&(ci, ti)| {
            let task = &tasks[ti];
            let policy = &checkpoints[ci as usize];
            let unit_stream = root.derive(ci as u64).derive_str(&task.id);
            let mut records = Vec::new();
            let mut types = Vec::new();
            let mut failure_fractions = Vec::new();
            for r in 0..n_responses as u32 {
                let resp_stream = unit_stream.derive(r as u64);
                let mut sample_stream = resp_stream.derive_str("sample");
                let (response, _) = policy.sample_response(
                    task,
                    COLLECT_TEMPERATURE,
                    COLLECT_TOP_P,
                    &mut sample_stream,
                );
                let (passes, _) = passes_all(&response, &task.tests);
                let t_len = response.len();
                let n_steps = t_len.div_ceil(g);
                let probe_root = resp_stream.derive_str("probe");
                let outcome = binary_search_with(n_steps, passes, |m| {
                    let prefix_len = (m * g).min(t_len);
                    best_of_k_completes(
                        policy,
                        task,
                        &response.tokens()[..prefix_len],
                        cfg.k_completions,
                        &probe_root.derive(m as u64),
                    )
                });
                let rtype = response_type(passes, outcome.failure_point);
                if rtype == ResponseType::Revised {
                    let frac =
                        (outcome.failure_point * g).min(t_len) as f64 / t_len.max(1) as f64;
                    failure_fractions.push(frac);
                }
                for m in 1..=n_steps {
                    let group = &response.tokens()[(m - 1) * g..(m * g).min(t_len)];
                    let mut label = outcome.labels[m - 1];
                    if cfg.neutral_labels && group.iter().all(|&t| t == Token::Nop) {
                        label = 0;
                    }
                    records.push(PrefixLabelRecord {
                        task_id: task.id.clone(),
                        checkpoint_id: ci,
                        response_id: r,
                        tokens: response.clone(),
                        m: m as u32,
                        prefix_len: ((m * g).min(t_len)) as u32,
                        label,
                        response_type: rtype,
                    });
                }
                types.push(rtype);
            }
            UnitOut { records, types, failure_fractions }
        })
        .collect();

    let mut records = Vec::new();
    let mut summary = CollectSummary {
        n_checkpoints: checkpoints.len(),
        n_tasks: tasks.len(),
        n_prompts: units.len(),
        n_responses: 0,
        n_records: 0,
        n_per_prompt: cfg.n_per_prompt,
        k_completions: cfg.k_completions,
        neutral_labels: cfg.neutral_labels,
        step_group_size: g,
        label_counts: LabelCounts::default(),
        response_types: ResponseTypeCounts::default(),
        prompt_classes: PromptClassCounts::default(),
        failure_position_histogram: [0; 10],
    };
    for out in unit_outputs {
        summary.n_responses += out.types.len();
        for t in &out.types {
            match t {
                ResponseType::Correct => summary.response_types.correct += 1,
                ResponseType::Revised => summary.response_types.revised += 1,
                ResponseType::Wrong => summary.response_types.wrong += 1,
            }
        }
        if !out.types.is_empty() {
            match classify_prompt(&out.types) {
                PromptClass::Easy => summary.prompt_classes.easy += 1,
                PromptClass::Medium => summary.prompt_classes.medium += 1,
                PromptClass::Hard => summary.prompt_classes.hard += 1,
            }
        }
        for frac in out.failure_fractions {
            let bin = ((frac * 10.0).ceil() as usize).clamp(1, 10) - 1;
            summary.failure_position_histogram[bin] += 1;
        }
        records.extend(out.records);
    }
    records.sort_by(|a, b| {
        (a.checkpoint_id, &a.task_id, a.response_id, a.m)
            .cmp(&(b.checkpoint_id, &b.task_id, b.response_id, b.m))
    });
    summary.n_records = records.len();
    for r in &records {
        match r.label {
            1 => summary.label_counts.positive += 1,
            0 => summary.label_counts.neutral += 1,
            _ => summary.label_counts.negative += 1,
        }
    }
    Ok(CollectOutput { records, summary })
}

/// Writes records as JSON Lines, one record per line.
pub fn save_records(path: &Path, records: &[PrefixLabelRecord]) -> Result<(), LabelerError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)
            .map_err(|e| LabelerError::Parse { line: 0, message: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<PrefixLabelRecord>, LabelerError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PrefixLabelRecord = serde_json::from_str(&line)
            .map_err(|e| LabelerError::Parse { line: i + 1, message: e.to_string() })?;
        if !matches!(r.label, -1 | 0 | 1) {
            return Err(LabelerError::Parse {
                line: i + 1,
                message: format!("label {} not in {{-1, 0, 1}}", r.label),
            });
        }
        records.push(r);
    }
    Ok(records)
}
