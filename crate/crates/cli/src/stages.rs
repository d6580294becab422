//! Pipeline stages over a run directory. Each stage checks the artifacts
//! it consumes, records their content hashes, and writes outputs under
//! `run_dir/<stage>/`.

use crate::config::RunConfig;
use anyhow::anyhow;
use procrl_core::evalkit::{
    best_of_k_curve, length_stratified_delta, pass_at_1, render_report, write_best_of_k_csv,
    write_length_delta_csv, write_pass_at_1_csv, EvalConfig, EvalError,
};
use procrl_core::labeler::{
    collect_prm_dataset, load_records, save_records, select, LabelerError, PrefixLabelRecord,
    ResponseType,
};
use procrl_core::minilang::Program;
use procrl_core::policy::{sft_train, PolicyModel, ValueModel};
use procrl_core::prm::PrmModel;
use procrl_core::prm::train_prm;
use procrl_core::rl::{train_rl, write_metrics_csv, RlError, RlMode, RlRunResult};
use procrl_core::rng::{fnv1a64, Stream};
use procrl_core::taskgen::{generate_corpus, load_tasks, save_tasks, split_corpus, Task, TaskGenError};
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or overrides: exit 2.
    Config(String),
    /// A stage ran before the stages that produce its inputs: exit 3.
    MissingDependency(String),
    /// Everything else: exit 1.
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingDependency(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::MissingDependency(msg) => write!(f, "{msg}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> CliError {
        CliError::Other(e)
    }
}

fn other<E: std::error::Error + Send + Sync + 'static>(e: E) -> CliError {
    CliError::Other(anyhow::Error::new(e))
}

/// Resolves a required artifact, failing with the stage that produces it.
fn require(run: &Path, rel: &str, produced_by: &str) -> Result<PathBuf, CliError> {
    let path = run.join(rel);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingDependency(format!(
            "missing {rel}; run the `{produced_by}` stage first"
        )))
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Other(anyhow!("creating {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Other(anyhow!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Other(anyhow!("writing {}: {e}", path.display())))
}

/// Records what a stage consumed: relative path and FNV-1a hash of the
/// bytes, so a run directory documents its own provenance.
fn write_inputs_json(stage_dir: &Path, run: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    let mut map = BTreeMap::new();
    for path in inputs {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Other(anyhow!("hashing {}: {e}", path.display())))?;
        let rel = path.strip_prefix(run).unwrap_or(path).to_string_lossy().into_owned();
        map.insert(rel, format!("{:016x}", fnv1a64(&bytes)));
    }
    write_json(&stage_dir.join("inputs.json"), &map)
}

fn write_history_csv(path: &Path, column: &str, values: &[f64]) -> Result<(), CliError> {
    let mut out = format!("epoch,{column}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{v}", i + 1);
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::Other(anyhow!("writing {}: {e}", path.display())))
}

pub fn stage_taskgen(run: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let t = &cfg.taskgen;
    if !(t.train_fraction > 0.0 && t.train_fraction < 1.0) {
        return Err(CliError::Config(format!(
            "taskgen.train_fraction must be strictly between 0 and 1, got {}",
            t.train_fraction
        )));
    }
    let tasks = generate_corpus(t.count, cfg.seed, t.min_len, t.max_len, t.arity_mix, t.tests_per_task)
        .map_err(|e| match e {
            TaskGenError::InvalidConfig(_) => CliError::Config(e.to_string()),
            e => other(e),
        })?;
    let total = tasks.len();
    let (train, eval) = split_corpus(tasks, t.train_fraction, cfg.seed);
    let dir = run.join("taskgen");
    create_dir(&dir)?;
    save_tasks(&dir.join("tasks_train.jsonl"), &train).map_err(other)?;
    save_tasks(&dir.join("tasks_eval.jsonl"), &eval).map_err(other)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "count": total,
            "n_train": train.len(),
            "n_eval": eval.len(),
            "seed": cfg.seed,
        }),
    )
}

fn load_train_tasks(run: &Path) -> Result<(PathBuf, Vec<Task>), CliError> {
    let path = require(run, "taskgen/tasks_train.jsonl", "taskgen")?;
    let tasks = load_tasks(&path).map_err(other)?;
    Ok((path, tasks))
}

pub fn stage_sft(run: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let (train_path, tasks) = load_train_tasks(run)?;
    if tasks.is_empty() {
        return Err(CliError::Config("sft needs a nonempty training corpus".into()));
    }
    let mut policy = PolicyModel::new(&mut Stream::from_seed(cfg.seed).derive_str("policy-init"));
    let pairs: Vec<(Task, Program)> =
        tasks.iter().map(|t| (t.clone(), t.reference.clone())).collect();
    let history = sft_train(&mut policy, &pairs, &cfg.sft.to_core(cfg.seed));
    let dir = run.join("sft");
    create_dir(&dir)?;
    policy.save(&dir.join("policy.bin")).map_err(other)?;
    write_history_csv(&dir.join("history.csv"), "nll", &history)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "epochs": cfg.sft.epochs,
            "n_tasks": tasks.len(),
            "first_nll": history.first(),
            "final_nll": history.last(),
        }),
    )?;
    write_inputs_json(&dir, run, &[&train_path])
}

fn save_rl_outputs(dir: &Path, result: &RlRunResult) -> Result<(), CliError> {
    write_metrics_csv(&dir.join("metrics.csv"), &result.metrics).map_err(other)?;
    for ckpt in &result.checkpoints {
        let cdir = dir.join(format!("ckpt_{:05}", ckpt.step));
        create_dir(&cdir)?;
        ckpt.policy.save(&cdir.join("policy.bin")).map_err(other)?;
        ckpt.value.save(&cdir.join("value.bin")).map_err(other)?;
    }
    let fdir = dir.join("final");
    create_dir(&fdir)?;
    result.final_policy.save(&fdir.join("policy.bin")).map_err(other)?;
    result.final_value.save(&fdir.join("value.bin")).map_err(other)?;
    Ok(())
}

fn run_rl_stage(run: &Path, cfg: &RunConfig, stage: &str, mode: RlMode) -> Result<(), CliError> {
    let (train_path, tasks) = load_train_tasks(run)?;
    let sft_path = require(run, "sft/policy.bin", "sft")?;
    let policy = PolicyModel::load(&sft_path).map_err(other)?;
    let mut inputs: Vec<PathBuf> = vec![train_path, sft_path];
    let prm = if mode.uses_dense() || mode.uses_value_init() {
        let prm_path = require(run, "prm/prm.bin", "train-prm")?;
        let model = PrmModel::load(&prm_path).map_err(other)?;
        inputs.push(prm_path);
        Some(model)
    } else {
        None
    };
    let rl_cfg = cfg.rl.to_core(mode, cfg.seed);
    let result = train_rl(&tasks, &policy, prm.as_ref(), &rl_cfg).map_err(|e| match e {
        RlError::ConfigInvalid(_) => CliError::Config(e.to_string()),
        e => other(e),
    })?;
    let dir = run.join(stage);
    create_dir(&dir)?;
    save_rl_outputs(&dir, &result)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "mode": mode.name(),
            "steps": rl_cfg.steps,
            "rollouts_per_step": rl_cfg.rollouts_per_step,
            "checkpoint_steps": result.checkpoints.iter().map(|c| c.step).collect::<Vec<_>>(),
            "final_pass_rate": result.metrics.last().map(|r| r.pass_rate),
            "final_mean_nop": result.metrics.last().map(|r| r.mean_nop),
        }),
    )?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_inputs_json(&dir, run, &input_refs)
}

pub fn stage_rl_baseline(run: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    run_rl_stage(run, cfg, "rl_baseline", RlMode::SparseBaseline)
}

pub fn stage_rl_psgpo(run: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    run_rl_stage(run, cfg, "rl_psgpo", cfg.rl.mode)
}

/// Saved rl-baseline checkpoints, ordered by training step.
fn baseline_checkpoints(run: &Path) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let dir = run.join("rl_baseline");
    let entries = match std::fs::read_dir(&dir) {
        Ok(entries) => entries,
        Err(_) => {
            return Err(CliError::MissingDependency(
                "missing rl_baseline checkpoints; run the `rl-baseline` stage first".into(),
            ))
        }
    };
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Other(anyhow!("reading rl_baseline: {e}")))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(step) = name.strip_prefix("ckpt_").and_then(|s| s.parse::<usize>().ok()) {
            let policy = entry.path().join("policy.bin");
            if policy.is_file() {
                found.push((step, policy));
            }
        }
    }
    if found.is_empty() {
        return Err(CliError::MissingDependency(
            "rl_baseline contains no ckpt_* policies; run the `rl-baseline` stage first".into(),
        ));
    }
    found.sort_by_key(|(step, _)| *step);
    Ok(found)
}

pub fn stage_collect(run: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let (train_path, tasks) = load_train_tasks(run)?;
    let sft_path = require(run, "sft/policy.bin", "sft")?;
    let ckpts = baseline_checkpoints(run)?;
    // The SFT policy is checkpoint 0; RLTF snapshots follow in step order,
    // covering several stages of training as the dataset intends.
    let mut checkpoints = vec![PolicyModel::load(&sft_path).map_err(other)?];
    let mut inputs: Vec<PathBuf> = vec![train_path, sft_path];
    for (_, path) in &ckpts {
        checkpoints.push(PolicyModel::load(path).map_err(other)?);
        inputs.push(path.clone());
    }
    let out = collect_prm_dataset(&checkpoints, &tasks, &cfg.collect.to_core(cfg.seed))
        .map_err(|e| match e {
            LabelerError::InvalidConfig(_) => CliError::Config(e.to_string()),
            e => other(e),
        })?;
    let dir = run.join("prm_data");
    create_dir(&dir)?;
    save_records(&dir.join("records.jsonl"), &out.records).map_err(other)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_inputs_json(&dir, run, &input_refs)
}

/// Label and response-type counts of a selected record set, for the data
/// distribution sidecars.
#[derive(Debug, Default, Serialize)]
struct SelectedStats {
    n_records: usize,
    n_responses: usize,
    labels_positive: usize,
    labels_neutral: usize,
    labels_negative: usize,
    responses_correct: usize,
    responses_revised: usize,
    responses_wrong: usize,
}

fn selected_stats(records: &[PrefixLabelRecord]) -> SelectedStats {
    let mut stats = SelectedStats { n_records: records.len(), ..SelectedStats::default() };
    let mut seen = BTreeSet::new();
    for r in records {
        match r.label {
            1 => stats.labels_positive += 1,
            0 => stats.labels_neutral += 1,
            _ => stats.labels_negative += 1,
        }
        if seen.insert((r.checkpoint_id, r.task_id.clone(), r.response_id)) {
            stats.n_responses += 1;
            match r.response_type {
                ResponseType::Correct => stats.responses_correct += 1,
                ResponseType::Revised => stats.responses_revised += 1,
                ResponseType::Wrong => stats.responses_wrong += 1,
            }
        }
    }
    stats
}

pub fn stage_train_prm(run: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let records_path = require(run, "prm_data/records.jsonl", "collect-prm-data")?;
    let (train_path, tasks) = load_train_tasks(run)?;
    let value_path = require(run, "rl_baseline/final/value.bin", "rl-baseline")?;
    let records = load_records(&records_path).map_err(other)?;
    let selected = select(records, cfg.collect.strategy);
    let stats = selected_stats(&selected);
    if selected.is_empty() {
        return Err(CliError::Other(anyhow!(
            "strategy {} kept no records; collect more data or change collect.strategy",
            cfg.collect.strategy
        )));
    }
    // The PRM starts from the baseline critic: same head shape, and the
    // critic has already seen every-state values under sparse training.
    let init = PrmModel::from_value(&ValueModel::load(&value_path).map_err(other)?);
    let (prm, history) =
        train_prm(&selected, &tasks, init, &cfg.prm.to_core(cfg.seed)).map_err(other)?;
    let dir = run.join("prm");
    create_dir(&dir)?;
    prm.save(&dir.join("prm.bin")).map_err(other)?;
    write_history_csv(&dir.join("history.csv"), "mse", &history)?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "strategy": cfg.collect.strategy.name(),
            "selected": stats,
            "epochs": cfg.prm.epochs,
            "final_mse": history.last(),
        }),
    )?;
    write_inputs_json(&dir, run, &[&records_path, &train_path, &value_path])
}

pub fn stage_eval(run: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let eval_path = require(run, "taskgen/tasks_eval.jsonl", "taskgen")?;
    let tasks = load_tasks(&eval_path).map_err(other)?;
    if tasks.is_empty() {
        return Err(CliError::Config("no held-out tasks to evaluate".into()));
    }
    let mut inputs: Vec<PathBuf> = vec![eval_path];
    let mut policies: Vec<(String, PolicyModel)> = Vec::new();
    for (label, rel) in [
        ("sft", "sft/policy.bin"),
        ("rl_baseline", "rl_baseline/final/policy.bin"),
        ("rl_psgpo", "rl_psgpo/final/policy.bin"),
    ] {
        let path = run.join(rel);
        if path.is_file() {
            policies.push((label.to_string(), PolicyModel::load(&path).map_err(other)?));
            inputs.push(path);
        }
    }
    if policies.is_empty() {
        return Err(CliError::MissingDependency(
            "no trained policies found; run `sft`, `rl-baseline`, or `rl-psgpo` first".into(),
        ));
    }
    let map_eval = |e: EvalError| match e {
        EvalError::InvalidConfig(_) => CliError::Config(e.to_string()),
        e => other(e),
    };
    let ecfg = cfg.eval.to_core(cfg.seed);
    let curve_cfg = EvalConfig { n_samples: 1, temperature: 1.0, top_p: cfg.eval.top_p, seed: cfg.seed };
    let mut pass_entries = Vec::new();
    let mut bok_entries = Vec::new();
    for (label, policy) in &policies {
        pass_entries.push((label.clone(), pass_at_1(policy, &tasks, &ecfg).map_err(map_eval)?));
        bok_entries.push((
            label.clone(),
            best_of_k_curve(policy, &tasks, cfg.eval.k_max, &curve_cfg).map_err(map_eval)?,
        ));
    }
    let dir = run.join("eval");
    create_dir(&dir)?;
    write_pass_at_1_csv(&dir.join("pass_at_1.csv"), &pass_entries).map_err(other)?;
    write_best_of_k_csv(&dir.join("best_of_k.csv"), &bok_entries).map_err(other)?;
    let pick = |label: &str| policies.iter().find(|(l, _)| l == label).map(|(_, p)| p);
    if let (Some(candidate), Some(baseline)) = (pick("rl_psgpo"), pick("rl_baseline")) {
        let bins =
            length_stratified_delta(candidate, baseline, &tasks, &ecfg, &cfg.eval.length_bin_edges)
                .map_err(map_eval)?;
        write_length_delta_csv(
            &dir.join("length_delta.csv"),
            &[("rl_psgpo_vs_rl_baseline".to_string(), bins)],
        )
        .map_err(other)?;
    }
    let summary: BTreeMap<&str, serde_json::Value> = [
        (
            "pass_at_1",
            json!(pass_entries
                .iter()
                .map(|(l, r)| (l.clone(), r.pass_at_1))
                .collect::<BTreeMap<_, _>>()),
        ),
        (
            "best_of_k_final",
            json!(bok_entries
                .iter()
                .map(|(l, c)| (l.clone(), *c.last().expect("k_max >= 1")))
                .collect::<BTreeMap<_, _>>()),
        ),
        ("n_tasks", json!(tasks.len())),
        ("k_max", json!(cfg.eval.k_max)),
    ]
    .into_iter()
    .collect();
    write_json(&dir.join("summary.json"), &summary)?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_inputs_json(&dir, run, &input_refs)
}

pub fn stage_report(run: &Path, _cfg: &RunConfig) -> Result<(), CliError> {
    let candidates: Vec<PathBuf> = ["rl_baseline", "rl_psgpo", "eval"]
        .iter()
        .map(|s| run.join(s))
        .filter(|p| p.is_dir())
        .collect();
    let refs: Vec<&Path> = candidates.iter().map(PathBuf::as_path).collect();
    render_report(&refs, &run.join("report")).map_err(|e| match e {
        EvalError::MissingMetrics => CliError::MissingDependency(
            "no metrics to report; run `rl-baseline` or `rl-psgpo` first".into(),
        ),
        e => other(e),
    })?;
    Ok(())
}

/// A sweep cell's scalar outcome, for the grid summary table.
struct SweepRow {
    label: String,
    n_records: usize,
    final_pass_rate: Option<f64>,
    eval_pass_at_1: Option<f64>,
}

fn write_sweep_summary(path: &Path, key_column: &str, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut out = format!("{key_column},n_records,final_pass_rate,eval_pass_at_1\n");
    for r in rows {
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.label,
            r.n_records,
            fmt_opt(r.final_pass_rate),
            fmt_opt(r.eval_pass_at_1)
        );
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::Other(anyhow!("writing {}: {e}", path.display())))
}

pub fn stage_sweep(run: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let (train_path, tasks_train) = load_train_tasks(run)?;
    let eval_path = require(run, "taskgen/tasks_eval.jsonl", "taskgen")?;
    let tasks_eval = load_tasks(&eval_path).map_err(other)?;
    if tasks_eval.is_empty() {
        return Err(CliError::Config("sweep needs held-out tasks to evaluate".into()));
    }
    let sft_path = require(run, "sft/policy.bin", "sft")?;
    let records_path = require(run, "prm_data/records.jsonl", "collect-prm-data")?;
    let value_path = require(run, "rl_baseline/final/value.bin", "rl-baseline")?;
    let policy = PolicyModel::load(&sft_path).map_err(other)?;
    let prm_init = PrmModel::from_value(&ValueModel::load(&value_path).map_err(other)?);
    let records = load_records(&records_path).map_err(other)?;
    let ckpts = baseline_checkpoints(run)?;
    let mut checkpoints = vec![policy.clone()];
    for (_, path) in &ckpts {
        checkpoints.push(PolicyModel::load(path).map_err(other)?);
    }

    let mut rl_cfg = cfg.rl.to_core(RlMode::DenseAndValueInit, cfg.seed);
    rl_cfg.steps = cfg.sweep.rl_steps;
    rl_cfg.rollouts_per_step = cfg.sweep.rollouts_per_step;
    rl_cfg.checkpoints = 1;
    let eval_cfg = EvalConfig {
        n_samples: cfg.sweep.eval_samples,
        temperature: cfg.eval.temperature,
        top_p: cfg.eval.top_p,
        seed: cfg.seed,
    };

    // One cell: train a PRM on the given records, run the short PSGPO
    // budget against it, and measure held-out Pass@1.
    let run_cell = |dir: &Path,
                        selected: Vec<PrefixLabelRecord>,
                        extra: serde_json::Value|
     -> Result<SweepRow, CliError> {
        create_dir(dir)?;
        let stats = selected_stats(&selected);
        let n_records = stats.n_records;
        write_json(&dir.join("label_distribution.json"), &stats)?;
        if selected.is_empty() {
            write_json(
                &dir.join("summary.json"),
                &json!({"skipped": "selection kept no records", "context": extra}),
            )?;
            return Ok(SweepRow {
                label: String::new(),
                n_records: 0,
                final_pass_rate: None,
                eval_pass_at_1: None,
            });
        }
        let (prm, _) = train_prm(&selected, &tasks_train, prm_init.clone(), &cfg.prm.to_core(cfg.seed))
            .map_err(other)?;
        let result = train_rl(&tasks_train, &policy, Some(&prm), &rl_cfg).map_err(other)?;
        write_metrics_csv(&dir.join("metrics.csv"), &result.metrics).map_err(other)?;
        let eval = pass_at_1(&result.final_policy, &tasks_eval, &eval_cfg).map_err(other)?;
        let final_pass = result.metrics.last().map(|r| r.pass_rate);
        write_json(
            &dir.join("summary.json"),
            &json!({
                "n_records": n_records,
                "final_pass_rate": final_pass,
                "eval_pass_at_1": eval.pass_at_1,
                "context": extra,
            }),
        )?;
        Ok(SweepRow {
            label: String::new(),
            n_records,
            final_pass_rate: final_pass,
            eval_pass_at_1: Some(eval.pass_at_1),
        })
    };

    // Table-2 analogue: one cell per selection strategy on the shared
    // collected dataset.
    let strategies_dir = run.join("sweep").join("strategies");
    create_dir(&strategies_dir)?;
    let mut strategy_rows = Vec::new();
    for strategy in &cfg.sweep.strategies {
        let cell = strategies_dir.join(strategy.name());
        let selected = select(records.clone(), *strategy);
        let mut row = run_cell(&cell, selected, json!({"strategy": strategy.name()}))?;
        row.label = strategy.name().to_string();
        strategy_rows.push(row);
    }
    write_sweep_summary(&strategies_dir.join("summary.csv"), "strategy", &strategy_rows)?;

    // Fig.-5 analogue: recollect at each data scale, then select with the
    // configured strategy. The label-distribution sidecar for each point
    // is the full collection summary (failure-position histogram included).
    let scaling_dir = run.join("sweep").join("scaling");
    create_dir(&scaling_dir)?;
    let mut scaling_rows = Vec::new();
    for &n in &cfg.sweep.n_per_prompt_grid {
        let cell = scaling_dir.join(format!("n_{n}"));
        create_dir(&cell)?;
        let mut collect_cfg = cfg.collect.to_core(cfg.seed);
        collect_cfg.n_per_prompt = n;
        let out = collect_prm_dataset(&checkpoints, &tasks_train, &collect_cfg).map_err(other)?;
        write_json(&cell.join("collection_summary.json"), &out.summary)?;
        let selected = select(out.records, cfg.collect.strategy);
        let mut row = run_cell(&cell, selected, json!({"n_per_prompt": n}))?;
        row.label = n.to_string();
        scaling_rows.push(row);
    }
    write_sweep_summary(&scaling_dir.join("summary.csv"), "n_per_prompt", &scaling_rows)?;

    write_inputs_json(
        &run.join("sweep"),
        run,
        &[&train_path, &eval_path, &sft_path, &records_path, &value_path],
    )
}
