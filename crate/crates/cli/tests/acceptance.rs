//! Acceptance suite. Each test prints one PASS/FAIL line for its criterion
//! and asserts it; run with `--nocapture` to see the lines as they come.
//!
//! Criteria 8, 9, and 11 share one multi-seed training study (corpus,
//! SFT, the four RL modes, a reward-hacking arm, and evaluations) built
//! on first use. Budgets and tolerances are pinned as constants below.

use procrl_core::evalkit::{best_of_k_curve, pass_at_1, EvalConfig};
use procrl_core::labeler::{collect_prm_dataset, select, CollectConfig, SelectionStrategy};
use procrl_core::minilang::{passes_all, Program, Token};
use procrl_core::net::{grad_check, AdamConfig, DenseNet};
use procrl_core::policy::{policy_dims, scalar_dims, sft_train, PolicyModel, SftConfig};
use procrl_core::prm::{train_prm, PrmModel, PrmTrainConfig};
use procrl_core::rl::{compose_rewards, gae, train_rl, RewardConfig, RlConfig, RlMode};
use procrl_core::rng::Stream;
use procrl_core::taskgen::{generate_corpus, split_corpus, Task};
use procrl_core::testkit::{exhaustive_completes, linear_scan_labels};
use procrl_core::labeler::binary_search_with;
use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

// Criterion 1/2: oracle-labeled response corpus.
const STUDY_MIN_RESPONSES: usize = 200;
const STUDY_MAX_RESPONSE_LEN: usize = 8;
const STUDY_BUDGET_S: f64 = 120.0;

// Criterion 3: gradient checks.
const GRAD_NETS: usize = 100;
const GRAD_FD_STEP: f64 = 1e-5;
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_BUDGET_S: f64 = 60.0;

// Criterion 4/6: arithmetic tolerances.
const REWARD_TOLERANCE: f64 = 1e-12;
const GAE_TOLERANCE: f64 = 1e-10;

// Criteria 8/9/11: the multi-seed study. The corpus is fixed once; the
// seeds vary initialization, sampling, and optimization end to end.
const HEAVY_SEEDS: [u64; 7] = [101, 102, 103, 104, 105, 106, 107];
const CORPUS_SEED: u64 = 7;
const CORPUS_COUNT: usize = 520;
const CORPUS_MIN_LEN: usize = 3;
const CORPUS_MAX_LEN: usize = 6;
const CORPUS_TESTS: usize = 5;
const CORPUS_ARITY_MIX: f64 = 0.5;
const TRAIN_FRACTION: f64 = 0.75;
const SFT_EPOCHS: usize = 400;
const SFT_LR: f64 = 1e-3;
const RL_STEPS: usize = 200;
const RL_ROLLOUTS: usize = 96;
const RL_CHECKPOINTS: usize = 4;
// Shaping weights scaled to this corpus's rollout pass-rate regime (a few
// percent), keeping the 10:1 fail:pass ratio. The defaults (0.25/0.025)
// assume pass rates an order of magnitude higher; here anything at or
// above 0.05 rivals the unit reward on every rollout, pulls the policy
// toward reward-model-approved prefixes, and measurably collapses the
// sampling diversity that best-of-K depends on.
const LAMBDA_FAIL: f64 = 0.02;
const LAMBDA_PASS: f64 = 0.002;
const COLLECT_N_PER_PROMPT: f64 = 2.0;
const COLLECT_K: u32 = 20;
const EVAL_SAMPLES: usize = 64;
const EVAL_TEMPERATURE: f64 = 1.0;
const BEST_OF_K: usize = 30;
const HEAVY_BUDGET_S: f64 = 7200.0;

fn reward_config() -> RewardConfig {
    RewardConfig {
        lambda_fail: LAMBDA_FAIL,
        lambda_pass: LAMBDA_PASS,
        ..RewardConfig::default()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

// ---------------------------------------------------------------- C1, C2

struct LabeledResponse {
    len: usize,
    distinct_probes: usize,
    matches_scan: bool,
}

struct LabelStudy {
    responses: Vec<LabeledResponse>,
    elapsed_s: f64,
}

static LABEL_STUDY: OnceLock<LabelStudy> = OnceLock::new();

/// Labels sampled responses twice, by binary search and by linear scan,
/// against the exact breadth-first completion oracle with the remaining
/// response length as the completion budget.
fn label_study() -> &'static LabelStudy {
    LABEL_STUDY.get_or_init(|| {
        let started = Instant::now();
        let tasks = generate_corpus(40, 901, 3, 6, 0.5, 5).expect("study corpus");
        let policy = PolicyModel::new(&mut Stream::from_seed(902).derive_str("study-policy"));
        let mut responses = Vec::new();
        'outer: for r in 0..16u64 {
            for task in &tasks {
                let mut s = Stream::from_seed(903).derive_str(&task.id).derive(r);
                let (resp, _) = policy.sample_response(task, 1.0, 1.0, &mut s);
                let t = resp.len();
                if t > STUDY_MAX_RESPONSE_LEN {
                    continue;
                }
                let passes = passes_all(&resp, &task.tests).0;
                let memo: Vec<bool> = (1..=t)
                    .map(|m| exhaustive_completes(task, &resp.tokens()[..m], t - m))
                    .collect();
                let outcome = binary_search_with(t, passes, |m| memo[m - 1]);
                let (scan_labels, scan_f) = linear_scan_labels(t, passes, |m| memo[m - 1]);
                let distinct: HashSet<usize> = outcome.probes.iter().copied().collect();
                responses.push(LabeledResponse {
                    len: t,
                    distinct_probes: distinct.len(),
                    matches_scan: outcome.labels == scan_labels
                        && outcome.failure_point == scan_f,
                });
                if responses.len() >= STUDY_MIN_RESPONSES + 50 {
                    break 'outer;
                }
            }
        }
        LabelStudy { responses, elapsed_s: started.elapsed().as_secs_f64() }
    })
}

#[test]
fn acceptance_01_binary_search_labels_match_the_exhaustive_oracle() {
    let study = label_study();
    let n = study.responses.len();
    let mismatches = study.responses.iter().filter(|r| !r.matches_scan).count();
    let pass =
        n >= STUDY_MIN_RESPONSES && mismatches == 0 && study.elapsed_s < STUDY_BUDGET_S;
    println!(
        "ACCEPTANCE 01 oracle equivalence: {} — {} responses (len <= {}), {} label mismatches, {:.1}s (< {:.0}s)",
        verdict(pass),
        n,
        STUDY_MAX_RESPONSE_LEN,
        mismatches,
        study.elapsed_s,
        STUDY_BUDGET_S
    );
    assert!(pass, "{mismatches} mismatches over {n} responses in {:.1}s", study.elapsed_s);
}

#[test]
fn acceptance_02_probe_count_stays_logarithmic() {
    let study = label_study();
    let worst = study
        .responses
        .iter()
        .filter(|r| {
            let bound = r.len.ilog2() as usize + 1;
            r.distinct_probes > bound
        })
        .count();
    let pass = worst == 0 && !study.responses.is_empty();
    println!(
        "ACCEPTANCE 02 probe economy: {} — {} of {} responses exceeded floor(log2 T) + 1 probes",
        verdict(pass),
        worst,
        study.responses.len()
    );
    assert_eq!(worst, 0);
}

// -------------------------------------------------------------------- C3

#[test]
fn acceptance_03_analytic_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut stream = Stream::from_seed(904).derive_str("gradcheck");
    let mut worst = 0.0f64;
    for i in 0..GRAD_NETS {
        let dims: Vec<usize> = match i {
            0 => policy_dims(),
            1 => scalar_dims(),
            _ => {
                let n_in = stream.next_range(8) as usize + 3;
                let hidden = stream.next_range(10) as usize + 3;
                let n_out = stream.next_range(5) as usize + 1;
                if i % 2 == 0 {
                    vec![n_in, hidden, n_out]
                } else {
                    let h2 = stream.next_range(10) as usize + 3;
                    vec![n_in, hidden, h2, n_out]
                }
            }
        };
        let net = DenseNet::new(&dims, &mut stream);
        let x: Vec<f64> = (0..dims[0]).map(|_| stream.uniform(-1.0, 1.0)).collect();
        let err = grad_check(&net, &x, GRAD_FD_STEP).expect("input width matches");
        worst = worst.max(err);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst < GRAD_TOLERANCE && elapsed < GRAD_BUDGET_S;
    println!(
        "ACCEPTANCE 03 gradient correctness: {} — {} nets, max relative error {:.2e} (< {:.0e}), {:.1}s (< {:.0}s)",
        verdict(pass),
        GRAD_NETS,
        worst,
        GRAD_TOLERANCE,
        elapsed,
        GRAD_BUDGET_S
    );
    assert!(pass, "max relative error {worst:.3e} in {elapsed:.1}s");
}

// -------------------------------------------------------------------- C4

#[test]
fn acceptance_04_reward_composition_reproduces_worked_values_and_bound() {
    let cfg = RewardConfig { kl_beta: 0.0, ..RewardConfig::default() };
    let zeros = [0.0; 4];
    let prm = [1.0; 4];

    let fail = compose_rewards(4, 0.0, Some(&prm), &zeros, &zeros, &cfg).unwrap();
    let mut worst = 0.0f64;
    for r in &fail {
        worst = worst.max((r - 0.0625).abs());
    }
    worst = worst.max((fail.iter().sum::<f64>() - 0.25).abs());

    let pass_case = compose_rewards(4, 1.0, Some(&prm), &zeros, &zeros, &cfg).unwrap();
    for r in &pass_case[..3] {
        worst = worst.max((r - 0.00625).abs());
    }
    worst = worst.max((pass_case[3] - 1.00625).abs());
    worst = worst.max((pass_case.iter().sum::<f64>() - 1.025).abs());

    // Bound: with normalization on, the shaping part of the reward sums to
    // at most the active lambda in absolute value.
    let full = RewardConfig::default();
    let unshaped = RewardConfig { lambda_fail: 0.0, lambda_pass: 0.0, ..full };
    let mut stream = Stream::from_seed(905).derive_str("bound");
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let t = stream.next_range(24) as usize + 1;
        let scores: Vec<f64> = (0..t).map(|_| stream.uniform(-1.0, 1.0)).collect();
        let logp: Vec<f64> = (0..t).map(|_| stream.uniform(-3.0, 0.0)).collect();
        let refp: Vec<f64> = (0..t).map(|_| stream.uniform(-3.0, 0.0)).collect();
        let unit = if stream.next_f64() < 0.5 { 1.0 } else { 0.0 };
        let with = compose_rewards(t, unit, Some(&scores), &logp, &refp, &full).unwrap();
        let without = compose_rewards(t, unit, Some(&scores), &logp, &refp, &unshaped).unwrap();
        let dense_mass: f64 =
            with.iter().zip(&without).map(|(a, b)| (a - b).abs()).sum();
        let lambda = if unit > 0.5 { full.lambda_pass } else { full.lambda_fail };
        if dense_mass > lambda + REWARD_TOLERANCE {
            violations += 1;
        }
    }

    let pass = worst <= REWARD_TOLERANCE && violations == 0;
    println!(
        "ACCEPTANCE 04 reward arithmetic: {} — worked-value error {:.1e} (<= {:.0e}), {} bound violations in 10000 responses",
        verdict(pass),
        worst,
        REWARD_TOLERANCE,
        violations
    );
    assert!(pass, "worked-value error {worst:.2e}, {violations} bound violations");
}

// -------------------------------------------------------------------- C5

#[test]
fn acceptance_05_value_init_transplant_is_bit_exact() {
    let tasks = generate_corpus(25, 906, 3, 6, 0.5, 5).expect("transplant corpus");
    let prm = PrmModel::new(&mut Stream::from_seed(907).derive_str("prm"));
    let value = prm.to_value_init();
    let policy = PolicyModel::new(&mut Stream::from_seed(908).derive_str("sampler"));
    let mut stream = Stream::from_seed(909).derive_str("prefixes");
    let mut checked = 0usize;
    let mut exact = 0usize;
    while checked < 1000 {
        for task in &tasks {
            let mut s = stream.derive(checked as u64);
            let (resp, _) = policy.sample_response(task, 1.0, 1.0, &mut s);
            let cut = stream.next_range(resp.len() + 1);
            let prefix = &resp.tokens()[..cut];
            if prm.raw_score(task, prefix).to_bits() == value.value(task, prefix).to_bits() {
                exact += 1;
            }
            checked += 1;
            if checked >= 1000 {
                break;
            }
        }
    }
    let pass = exact == checked;
    println!(
        "ACCEPTANCE 05 value-init transplant: {} — {}/{} (task, prefix) scores bit-identical",
        verdict(pass),
        exact,
        checked
    );
    assert_eq!(exact, checked);
}

// -------------------------------------------------------------------- C6

#[test]
fn acceptance_06_gae_telescopes_at_gamma_lambda_one() {
    let mut stream = Stream::from_seed(910).derive_str("gae");
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let t = stream.next_range(30) as usize + 1;
        let rewards: Vec<f64> = (0..t).map(|_| stream.uniform(-2.0, 2.0)).collect();
        let values: Vec<f64> = (0..t).map(|_| stream.uniform(-2.0, 2.0)).collect();
        let (adv, ret) = gae(&rewards, &values, 1.0, 1.0).unwrap();
        let mut suffix = 0.0;
        for t_rev in (0..t).rev() {
            suffix += rewards[t_rev];
            worst = worst.max((adv[t_rev] - (suffix - values[t_rev])).abs());
            worst = worst.max((ret[t_rev] - suffix).abs());
        }
    }
    let pass = worst <= GAE_TOLERANCE;
    println!(
        "ACCEPTANCE 06 GAE telescoping: {} — max deviation {:.1e} (<= {:.0e}) over 50 random batches",
        verdict(pass),
        worst,
        GAE_TOLERANCE
    );
    assert!(pass, "max deviation {worst:.2e}");
}

// ---------------------------------------------------------- CLI plumbing

fn run_cli(run: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_procrl"))
        .arg("--run-dir")
        .arg(run)
        .args(args)
        .output()
        .expect("spawn procrl");
    assert!(
        out.status.success(),
        "procrl {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn dir_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

/// Byte-compares `rel` under two run directories; returns the differing
/// relative paths.
fn diff_files(a: &Path, b: &Path, rels: &[String]) -> Vec<String> {
    rels.iter()
        .filter(|rel| {
            std::fs::read(a.join(rel.as_str())).unwrap()
                != std::fs::read(b.join(rel.as_str())).unwrap()
        })
        .cloned()
        .collect()
}

// -------------------------------------------------------------------- C7

const PIPE_ARGS: &[&str] = &[
    "--seed",
    "17",
    "--set",
    "taskgen.count=24",
    "--set",
    "taskgen.min_len=3",
    "--set",
    "taskgen.max_len=5",
    "--set",
    "sft.epochs=3",
    "--set",
    "collect.n_per_prompt=1",
    "--set",
    "collect.k_completions=4",
    "--set",
    "prm.epochs=2",
    "--set",
    "rl.steps=3",
    "--set",
    "rl.rollouts_per_step=16",
    "--set",
    "rl.checkpoints=2",
    "--set",
    "eval.n_samples=2",
    "--set",
    "eval.k_max=5",
];

#[test]
fn acceptance_07_pipeline_is_deterministic_end_to_end() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        for stage in [
            "taskgen",
            "sft",
            "rl-baseline",
            "collect-prm-data",
            "train-prm",
            "rl-psgpo",
            "eval",
            "report",
        ] {
            let mut args = vec![stage];
            args.extend_from_slice(PIPE_ARGS);
            run_cli(dir, &args);
        }
    }
    let mut rels: Vec<String> = [
        "rl_baseline/metrics.csv",
        "rl_psgpo/metrics.csv",
        "eval/pass_at_1.csv",
        "eval/best_of_k.csv",
        "eval/length_delta.csv",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let report_a = dir_files(&dir_a.path().join("report"));
    let report_b = dir_files(&dir_b.path().join("report"));
    assert_eq!(report_a, report_b, "report file sets differ");
    rels.extend(report_a.iter().map(|n| format!("report/{n}")));
    let differing = diff_files(dir_a.path(), dir_b.path(), &rels);
    let pass = differing.is_empty();
    println!(
        "ACCEPTANCE 07 determinism: {} — {} metric/report files byte-identical across two runs{}",
        verdict(pass),
        rels.len(),
        if pass { String::new() } else { format!("; differing: {differing:?}") }
    );
    assert!(pass, "differing files: {differing:?}");
}

// ------------------------------------------------------- C8, C9, C11

const SPARSE: usize = 0;
const DENSE: usize = 1;
const VALUE_INIT: usize = 2;
const DVI: usize = 3;
const MODE_NAMES: [&str; 4] = ["sparse", "dense", "value_init", "dense_and_value_init"];

struct SeedOutcome {
    pass1: [f64; 4],
    bok: [f64; 4],
    nop_exploit: f64,
    nop_mitigated: f64,
    greedy_untrained: f64,
    greedy_sft: f64,
}

struct Heavy {
    seeds: Vec<SeedOutcome>,
    elapsed_s: f64,
}

static HEAVY: OnceLock<Heavy> = OnceLock::new();

fn greedy_pass_rate(policy: &PolicyModel, tasks: &[Task]) -> f64 {
    let solved = tasks
        .iter()
        .filter(|t| passes_all(&policy.greedy(t), &t.tests).0)
        .count();
    solved as f64 / tasks.len() as f64
}

fn run_seed(seed: u64, train: &[Task], eval: &[Task]) -> SeedOutcome {
    let untrained = PolicyModel::new(&mut Stream::from_seed(seed).derive_str("policy-init"));
    let greedy_untrained = greedy_pass_rate(&untrained, train);

    let pairs: Vec<(Task, Program)> =
        train.iter().map(|t| (t.clone(), t.reference.clone())).collect();
    let mut sft_policy = untrained.clone();
    let sft_cfg = SftConfig {
        epochs: SFT_EPOCHS,
        adam: AdamConfig::with_lr(SFT_LR),
        seed,
        ..SftConfig::default()
    };
    sft_train(&mut sft_policy, &pairs, &sft_cfg);
    let greedy_sft = greedy_pass_rate(&sft_policy, train);

    let base_cfg = RlConfig {
        mode: RlMode::SparseBaseline,
        steps: RL_STEPS,
        rollouts_per_step: RL_ROLLOUTS,
        reward: reward_config(),
        checkpoints: RL_CHECKPOINTS,
        seed,
        ..RlConfig::default()
    };
    let sparse = train_rl(train, &sft_policy, None, &base_cfg).expect("sparse run");

    // One labeling pass with raw labels; the neutralized dataset is the
    // same records with all-NOP steps relabeled 0, exactly what collecting
    // with neutral labels on would have produced.
    let mut checkpoints = vec![sft_policy.clone()];
    checkpoints.extend(sparse.checkpoints.iter().map(|c| c.policy.clone()));
    let collect_cfg = CollectConfig {
        n_per_prompt: COLLECT_N_PER_PROMPT,
        k_completions: COLLECT_K,
        neutral_labels: false,
        step_group_size: 1,
        seed,
    };
    let raw = collect_prm_dataset(&checkpoints, train, &collect_cfg).expect("collect").records;
    let mut neutral = raw.clone();
    for r in &mut neutral {
        if r.tokens.tokens()[r.m as usize - 1] == Token::Nop {
            r.label = 0;
        }
    }

    let prm_init = PrmModel::from_value(&sparse.final_value);
    let prm_cfg = PrmTrainConfig { seed, ..PrmTrainConfig::default() };
    let (prm, _) = train_prm(
        &select(neutral, SelectionStrategy::RevisedOnly),
        train,
        prm_init.clone(),
        &prm_cfg,
    )
    .expect("prm on neutralized labels");
    let (prm_raw, _) = train_prm(
        &select(raw, SelectionStrategy::RevisedOnly),
        train,
        prm_init,
        &prm_cfg,
    )
    .expect("prm on raw labels");

    let with_mode = |mode: RlMode| RlConfig { mode, ..base_cfg.clone() };
    let dense = train_rl(train, &sft_policy, Some(&prm), &with_mode(RlMode::Dense))
        .expect("dense run");
    let vi = train_rl(train, &sft_policy, Some(&prm), &with_mode(RlMode::ValueInit))
        .expect("value-init run");
    let dvi =
        train_rl(train, &sft_policy, Some(&prm), &with_mode(RlMode::DenseAndValueInit))
            .expect("dense+value-init run");

    // Reward-hacking arm: shaping from raw labels, no length normalization.
    let exploit_cfg = RlConfig {
        reward: RewardConfig { length_normalization: false, ..reward_config() },
        ..with_mode(RlMode::Dense)
    };
    let exploit =
        train_rl(train, &sft_policy, Some(&prm_raw), &exploit_cfg).expect("exploit run");

    let finals = [&sparse, &dense, &vi, &dvi];
    let nop_mitigated = dense.metrics.last().expect("metrics").mean_nop;
    let nop_exploit = exploit.metrics.last().expect("metrics").mean_nop;

    let p1_cfg = EvalConfig {
        n_samples: EVAL_SAMPLES,
        temperature: EVAL_TEMPERATURE,
        top_p: 0.95,
        seed,
    };
    let mut pass1 = [0.0; 4];
    let mut bok = [0.0; 4];
    for (i, run) in finals.iter().enumerate() {
        pass1[i] = pass_at_1(&run.final_policy, eval, &p1_cfg).expect("pass@1").pass_at_1;
        bok[i] = best_of_k_curve(&run.final_policy, eval, BEST_OF_K, &EvalConfig::curve(seed))
            .expect("best-of-k")[BEST_OF_K - 1];
    }

    SeedOutcome { pass1, bok, nop_exploit, nop_mitigated, greedy_untrained, greedy_sft }
}

fn heavy() -> &'static Heavy {
    HEAVY.get_or_init(|| {
        let started = Instant::now();
        let corpus = generate_corpus(
            CORPUS_COUNT,
            CORPUS_SEED,
            CORPUS_MIN_LEN,
            CORPUS_MAX_LEN,
            CORPUS_ARITY_MIX,
            CORPUS_TESTS,
        )
        .expect("study corpus");
        let (train, eval) = split_corpus(corpus, TRAIN_FRACTION, CORPUS_SEED);
        println!(
            "heavy study: {} train / {} held-out tasks, {} seeds",
            train.len(),
            eval.len(),
            HEAVY_SEEDS.len()
        );
        let seeds: Vec<SeedOutcome> = HEAVY_SEEDS
            .iter()
            .map(|&seed| {
                let t0 = Instant::now();
                let out = run_seed(seed, &train, &eval);
                println!(
                    "  seed {seed}: pass@1 {:?} best-of-{} {:?} nop exploit/mitigated {:.2}/{:.2} greedy {:.3}->{:.3} ({:.0}s)",
                    out.pass1.map(|v| (v * 1e4).round() / 1e4),
                    BEST_OF_K,
                    out.bok.map(|v| (v * 1e4).round() / 1e4),
                    out.nop_exploit,
                    out.nop_mitigated,
                    out.greedy_untrained,
                    out.greedy_sft,
                    t0.elapsed().as_secs_f64()
                );
                out
            })
            .collect();
        Heavy { seeds, elapsed_s: started.elapsed().as_secs_f64() }
    })
}

fn mode_medians(h: &Heavy, field: impl Fn(&SeedOutcome) -> [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, slot) in out.iter_mut().enumerate() {
        let xs: Vec<f64> = h.seeds.iter().map(|s| field(s)[i]).collect();
        *slot = median(&xs);
    }
    out
}

#[test]
fn acceptance_08_process_rewards_lift_the_sparse_baseline() {
    let h = heavy();
    let p1 = mode_medians(h, |s| s.pass1);
    let bok = mode_medians(h, |s| s.bok);
    let best_other = bok[SPARSE].max(bok[DENSE]).max(bok[VALUE_INIT]);
    let pass = p1[DVI] >= p1[SPARSE]
        && p1[DENSE] >= p1[SPARSE]
        && bok[DVI] >= best_other
        && h.elapsed_s < HEAVY_BUDGET_S;
    println!(
        "ACCEPTANCE 08 directional mode ordering: {} — median held-out pass@1 {:?}, median best-of-{} {:?} for {:?}; study took {:.0}s (< {:.0}s)",
        verdict(pass),
        p1.map(|v| (v * 1e4).round() / 1e4),
        BEST_OF_K,
        bok.map(|v| (v * 1e4).round() / 1e4),
        MODE_NAMES,
        h.elapsed_s,
        HEAVY_BUDGET_S
    );
    assert!(
        pass,
        "pass@1 medians {p1:?}, best-of-{BEST_OF_K} medians {bok:?}, elapsed {:.0}s",
        h.elapsed_s
    );
}

#[test]
fn acceptance_09_normalization_and_neutral_labels_curb_nop_padding() {
    let h = heavy();
    let exploit: Vec<f64> = h.seeds.iter().map(|s| s.nop_exploit).collect();
    let mitigated: Vec<f64> = h.seeds.iter().map(|s| s.nop_mitigated).collect();
    let med_exploit = median(&exploit);
    let med_mitigated = median(&mitigated);
    let pass = med_exploit > med_mitigated;
    println!(
        "ACCEPTANCE 09 reward-hacking ablation: {} — median end-of-training NOPs per response {:.3} without mitigations vs {:.3} with them",
        verdict(pass),
        med_exploit,
        med_mitigated
    );
    assert!(pass, "exploit median {med_exploit:.3} vs mitigated {med_mitigated:.3}");
}

#[test]
fn acceptance_11_behavior_cloning_lifts_greedy_train_accuracy() {
    let h = heavy();
    let before: Vec<f64> = h.seeds.iter().map(|s| s.greedy_untrained).collect();
    let after: Vec<f64> = h.seeds.iter().map(|s| s.greedy_sft).collect();
    let med_before = median(&before);
    let med_after = median(&after);
    let pass = med_after > med_before;
    println!(
        "ACCEPTANCE 11 SFT sanity: {} — median greedy train pass@1 {:.4} untrained vs {:.4} after cloning",
        verdict(pass),
        med_before,
        med_after
    );
    assert!(pass, "greedy median {med_before:.4} -> {med_after:.4}");
}

// ------------------------------------------------------------------- C10

#[test]
fn acceptance_10_sweeps_emit_their_reports_deterministically() {
    let args: &[&str] = &[
        "--seed",
        "19",
        "--set",
        "taskgen.count=40",
        "--set",
        "taskgen.min_len=3",
        "--set",
        "taskgen.max_len=5",
        "--set",
        "sft.epochs=4",
        "--set",
        "collect.n_per_prompt=1",
        "--set",
        "collect.k_completions=4",
        "--set",
        "prm.epochs=2",
        "--set",
        "rl.steps=2",
        "--set",
        "rl.rollouts_per_step=16",
        "--set",
        "rl.checkpoints=2",
        "--set",
        "sweep.n_per_prompt_grid=[0.5,1,2]",
        "--set",
        "sweep.rl_steps=2",
        "--set",
        "sweep.rollouts_per_step=16",
        "--set",
        "sweep.eval_samples=2",
    ];
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        for stage in ["taskgen", "sft", "rl-baseline", "collect-prm-data", "sweep"] {
            let mut full = vec![stage];
            full.extend_from_slice(args);
            run_cli(dir, &full);
        }
    }
    let mut rels: Vec<String> = vec![
        "sweep/strategies/summary.csv".into(),
        "sweep/scaling/summary.csv".into(),
    ];
    for strategy in ["full", "remove_hard", "medium_only", "revised_only"] {
        rels.push(format!("sweep/strategies/{strategy}/label_distribution.json"));
    }
    for n in ["0.5", "1", "2"] {
        rels.push(format!("sweep/scaling/n_{n}/label_distribution.json"));
        rels.push(format!("sweep/scaling/n_{n}/collection_summary.json"));
    }
    let missing: Vec<&String> = rels.iter().filter(|r| !dir_a.path().join(r.as_str()).is_file()).collect();
    assert!(missing.is_empty(), "missing sweep artifacts: {missing:?}");
    let differing = diff_files(dir_a.path(), dir_b.path(), &rels);
    let pass = differing.is_empty();
    let table = std::fs::read_to_string(dir_a.path().join("sweep/strategies/summary.csv")).unwrap();
    println!(
        "ACCEPTANCE 10 sweep emission: {} — {} artifacts present and byte-identical across two runs{}; strategy table (ordering reported, not asserted):\n{}",
        verdict(pass),
        rels.len(),
        if pass { String::new() } else { format!("; differing: {differing:?}") },
        table.trim_end()
    );
    assert!(pass, "differing files: {differing:?}");
}
