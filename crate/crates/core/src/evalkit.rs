//! Evaluation: Pass@1, best-of-K curves, length-stratified Pass@1 deltas,
//! and a self-contained CSV/JSON/SVG report over run directories.

use crate::minilang::passes_all;
use crate::policy::PolicyModel;
use crate::rl::{read_metrics_csv, MetricsRow, METRICS_HEADER};
use crate::rng::Stream;
use crate::taskgen::Task;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

#[derive(Debug)]
pub enum EvalError {
    InvalidConfig(String),
    MissingMetrics,
    Io(std::io::Error),
    Parse(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::InvalidConfig(msg) => write!(f, "invalid eval config: {msg}"),
            EvalError::MissingMetrics => {
                write!(f, "no run directory provided a metrics.csv to report on")
            }
            EvalError::Io(e) => write!(f, "eval io: {e}"),
            EvalError::Parse(msg) => write!(f, "eval parse: {msg}"),
        }
    }
}

impl std::error::Error for EvalError {}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> EvalError {
        EvalError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> EvalConfig {
        EvalConfig { n_samples: 10, temperature: 0.2, top_p: 0.95, seed: 0 }
    }
}

impl EvalConfig {
    /// Decode settings for best-of-K curves: full temperature, nucleus 0.95.
    pub fn curve(seed: u64) -> EvalConfig {
        EvalConfig { n_samples: 1, temperature: 1.0, top_p: 0.95, seed }
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.n_samples == 0 {
            return Err(EvalError::InvalidConfig("n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEval {
    pub task_id: String,
    pub passes: usize,
    pub n_samples: usize,
}

impl TaskEval {
    pub fn rate(&self) -> f64 {
        self.passes as f64 / self.n_samples as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_task: Vec<TaskEval>,
    pub pass_at_1: f64,
}

/// Draws `count` responses per task; one substream per (task, sample) so
/// results are order-independent and reproducible.
fn sample_outcomes(
    policy: &PolicyModel,
    tasks: &[Task],
    count: usize,
    cfg: &EvalConfig,
) -> Vec<(Vec<bool>, Vec<usize>)> {
    let root = Stream::from_seed(cfg.seed).derive_str("eval");
    tasks
        .par_iter()
        .map(|task| {
            let task_stream = root.derive_str(&task.id);
            let mut passes = Vec::with_capacity(count);
            let mut lengths = Vec::with_capacity(count);
            for s in 0..count {
                let mut ss = task_stream.derive(s as u64);
                let (program, _) =
                    policy.sample_response(task, cfg.temperature, cfg.top_p, &mut ss);
                passes.push(passes_all(&program, &task.tests).0);
                lengths.push(program.len());
            }
            (passes, lengths)
        })
        .collect()
}

/// Mean over tasks of (passing samples / n_samples).
pub fn pass_at_1(
    policy: &PolicyModel,
    tasks: &[Task],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(EvalError::InvalidConfig("no tasks to evaluate".into()));
    }
    let outcomes = sample_outcomes(policy, tasks, cfg.n_samples, cfg);
    let per_task: Vec<TaskEval> = tasks
        .iter()
        .zip(&outcomes)
        .map(|(task, (passes, _))| TaskEval {
            task_id: task.id.clone(),
            passes: passes.iter().filter(|&&p| p).count(),
            n_samples: cfg.n_samples,
        })
        .collect();
    let pass_at_1 = per_task.iter().map(TaskEval::rate).sum::<f64>() / per_task.len() as f64;
    Ok(EvalReport { per_task, pass_at_1 })
}

/// Point K is the fraction of tasks with at least one passing response
/// among the first K of `k_max` pre-drawn samples, so the curve is
/// non-decreasing by construction. Decode settings come from `cfg`
/// (`EvalConfig::curve` gives the usual temperature-1.0 nucleus decode);
/// `cfg.n_samples` is ignored in favor of `k_max`.
pub fn best_of_k_curve(
    policy: &PolicyModel,
    tasks: &[Task],
    k_max: usize,
    cfg: &EvalConfig,
) -> Result<Vec<f64>, EvalError> {
    if k_max == 0 {
        return Err(EvalError::InvalidConfig("k_max must be at least 1".into()));
    }
    if tasks.is_empty() {
        return Err(EvalError::InvalidConfig("no tasks to evaluate".into()));
    }
    let outcomes = sample_outcomes(policy, tasks, k_max, cfg);
    let mut curve = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let solved = outcomes.iter().filter(|(passes, _)| passes[..k].contains(&true)).count();
        curve.push(solved as f64 / tasks.len() as f64);
    }
    Ok(curve)
}

/// One populated length bin: tasks whose baseline median sampled length
/// falls in (lo, hi], with Pass@1 for both policies and their difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub lo: usize,
    pub hi: usize,
    pub n_tasks: usize,
    pub pass_a: f64,
    pub pass_b: f64,
    pub delta: f64,
}

fn median(mut xs: Vec<usize>) -> f64 {
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2] as f64
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) as f64 / 2.0
    }
}

/// Per-bin Pass@1 difference (a minus b). Tasks are binned by the median
/// response length of `policy_b`, the baseline, so the stratification does
/// not move when the candidate changes. Interior edges decide membership;
/// the outer bins absorb medians beyond the outer edges, so populations
/// always partition the task set. Empty bins are omitted.
pub fn length_stratified_delta(
    policy_a: &PolicyModel,
    policy_b: &PolicyModel,
    tasks: &[Task],
    cfg: &EvalConfig,
    edges: &[usize],
) -> Result<Vec<LengthBin>, EvalError> {
    cfg.validate()?;
    if edges.len() < 2 {
        return Err(EvalError::InvalidConfig("need at least 2 bin edges".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidConfig("bin edges must be strictly increasing".into()));
    }
    if tasks.is_empty() {
        return Err(EvalError::InvalidConfig("no tasks to evaluate".into()));
    }
    let a = sample_outcomes(policy_a, tasks, cfg.n_samples, cfg);
    let b = sample_outcomes(policy_b, tasks, cfg.n_samples, cfg);
    let n_bins = edges.len() - 1;
    let mut bins: Vec<(usize, f64, f64)> = vec![(0, 0.0, 0.0); n_bins];
    for ((passes_a, _), (passes_b, lengths_b)) in a.iter().zip(&b) {
        let med = median(lengths_b.clone());
        let idx = edges[1..n_bins].iter().filter(|&&e| (e as f64) < med).count();
        let rate = |passes: &[bool]| {
            passes.iter().filter(|&&p| p).count() as f64 / passes.len() as f64
        };
        bins[idx].0 += 1;
        bins[idx].1 += rate(passes_a);
        bins[idx].2 += rate(passes_b);
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .filter(|(_, (n, _, _))| *n > 0)
        .map(|(i, (n, sum_a, sum_b))| {
            let pass_a = sum_a / n as f64;
            let pass_b = sum_b / n as f64;
            LengthBin { lo: edges[i], hi: edges[i + 1], n_tasks: n, pass_a, pass_b, delta: pass_a - pass_b }
        })
        .collect())
}

pub const PASS_AT_1_HEADER: &str = "policy,task_id,passes,n_samples";
pub const BEST_OF_K_HEADER: &str = "policy,k,pass_rate";
pub const LENGTH_DELTA_HEADER: &str = "comparison,lo,hi,n_tasks,pass_a,pass_b,delta";

pub fn write_pass_at_1_csv(
    path: &Path,
    entries: &[(String, EvalReport)],
) -> Result<(), EvalError> {
    let mut out = String::new();
    out.push_str(PASS_AT_1_HEADER);
    out.push('\n');
    for (policy, report) in entries {
        for t in &report.per_task {
            writeln!(out, "{},{},{},{}", policy, t.task_id, t.passes, t.n_samples)
                .expect("string write");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_best_of_k_csv(path: &Path, entries: &[(String, Vec<f64>)]) -> Result<(), EvalError> {
    let mut out = String::new();
    out.push_str(BEST_OF_K_HEADER);
    out.push('\n');
    for (policy, curve) in entries {
        for (i, rate) in curve.iter().enumerate() {
            writeln!(out, "{},{},{}", policy, i + 1, rate).expect("string write");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_length_delta_csv(
    path: &Path,
    entries: &[(String, Vec<LengthBin>)],
) -> Result<(), EvalError> {
    let mut out = String::new();
    out.push_str(LENGTH_DELTA_HEADER);
    out.push('\n');
    for (comparison, bins) in entries {
        for b in bins {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                comparison, b.lo, b.hi, b.n_tasks, b.pass_a, b.pass_b, b.delta
            )
            .expect("string write");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_csv_rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(EvalError::Parse(format!(
                "{}: expected header {header:?}, got {other:?}",
                path.display()
            )))
        }
    }
    Ok(lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

/// Metadata written alongside the consolidated report artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub runs: Vec<String>,
    pub metric_rows: usize,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Minimal self-contained SVG line plot. Coordinates are fixed to two
/// decimals so identical inputs render identical bytes.
fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (760.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 200.0, 40.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let points: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    let (mut x0, mut x1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (mut y0, mut y1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if !x0.is_finite() || x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if !y0.is_finite() || y0 == y1 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pad = (y1 - y0) * 0.05;
    y0 -= pad;
    y1 += pad;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"monospace\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        ml + pw / 2.0
    );
    // Axes and ticks.
    let _ = write!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        mt + ph,
        mt + ph,
        ml + pw,
        mt + ph
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{:.2}</text>\n",
            sx(fx),
            mt + ph,
            sx(fx),
            mt + ph + 5.0,
            sx(fx),
            mt + ph + 20.0,
            fx
        );
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{ml}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{:.2}</text>\n",
            ml - 5.0,
            sy(fy),
            sy(fy),
            ml - 8.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{y_label}</text>\n",
        ml + pw / 2.0,
        h - 12.0,
        mt + ph / 2.0,
        mt + ph / 2.0
    );
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if !pts.is_empty() {
            let mut path = String::new();
            for (i, (x, y)) in pts.iter().enumerate() {
                let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(*x), sy(*y));
            }
            let _ = write!(svg, "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n");
        }
        let ly = mt + 14.0 + 16.0 * si as f64;
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{ly}\" x2=\"{:.2}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\">{name}</text>\n",
            w - mr + 10.0,
            w - mr + 34.0,
            w - mr + 40.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn run_label(dir: &Path) -> String {
    dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| ".".into())
}

/// Consolidates run directories into one report directory: merged metrics
/// CSV, merged eval CSVs when present, SVG training and evaluation plots,
/// and a report.json describing what was found. Fails with MissingMetrics
/// when no run contributes a metrics.csv.
pub fn render_report(run_dirs: &[&Path], out_dir: &Path) -> Result<ReportMeta, EvalError> {
    let mut metrics: Vec<(String, Vec<MetricsRow>)> = Vec::new();
    let mut pass_rows: Vec<(String, Vec<Vec<String>>)> = Vec::new();
    let mut bok_rows: Vec<(String, Vec<Vec<String>>)> = Vec::new();
    let mut delta_rows: Vec<(String, Vec<Vec<String>>)> = Vec::new();
    for dir in run_dirs {
        let run = run_label(dir);
        let m = dir.join("metrics.csv");
        if m.is_file() {
            let rows = read_metrics_csv(&m).map_err(|e| EvalError::Parse(e.to_string()))?;
            metrics.push((run.clone(), rows));
        }
        let p = dir.join("pass_at_1.csv");
        if p.is_file() {
            pass_rows.push((run.clone(), read_csv_rows(&p, PASS_AT_1_HEADER)?));
        }
        let b = dir.join("best_of_k.csv");
        if b.is_file() {
            bok_rows.push((run.clone(), read_csv_rows(&b, BEST_OF_K_HEADER)?));
        }
        let d = dir.join("length_delta.csv");
        if d.is_file() {
            delta_rows.push((run.clone(), read_csv_rows(&d, LENGTH_DELTA_HEADER)?));
        }
    }
    if metrics.is_empty() {
        return Err(EvalError::MissingMetrics);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files: Vec<String> = Vec::new();
    let mut emit = |name: &str, content: String| -> Result<(), EvalError> {
        std::fs::write(out_dir.join(name), content)?;
        files.push(name.to_string());
        Ok(())
    };

    let mut combined = format!("run,{METRICS_HEADER}\n");
    for (run, rows) in &metrics {
        for r in rows {
            let _ = writeln!(
                combined,
                "{run},{},{},{},{},{},{},{},{},{},{}",
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
            );
        }
    }
    emit("combined_metrics.csv", combined)?;

    let curve_of = |pick: fn(&MetricsRow) -> f64| -> Vec<(String, Vec<(f64, f64)>)> {
        metrics
            .iter()
            .map(|(run, rows)| {
                (run.clone(), rows.iter().map(|r| (r.step as f64, pick(r))).collect())
            })
            .collect()
    };
    emit(
        "training_pass_rate.svg",
        line_plot("Training pass rate", "step", "pass rate", &curve_of(|r| r.pass_rate)),
    )?;
    emit(
        "training_reward.svg",
        line_plot("Mean total reward", "step", "reward", &curve_of(|r| r.mean_reward)),
    )?;
    emit(
        "training_nop.svg",
        line_plot("Mean NOP count per response", "step", "NOPs", &curve_of(|r| r.mean_nop)),
    )?;
    emit(
        "training_len.svg",
        line_plot("Mean response length", "step", "tokens", &curve_of(|r| r.mean_len)),
    )?;

    if !pass_rows.is_empty() {
        let mut out = format!("run,{PASS_AT_1_HEADER}\n");
        for (run, rows) in &pass_rows {
            for r in rows {
                let _ = writeln!(out, "{run},{}", r.join(","));
            }
        }
        emit("combined_pass_at_1.csv", out)?;
    }
    if !bok_rows.is_empty() {
        let mut out = format!("run,{BEST_OF_K_HEADER}\n");
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for (run, rows) in &bok_rows {
            for r in rows {
                let _ = writeln!(out, "{run},{}", r.join(","));
                let key = format!("{run}/{}", r[0]);
                let k: f64 = r[1].parse().map_err(|_| EvalError::Parse("bad k".into()))?;
                let rate: f64 =
                    r[2].parse().map_err(|_| EvalError::Parse("bad pass_rate".into()))?;
                match series.iter_mut().find(|(name, _)| *name == key) {
                    Some((_, pts)) => pts.push((k, rate)),
                    None => series.push((key, vec![(k, rate)])),
                }
            }
        }
        emit("combined_best_of_k.csv", out)?;
        emit("best_of_k.svg", line_plot("Best-of-K pass rate", "K", "pass rate", &series))?;
    }
    if !delta_rows.is_empty() {
        let mut out = format!("run,{LENGTH_DELTA_HEADER}\n");
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for (run, rows) in &delta_rows {
            for r in rows {
                let _ = writeln!(out, "{run},{}", r.join(","));
                let key = format!("{run}/{}", r[0]);
                let lo: f64 = r[1].parse().map_err(|_| EvalError::Parse("bad lo".into()))?;
                let hi: f64 = r[2].parse().map_err(|_| EvalError::Parse("bad hi".into()))?;
                let delta: f64 =
                    r[6].parse().map_err(|_| EvalError::Parse("bad delta".into()))?;
                let mid = (lo + hi) / 2.0;
                match series.iter_mut().find(|(name, _)| *name == key) {
                    Some((_, pts)) => pts.push((mid, delta)),
                    None => series.push((key, vec![(mid, delta)])),
                }
            }
        }
        emit("combined_length_delta.csv", out)?;
        emit(
            "length_delta.svg",
            line_plot("Pass@1 delta by response length", "bin midpoint (tokens)", "delta", &series),
        )?;
    }

    let meta = ReportMeta {
        runs: run_dirs.iter().map(|d| run_label(d)).collect(),
        metric_rows: metrics.iter().map(|(_, rows)| rows.len()).sum(),
        files: {
            let mut f = files.clone();
            f.push("report.json".to_string());
            f
        },
        notes: vec![
            "Decoding omits top-k filtering: any cutoff of at least the 15-token vocabulary is vacuous.".to_string(),
            "Length bins stratify by the baseline policy's median sampled response length per task.".to_string(),
        ],
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    json.push('\n');
    let mut f = std::fs::File::create(out_dir.join("report.json"))?;
    f.write_all(json.as_bytes())?;
    Ok(meta)
}
