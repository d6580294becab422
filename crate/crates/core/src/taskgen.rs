//! Procedural task corpus: sample reference programs, fingerprint their
//! behavior on fixed probe inputs, and keep one task per distinct behavior.
//!
//! A task is a prompt for the policy: unit tests to satisfy, plus the hidden
//! reference that produced them. References must run error-free on every
//! probe and must not be constant over the probe set.

use crate::minilang::{execute, Program, Token, EXEC_FUEL, MAX_PROGRAM_LEN};
use crate::rng::{fnv1a64, Stream};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// One input/output example the synthesized program must reproduce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTest {
    pub inputs: Vec<i32>,
    pub expected: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub arity: u8,
    pub tests: Vec<UnitTest>,
    pub reference: Program,
    /// Hex fingerprint of (arity, probe outputs); unique within a corpus.
    pub signature: String,
}

/// Probe inputs for unary references: a fixed sweep across [-9, 9].
pub const PROBE_ARITY1: [[i32; 1]; 16] = [
    [-9], [-7], [-5], [-3], [-2], [-1], [0], [1], [2], [3], [4], [5], [6], [7], [8], [9],
];

/// Probe inputs for binary references: sign/zero/asymmetry coverage.
pub const PROBE_ARITY2: [[i32; 2]; 16] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [1, 1],
    [2, 3],
    [3, 2],
    [-1, 1],
    [1, -1],
    [-2, -3],
    [4, -4],
    [-5, 5],
    [7, 2],
    [2, 7],
    [-9, 9],
    [9, -9],
    [5, 5],
];

/// Test inputs are drawn uniformly from this inclusive range per coordinate.
pub const INPUT_RANGE: (i32, i32) = (-9, 9);

const ATTEMPTS_PER_TASK: u64 = 10_000;
const EXPECTED_REDRAWS: usize = 100;

#[derive(Debug)]
pub enum TaskGenError {
    InvalidConfig(String),
    /// The attempt budget ran out before `requested` distinct behaviors appeared.
    CorpusExhausted { produced: usize, requested: usize, attempts: u64 },
    Io(std::io::Error),
    Parse { line: usize, message: String },
}

impl fmt::Display for TaskGenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskGenError::InvalidConfig(msg) => write!(f, "invalid corpus config: {msg}"),
            TaskGenError::CorpusExhausted { produced, requested, attempts } => write!(
                f,
                "corpus exhausted: {produced}/{requested} distinct tasks after {attempts} attempts"
            ),
            TaskGenError::Io(e) => write!(f, "task io: {e}"),
            TaskGenError::Parse { line, message } => write!(f, "tasks line {line}: {message}"),
        }
    }
}

impl std::error::Error for TaskGenError {}

impl From<std::io::Error> for TaskGenError {
    fn from(e: std::io::Error) -> TaskGenError {
        TaskGenError::Io(e)
    }
}

fn probe_inputs(arity: u8) -> Vec<&'static [i32]> {
    match arity {
        1 => PROBE_ARITY1.iter().map(|p| &p[..]).collect(),
        _ => PROBE_ARITY2.iter().map(|p| &p[..]).collect(),
    }
}

/// Fingerprints a program's behavior as FNV-1a over arity and probe outputs.
/// Returns None if the program errors on any probe or is constant over them.
pub fn behavior_signature(program: &Program, arity: u8) -> Option<String> {
    let mut bytes = vec![arity];
    let mut outputs = Vec::with_capacity(16);
    for inputs in probe_inputs(arity) {
        let v = execute(program, inputs, EXEC_FUEL).ok()?;
        bytes.extend_from_slice(&v.to_le_bytes());
        outputs.push(v);
    }
    if outputs.iter().all(|&v| v == outputs[0]) {
        return None;
    }
    Some(format!("{:016x}", fnv1a64(&bytes)))
}

fn body_pool(arity: u8) -> Vec<Token> {
    Token::ALL
        .iter()
        .copied()
        .filter(|&t| t != Token::End && !(arity == 1 && t == Token::Arg1))
        .collect()
}

/// Generates `count` behaviorally distinct tasks. `arity_mix` is the
/// probability that a candidate reference is binary; `min_len..=max_len`
/// bounds the reference length including its final END.
pub fn generate_corpus(
    count: usize,
    seed: u64,
    min_len: usize,
    max_len: usize,
    arity_mix: f64,
    tests_per_task: usize,
) -> Result<Vec<Task>, TaskGenError> {
    if min_len < 2 || max_len > MAX_PROGRAM_LEN || min_len > max_len {
        return Err(TaskGenError::InvalidConfig(format!(
            "length bounds {min_len}..={max_len} must satisfy 2 <= min <= max <= {MAX_PROGRAM_LEN}"
        )));
    }
    if !(0.0..=1.0).contains(&arity_mix) {
        return Err(TaskGenError::InvalidConfig(format!("arity_mix {arity_mix} outside [0, 1]")));
    }
    if tests_per_task == 0 {
        return Err(TaskGenError::InvalidConfig("tests_per_task must be positive".into()));
    }

    let mut stream = Stream::from_seed(seed).derive_str("taskgen");
    let mut seen = HashSet::new();
    let mut tasks = Vec::with_capacity(count);
    let budget = ATTEMPTS_PER_TASK.saturating_mul(count as u64);
    let mut attempts = 0u64;

    while tasks.len() < count {
        if attempts >= budget {
            return Err(TaskGenError::CorpusExhausted {
                produced: tasks.len(),
                requested: count,
                attempts,
            });
        }
        attempts += 1;

        let arity: u8 = if stream.next_f64() < arity_mix { 2 } else { 1 };
        let len = min_len + stream.next_range(max_len - min_len + 1);
        let pool = body_pool(arity);
        let mut tokens: Vec<Token> =
            (0..len - 1).map(|_| pool[stream.next_range(pool.len())]).collect();
        tokens.push(Token::End);
        let reference = Program::new(tokens).expect("pool excludes interior END");

        let Some(signature) = behavior_signature(&reference, arity) else {
            continue;
        };
        if !seen.insert(signature.clone()) {
            continue;
        }

        let tests = match draw_tests(&reference, arity, tests_per_task, &mut stream) {
            Some(ts) => ts,
            None => {
                seen.remove(&signature);
                continue;
            }
        };

        tasks.push(Task {
            id: format!("t{:06}", tasks.len()),
            arity,
            tests,
            reference,
            signature,
        });
    }
    Ok(tasks)
}

fn draw_tests(
    reference: &Program,
    arity: u8,
    n: usize,
    stream: &mut Stream,
) -> Option<Vec<UnitTest>> {
    let mut tests = Vec::with_capacity(n);
    for _ in 0..n {
        let mut ok = None;
        for _ in 0..EXPECTED_REDRAWS {
            let inputs: Vec<i32> = (0..arity)
                .map(|_| stream.next_i32_inclusive(INPUT_RANGE.0, INPUT_RANGE.1))
                .collect();
            if let Ok(expected) = execute(reference, &inputs, EXEC_FUEL) {
                ok = Some(UnitTest { inputs, expected });
                break;
            }
        }
        tests.push(ok?);
    }
    Some(tests)
}

/// Deterministically partitions a corpus; train gets floor(n * train_fraction)
/// tasks. Both halves come back sorted by id.
pub fn split_corpus(tasks: Vec<Task>, train_fraction: f64, seed: u64) -> (Vec<Task>, Vec<Task>) {
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    Stream::from_seed(seed).derive_str("split").shuffle(&mut order);
    let n_train = (tasks.len() as f64 * train_fraction).floor() as usize;
    let train_idx: HashSet<usize> = order[..n_train].iter().copied().collect();
    let (mut train, mut heldout) = (Vec::new(), Vec::new());
    for (i, task) in tasks.into_iter().enumerate() {
        if train_idx.contains(&i) {
            train.push(task);
        } else {
            heldout.push(task);
        }
    }
    (train, heldout)
}

/// Writes tasks as JSON Lines, one task per line.
pub fn save_tasks(path: &Path, tasks: &[Task]) -> Result<(), TaskGenError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for task in tasks {
        serde_json::to_writer(&mut w, task)
            .map_err(|e| TaskGenError::Parse { line: 0, message: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>, TaskGenError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut tasks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let task: Task = serde_json::from_str(&line)
            .map_err(|e| TaskGenError::Parse { line: i + 1, message: e.to_string() })?;
        if task.arity != 1 && task.arity != 2 {
            return Err(TaskGenError::Parse {
                line: i + 1,
                message: format!("arity {} not in {{1, 2}}", task.arity),
            });
        }
        if task.tests.iter().any(|t| t.inputs.len() != task.arity as usize) {
            return Err(TaskGenError::Parse {
                line: i + 1,
                message: "test input width disagrees with arity".into(),
            });
        }
        tasks.push(task);
    }
    Ok(tasks)
}
