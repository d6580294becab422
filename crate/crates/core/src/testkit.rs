//! Test-only ground truth for the labeler: an exhaustive completion search
//! and a linear-scan labeler.
//!
//! `exhaustive_completes` decides, by breadth-first search over joint
//! machine states, whether a prefix can be extended into a passing program
//! within a token budget. It is monotone across prefixes of one response
//! when the budget is response_len - m: any completion of a longer prefix
//! also completes a shorter one (prepend the skipped response tokens), so
//! binary search and a linear scan must agree on the failure point.

use crate::minilang::{passes_all, Machine, Program, Token};
use crate::taskgen::Task;
use std::collections::HashSet;

/// Tokens worth enumerating in a completion. NOP is the identity on machine
/// state and END is equivalent to halting by exhaustion (the search tests
/// "halt now" at every level), so skipping both loses nothing.
fn completion_pool() -> Vec<Token> {
    Token::ALL
        .iter()
        .copied()
        .filter(|&t| t != Token::Nop && t != Token::End)
        .collect()
}

/// True iff some completion of at most `budget` tokens turns `prefix` into
/// a program passing every unit test of `task`. Exact, not sampled.
pub fn exhaustive_completes(task: &Task, prefix: &[Token], budget: usize) -> bool {
    let mut start: Vec<Machine> = Vec::with_capacity(task.tests.len());
    for test in &task.tests {
        let mut m = Machine::new();
        for &tok in prefix {
            if m.halted() {
                break;
            }
            if m.step(tok, &test.inputs).is_err() {
                // The error replays in every extension, failing this test.
                return false;
            }
        }
        start.push(m);
    }
    let passes_now = |ms: &[Machine]| {
        ms.iter().zip(&task.tests).all(|(m, t)| m.finish() == Ok(t.expected))
    };
    if passes_now(&start) {
        return true;
    }
    if budget == 0 || start.iter().any(Machine::halted) {
        return false;
    }

    let key = |ms: &[Machine]| -> Vec<Vec<i32>> { ms.iter().map(|m| m.stack().to_vec()).collect() };
    let mut visited: HashSet<Vec<Vec<i32>>> = HashSet::new();
    visited.insert(key(&start));
    let mut frontier = vec![start];
    let pool = completion_pool();
    for _ in 1..=budget {
        let mut next = Vec::new();
        for state in &frontier {
            'tok: for &tok in &pool {
                let mut out = Vec::with_capacity(state.len());
                for (m, t) in state.iter().zip(&task.tests) {
                    let mut m2 = m.clone();
                    if m2.step(tok, &t.inputs).is_err() {
                        continue 'tok;
                    }
                    out.push(m2);
                }
                if passes_now(&out) {
                    return true;
                }
                if visited.insert(key(&out)) {
                    next.push(out);
                }
            }
        }
        if next.is_empty() {
            return false;
        }
        frontier = next;
    }
    false
}

/// First-failure labeling by scanning prefixes left to right. Returns the
/// labels and the failure point (len + 1 when nothing fails).
pub fn linear_scan_labels(
    len: usize,
    passes_raw: bool,
    mut completes: impl FnMut(usize) -> bool,
) -> (Vec<i8>, usize) {
    let mut failure_point = len + 1;
    if !passes_raw {
        for m in 1..=len {
            if !completes(m) {
                failure_point = m;
                break;
            }
        }
    }
    let labels = (1..=len).map(|t| if t < failure_point { 1 } else { -1 }).collect();
    (labels, failure_point)
}

/// Brute-force reference for `exhaustive_completes`: tries every completion
/// over the full non-END alphabet up to `budget` tokens. Only viable for
/// tiny budgets; used to validate the searched version.
pub fn naive_completes(task: &Task, prefix: &[Token], budget: usize) -> bool {
    let pool: Vec<Token> = Token::ALL.iter().copied().filter(|&t| t != Token::End).collect();
    let mut stack: Vec<Vec<Token>> = vec![vec![]];
    while let Some(completion) = stack.pop() {
        let mut tokens = prefix.to_vec();
        tokens.extend_from_slice(&completion);
        if tokens.last() != Some(&Token::End) || completion.is_empty() {
            if let Ok(candidate) = Program::new(tokens) {
                if passes_all(&candidate, &task.tests).0 {
                    return true;
                }
            }
        }
        if completion.len() < budget {
            for &t in &pool {
                let mut c = completion.clone();
                c.push(t);
                stack.push(c);
            }
        }
    }
    false
}
