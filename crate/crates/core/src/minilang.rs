//! The target language: a 15-token integer stack machine.
//!
//! Programs are flat token sequences, at most [`MAX_PROGRAM_LEN`] long, with
//! `END` allowed only as the final token. Execution is a total function:
//! every program/input pair yields `Ok(i32)` or a typed fault, never a panic.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::taskgen::UnitTest;

pub const VOCAB_SIZE: usize = 15;
pub const MAX_PROGRAM_LEN: usize = 24;
/// Fuel for one execution: 4x the maximum program length, one unit per token.
pub const EXEC_FUEL: u32 = 4 * MAX_PROGRAM_LEN as u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Push0,
    Push1,
    Push2,
    Push3,
    Push4,
    Arg0,
    Arg1,
    Add,
    Sub,
    Mul,
    Neg,
    Dup,
    Swap,
    Nop,
    End,
}

impl Token {
    /// All tokens in id order; ids are contiguous 0..=14.
    pub const ALL: [Token; VOCAB_SIZE] = [
        Token::Push0,
        Token::Push1,
        Token::Push2,
        Token::Push3,
        Token::Push4,
        Token::Arg0,
        Token::Arg1,
        Token::Add,
        Token::Sub,
        Token::Mul,
        Token::Neg,
        Token::Dup,
        Token::Swap,
        Token::Nop,
        Token::End,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Token> {
        Token::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Token::Push0 => "PUSH_0",
            Token::Push1 => "PUSH_1",
            Token::Push2 => "PUSH_2",
            Token::Push3 => "PUSH_3",
            Token::Push4 => "PUSH_4",
            Token::Arg0 => "ARG0",
            Token::Arg1 => "ARG1",
            Token::Add => "ADD",
            Token::Sub => "SUB",
            Token::Mul => "MUL",
            Token::Neg => "NEG",
            Token::Dup => "DUP",
            Token::Swap => "SWAP",
            Token::Nop => "NOP",
            Token::End => "END",
        }
    }

    pub fn from_name(name: &str) -> Option<Token> {
        Token::ALL.iter().copied().find(|t| t.name() == name)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Token, D::Error> {
        let name = String::deserialize(d)?;
        Token::from_name(&name).ok_or_else(|| D::Error::custom(format!("unknown token {name:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramError {
    TooLong { len: usize },
    InteriorEnd { index: usize },
}

impl fmt::Display for ProgramError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramError::TooLong { len } => {
                write!(f, "program has {len} tokens, limit is {MAX_PROGRAM_LEN}")
            }
            ProgramError::InteriorEnd { index } => {
                write!(f, "END at position {index} is not the final token")
            }
        }
    }
}

impl std::error::Error for ProgramError {}

/// A validated token sequence: length <= [`MAX_PROGRAM_LEN`], `END` only final.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    tokens: Vec<Token>,
}

impl Program {
    pub fn new(tokens: Vec<Token>) -> Result<Program, ProgramError> {
        if tokens.len() > MAX_PROGRAM_LEN {
            return Err(ProgramError::TooLong { len: tokens.len() });
        }
        for (i, &t) in tokens.iter().enumerate() {
            if t == Token::End && i + 1 != tokens.len() {
                return Err(ProgramError::InteriorEnd { index: i });
            }
        }
        Ok(Program { tokens })
    }

    pub fn empty() -> Program {
        Program { tokens: Vec::new() }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t.name())?;
        }
        Ok(())
    }
}

impl Serialize for Program {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Program, D::Error> {
        let tokens = Vec::<Token>::deserialize(d)?;
        Program::new(tokens).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecError {
    /// Pop from an empty stack, or an ARG reference beyond the input arity.
    StackUnderflow,
    /// Execution halted with an empty stack.
    NoResult,
    /// Fuel ran out before the program halted.
    FuelExhausted,
    /// i32 overflow in ADD, SUB, MUL, or NEG.
    Overflow,
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExecError::StackUnderflow => "stack underflow",
            ExecError::NoResult => "halted with empty stack",
            ExecError::FuelExhausted => "fuel exhausted",
            ExecError::Overflow => "integer overflow",
        };
        f.write_str(s)
    }
}

impl std::error::Error for ExecError {}

pub type ExecResult = Result<i32, ExecError>;

/// Stepwise interpreter state for a single input tuple. `execute` drives it
/// to completion; the completion-search oracle steps it token by token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Machine {
    stack: Vec<i32>,
    halted: bool,
}

impl Machine {
    pub fn new() -> Machine {
        Machine { stack: Vec::new(), halted: false }
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn stack(&self) -> &[i32] {
        &self.stack
    }

    /// Applies one token. Must not be called after the machine has halted.
    pub fn step(&mut self, token: Token, inputs: &[i32]) -> Result<(), ExecError> {
        assert!(!self.halted, "step on a halted machine");
        match token {
            Token::Push0 => self.stack.push(0),
            Token::Push1 => self.stack.push(1),
            Token::Push2 => self.stack.push(2),
            Token::Push3 => self.stack.push(3),
            Token::Push4 => self.stack.push(4),
            Token::Arg0 | Token::Arg1 => {
                let i = if token == Token::Arg0 { 0 } else { 1 };
                let v = *inputs.get(i).ok_or(ExecError::StackUnderflow)?;
                self.stack.push(v);
            }
            Token::Add | Token::Sub | Token::Mul => {
                let b = self.stack.pop().ok_or(ExecError::StackUnderflow)?;
                let a = self.stack.pop().ok_or(ExecError::StackUnderflow)?;
                let r = match token {
                    Token::Add => a.checked_add(b),
                    Token::Sub => a.checked_sub(b),
                    _ => a.checked_mul(b),
                };
                self.stack.push(r.ok_or(ExecError::Overflow)?);
            }
            Token::Neg => {
                let a = self.stack.pop().ok_or(ExecError::StackUnderflow)?;
                self.stack.push(a.checked_neg().ok_or(ExecError::Overflow)?);
            }
            Token::Dup => {
                let a = *self.stack.last().ok_or(ExecError::StackUnderflow)?;
                self.stack.push(a);
            }
            Token::Swap => {
                let n = self.stack.len();
                if n < 2 {
                    return Err(ExecError::StackUnderflow);
                }
                self.stack.swap(n - 1, n - 2);
            }
            Token::Nop => {}
            Token::End => self.halted = true,
        }
        Ok(())
    }

    /// Result as if the machine halted now: top of stack, or NoResult.
    pub fn finish(&self) -> ExecResult {
        self.stack.last().copied().ok_or(ExecError::NoResult)
    }
}

impl Default for Machine {
    fn default() -> Machine {
        Machine::new()
    }
}

/// Runs `program` on `inputs`, spending one fuel unit per executed token.
pub fn execute(program: &Program, inputs: &[i32], mut fuel: u32) -> ExecResult {
    let mut machine = Machine::new();
    for &token in program.tokens() {
        if fuel == 0 {
            return Err(ExecError::FuelExhausted);
        }
        fuel -= 1;
        machine.step(token, inputs)?;
        if machine.halted() {
            break;
        }
    }
    machine.finish()
}

/// Runs the program against every test with the standard fuel budget.
/// Returns the conjunction plus the per-test pass flags.
pub fn passes_all(program: &Program, tests: &[UnitTest]) -> (bool, Vec<bool>) {
    let flags: Vec<bool> = tests
        .iter()
        .map(|t| execute(program, &t.inputs, EXEC_FUEL) == Ok(t.expected))
        .collect();
    (flags.iter().all(|&b| b), flags)
}
