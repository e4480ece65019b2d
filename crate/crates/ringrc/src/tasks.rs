//! Delayed logical operations: the task definitions and their target
//! sequences.
//!
//! A task `OP:n1:n2` applies OP between the present bit and the bit n1
//! positions in the past, while the regression receives the virtual nodes
//! of the n2 most recent bits. The past operand entered the ring before
//! the present bit, so targets and feature rows share the present-bit
//! index with no extra shifting.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("bit stream of length {len} is too short for bit distance {n1}")]
    TooShort { len: usize, n1: usize },
    #[error("task spec: {0}")]
    Parse(String),
    #[error("task spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogicOp {
    And,
    Or,
    Xor,
}

impl LogicOp {
    pub fn name(self) -> &'static str {
        match self {
            LogicOp::And => "AND",
            LogicOp::Or => "OR",
            LogicOp::Xor => "XOR",
        }
    }
}

/// Evaluate the truth table of `op` on two bits.
pub fn truth_eval(op: LogicOp, b1: u8, b2: u8) -> u8 {
    debug_assert!(b1 <= 1 && b2 <= 1);
    match op {
        LogicOp::And => b1 & b2,
        LogicOp::Or => b1 | b2,
        LogicOp::Xor => b1 ^ b2,
    }
}

/// A delayed logical task: operation, operand distance n1, and the number
/// of R-bits n2 handed to the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskSpec {
    pub op: LogicOp,
    pub n1: usize,
    pub n2: usize,
}

impl TaskSpec {
    pub fn new(op: LogicOp, n1: usize, n2: usize) -> Result<Self, TaskError> {
        let spec = Self { op, n1, n2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.n1 < 1 {
            return Err(TaskError::Invalid(format!(
                "n1 (bit distance) must be >= 1, got {}",
                self.n1
            )));
        }
        if self.n2 < 1 || self.n2 > self.n1 + 1 {
            return Err(TaskError::Invalid(format!(
                "n2 (R-bits) must satisfy 1 <= n2 <= n1+1, got n2={} for n1={}",
                self.n2, self.n1
            )));
        }
        Ok(())
    }

    /// Earliest bit index with both a defined target and a full feature
    /// window.
    pub fn first_valid_bit(&self) -> usize {
        self.n1.max(self.n2 - 1)
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.op.name(), self.n1, self.n2)
    }
}

impl FromStr for TaskSpec {
    type Err = TaskError;

    /// Parse `OP:n1:n2`, e.g. `XOR:2:3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let op = match parts.next() {
            Some("AND") | Some("and") => LogicOp::And,
            Some("OR") | Some("or") => LogicOp::Or,
            Some("XOR") | Some("xor") => LogicOp::Xor,
            Some(other) => {
                return Err(TaskError::Parse(format!(
                    "operation must be AND, OR, or XOR, got '{other}'"
                )))
            }
            None => return Err(TaskError::Parse("empty task spec".into())),
        };
        let n1 = parts
            .next()
            .ok_or_else(|| TaskError::Parse("missing n1 (bit distance) field".into()))?
            .parse::<usize>()
            .map_err(|e| TaskError::Parse(format!("n1 (bit distance): {e}")))?;
        let n2 = parts
            .next()
            .ok_or_else(|| TaskError::Parse("missing n2 (R-bit count) field".into()))?
            .parse::<usize>()
            .map_err(|e| TaskError::Parse(format!("n2 (R-bit count): {e}")))?;
        if parts.next().is_some() {
            return Err(TaskError::Parse(format!(
                "expected exactly OP:n1:n2, got '{s}'"
            )));
        }
        TaskSpec::new(op, n1, n2)
    }
}

/// Target bits for a task over a bit stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Targets {
    /// y[j] = op(bits[j], bits[j - n1]); entries below `valid_from` are
    /// padding and must be excluded downstream.
    pub y: Vec<u8>,
    pub valid_from: usize,
}

/// Build target bits y[j] = op(bits[j], bits[j-n1]) for j >= n1.
pub fn build_targets(bits: &[u8], spec: &TaskSpec) -> Result<Targets, TaskError> {
    spec.validate()?;
    if bits.len() <= spec.n1 {
        return Err(TaskError::TooShort {
            len: bits.len(),
            n1: spec.n1,
        });
    }
    let mut y = vec![0u8; bits.len()];
    for j in spec.n1..bits.len() {
        y[j] = truth_eval(spec.op, bits[j], bits[j - spec.n1]);
    }
    Ok(Targets {
        y,
        valid_from: spec.first_valid_bit(),
    })
}
