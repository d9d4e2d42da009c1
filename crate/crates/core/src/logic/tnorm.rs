use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three fuzzy-logic families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TNorm {
    Product,
    Minimum,
    Lukasiewicz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogicOp {
    And,
    Or,
    Not,
    Implies,
}

impl TNorm {
    pub const ALL: [TNorm; 3] = [TNorm::Product, TNorm::Minimum, TNorm::Lukasiewicz];

    pub fn and(self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Product => a * b,
            TNorm::Minimum => a.min(b),
            TNorm::Lukasiewicz => (a + b - 1.0).max(0.0),
        }
    }

    pub fn or(self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Product => a + b - a * b,
            TNorm::Minimum => a.max(b),
            TNorm::Lukasiewicz => (a + b).min(1.0),
        }
    }

    pub fn not(self, a: f64) -> f64 {
        1.0 - a
    }

    /// Residual implication of the t-norm.
    pub fn implies(self, a: f64, b: f64) -> f64 {
        match self {
            // b / a >= 1 whenever a <= b, which also covers a = 0
            TNorm::Product => {
                if a <= b {
                    1.0
                } else {
                    (b / a).min(1.0)
                }
            }
            TNorm::Minimum => {
                if a <= b {
                    1.0
                } else {
                    b
                }
            }
            TNorm::Lukasiewicz => (1.0 - a + b).min(1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TNorm::Product => "product",
            TNorm::Minimum => "minimum",
            TNorm::Lukasiewicz => "lukasiewicz",
        }
    }
}

impl fmt::Display for TNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TNorm::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown t-norm `{s}`")))
    }
}

fn truth(v: f64, which: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!(
            "truth value {which} = {v} outside [0, 1]"
        )))
    }
}

/// Checked entry point: validates that operands are truth values and that
/// binary operations get a second operand.
pub fn t_norm(variant: TNorm, op: LogicOp, a: f64, b: Option<f64>) -> Result<f64> {
    let a = truth(a, "a")?;
    let b = match (op, b) {
        (LogicOp::Not, _) => None,
        (_, Some(b)) => Some(truth(b, "b")?),
        (_, None) => {
            return Err(Error::InvalidArgument(format!("{op:?} needs two operands")));
        }
    };
    Ok(match (op, b) {
        (LogicOp::Not, _) => variant.not(a),
        (LogicOp::And, Some(b)) => variant.and(a, b),
        (LogicOp::Or, Some(b)) => variant.or(a, b),
        (LogicOp::Implies, Some(b)) => variant.implies(a, b),
        _ => unreachable!(),
    })
}
