//! Grounded clause evaluation.
//!
//! A literal with truth value `v` and membership degree `γ` contributes
//! `γ (1 - v) + (1 - γ) v`, so `γ = 1` negates it and `γ = 0` leaves it
//! plain. A grounded clause is `clip(sum of contributions, 0, 1)`, the
//! Łukasiewicz disjunction. Its eigenvalue averages that over all joint
//! groundings; since a contribution depends on the grounding only through
//! the literal's truth value, the average is taken over truth patterns
//! weighted by the fraction of groundings on which each literal is true.

use crate::error::{Error, Result};
use crate::logic::network::{Clause, Grounding};

/// Feature literals with more uncertain groundings than this are refused
/// (the pattern enumeration is exponential in that count).
pub const MAX_BRANCHING_LITERALS: usize = 20;

pub fn blend(value: f64, gamma: f64) -> f64 {
    gamma * (1.0 - value) + (1.0 - gamma) * value
}

/// One feature literal of a grounded clause.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundedLiteral {
    pub edge: usize,
    pub gamma: f64,
    /// Fraction of groundings on which the predicate is true.
    pub p_true: f64,
}

pub fn grounded_literals(clause: &Clause, grounding: &Grounding, gamma: &[f64]) -> Option<Vec<GroundedLiteral>> {
    clause
        .features
        .iter()
        .map(|l| {
            grounding.fraction_true(l.predicate).map(|p_true| GroundedLiteral {
                edge: l.edge,
                gamma: gamma[l.edge],
                p_true,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClauseEval {
    pub value: f64,
    /// d value / d (decision literal contribution)
    pub d_decision: f64,
    /// d value / d γ for each feature literal, aligned with the input
    pub d_gamma: Vec<f64>,
}

fn clip_unit(s: f64) -> (f64, bool) {
    if s <= 0.0 {
        (0.0, false)
    } else if s >= 1.0 {
        (1.0, false)
    } else {
        (s, true)
    }
}

/// Value and subgradients of a grounded clause whose decision literal
/// contributes `decision`. Saturated patterns get subgradient 0.
pub fn evaluate(lits: &[GroundedLiteral], decision: f64) -> Result<ClauseEval> {
    let mut fixed = decision;
    let mut fixed_truth = vec![0.0; lits.len()];
    let mut branching = Vec::new();
    for (i, l) in lits.iter().enumerate() {
        if l.p_true >= 1.0 {
            fixed += blend(1.0, l.gamma);
            fixed_truth[i] = 1.0;
        } else if l.p_true <= 0.0 {
            fixed += blend(0.0, l.gamma);
        } else {
            branching.push(i);
        }
    }
    if branching.len() > MAX_BRANCHING_LITERALS {
        return Err(Error::InvalidArgument(format!(
            "clause has {} literals with mixed groundings (max {MAX_BRANCHING_LITERALS})",
            branching.len()
        )));
    }

    let mut eval = ClauseEval {
        value: 0.0,
        d_decision: 0.0,
        d_gamma: vec![0.0; lits.len()],
    };
    let mut truth = fixed_truth;
    for mask in 0u32..(1u32 << branching.len()) {
        let mut weight = 1.0;
        let mut s = fixed;
        for (bit, &i) in branching.iter().enumerate() {
            let v = if mask & (1 << bit) != 0 { 1.0 } else { 0.0 };
            truth[i] = v;
            weight *= if v == 1.0 { lits[i].p_true } else { 1.0 - lits[i].p_true };
            s += blend(v, lits[i].gamma);
        }
        let (clipped, interior) = clip_unit(s);
        eval.value += weight * clipped;
        if interior {
            eval.d_decision += weight;
            for (d, v) in eval.d_gamma.iter_mut().zip(&truth) {
                // d blend(v, γ) / dγ = 1 - 2v
                *d += weight * (1.0 - 2.0 * v);
            }
        }
    }
    eval.value = eval.value.clamp(0.0, 1.0);
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(gamma: f64, p_true: f64) -> GroundedLiteral {
        GroundedLiteral { edge: 0, gamma, p_true }
    }

    #[test]
    fn initial_degrees_reproduce_negated_pattern() {
        // not A or not B or C with A = B = 1
        let ab = [lit(1.0, 1.0), lit(1.0, 1.0)];
        assert_eq!(evaluate(&ab, blend(1.0, 0.0)).unwrap().value, 1.0);
        assert_eq!(evaluate(&ab, blend(0.0, 0.0)).unwrap().value, 0.0);
        // A false makes the clause true regardless of C
        let a_false = [lit(1.0, 0.0), lit(1.0, 1.0)];
        assert_eq!(evaluate(&a_false, blend(0.0, 0.0)).unwrap().value, 1.0);
    }

    #[test]
    fn half_degree_is_constant() {
        for p in [0.0, 0.3, 1.0] {
            let lits = [lit(0.5, p)];
            // 0.5 + 0.5 -> 1, clipped
            assert_eq!(evaluate(&lits, blend(0.2, 0.5)).unwrap().value, 1.0);
        }
        let one = [lit(0.5, 1.0)];
        // decision at γ = 0 with y = 0 contributes nothing: min(1, 0.5)
        assert_eq!(evaluate(&one, 0.0).unwrap().value, 0.5);
    }

    #[test]
    fn mixed_groundings_average_over_patterns() {
        // A true on 1 of 4 groundings: values min(1, 0 + 0.3) w.p. 1/4 and min(1, 1 + 0.3) w.p. 3/4
        let e = evaluate(&[lit(1.0, 0.25)], 0.3).unwrap();
        assert!((e.value - (0.25 * 0.3 + 0.75 * 1.0)).abs() < 1e-15);
        assert!((e.d_decision - 0.25).abs() < 1e-15);
        // only the interior pattern (v = 1) contributes, d blend / dγ = -1
        assert!((e.d_gamma[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn negative_sums_clip_to_zero() {
        let e = evaluate(&[lit(-1.0, 0.0)], 0.2).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.d_decision, 0.0);
    }
}
