//! The logic side's best response: decision values `y` and membership
//! degrees `γ` maximizing
//!
//! ```text
//! L(y, γ) = -|y - f|^2 + sum_m λ_m Φ_m(y_m, γ)
//! ```
//!
//! where `Φ_m` is the mean eigenvalue of the grounded clauses in group `m`.
//! The solver alternates projected gradient ascent on `y` (box `[0, 1]`)
//! and on `γ` (box `[-1, 1]`), halving the step until the objective does
//! not decrease.

use crate::error::{Error, Result};
use crate::logic::clause::{self, GroundedLiteral};
use crate::logic::network::{Grounding, LogicNetwork};

/// `|y - f|^2`, the plain distance tying decision predicates to the network
/// outputs on the logic side.
pub fn phi_d_logic(y: &[f64], f: &[f64]) -> Result<f64> {
    if y.len() != f.len() {
        return Err(Error::shape("phi_d_logic", &[y.len()], &[f.len()]));
    }
    Ok(y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum())
}

#[derive(Clone, Debug)]
struct GroundedClause {
    lits: Vec<GroundedLiteral>,
    decision_edge: usize,
}

/// The clauses of a network that are grounded by one set of feature maps.
#[derive(Clone, Debug)]
pub struct LogicProblem {
    groups: Vec<Vec<GroundedClause>>,
}

#[derive(Clone, Debug, PartialEq)]
struct Gradient {
    y: Vec<f64>,
    gamma: Vec<(usize, f64)>,
}

impl LogicProblem {
    pub fn new(net: &LogicNetwork, grounding: &Grounding) -> Self {
        let mut groups = vec![Vec::new(); net.classes()];
        let mut seen = vec![false; net.clauses().len()];
        for p in grounding.predicates() {
            if p >= net.predicates().len() {
                continue;
            }
            for &ci in net.clauses_of_predicate(p) {
                if std::mem::replace(&mut seen[ci], true) {
                    continue;
                }
                let c = &net.clauses()[ci];
                if let Some(lits) = clause::grounded_literals(c, grounding, net.gamma()) {
                    groups[c.group].push(GroundedClause {
                        lits,
                        decision_edge: c.decision.edge,
                    });
                }
            }
        }
        Self { groups }
    }

    pub fn classes(&self) -> usize {
        self.groups.len()
    }

    pub fn grounded_clauses(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    fn with_gamma(lits: &[GroundedLiteral], gamma: &[f64]) -> Vec<GroundedLiteral> {
        lits.iter()
            .map(|l| GroundedLiteral {
                gamma: gamma[l.edge],
                ..*l
            })
            .collect()
    }

    /// `Φ_m` for every group; 0 for groups without a grounded clause.
    pub fn group_eigenvalues(&self, y: &[f64], gamma: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        self.groups
            .iter()
            .enumerate()
            .map(|(m, clauses)| {
                if clauses.is_empty() {
                    return Ok(0.0);
                }
                let mut sum = 0.0;
                for c in clauses {
                    let decision = clause::blend(y[m], gamma[c.decision_edge]);
                    sum += clause::evaluate(&Self::with_gamma(&c.lits, gamma), decision)?.value;
                }
                Ok(sum / clauses.len() as f64)
            })
            .collect()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.groups.len() {
            return Err(Error::shape("logic problem", &[v.len()], &[self.groups.len()]));
        }
        Ok(())
    }

    /// `-|y - f|^2 + sum_m λ_m Φ_m`.
    pub fn objective(&self, y: &[f64], f: &[f64], lambda: &[f64], gamma: &[f64]) -> Result<f64> {
        self.check_len(lambda)?;
        let phi = self.group_eigenvalues(y, gamma)?;
        let weighted: f64 = lambda.iter().zip(&phi).map(|(l, p)| l * p).sum();
        Ok(-phi_d_logic(y, f)? + weighted)
    }

    fn gradient(&self, y: &[f64], f: &[f64], lambda: &[f64], gamma: &[f64]) -> Result<Gradient> {
        let mut gy: Vec<f64> = y.iter().zip(f).map(|(a, b)| -2.0 * (a - b)).collect();
        let mut gg = Vec::new();
        for (m, clauses) in self.groups.iter().enumerate() {
            if clauses.is_empty() || lambda[m] == 0.0 {
                continue;
            }
            let scale = lambda[m] / clauses.len() as f64;
            for c in clauses {
                let gd = gamma[c.decision_edge];
                let e = clause::evaluate(&Self::with_gamma(&c.lits, gamma), clause::blend(y[m], gd))?;
                // d blend(y, γ)/dy = 1 - 2γ ; d blend(y, γ)/dγ = 1 - 2y
                gy[m] += scale * e.d_decision * (1.0 - 2.0 * gd);
                gg.push((c.decision_edge, scale * e.d_decision * (1.0 - 2.0 * y[m])));
                for (l, d) in c.lits.iter().zip(&e.d_gamma) {
                    gg.push((l.edge, scale * d));
                }
            }
        }
        Ok(Gradient { y: gy, gamma: gg })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    /// Maximum number of alternating (y, γ) rounds.
    pub iterations: usize,
    pub step: f64,
    /// Stop once a round improves the objective by less than this.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            step: 0.05,
            tolerance: 1e-8,
            max_halvings: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub y: Vec<f64>,
    pub objective: f64,
    /// Objective after initialization and after every accepted sub-step.
    pub trace: Vec<f64>,
    pub rounds: usize,
}

fn finite(v: f64, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteObjective { iteration })
    }
}

/// Alternating projected ascent, updating `gamma` in place.
pub fn solve(
    problem: &LogicProblem,
    gamma: &mut [f64],
    lambda: &[f64],
    f: &[f64],
    cfg: &SolveConfig,
) -> Result<Solution> {
    if cfg.iterations == 0 || !(cfg.step > 0.0) {
        return Err(Error::InvalidArgument("solver needs iterations >= 1 and step > 0".into()));
    }
    problem.check_len(f)?;
    problem.check_len(lambda)?;
    let mut y: Vec<f64> = f.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut obj = finite(problem.objective(&y, f, lambda, gamma)?, 0)?;
    let mut trace = vec![obj];
    let mut rounds = 0;

    for it in 0..cfg.iterations {
        rounds = it + 1;
        let start = obj;

        // y move, γ fixed
        let g = problem.gradient(&y, f, lambda, gamma)?;
        let mut step = cfg.step;
        for _ in 0..=cfg.max_halvings {
            let cand: Vec<f64> = y
                .iter()
                .zip(&g.y)
                .map(|(v, d)| (v + step * d).clamp(0.0, 1.0))
                .collect();
            let cand_obj = finite(problem.objective(&cand, f, lambda, gamma)?, it + 1)?;
            if cand_obj >= obj {
                y = cand;
                obj = cand_obj;
                trace.push(obj);
                break;
            }
            step *= 0.5;
        }

        // γ move, y fixed
        let g = problem.gradient(&y, f, lambda, gamma)?;
        if !g.gamma.is_empty() {
            let saved: Vec<(usize, f64)> = g.gamma.iter().map(|&(e, _)| (e, gamma[e])).collect();
            let mut step = cfg.step;
            let mut accepted = false;
            for _ in 0..=cfg.max_halvings {
                for &(e, v) in &saved {
                    gamma[e] = v;
                }
                // an edge can appear more than once (shared by clauses)
                for &(e, d) in &g.gamma {
                    gamma[e] += step * d;
                }
                for &(e, _) in &saved {
                    gamma[e] = gamma[e].clamp(-1.0, 1.0);
                }
                let cand_obj = finite(problem.objective(&y, f, lambda, gamma)?, it + 1)?;
                if cand_obj >= obj {
                    obj = cand_obj;
                    trace.push(obj);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                for &(e, v) in &saved {
                    gamma[e] = v;
                }
            }
        }

        if obj - start < cfg.tolerance {
            break;
        }
    }

    Ok(Solution {
        y,
        objective: obj,
        trace,
        rounds,
    })
}

/// Runs the solver on the network's own membership degrees and stores the
/// improved degrees back.
pub fn optimize_y_gamma(
    net: &mut LogicNetwork,
    grounding: &Grounding,
    lambda: &[f64],
    f: &[f64],
    cfg: &SolveConfig,
) -> Result<Solution> {
    let problem = LogicProblem::new(net, grounding);
    let mut gamma = net.gamma().to_vec();
    let sol = solve(&problem, &mut gamma, lambda, f, cfg)?;
    net.set_gamma(gamma)?;
    Ok(sol)
}

/// Logic-side objective on an explicit grounding, using the network's
/// current membership degrees.
pub fn logic_objective(net: &LogicNetwork, grounding: &Grounding, lambda: &[f64], y: &[f64], f: &[f64]) -> Result<f64> {
    LogicProblem::new(net, grounding).objective(y, f, lambda, net.gamma())
}
