//! The extracted logic network: feature and decision predicates, clauses
//! joined into one conjunction group per class, and the solver for the
//! network's optimal decision values and membership degrees.

pub mod clause;
pub mod network;
pub mod solve;
pub mod tnorm;

pub use network::{
    predicate_value, Clause, DecisionLiteral, FeaturePredicate, Grounding, Group, Literal, LogicNetwork, Route,
    Thresholds,
};
pub use solve::{logic_objective, optimize_y_gamma, phi_d_logic, solve, LogicProblem, Solution, SolveConfig};
pub use tnorm::{t_norm, LogicOp, TNorm};
