//! The game between the perception network and the logic network.
//!
//! Each iteration takes one minibatch, extends the logic network with the
//! batch's feature maps, lets the logic side best-respond per sample
//! (decision values `y_M` and membership degrees), then takes one gradient
//! step on `θ = (w, λ)` against
//!
//! ```text
//! C(θ) = α/2 |w|^2 + β/2 |λ|^2
//!      + mean_i [ 1/2 |y_t - f|^2 + Φ_d(y_M, f) - sum_m λ_m Φ_m(y_M) ]
//! ```
//!
//! with `y_M` held fixed while `w` moves.

use std::fmt::Write as _;
use std::time::Instant;

use crate::data::{LabeledImage, RunConfig};
use crate::error::{Error, Result};
use crate::logic::{solve, Grounding, LogicNetwork, LogicProblem, SolveConfig, TNorm, Thresholds};
use crate::nn::LayerGrad;
use crate::perception::{batch_gradient, one_hot, BatchSchedule, ForwardRecord, PerceptionParams};

/// `θ = (w, λ)` and the game's hyperparameters.
#[derive(Clone, Debug)]
pub struct GameParams {
    pub weights: PerceptionParams,
    /// One weight per conjunction group (class).
    pub lambda: Vec<f64>,
    /// Prior on `w`.
    pub alpha: f64,
    /// Prior on `λ`.
    pub beta: f64,
    pub learning_rate: f64,
    pub max_iterations: usize,
}

impl GameParams {
    pub fn new(weights: PerceptionParams, lambda_init: f64) -> Self {
        let classes = weights.architecture().classes;
        Self {
            weights,
            lambda: vec![lambda_init; classes],
            alpha: 1e-4,
            beta: 1e-4,
            learning_rate: 0.01,
            max_iterations: 100,
        }
    }

    pub fn from_run(weights: PerceptionParams, cfg: &RunConfig) -> Self {
        Self {
            alpha: cfg.alpha,
            beta: cfg.beta,
            learning_rate: cfg.learning_rate,
            max_iterations: cfg.max_iterations,
            ..Self::new(weights, cfg.lambda_init)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.beta >= 0.0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.lambda.iter().all(|l| l.is_finite());
        if !ok {
            return Err(Error::InvalidArgument(
                "game needs alpha, beta >= 0, a positive learning rate and finite lambda".into(),
            ));
        }
        if self.lambda.len() != self.weights.architecture().classes {
            return Err(Error::shape(
                "GameParams lambda",
                &[self.lambda.len()],
                &[self.weights.architecture().classes],
            ));
        }
        Ok(())
    }
}

fn same_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, &[a.len()], &[b.len()]));
    }
    Ok(())
}

/// `-1/2 |y_t - f|^2`.
pub fn phi_r(y_t: &[f64], f: &[f64]) -> Result<f64> {
    same_len("phi_r", y_t, f)?;
    Ok(-0.5 * y_t.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

/// Half the squared deviation of the residual `y_M - f` from its own mean.
pub fn phi_d_game(y_m: &[f64], f: &[f64]) -> Result<f64> {
    same_len("phi_d_game", y_m, f)?;
    if y_m.is_empty() {
        return Err(Error::InvalidArgument("phi_d_game needs at least one dimension".into()));
    }
    let r: Vec<f64> = y_m.iter().zip(f).map(|(a, b)| a - b).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    Ok(0.5 * r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
}

/// d phi_d_game / d f = -(r - mean r).
fn phi_d_game_grad(y_m: &[f64], f: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = y_m.iter().zip(f).map(|(a, b)| a - b).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    r.iter().map(|v| mean - v).collect()
}

/// The logic side's move on one sample: its optimal decision values and the
/// resulting group eigenvalues. Held fixed while `w` descends.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicMove {
    pub y_m: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Batch means of the objective's pieces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    pub objective: f64,
    pub phi_r: f64,
    pub phi_d: f64,
    /// `sum_m λ_m Φ_m`
    pub lambda_phi_c: f64,
}

fn objective_terms(gp: &GameParams, outputs: &[&[f64]], labels: &[usize], moves: Option<&[LogicMove]>) -> Result<ObjectiveTerms> {
    let n = outputs.len() as f64;
    let (mut r_sum, mut d_sum, mut c_sum) = (0.0, 0.0, 0.0);
    for (i, (f, &label)) in outputs.iter().zip(labels).enumerate() {
        r_sum += phi_r(&one_hot(label, f.len()), f)?;
        if let Some(moves) = moves {
            let mv = &moves[i];
            d_sum += phi_d_game(&mv.y_m, f)?;
            same_len("lambda", &gp.lambda, &mv.phi)?;
            c_sum += gp.lambda.iter().zip(&mv.phi).map(|(l, p)| l * p).sum::<f64>();
        }
    }
    let (phi_r, phi_d, lambda_phi_c) = (r_sum / n, d_sum / n, c_sum / n);
    let lambda_sq: f64 = gp.lambda.iter().map(|l| l * l).sum();
    let prior = 0.5 * gp.alpha * gp.weights.sum_squares() + 0.5 * gp.beta * lambda_sq;
    Ok(ObjectiveTerms {
        objective: prior - phi_r + phi_d - lambda_phi_c,
        phi_r,
        phi_d,
        lambda_phi_c,
    })
}

fn check_batch(batch: &[&LabeledImage], moves: Option<&[LogicMove]>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(m) = moves {
        if m.len() != batch.len() {
            return Err(Error::shape("logic moves", &[m.len()], &[batch.len()]));
        }
    }
    Ok(())
}

/// The joint objective on a batch. `moves = None` drops the logic terms.
pub fn joint_objective(gp: &GameParams, batch: &[&LabeledImage], moves: Option<&[LogicMove]>) -> Result<ObjectiveTerms> {
    check_batch(batch, moves)?;
    let outputs = batch
        .iter()
        .map(|s| Ok(gp.weights.infer(&s.pixels)?.output))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = outputs.iter().map(Vec::as_slice).collect();
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    objective_terms(gp, &refs, &labels, moves)
}

/// `β λ_m - Φ_m` per group, with `Φ_m` the batch-mean eigenvalue.
pub fn grad_lambda(gp: &GameParams, phi: &[f64]) -> Result<Vec<f64>> {
    same_len("grad_lambda", &gp.lambda, phi)?;
    Ok(gp.lambda.iter().zip(phi).map(|(l, p)| gp.beta * l - p).collect())
}

fn upstreams(records: &[ForwardRecord], labels: &[usize], moves: Option<&[LogicMove]>) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (rec, &label))| {
            let f = &rec.output;
            let mut up: Vec<f64> = f.iter().zip(one_hot(label, f.len())).map(|(a, b)| a - b).collect();
            if let Some(moves) = moves {
                for (u, d) in up.iter_mut().zip(phi_d_game_grad(&moves[i].y_m, f)) {
                    *u += d;
                }
            }
            if up.iter().any(|v| !v.is_finite()) {
                return Err(Error::GameDivergence {
                    iteration: 0,
                    what: format!("non-finite output gradient for batch sample {i}"),
                });
            }
            Ok(up)
        })
        .collect()
}

/// Gradient of the joint objective with respect to `w`, `y_M` fixed.
pub fn grad_w(gp: &GameParams, batch: &[&LabeledImage], moves: Option<&[LogicMove]>) -> Result<LayerGrad> {
    check_batch(batch, moves)?;
    let records = batch
        .iter()
        .map(|s| gp.weights.forward(&s.pixels))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    batch_gradient(&gp.weights, &records, &upstreams(&records, &labels, moves)?, gp.alpha)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameConfig {
    pub batch_size: usize,
    pub seed: u64,
    /// With this off the logic side never moves: no predicates, no `Φ_d`,
    /// `λ` untouched. The game is then plain training.
    pub extract_logic: bool,
    pub freeze_lambda: bool,
    /// Stop once the mean objective of the last `window` iterations is less
    /// than `tolerance` below the window before it.
    pub tolerance: Option<f64>,
    pub window: usize,
    pub solver: SolveConfig,
    pub thresholds: Thresholds,
    pub variant: TNorm,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            seed: 0,
            extract_logic: true,
            freeze_lambda: false,
            tolerance: Some(1e-6),
            window: 10,
            solver: SolveConfig::default(),
            thresholds: Thresholds::default(),
            variant: TNorm::Lukasiewicz,
        }
    }
}

impl GameConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        Self {
            batch_size: cfg.game_batch_size,
            seed: cfg.seed,
            tolerance: cfg.convergence_tolerance,
            solver: cfg.solve_config(),
            thresholds: cfg.thresholds(),
            variant: cfg.tnorm,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameRecord {
    pub iteration: usize,
    pub objective: f64,
    pub phi_r: f64,
    pub phi_d: f64,
    pub lambda_phi_c_sum: f64,
    pub n_predicates: usize,
    pub n_groups: usize,
    /// Wall clock since the start of training.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GameTrace {
    pub records: Vec<GameRecord>,
}

impl GameTrace {
    pub const CSV_HEADER: &'static str =
        "iteration,objective,phi_r,phi_d,lambda_phi_c_sum,n_predicates,n_groups,seconds";

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{:.3}",
                r.iteration, r.objective, r.phi_r, r.phi_d, r.lambda_phi_c_sum, r.n_predicates, r.n_groups, r.seconds
            );
        }
        s
    }

    fn converged(&self, window: usize, tolerance: f64) -> bool {
        let n = self.records.len();
        if window == 0 || n < 2 * window {
            return false;
        }
        let mean = |rs: &[GameRecord]| rs.iter().map(|r| r.objective).sum::<f64>() / rs.len() as f64;
        mean(&self.records[n - 2 * window..n - window]) - mean(&self.records[n - window..]) < tolerance
    }
}

#[derive(Clone, Debug)]
pub struct GameOutcome {
    pub params: GameParams,
    pub net: LogicNetwork,
    pub trace: GameTrace,
    /// Predicate count after each training sample has been routed.
    pub growth: Vec<usize>,
}

/// A game that stopped on an error, with everything recorded before it.
#[derive(Debug)]
pub struct GameFailure {
    pub error: Error,
    pub trace: GameTrace,
    pub growth: Vec<usize>,
}

impl std::fmt::Display for GameFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} iterations)", self.error, self.trace.records.len())
    }
}

impl std::error::Error for GameFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<GameFailure> for Error {
    fn from(f: GameFailure) -> Self {
        f.error
    }
}

struct Game<'a> {
    gp: GameParams,
    net: LogicNetwork,
    cfg: &'a GameConfig,
    growth: Vec<usize>,
}

impl Game<'_> {
    /// Extends the network with the batch and solves the logic side for
    /// every sample.
    fn logic_moves(&mut self, records: &[ForwardRecord]) -> Result<Vec<LogicMove>> {
        let mut groundings = Vec::with_capacity(records.len());
        for rec in records {
            let routes = self.net.extend(&rec.features)?;
            self.growth.push(self.net.predicates().len());
            groundings.push(Grounding::from_routes(&routes));
        }
        let mut gamma = self.net.gamma().to_vec();
        let mut moves = Vec::with_capacity(records.len());
        for (rec, g) in records.iter().zip(&groundings) {
            let problem = LogicProblem::new(&self.net, g);
            let sol = solve(&problem, &mut gamma, &self.gp.lambda, &rec.output, &self.cfg.solver)?;
            let phi = problem.group_eigenvalues(&sol.y, &gamma)?;
            moves.push(LogicMove { y_m: sol.y, phi });
        }
        self.net.set_gamma(gamma)?;
        Ok(moves)
    }

    fn iterate(&mut self, batch: &[&LabeledImage], iteration: usize, start: Instant) -> Result<GameRecord> {
        let diverged = |what: String| Error::GameDivergence { iteration, what };
        let records = batch
            .iter()
            .map(|s| self.gp.weights.forward(&s.pixels))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
        self.net.clear_groundings();
        let moves = if self.cfg.extract_logic {
            Some(self.logic_moves(&records).map_err(|e| match e {
                Error::NonFiniteObjective { .. } => diverged("logic solve objective is not finite".into()),
                other => other,
            })?)
        } else {
            None
        };

        let outputs: Vec<&[f64]> = records.iter().map(|r| r.output.as_slice()).collect();
        let terms = objective_terms(&self.gp, &outputs, &labels, moves.as_deref())?;
        if !terms.objective.is_finite() {
            return Err(diverged(format!("joint objective is {}", terms.objective)));
        }

        let ups = upstreams(&records, &labels, moves.as_deref()).map_err(|e| match e {
            Error::GameDivergence { what, .. } => diverged(what),
            other => other,
        })?;
        let gw = batch_gradient(&self.gp.weights, &records, &ups, self.gp.alpha)?;
        let gl = match &moves {
            Some(moves) if !self.cfg.freeze_lambda => {
                let mut mean_phi = vec![0.0; self.gp.lambda.len()];
                for mv in moves {
                    for (m, p) in mean_phi.iter_mut().zip(&mv.phi) {
                        *m += p;
                    }
                }
                mean_phi.iter_mut().for_each(|m| *m /= moves.len() as f64);
                Some(grad_lambda(&self.gp, &mean_phi)?)
            }
            _ => None,
        };
        self.gp.weights.sgd_step(&gw, self.gp.learning_rate).map_err(|e| match e {
            Error::NonFiniteGradient { param } => diverged(format!("non-finite gradient for `{param}`")),
            other => other,
        })?;
        if let Some(gl) = gl {
            for (l, g) in self.gp.lambda.iter_mut().zip(&gl) {
                *l -= self.gp.learning_rate * g;
            }
            if self.gp.lambda.iter().any(|l| !l.is_finite()) {
                return Err(diverged("lambda is not finite".into()));
            }
        }

        Ok(GameRecord {
            iteration,
            objective: terms.objective,
            phi_r: terms.phi_r,
            phi_d: terms.phi_d,
            lambda_phi_c_sum: terms.lambda_phi_c,
            n_predicates: self.net.predicates().len(),
            n_groups: self.net.active_groups(),
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Runs the game for up to `gp.max_iterations` minibatch iterations,
/// cycling through `data` in seeded shuffled epochs.
pub fn game_train(gp: GameParams, data: &[LabeledImage], cfg: &GameConfig) -> Result<GameOutcome, GameFailure> {
    game_train_observed(gp, data, cfg, |_, _| {})
}

/// [`game_train`] with a callback after every iteration's update.
pub fn game_train_observed<O>(
    gp: GameParams,
    data: &[LabeledImage],
    cfg: &GameConfig,
    mut observer: O,
) -> Result<GameOutcome, GameFailure>
where
    O: FnMut(usize, &GameParams),
{
    let fail = |error: Error| GameFailure {
        error,
        trace: GameTrace::default(),
        growth: Vec::new(),
    };
    if data.is_empty() {
        return Err(fail(Error::InvalidArgument("training set is empty".into())));
    }
    if cfg.batch_size == 0 {
        return Err(fail(Error::InvalidArgument("batch size must be at least 1".into())));
    }
    gp.validate().map_err(fail)?;
    let net = LogicNetwork::new(gp.lambda.len(), cfg.variant, cfg.thresholds).map_err(fail)?;

    let mut game = Game {
        gp,
        net,
        cfg,
        growth: Vec::new(),
    };
    let mut trace = GameTrace::default();
    let mut schedule = BatchSchedule::new(data.len(), cfg.batch_size, cfg.seed);
    let start = Instant::now();
    'epochs: while trace.records.len() < game.gp.max_iterations {
        for idx in schedule.next_epoch() {
            if trace.records.len() == game.gp.max_iterations {
                break 'epochs;
            }
            let batch: Vec<&LabeledImage> = idx.iter().map(|&i| &data[i]).collect();
            match game.iterate(&batch, trace.records.len() + 1, start) {
                Ok(record) => {
                    trace.records.push(record);
                    observer(trace.records.len(), &game.gp);
                }
                Err(error) => {
                    return Err(GameFailure {
                        error,
                        trace,
                        growth: game.growth,
                    })
                }
            }
            if let Some(tol) = cfg.tolerance {
                if trace.converged(cfg.window, tol) {
                    break 'epochs;
                }
            }
        }
    }
    Ok(GameOutcome {
        params: game.gp,
        net: game.net,
        trace,
        growth: game.growth,
    })
}

/// Mean over samples of `(1/M) sum_j |y_M,j - f_j|`, where `y_M` is the
/// logic side's best response to the sample's outputs. Membership degrees
/// are solved on a scratch copy, so `net` is unchanged.
pub fn interpretation_measure(
    gp: &GameParams,
    net: &LogicNetwork,
    test: &[LabeledImage],
    solver: &SolveConfig,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("interpretation measure needs a non-empty test set".into()));
    }
    let mut total = 0.0;
    for sample in test {
        let rec = gp.weights.infer(&sample.pixels)?;
        let problem = LogicProblem::new(net, &net.ground(&rec.features)?);
        let mut gamma = net.gamma().to_vec();
        let sol = solve(&problem, &mut gamma, &gp.lambda, &rec.output, solver)?;
        let m = rec.output.len() as f64;
        total += sol.y.iter().zip(&rec.output).map(|(y, f)| (y - f).abs()).sum::<f64>() / m;
    }
    Ok(total / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_r_hand_cases() {
        assert_eq!(phi_r(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(phi_r(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), -0.5);
        assert_eq!(phi_r(&[2.0, 0.0], &[0.0, 0.0]).unwrap(), -2.0);
        assert!(phi_r(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn phi_d_game_hand_cases() {
        assert_eq!(phi_d_game(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(phi_d_game(&[0.5, 0.75, 1.0], &[0.0, 0.25, 0.5]).unwrap(), 0.0);
        assert!(phi_d_game(&[], &[]).is_err());
    }

    #[test]
    fn phi_d_game_ignores_common_shift() {
        let f = [0.1, 0.9, 0.4];
        let y = [0.25, 0.5, 1.0];
        let shifted: Vec<f64> = y.iter().map(|v| v + 0.5).collect();
        let (a, b) = (phi_d_game(&y, &f).unwrap(), phi_d_game(&shifted, &f).unwrap());
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn phi_d_game_grad_matches_difference() {
        let f = [0.1, 0.9, 0.4];
        let y = [0.25, 0.5, 1.0];
        let g = phi_d_game_grad(&y, &f);
        for k in 0..3 {
            let h = 1e-6;
            let (mut up, mut dn) = (f, f);
            up[k] += h;
            dn[k] -= h;
            let fd = (phi_d_game(&y, &up).unwrap() - phi_d_game(&y, &dn).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn config_defaults() {
        let c = GameConfig::default();
        assert_eq!(c.window, 10);
        assert_eq!(c.tolerance, Some(1e-6));
        assert_eq!(c.solver.iterations, 50);
    }
}
