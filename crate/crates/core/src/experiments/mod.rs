//! The four studies, each producing CSV tables (the tested surface) and
//! optional SVG charts.
//!
//! 1. Channel ablation: how much each of the 32 feature maps moves each
//!    output, on a trained and an untrained network.
//! 2. Predicate growth while the game runs over the training set.
//! 3. The joint objective after every logic solve.
//! 4. Accuracy and interpretation measure for the three architectures,
//!    trained plainly and through the game.

pub mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{load_idx, train_test_split, Artifacts, LabeledImage, RunConfig};
use crate::error::{Error, Result};
use crate::game::{game_train, interpretation_measure, GameConfig, GameFailure, GameOutcome, GameParams};
use crate::perception::{accuracy, train_baseline, ArchitectureId, PerceptionParams, FEATURE_CHANNELS};
pub use plot::{Chart, Series};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub csv: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub id: u8,
    pub seed: u64,
    pub config: RunConfig,
    pub tables: Vec<Table>,
    pub charts: Vec<Chart>,
}

impl ExperimentReport {
    fn new(id: u8, cfg: &RunConfig) -> Self {
        Self {
            id,
            seed: cfg.seed,
            config: cfg.clone(),
            tables: Vec::new(),
            charts: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&str> {
        self.tables.iter().find(|t| t.name == name).map(|t| t.csv.as_str())
    }

    /// Writes the config snapshot, every table, and every chart as an SVG
    /// next to its CSV twin (twins are written even when plots are skipped).
    pub fn write(&self, dir: &Path, skip_plots: bool) -> Result<Vec<PathBuf>> {
        let out = Artifacts::new(dir)?;
        let mut written = vec![out.save_config(&self.config)?];
        for t in &self.tables {
            written.push(out.write_text(&format!("{}.csv", t.name), &t.csv)?);
        }
        for c in &self.charts {
            written.push(out.write_text(&format!("{}.csv", c.name), &c.to_csv())?);
            if !skip_plots {
                written.push(out.write_text(&format!("{}.svg", c.name), &c.to_svg())?);
            }
        }
        Ok(written)
    }
}

/// Loads the IDX files named in the config and splits them into disjoint
/// train and test sets.
pub fn load_split(cfg: &RunConfig) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    let data = load_idx(&cfg.images, &cfg.labels)?;
    train_test_split(&data, cfg.train_samples, cfg.test_samples, cfg.seed)
}

pub fn untrained_model(cfg: &RunConfig, arch: ArchitectureId) -> Result<PerceptionParams> {
    PerceptionParams::init(arch.architecture(), cfg.seed)
}

pub fn train_model(cfg: &RunConfig, arch: ArchitectureId, train: &[LabeledImage]) -> Result<PerceptionParams> {
    Ok(train_baseline(untrained_model(cfg, arch)?, train, &cfg.train_config())?.params)
}

/// The game from `weights`, on the first `game_samples` training images.
pub fn run_game(cfg: &RunConfig, weights: PerceptionParams, train: &[LabeledImage]) -> Result<GameOutcome, GameFailure> {
    let n = cfg.game_samples.unwrap_or(train.len()).min(train.len());
    game_train(GameParams::from_run(weights, cfg), &train[..n], &GameConfig::from_run(cfg))
}

/// Mean change of each output when one feature map is zeroed before the
/// decision layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Ablation {
    /// `[channel][output_dim]`
    pub mean_diff: Vec<Vec<f64>>,
    /// Channels that were all-zero on every probe image.
    pub empty: Vec<bool>,
}

impl Ablation {
    pub fn max_abs(&self) -> f64 {
        self.mean_diff.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean `|mean_diff|` over the cells of non-empty channels.
    pub fn mean_abs_nonempty(&self) -> f64 {
        let cells: Vec<f64> = self
            .mean_diff
            .iter()
            .zip(&self.empty)
            .filter(|(_, e)| !**e)
            .flat_map(|(row, _)| row.iter().map(|v| v.abs()))
            .collect();
        if cells.is_empty() {
            0.0
        } else {
            cells.iter().sum::<f64>() / cells.len() as f64
        }
    }

    pub fn empty_channels(&self) -> Vec<usize> {
        (0..self.empty.len()).filter(|&c| self.empty[c]).collect()
    }
}

pub fn ablation_effects(params: &PerceptionParams, probe: &[LabeledImage]) -> Result<Ablation> {
    if probe.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one probe image".into()));
    }
    let classes = params.architecture().classes;
    let mut sums = vec![vec![0.0; classes]; FEATURE_CHANNELS];
    let mut empty = vec![true; FEATURE_CHANNELS];
    for sample in probe {
        let rec = params.infer(&sample.pixels)?;
        let features = params.extract_features(&sample.pixels)?;
        for c in 0..FEATURE_CHANNELS {
            empty[c] &= rec.features[c].is_empty();
            let ablated = params.ablate_features(features.clone(), c)?;
            for (s, (a, f)) in sums[c].iter_mut().zip(ablated.iter().zip(&rec.output)) {
                *s += a - f;
            }
        }
    }
    let n = probe.len() as f64;
    sums.iter_mut().flatten().for_each(|s| *s /= n);
    Ok(Ablation { mean_diff: sums, empty })
}

#[derive(Clone, Debug)]
pub struct Exp1 {
    pub report: ExperimentReport,
    pub trained: Ablation,
    pub untrained: Ablation,
}

/// Channel ablation on the configured architecture, before and after
/// training. `trained` is trained here when not supplied.
pub fn experiment1(
    cfg: &RunConfig,
    train: &[LabeledImage],
    probe: &[LabeledImage],
    trained: Option<PerceptionParams>,
) -> Result<Exp1> {
    let untrained_params = untrained_model(cfg, cfg.architecture)?;
    let trained_params = match trained {
        Some(p) => p,
        None => train_model(cfg, cfg.architecture, train)?,
    };
    let trained = ablation_effects(&trained_params, probe)?;
    let untrained = ablation_effects(&untrained_params, probe)?;

    let mut report = ExperimentReport::new(1, cfg);
    let mut csv = String::from("network_state,channel,output_dim,mean_diff\n");
    for (state, ab) in [("trained", &trained), ("untrained", &untrained)] {
        for (c, row) in ab.mean_diff.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let _ = writeln!(csv, "{state},{c},{j},{v}");
            }
            report.charts.push(Chart {
                name: format!("exp1_{state}_channel{c:02}"),
                title: format!("{state} network, feature map {c} removed"),
                x_label: "output_dim".into(),
                y_label: "mean_diff".into(),
                series: Series::Bars {
                    labels: (0..row.len()).map(|j| j.to_string()).collect(),
                    values: row.clone(),
                },
            });
        }
    }
    report.tables.push(Table {
        name: "exp1_ablation".into(),
        csv,
    });
    Ok(Exp1 {
        report,
        trained,
        untrained,
    })
}

#[derive(Clone, Debug)]
pub struct Exp2 {
    pub report: ExperimentReport,
    /// Predicate count after each training sample.
    pub counts: Vec<usize>,
}

/// One pass of the game over the training set, starting from the trained
/// baseline, logging the number of feature-map groups (predicates) after
/// every sample.
pub fn experiment2(cfg: &RunConfig, train: &[LabeledImage]) -> Result<Exp2> {
    let weights = train_model(cfg, cfg.architecture, train)?;
    let mut run = cfg.clone();
    let n = cfg.game_samples.unwrap_or(train.len()).min(train.len());
    run.max_iterations = n.div_ceil(cfg.game_batch_size);
    run.convergence_tolerance = None;
    let outcome = run_game(&run, weights, train)?;
    let counts = outcome.growth;

    let mut report = ExperimentReport::new(2, cfg);
    let mut csv = String::from("step,n_groups\n");
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(csv, "{},{c}", i + 1);
    }
    report.tables.push(Table {
        name: "exp2_groups".into(),
        csv,
    });
    report.charts.push(Chart {
        name: "exp2_groups_plot".into(),
        title: "feature-map groups during the game".into(),
        x_label: "step".into(),
        y_label: "n_groups".into(),
        series: Series::Line {
            xs: (1..=counts.len()).map(|i| i as f64).collect(),
            ys: counts.iter().map(|&c| c as f64).collect(),
        },
    });
    Ok(Exp2 { report, counts })
}

#[derive(Clone, Debug)]
pub struct Exp3 {
    pub report: ExperimentReport,
    pub objectives: Vec<f64>,
}

/// The joint objective after each logic solve, for a game started from the
/// trained baseline.
pub fn experiment3(cfg: &RunConfig, train: &[LabeledImage]) -> Result<Exp3> {
    let weights = train_model(cfg, cfg.architecture, train)?;
    let outcome = run_game(cfg, weights, train)?;
    let objectives = outcome.trace.objectives();

    let mut report = ExperimentReport::new(3, cfg);
    let mut csv = String::from("optimization_index,objective\n");
    for (i, o) in objectives.iter().enumerate() {
        let _ = writeln!(csv, "{},{o}", i + 1);
    }
    report.tables.push(Table {
        name: "exp3_objective".into(),
        csv,
    });
    report.charts.push(Chart {
        name: "exp3_objective_plot".into(),
        title: "joint objective after each logic solve".into(),
        x_label: "optimization_index".into(),
        y_label: "objective".into(),
        series: Series::Line {
            xs: (1..=objectives.len()).map(|i| i as f64).collect(),
            ys: objectives.clone(),
        },
    });
    Ok(Exp3 { report, objectives })
}

/// Shape of an objective trace: where it starts, where its last window
/// sits, and how much that window still moves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stabilization {
    pub initial: f64,
    pub final_mean: f64,
    /// max - min over the last window
    pub spread: f64,
    pub total_decrease: f64,
}

impl Stabilization {
    pub fn of(trace: &[f64], window: usize) -> Option<Self> {
        if trace.is_empty() || window == 0 {
            return None;
        }
        let last = &trace[trace.len().saturating_sub(window)..];
        let final_mean = last.iter().sum::<f64>() / last.len() as f64;
        let hi = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = last.iter().copied().fold(f64::INFINITY, f64::min);
        Some(Self {
            initial: trace[0],
            final_mean,
            spread: hi - lo,
            total_decrease: trace[0] - final_mean,
        })
    }

    pub fn decreased(&self) -> bool {
        self.final_mean < self.initial
    }

    pub fn stable(&self, fraction: f64) -> bool {
        self.decreased() && self.spread < fraction * self.total_decrease
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelRow {
    pub model: String,
    /// Test accuracy in percent.
    pub accuracy: f64,
    /// `None` for plain networks.
    pub interpretation: Option<f64>,
}

impl ModelRow {
    pub fn csv_line(&self) -> String {
        let measure = self.interpretation.map_or("NULL".to_string(), |m| format!("{m:.4}"));
        format!("{},{:.2},{measure}", self.model, self.accuracy)
    }
}

pub const EXP4_HEADER: &str = "model,accuracy,interpretation_measure";

/// Result of running the game on a trained model and scoring it.
#[derive(Clone, Debug)]
pub struct DclmRun {
    pub row: ModelRow,
    pub outcome: GameOutcome,
}

/// Accuracy and interpretation measure of a finished game.
pub fn score_dclm(cfg: &RunConfig, arch: ArchitectureId, outcome: &GameOutcome, test: &[LabeledImage]) -> Result<ModelRow> {
    Ok(ModelRow {
        model: format!("DCLM-{}", arch.label()),
        accuracy: accuracy(&outcome.params.weights, test)? * 100.0,
        interpretation: Some(interpretation_measure(
            &outcome.params,
            &outcome.net,
            test,
            &cfg.solve_config(),
        )?),
    })
}

/// The game from the same seeded initialization the baseline starts from.
/// With `max_iterations = epochs * batches per epoch` and equal batch
/// sizes both see the same minibatches in the same order, so the only
/// difference between the two is the logic side.
pub fn dclm_run(
    cfg: &RunConfig,
    arch: ArchitectureId,
    train: &[LabeledImage],
    test: &[LabeledImage],
) -> Result<DclmRun> {
    let outcome = run_game(cfg, untrained_model(cfg, arch)?, train)?;
    let row = score_dclm(cfg, arch, &outcome, test)?;
    Ok(DclmRun { row, outcome })
}

#[derive(Clone, Debug)]
pub struct Exp4 {
    pub report: ExperimentReport,
    pub rows: Vec<ModelRow>,
}

/// For each architecture: a plain baseline and a game-trained network from
/// the same initialization (see [`dclm_run`]). Membership degrees of every game-trained network are
/// exported as `exp4_membership_<arch>`.
pub fn experiment4(
    cfg: &RunConfig,
    train: &[LabeledImage],
    test: &[LabeledImage],
    archs: &[ArchitectureId],
) -> Result<Exp4> {
    let mut report = ExperimentReport::new(4, cfg);
    let mut rows = Vec::new();
    for &arch in archs {
        let trained = train_model(cfg, arch, train)?;
        rows.push(ModelRow {
            model: arch.label().to_string(),
            accuracy: accuracy(&trained, test)? * 100.0,
            interpretation: None,
        });
        let run = dclm_run(cfg, arch, train, test)?;
        report.tables.push(Table {
            name: format!("exp4_membership_{}", arch.name()),
            csv: run.outcome.net.membership_csv(),
        });
        rows.push(run.row);
    }
    let mut csv = format!("{EXP4_HEADER}\n");
    for r in &rows {
        let _ = writeln!(csv, "{}", r.csv_line());
    }
    report.tables.insert(
        0,
        Table {
            name: "exp4_results".into(),
            csv,
        },
    );
    report.charts.push(Chart {
        name: "exp4_accuracy_plot".into(),
        title: "test accuracy".into(),
        x_label: "model".into(),
        y_label: "accuracy".into(),
        series: Series::Bars {
            labels: rows.iter().map(|r| r.model.clone()).collect(),
            values: rows.iter().map(|r| r.accuracy).collect(),
        },
    });
    Ok(Exp4 { report, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stabilization_of_settling_trace() {
        let trace: Vec<f64> = (0..50).map(|i| (-0.2 * i as f64).exp()).collect();
        let s = Stabilization::of(&trace, 10).unwrap();
        assert!(s.decreased());
        assert!(s.stable(0.01));
        let rising: Vec<f64> = (0..20).map(f64::from).collect();
        assert!(!Stabilization::of(&rising, 10).unwrap().decreased());
    }

    #[test]
    fn baseline_rows_print_null() {
        let r = ModelRow {
            model: "CNNs-1".into(),
            accuracy: 73.4,
            interpretation: None,
        };
        assert_eq!(r.csv_line(), "CNNs-1,73.40,NULL");
    }
}
