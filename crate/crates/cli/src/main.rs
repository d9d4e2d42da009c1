//! Command-line front end: train a baseline, run the game on it, or run one
//! of the four experiments.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
//! divergence, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dclm::data::{load_model, Artifacts, RunConfig};
use dclm::experiments::{self, ExperimentReport, EXP4_HEADER};
use dclm::perception::{accuracy, train_baseline, ArchitectureId};
use dclm::Error;

#[derive(Parser)]
#[command(name = "dclm", version, about = "CNN + extracted logic network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured architecture and save `model.json`.
    Train(Common),
    /// Train through the game from the seeded initialization and save the
    /// logic network.
    ExtractLogic(Common),
    /// Feature-map ablation on trained and untrained networks.
    Exp1(Common),
    /// Predicate growth during one pass of the game.
    Exp2(Common),
    /// Joint objective after each logic solve.
    Exp3(Common),
    /// Accuracy and interpretation measure for all architectures.
    Exp4(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    skip_plots: bool,
}

/// An error tagged with the stage it came from, which decides the exit code.
enum Failure {
    Config(Error),
    Data(Error),
    Run(Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Run(e) if e.is_divergence() => 4,
            Failure::Run(Error::Idx(_) | Error::Artifact(_) | Error::Io { .. }) => 3,
            Failure::Run(_) => 1,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Data(e) | Failure::Run(e) => e,
        }
    }
}

fn run_err(e: Error) -> Failure {
    Failure::Run(e)
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&c.config).map_err(Failure::Config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn write_report(report: &ExperimentReport, cfg: &RunConfig, skip_plots: bool) -> Result<(), Failure> {
    let files = report.write(&cfg.out_dir, skip_plots).map_err(run_err)?;
    println!("experiment {}: wrote {} files to {}", report.id, files.len(), cfg.out_dir.display());
    Ok(())
}

fn train(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let (train, test) = experiments::load_split(&cfg).map_err(Failure::Data)?;
    let init = experiments::untrained_model(&cfg, cfg.architecture).map_err(run_err)?;
    let outcome = train_baseline(init, &train, &cfg.train_config()).map_err(run_err)?;
    let acc = accuracy(&outcome.params, &test).map_err(run_err)? * 100.0;
    let out = Artifacts::new(&cfg.out_dir).map_err(run_err)?;
    out.save_config(&cfg).map_err(run_err)?;
    out.save_model("model.json", &outcome.params).map_err(run_err)?;
    let mut losses = String::from("epoch,loss\n");
    for (i, l) in outcome.epoch_losses.iter().enumerate() {
        losses.push_str(&format!("{},{l}\n", i + 1));
    }
    out.write_text("train_loss.csv", &losses).map_err(run_err)?;
    out.write_text(
        "train_result.csv",
        &format!("{EXP4_HEADER}\n{},{acc:.2},NULL\n", cfg.architecture.label()),
    )
    .map_err(run_err)?;
    println!("{}: test accuracy {acc:.2}%", cfg.architecture.label());
    Ok(())
}

fn extract_logic(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let (train, test) = experiments::load_split(&cfg).map_err(Failure::Data)?;
    let out = Artifacts::new(&cfg.out_dir).map_err(run_err)?;
    let arch = cfg.architecture;
    let init = experiments::untrained_model(&cfg, arch).map_err(run_err)?;
    out.save_config(&cfg).map_err(run_err)?;
    let outcome = match experiments::run_game(&cfg, init, &train) {
        Ok(o) => o,
        Err(failure) => {
            // keep what was recorded before the game stopped
            out.write_text("trace.csv", &failure.trace.to_csv()).map_err(run_err)?;
            return Err(Failure::Run(failure.error));
        }
    };
    out.write_text("trace.csv", &outcome.trace.to_csv()).map_err(run_err)?;
    out.save_model("dclm_model.json", &outcome.params.weights).map_err(run_err)?;
    out.save_logic("logic.json", &outcome.net, &outcome.params.lambda).map_err(run_err)?;
    out.write_text("membership.csv", &outcome.net.membership_csv()).map_err(run_err)?;
    let row = experiments::score_dclm(&cfg, arch, &outcome, &test).map_err(run_err)?;
    out.write_text("dclm_result.csv", &format!("{EXP4_HEADER}\n{}\n", row.csv_line()))
        .map_err(run_err)?;
    println!(
        "{}: {} iterations, {} predicates, test accuracy {:.2}%, interpretation measure {:.4}",
        row.model,
        outcome.trace.records.len(),
        outcome.net.predicates().len(),
        row.accuracy,
        row.interpretation.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn experiment(c: &Common, id: u8) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let (train, test) = experiments::load_split(&cfg).map_err(Failure::Data)?;
    let report = match id {
        1 => {
            // reuse a saved model of the configured architecture if there is one
            let saved = load_model(cfg.out_dir.join("model.json"))
                .ok()
                .filter(|m| *m.architecture() == cfg.architecture.architecture());
            let r = experiments::experiment1(&cfg, &train, &test, saved).map_err(run_err)?;
            println!(
                "max |mean_diff| trained {:.4}, untrained {:.4}; empty channels {:?}",
                r.trained.max_abs(),
                r.untrained.max_abs(),
                r.trained.empty_channels()
            );
            r.report
        }
        2 => {
            let r = experiments::experiment2(&cfg, &train).map_err(run_err)?;
            println!("{} groups after {} samples", r.counts.last().copied().unwrap_or(0), r.counts.len());
            r.report
        }
        3 => {
            let r = experiments::experiment3(&cfg, &train).map_err(run_err)?;
            if let Some(s) = experiments::Stabilization::of(&r.objectives, 10) {
                println!(
                    "objective {:.5} -> {:.5}, last-window spread {:.3e}",
                    s.initial, s.final_mean, s.spread
                );
            }
            r.report
        }
        _ => {
            let r = experiments::experiment4(&cfg, &train, &test, &ArchitectureId::ALL).map_err(run_err)?;
            for row in &r.rows {
                println!("{}", row.csv_line());
            }
            r.report
        }
    };
    write_report(&report, &cfg, c.skip_plots)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => train(c),
        Command::ExtractLogic(c) => extract_logic(c),
        Command::Exp1(c) => experiment(c, 1),
        Command::Exp2(c) => experiment(c, 2),
        Command::Exp3(c) => experiment(c, 3),
        Command::Exp4(c) => experiment(c, 4),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
