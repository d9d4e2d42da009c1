//! Flat `key = value` run configuration. Blank lines and lines starting
//! with `#` are ignored; unknown keys are errors so typos do not silently
//! fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{ConfigError, Error, Result};
use crate::logic::{SolveConfig, TNorm, Thresholds};
use crate::perception::{ArchitectureId, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub images: PathBuf,
    pub labels: PathBuf,
    pub out_dir: PathBuf,
    pub architecture: ArchitectureId,
    pub train_samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Shared by baseline training and the game's parameter update.
    pub learning_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_init: f64,
    /// Game iterations (minibatch updates).
    pub max_iterations: usize,
    pub game_batch_size: usize,
    /// The game sees only the first `n` training images; `None` means all.
    pub game_samples: Option<usize>,
    /// `None` disables the windowed early stop.
    pub convergence_tolerance: Option<f64>,
    pub logic_iterations: usize,
    pub logic_step: f64,
    pub logic_tolerance: f64,
    pub match_threshold: f64,
    pub predicate_threshold: f64,
    pub smoothing: f64,
    pub tnorm: TNorm,
}

const REQUIRED: [&str; 4] = ["seed", "images", "labels", "architecture"];

const KEYS: [&str; 24] = [
    "seed",
    "images",
    "labels",
    "out_dir",
    "architecture",
    "train_samples",
    "test_samples",
    "epochs",
    "batch_size",
    "learning_rate",
    "alpha",
    "beta",
    "lambda_init",
    "max_iterations",
    "game_batch_size",
    "game_samples",
    "convergence_tolerance",
    "logic_iterations",
    "logic_step",
    "logic_tolerance",
    "match_threshold",
    "predicate_threshold",
    "smoothing",
    "tnorm",
];

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn get<T: FromStr>(&self, key: &'static str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|e: T::Err| invalid(key, e.to_string())),
        }
    }

    fn required(&self, key: &'static str) -> Result<&str, ConfigError> {
        self.0.get(key).map(String::as_str).ok_or(ConfigError::MissingKey(key))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line: n + 1,
                    text: line.to_string(),
                }
                .into());
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.to_string()).into());
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(invalid(k, "given more than once").into());
            }
        }
        let f = Fields(map);
        for key in REQUIRED {
            f.required(key)?;
        }
        let arch = f.required("architecture")?;
        let cfg = Self {
            seed: f.get("seed", 0)?,
            images: PathBuf::from(f.required("images")?),
            labels: PathBuf::from(f.required("labels")?),
            out_dir: PathBuf::from(f.get("out_dir", "out".to_string())?),
            architecture: ArchitectureId::parse(arch)
                .ok_or_else(|| invalid("architecture", format!("`{arch}` is not one of cnn1, cnn2, cnn3")))?,
            train_samples: f.get("train_samples", 1000)?,
            test_samples: f.get("test_samples", 1000)?,
            epochs: f.get("epochs", 10)?,
            batch_size: f.get("batch_size", 32)?,
            learning_rate: f.get("learning_rate", 0.01)?,
            alpha: f.get("alpha", 1e-4)?,
            beta: f.get("beta", 1e-4)?,
            lambda_init: f.get("lambda_init", 0.0)?,
            max_iterations: f.get("max_iterations", 100)?,
            game_batch_size: f.get("game_batch_size", 32)?,
            game_samples: match f.0.get("game_samples").map(String::as_str) {
                None | Some("all") => None,
                Some(_) => Some(f.get("game_samples", 0)?),
            },
            convergence_tolerance: match f.0.get("convergence_tolerance").map(String::as_str) {
                None => Some(1e-6),
                Some("off") => None,
                Some(_) => Some(f.get("convergence_tolerance", 0.0)?),
            },
            logic_iterations: f.get("logic_iterations", 50)?,
            logic_step: f.get("logic_step", 0.05)?,
            logic_tolerance: f.get("logic_tolerance", 1e-8)?,
            match_threshold: f.get("match_threshold", 0.1)?,
            predicate_threshold: f.get("predicate_threshold", 0.05)?,
            smoothing: f.get("smoothing", 1e-9)?,
            tnorm: f.get("tnorm", TNorm::Lukasiewicz)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative data and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.images, &mut cfg.labels, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, n) in [
            ("train_samples", self.train_samples),
            ("test_samples", self.test_samples),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_iterations", self.max_iterations),
            ("game_batch_size", self.game_batch_size),
            ("logic_iterations", self.logic_iterations),
        ] {
            if n == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        for (key, t) in [
            ("match_threshold", self.match_threshold),
            ("predicate_threshold", self.predicate_threshold),
            ("smoothing", self.smoothing),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid(key, format!("{t} is not in (0, 1)")));
            }
        }
        for (key, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(key, "must be finite and non-negative"));
            }
        }
        for (key, v) in [("learning_rate", self.learning_rate), ("logic_step", self.logic_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, "must be finite and positive"));
            }
        }
        if self.game_samples == Some(0) {
            return Err(invalid("game_samples", "must be at least 1"));
        }
        if !self.lambda_init.is_finite() {
            return Err(invalid("lambda_init", "must be finite"));
        }
        if self.tnorm != TNorm::Lukasiewicz {
            return Err(invalid("tnorm", "clause eigenvalues are only defined for lukasiewicz"));
        }
        Ok(())
    }

    /// Every key, defaults included, in a form [`RunConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let tol = match self.convergence_tolerance {
            Some(t) => format!("{t:?}"),
            None => "off".into(),
        };
        let game_samples = self.game_samples.map_or("all".to_string(), |n| n.to_string());
        let rows: [(&str, String); 24] = [
            ("seed", self.seed.to_string()),
            ("images", self.images.display().to_string()),
            ("labels", self.labels.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("architecture", self.architecture.name().into()),
            ("train_samples", self.train_samples.to_string()),
            ("test_samples", self.test_samples.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("alpha", format!("{:?}", self.alpha)),
            ("beta", format!("{:?}", self.beta)),
            ("lambda_init", format!("{:?}", self.lambda_init)),
            ("max_iterations", self.max_iterations.to_string()),
            ("game_batch_size", self.game_batch_size.to_string()),
            ("game_samples", game_samples),
            ("convergence_tolerance", tol),
            ("logic_iterations", self.logic_iterations.to_string()),
            ("logic_step", format!("{:?}", self.logic_step)),
            ("logic_tolerance", format!("{:?}", self.logic_tolerance)),
            ("match_threshold", format!("{:?}", self.match_threshold)),
            ("predicate_threshold", format!("{:?}", self.predicate_threshold)),
            ("smoothing", format!("{:?}", self.smoothing)),
            ("tnorm", self.tnorm.name().into()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.alpha,
            seed: self.seed,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            matching: self.match_threshold,
            predicate: self.predicate_threshold,
            smoothing: self.smoothing,
        }
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            iterations: self.logic_iterations,
            step: self.logic_step,
            tolerance: self.logic_tolerance,
            ..SolveConfig::default()
        }
    }
}
