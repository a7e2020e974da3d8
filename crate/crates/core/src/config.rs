//! Run configuration, read from flat `key = value` text with `#` comments.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::{MethodKind, Task};
use crate::parallel::Execution;
use crate::sim::{DatasetFormat, FeatureScaling, OverlapSetting};

/// Step-scale grid searched per method and trial.
pub const DEFAULT_C_GRID: [f64; 7] = [0.5, 1.0, 10.0, 20.0, 50.0, 70.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// Features on a low-dimensional subspace, linearly separable labels.
    SyntheticLowRank,
    /// Smooth sensor-like trajectories with a regression target.
    SyntheticSensor,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub format: Option<DatasetFormat>,
    /// Per-column feature scaling applied after loading.
    pub scale: FeatureScaling,
    pub task: Task,
    /// Synthetic generator size and shape.
    pub n: usize,
    pub d1: usize,
    pub true_rank: usize,
    pub label_noise: f64,
    /// `None` splits the dataset in half.
    pub t1: Option<usize>,
    pub t2: Option<usize>,
    pub b: usize,
    /// `None` keeps the previous-space dimension.
    pub d2: Option<usize>,
    /// `None` estimates the rank from the sketch.
    pub rank: Option<usize>,
    pub delta: f64,
    /// `None` uses `ceil(d1 / 4)`.
    pub s_floor: Option<usize>,
    pub c_grid: Vec<f64>,
    /// Fixed step scale; disables the grid search.
    pub c: Option<f64>,
    pub radius: f64,
    /// `None` derives the cap from the task.
    pub loss_cap: Option<f64>,
    /// `None` uses `sqrt(8 ln 2 / T2)`.
    pub eta: Option<f64>,
    pub init_scale: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<MethodKind>,
    pub settings: Vec<OverlapSetting>,
    pub noise: f64,
    pub sample_constant: f64,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::SyntheticLowRank,
            format: None,
            scale: FeatureScaling::None,
            task: Task::Classification,
            n: 2000,
            d1: 30,
            true_rank: 3,
            label_noise: 0.0,
            t1: None,
            t2: None,
            b: 20,
            d2: None,
            rank: None,
            delta: 0.1,
            s_floor: None,
            c_grid: DEFAULT_C_GRID.to_vec(),
            c: None,
            radius: crate::models::DEFAULT_RADIUS,
            loss_cap: None,
            eta: None,
            init_scale: 0.01,
            trials: 10,
            seed: 0,
            methods: MethodKind::ALL.to_vec(),
            settings: OverlapSetting::ALL.to_vec(),
            noise: 0.0,
            sample_constant: crate::completion::SAMPLE_CONSTANT,
            execution: Execution::default(),
        }
    }
}

/// Split text into `(key, value)` pairs. Blank lines and `#` comments are
/// ignored; repeated keys are an error.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let key = key.trim().to_string();
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("line {}: duplicate key {key}", i + 1)));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn parse_list<T, F>(value: &str, f: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(f)
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
        let mut cfg = Self::from_text(&text)?;
        // Relative dataset paths are resolved against the config file.
        if let DatasetSource::File(p) = &cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.dataset = DatasetSource::File(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in parse_key_values(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = match value {
                    "synthetic-lowrank" => DatasetSource::SyntheticLowRank,
                    "synthetic-sensor" => DatasetSource::SyntheticSensor,
                    path => DatasetSource::File(PathBuf::from(path)),
                }
            }
            "format" => self.format = parse_auto(key, value)?,
            "scale" => self.scale = parse_value(key, value)?,
            "task" => self.task = parse_value(key, value)?,
            "n" => self.n = parse_value(key, value)?,
            "d1" => self.d1 = parse_value(key, value)?,
            "true_rank" => self.true_rank = parse_value(key, value)?,
            "label_noise" => self.label_noise = parse_value(key, value)?,
            "t1" => self.t1 = parse_auto(key, value)?,
            "t2" => self.t2 = parse_auto(key, value)?,
            "b" => self.b = parse_value(key, value)?,
            "d2" => self.d2 = parse_auto(key, value)?,
            "rank" => self.rank = parse_auto(key, value)?,
            "delta" => self.delta = parse_value(key, value)?,
            "s_floor" => self.s_floor = parse_auto(key, value)?,
            "c_grid" => self.c_grid = parse_list(value, |v| parse_value(key, v))?,
            "c" => self.c = parse_auto(key, value)?,
            "radius" => self.radius = parse_value(key, value)?,
            "loss_cap" => self.loss_cap = parse_auto(key, value)?,
            "eta" => self.eta = parse_auto(key, value)?,
            "init_scale" => self.init_scale = parse_value(key, value)?,
            "trials" => self.trials = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "methods" => self.methods = parse_list(value, str::parse)?,
            "settings" => self.settings = parse_list(value, str::parse)?,
            "noise" => self.noise = parse_value(key, value)?,
            "sample_constant" => self.sample_constant = parse_value(key, value)?,
            "execution" => self.execution = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.c_grid.is_empty() && self.c.is_none() {
            return fail("c_grid must not be empty");
        }
        if self.c_grid.iter().chain(self.c.iter()).any(|&c| !(c > 0.0 && c.is_finite())) {
            return fail("step scales must be positive");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.methods.is_empty() || self.settings.is_empty() {
            return fail("methods and settings must not be empty");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("delta must lie in (0, 1)");
        }
        if !(self.radius > 0.0) {
            return fail("radius must be positive");
        }
        if self.loss_cap.is_some_and(|c| !(c > 0.0)) {
            return fail("loss_cap must be positive");
        }
        if self.eta.is_some_and(|e| !(e >= 0.0)) {
            return fail("eta must be nonnegative");
        }
        if self.b == 0 {
            return fail("b must be at least 1");
        }
        if !(self.noise >= 0.0) {
            return fail("noise must be nonnegative");
        }
        Ok(())
    }

    /// Step scales to try; a fixed `c` overrides the grid.
    pub fn step_scales(&self) -> Vec<f64> {
        match self.c {
            Some(c) => vec![c],
            None => self.c_grid.clone(),
        }
    }
}
