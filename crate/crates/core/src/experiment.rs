//! End-to-end experiment: baselines and the ensemble method across overlap
//! settings, with per-trial step-scale selection and CSV reports.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::completion::{self, CompletionConfig, RowCompleter};
use crate::config::{DatasetSource, RunConfig};
use crate::ensemble::{combine, EnsembleState};
use crate::error::{ensure, Error, Result};
use crate::linalg::Vector;
use crate::mapper::{MappingAccumulator, MappingMatrix};
use crate::models::{
    logistic_cap, loss, predicted_label, unit_loss, LossKind, OnlineLinearModel, StepMode,
    StepSchedule, SQUARE_LOSS_CAP,
};
use crate::parallel::map_indexed;
use crate::sim::{
    self, make_script, synthesize_stream, Dataset, DatasetFormat, EvolutionScript, OverlapSetting,
    PhasedInstance,
};
use crate::sketch::FrequentDirections;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn loss_kind(self) -> LossKind {
        match self {
            Task::Classification => LossKind::Logistic,
            Task::Regression => LossKind::Square,
        }
    }

    /// Accuracy is better when higher, MSE when lower.
    pub fn higher_is_better(self) -> bool {
        self == Task::Classification
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    /// Fresh model on the current space only.
    Nogd,
    /// Frozen previous-space model on mapped instances.
    RogdF,
    /// Previous-space model that keeps learning on mapped instances.
    RogdU,
    /// Exponentially weighted combination of ROGD-u and NOGD.
    FeslC,
    /// Exponentially weighted selection between ROGD-u and NOGD.
    FeslS,
    /// Potential-based ensemble of ROGD-u, ROGD-f and NOGD.
    Pufe,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::Nogd,
        MethodKind::RogdF,
        MethodKind::RogdU,
        MethodKind::FeslC,
        MethodKind::FeslS,
        MethodKind::Pufe,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            MethodKind::Nogd => "NOGD",
            MethodKind::RogdF => "ROGD-f",
            MethodKind::RogdU => "ROGD-u",
            MethodKind::FeslC => "FESL-c",
            MethodKind::FeslS => "FESL-s",
            MethodKind::Pufe => "PUFE",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        MethodKind::ALL
            .into_iter()
            .find(|m| m.tag().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Element `j` is the mean of the first `j + 1` losses.
pub fn average_cumulative_loss(losses: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    losses
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            total += l;
            total / (j + 1) as f64
        })
        .collect()
}

/// `w_i <- w_i exp(-eta l_i)`, renormalized.
pub fn fesl_weights_update(weights: &[f64], losses: &[f64], eta: f64) -> Result<Vec<f64>> {
    ensure!(
        weights.len() == losses.len(),
        "{} weights for {} losses",
        weights.len(),
        losses.len()
    );
    ensure!(eta >= 0.0, "eta must be nonnegative");
    // Shift by the smallest loss so the largest factor is exactly 1.
    let floor = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = weights
        .iter()
        .zip(losses)
        .map(|(w, l)| w * (-eta * (l - floor)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    ensure!(total > 0.0, "weights collapsed to zero");
    Ok(raw.into_iter().map(|w| w / total).collect())
}

fn argmax_first(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    best
}

/// Stream sizes resolved against a concrete dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizon {
    pub t1: usize,
    pub t2: usize,
    pub b: usize,
    pub d1: usize,
    pub d2: usize,
    pub s_floor: usize,
}

impl Horizon {
    pub fn resolve(cfg: &RunConfig, data: &Dataset) -> Result<Self> {
        let n = data.len();
        let t1 = cfg.t1.unwrap_or(n / 2);
        let t2 = cfg.t2.unwrap_or(n.saturating_sub(t1));
        let d1 = data.dim();
        let h = Self {
            t1,
            t2,
            b: cfg.b,
            d1,
            d2: cfg.d2.unwrap_or(d1),
            s_floor: cfg.s_floor.unwrap_or(d1.div_ceil(4)).max(1),
        };
        if t1 + t2 > n || t2 == 0 {
            return Err(Error::Config(format!(
                "dataset has {n} rows; T1 = {t1}, T2 = {t2} do not fit"
            )));
        }
        if h.b > t1 {
            return Err(Error::Config(format!("b = {} exceeds T1 = {t1}", h.b)));
        }
        if h.s_floor > d1 {
            return Err(Error::Config(format!("s_floor = {} exceeds d1 = {d1}", h.s_floor)));
        }
        Ok(h)
    }
}

const DATA_STREAM: u64 = 100;
const INIT_STREAM: u64 = 3;

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of trial `k`, derived from the run seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seeded(seed, trial as u64).next_u64()
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let mut rng = seeded(cfg.seed, DATA_STREAM);
    let mut data = match &cfg.dataset {
        DatasetSource::SyntheticLowRank => {
            sim::low_rank_classification(cfg.n, cfg.d1, cfg.true_rank, cfg.label_noise, &mut rng)?
        }
        DatasetSource::SyntheticSensor => sim::sensor_regression(cfg.n, cfg.d1, cfg.label_noise, &mut rng)?,
        DatasetSource::File(path) => {
            let format = cfg.format.unwrap_or_else(|| DatasetFormat::from_path(path));
            let mut data = sim::ingest_dataset(path, format)?;
            if cfg.task == Task::Regression {
                data.scale_labels();
            }
            data
        }
    };
    data.apply_scaling(cfg.scale);
    Ok(data)
}

/// What rounds `1..=T1` leave behind independently of the step scale.
#[derive(Debug, Clone)]
pub struct OverlapModel {
    /// Rank used for completion.
    pub rank: usize,
    /// Previous-space rows used for training during the overlap, one per
    /// overlap round; `None` for rows discarded by completion.
    pub overlap_rows: Vec<Option<Vector>>,
    pub mapping: MappingMatrix,
    /// Largest instance norm seen in either space up to `T1`.
    pub x_max: f64,
    pub discarded: usize,
    pub ill_posed: usize,
}

/// Sketch the previous-space rows, repair the overlap as the setting
/// dictates and fit the map from the current space back to the previous.
pub fn prepare_overlap(
    stream: &[PhasedInstance],
    script: &EvolutionScript,
    setting: OverlapSetting,
    cfg: &RunConfig,
) -> Result<OverlapModel> {
    let d1 = script.d1;
    let first = script.first_overlap_round();
    let mut sketch = match cfg.rank {
        Some(r) => FrequentDirections::for_rank(r, d1)?,
        None => FrequentDirections::lossless(d1)?,
    };
    let mut x_max: f64 = 0.0;
    for inst in &stream[..first - 1] {
        let row = inst
            .old_features
            .as_ref()
            .ok_or_else(|| crate::error::contract(format!("round {} lacks old features", inst.t)))?;
        sketch.insert(row.values())?;
        x_max = x_max.max(row.zero_filled().norm());
    }
    let rank = cfg
        .rank
        .unwrap_or_else(|| sketch.estimate_rank())
        .clamp(1, d1);

    let mut completer = if setting == OverlapSetting::IncompleteCompleted {
        let basis = sketch.row_space(rank)?;
        let mu = completion::incoherence(basis.matrix())?;
        let required =
            completion::required_samples_with_constant(cfg.sample_constant, mu, rank, script.b, cfg.delta)?;
        let min_entries = if required <= d1 { required } else { (2 * rank).min(d1) };
        let ccfg = CompletionConfig::new(rank, cfg.delta, min_entries)?;
        Some(RowCompleter::new(basis, ccfg))
    } else {
        None
    };

    let mut acc = MappingAccumulator::new(script.d2, d1);
    let mut overlap_rows = Vec::with_capacity(script.b);
    for inst in &stream[first - 1..script.t1] {
        let (Some(old), Some(new)) = (&inst.old_features, &inst.new_features) else {
            return Err(crate::error::contract(format!(
                "overlap round {} lacks one of the feature spaces",
                inst.t
            )));
        };
        x_max = x_max.max(new.norm()).max(old.zero_filled().norm());
        let row = match completer.as_mut() {
            Some(c) if inst.needs_completion => c.push(inst.t, old)?,
            _ => Some(old.zero_filled()),
        };
        if let Some(x) = &row {
            acc.accumulate(new, x)?;
        }
        overlap_rows.push(row);
    }
    let (discarded, ill_posed) = completer.map_or((0, 0), |c| {
        let rep = c.finish();
        (rep.discarded_row_ids.len(), rep.ill_posed_row_ids.len())
    });
    ensure!(
        acc.pairs_seen() >= 1,
        "every overlap row was discarded; no mapping can be learned"
    );
    Ok(OverlapModel {
        rank,
        overlap_rows,
        mapping: acc.finalize(0.0)?,
        x_max,
        discarded,
        ill_posed,
    })
}

/// Train the previous-space model through rounds `1..=T1` with step
/// `1 / (c sqrt(t))`.
pub fn train_previous(
    stream: &[PhasedInstance],
    overlap: &OverlapModel,
    init: &OnlineLinearModel,
    kind: LossKind,
    c: f64,
) -> Result<OnlineLinearModel> {
    let schedule = StepSchedule::new(c, StepMode::InverseSqrtGlobal)?;
    let mut w = init.clone();
    let first = stream.len().min(
        stream
            .iter()
            .position(|i| i.new_features.is_some())
            .unwrap_or(stream.len()),
    );
    for inst in &stream[..first] {
        let x = inst
            .old_features
            .as_ref()
            .ok_or_else(|| crate::error::contract(format!("round {} lacks old features", inst.t)))?
            .zero_filled();
        w.step(kind, &x, inst.label, schedule.step_size(inst.t, 0)?)?;
    }
    for (inst, row) in stream[first..].iter().zip(&overlap.overlap_rows) {
        if let Some(x) = row {
            w.step(kind, x, inst.label, schedule.step_size(inst.t, 0)?)?;
        }
    }
    Ok(w)
}

/// Inputs shared by every method in the current-space phase.
#[derive(Debug, Clone)]
pub struct PhaseContext<'a> {
    pub task: Task,
    pub t1: usize,
    pub cap: f64,
    pub eta: f64,
    pub mapping: &'a MappingMatrix,
    /// Previous-space model at `T1`.
    pub previous: &'a OnlineLinearModel,
    pub radius: f64,
}

/// Per-round base predictions for rounds `T1+1..=T1+T2`.
#[derive(Debug, Clone)]
struct BasePredictions {
    rogd_u: Vec<f64>,
    rogd_f: Vec<f64>,
    nogd: Vec<f64>,
    labels: Vec<f64>,
}

fn base_predictions(stream: &[PhasedInstance], ctx: &PhaseContext, c: f64) -> Result<BasePredictions> {
    let kind = ctx.task.loss_kind();
    let schedule = StepSchedule::new(c, StepMode::InverseSqrtPhase)?;
    let mut updating = ctx.previous.clone();
    let frozen = ctx.previous;
    let d2 = ctx.mapping.matrix().nrows();
    let mut current = OnlineLinearModel::zeros(d2, ctx.radius)?;
    let rounds = stream.iter().filter(|i| i.t > ctx.t1);
    let n = stream.len().saturating_sub(ctx.t1);
    let mut out = BasePredictions {
        rogd_u: Vec::with_capacity(n),
        rogd_f: Vec::with_capacity(n),
        nogd: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
    };
    for inst in rounds {
        let x = inst
            .new_features
            .as_ref()
            .ok_or_else(|| crate::error::contract(format!("round {} lacks new features", inst.t)))?;
        let psi = ctx.mapping.recover(x)?;
        out.rogd_u.push(updating.predict(&psi)?);
        out.rogd_f.push(frozen.predict(&psi)?);
        out.nogd.push(current.predict(x)?);
        out.labels.push(inst.label);
        let tau = schedule.step_size(inst.t, ctx.t1)?;
        updating.step(kind, &psi, inst.label, tau)?;
        current.step(kind, x, inst.label, tau)?;
    }
    ensure!(!out.labels.is_empty(), "stream has no current-space rounds");
    Ok(out)
}

/// Per-round record of the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTrace {
    pub expert_ids: Vec<String>,
    pub alphas: Vec<Vector>,
    pub expert_losses: Vec<Vec<f64>>,
    /// Unit loss of the combined prediction.
    pub combined_loss: Vec<f64>,
    /// Alpha-weighted average of the expert unit losses.
    pub weighted_loss: Vec<f64>,
    /// Regret bound against the best expert so far, after each round.
    pub bound: Vec<f64>,
}

impl EnsembleTrace {
    /// Rounds where the cumulative combined loss exceeds the best expert's
    /// cumulative loss plus the bound.
    pub fn bound_violations(&self) -> usize {
        let n = self.expert_ids.len();
        let mut cum = vec![0.0; n];
        let mut combined = 0.0;
        let mut violations = 0;
        for (t, losses) in self.expert_losses.iter().enumerate() {
            for (c, l) in cum.iter_mut().zip(losses) {
                *c += l;
            }
            combined += self.combined_loss[t];
            let best = cum.iter().copied().fold(f64::INFINITY, f64::min);
            if combined > best + self.bound[t] + 1e-9 {
                violations += 1;
            }
        }
        violations
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: MethodKind,
    /// Raw predictions for rounds `T1+1..=T1+T2`.
    pub predictions: Vec<f64>,
    /// Raw losses of those predictions.
    pub losses: Vec<f64>,
    /// Accuracy (classification) or mean squared error (regression).
    pub metric: f64,
    pub trace: Option<EnsembleTrace>,
}

impl MethodRun {
    pub fn total_loss(&self) -> f64 {
        self.losses.iter().sum()
    }
}

fn finish_run(
    method: MethodKind,
    predictions: Vec<f64>,
    labels: &[f64],
    task: Task,
    trace: Option<EnsembleTrace>,
) -> Result<MethodRun> {
    let kind = task.loss_kind();
    let losses = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| loss(kind, p, y))
        .collect::<Result<Vec<_>>>()?;
    let n = labels.len() as f64;
    let metric = match task {
        Task::Classification => {
            predictions
                .iter()
                .zip(labels)
                .filter(|(&p, &y)| predicted_label(p) == y)
                .count() as f64
                / n
        }
        Task::Regression => {
            predictions
                .iter()
                .zip(labels)
                .map(|(p, y)| (y - p).powi(2))
                .sum::<f64>()
                / n
        }
    };
    Ok(MethodRun {
        method,
        predictions,
        losses,
        metric,
        trace,
    })
}

fn run_ensemble(base: &BasePredictions, ctx: &PhaseContext) -> Result<(Vec<f64>, EnsembleTrace)> {
    let kind = ctx.task.loss_kind();
    let ids = [MethodKind::RogdU, MethodKind::RogdF, MethodKind::Nogd].map(|m| m.tag().to_string());
    let mut state = EnsembleState::new(ids.clone())?;
    let mut trace = EnsembleTrace {
        expert_ids: ids.to_vec(),
        alphas: Vec::new(),
        expert_losses: Vec::new(),
        combined_loss: Vec::new(),
        weighted_loss: Vec::new(),
        bound: Vec::new(),
    };
    let mut predictions = Vec::with_capacity(base.labels.len());
    for (k, &y) in base.labels.iter().enumerate() {
        let preds = [base.rogd_u[k], base.rogd_f[k], base.nogd[k]];
        let alphas = state.alphas();
        let p = combine(&alphas, &preds)?;
        let losses = preds
            .iter()
            .map(|&q| unit_loss(kind, q, y, ctx.cap))
            .collect::<Result<Vec<_>>>()?;
        let combined = unit_loss(kind, p, y, ctx.cap)?;
        state.update(&losses, combined)?;
        trace.weighted_loss.push(alphas.iter().zip(&losses).map(|(a, l)| a * l).sum());
        trace.bound.push(state.regret_bound_for(state.best_expert())?);
        trace.alphas.push(alphas);
        trace.expert_losses.push(losses);
        trace.combined_loss.push(combined);
        predictions.push(p);
    }
    Ok((predictions, trace))
}

fn run_fesl(base: &BasePredictions, ctx: &PhaseContext, select: bool) -> Result<Vec<f64>> {
    let kind = ctx.task.loss_kind();
    let mut weights = vec![0.5, 0.5];
    let mut predictions = Vec::with_capacity(base.labels.len());
    for (k, &y) in base.labels.iter().enumerate() {
        let preds = [base.rogd_u[k], base.nogd[k]];
        let p = if select {
            preds[argmax_first(&weights)]
        } else {
            weights[0] * preds[0] + weights[1] * preds[1]
        };
        predictions.push(p);
        let losses = [
            unit_loss(kind, preds[0], y, ctx.cap)?,
            unit_loss(kind, preds[1], y, ctx.cap)?,
        ];
        weights = fesl_weights_update(&weights, &losses, ctx.eta)?;
    }
    Ok(predictions)
}

/// Run one method over the current-space phase of `stream` with step scale
/// `c`.
pub fn run_method(
    kind: MethodKind,
    stream: &[PhasedInstance],
    ctx: &PhaseContext,
    c: f64,
) -> Result<MethodRun> {
    let base = base_predictions(stream, ctx, c)?;
    run_on_base(kind, &base, ctx)
}

fn run_on_base(kind: MethodKind, base: &BasePredictions, ctx: &PhaseContext) -> Result<MethodRun> {
    let (predictions, trace) = match kind {
        MethodKind::Nogd => (base.nogd.clone(), None),
        MethodKind::RogdF => (base.rogd_f.clone(), None),
        MethodKind::RogdU => (base.rogd_u.clone(), None),
        MethodKind::FeslC => (run_fesl(base, ctx, false)?, None),
        MethodKind::FeslS => (run_fesl(base, ctx, true)?, None),
        MethodKind::Pufe => {
            let (p, t) = run_ensemble(base, ctx)?;
            (p, Some(t))
        }
    };
    finish_run(kind, predictions, &base.labels, ctx.task, trace)
}

/// Outcome of one method in one setting of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub setting: OverlapSetting,
    /// Step scale selected by the grid search.
    pub c: f64,
    pub run: MethodRun,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub outcomes: Vec<MethodOutcome>,
    /// Overlap rows discarded by completion, per setting.
    pub discarded: Vec<(OverlapSetting, usize)>,
}

impl TrialResult {
    pub fn outcome(&self, method: MethodKind, setting: OverlapSetting) -> Option<&MethodOutcome> {
        self.outcomes
            .iter()
            .find(|o| o.run.method == method && o.setting == setting)
    }
}

fn default_cap(cfg: &RunConfig, x_max: f64) -> f64 {
    cfg.loss_cap.unwrap_or(match cfg.task {
        Task::Classification => logistic_cap(cfg.radius, x_max),
        Task::Regression => SQUARE_LOSS_CAP,
    })
}

/// One trial: a fresh evolution script and initial model, shared by all
/// settings; the step scale is chosen per method and setting by smallest
/// total loss.
pub fn run_trial(cfg: &RunConfig, data: &Dataset, horizon: &Horizon, trial: usize) -> Result<TrialResult> {
    let seed = trial_seed(cfg.seed, trial);
    let script = make_script(
        horizon.d1,
        horizon.d2,
        horizon.b,
        horizon.t1,
        horizon.t2,
        horizon.s_floor,
        seed,
    )?
    .with_noise(cfg.noise);
    let kind = cfg.task.loss_kind();
    let init = OnlineLinearModel::random(horizon.d1, cfg.radius, cfg.init_scale, &mut seeded(seed, INIT_STREAM))?;
    let eta = cfg
        .eta
        .unwrap_or_else(|| (8.0 * 2f64.ln() / horizon.t2 as f64).sqrt());

    let mut outcomes = Vec::new();
    let mut discarded = Vec::new();
    for &setting in &cfg.settings {
        let stream = synthesize_stream(data, &script, setting)?;
        let overlap = prepare_overlap(&stream, &script, setting, cfg)?;
        discarded.push((setting, overlap.discarded));
        let cap = default_cap(cfg, overlap.x_max);
        let mut best: Vec<Option<MethodOutcome>> = vec![None; cfg.methods.len()];
        for c in cfg.step_scales() {
            let previous = train_previous(&stream, &overlap, &init, kind, c)?;
            let ctx = PhaseContext {
                task: cfg.task,
                t1: horizon.t1,
                cap,
                eta,
                mapping: &overlap.mapping,
                previous: &previous,
                radius: cfg.radius,
            };
            let base = base_predictions(&stream[..horizon.t1 + horizon.t2], &ctx, c)?;
            for (slot, &method) in best.iter_mut().zip(&cfg.methods) {
                let run = run_on_base(method, &base, &ctx)?;
                if slot.as_ref().is_none_or(|b| run.total_loss() < b.run.total_loss()) {
                    *slot = Some(MethodOutcome { setting, c, run });
                }
            }
        }
        outcomes.extend(best.into_iter().flatten());
    }
    Ok(TrialResult {
        trial,
        seed,
        outcomes,
        discarded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: MethodKind,
    pub setting: OverlapSetting,
    pub mean: f64,
    /// Sample standard deviation over trials (0 for a single trial).
    pub std: f64,
    /// Mean over trials of the average cumulative loss, length `T2`.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub task: Task,
    pub horizon: Horizon,
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialResult>,
    /// Per method, the rank of each setting (1 = best).
    pub setting_ranks: Vec<(MethodKind, Vec<(OverlapSetting, usize)>)>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let horizon = Horizon::resolve(cfg, &data)?;
    let results = map_indexed(cfg.trials, cfg.execution, |k| run_trial(cfg, &data, &horizon, k));
    let completed = results.iter().filter(|r| r.is_ok()).count();
    let mut trials = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trials.push(t),
            Err(e) => {
                return Err(Error::Trial {
                    trial: k,
                    completed,
                    total: cfg.trials,
                    source: Box::new(e),
                })
            }
        }
    }

    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &setting in &cfg.settings {
            let runs: Vec<&MethodRun> = trials
                .iter()
                .map(|t| &t.outcome(method, setting).expect("every cell is filled").run)
                .collect();
            let metrics: Vec<f64> = runs.iter().map(|r| r.metric).collect();
            let (mean, std) = mean_std(&metrics);
            let mut curve = vec![0.0; horizon.t2];
            for r in &runs {
                for (acc, v) in curve.iter_mut().zip(average_cumulative_loss(&r.losses)) {
                    *acc += v;
                }
            }
            curve.iter_mut().for_each(|v| *v /= runs.len() as f64);
            cells.push(CellSummary {
                method,
                setting,
                mean,
                std,
                curve,
            });
        }
    }

    let setting_ranks = cfg
        .methods
        .iter()
        .map(|&method| {
            let mut scored: Vec<(OverlapSetting, f64)> = cells
                .iter()
                .filter(|c| c.method == method)
                .map(|c| (c.setting, c.mean))
                .collect();
            scored.sort_by(|a, b| {
                let ord = a.1.total_cmp(&b.1);
                if cfg.task.higher_is_better() {
                    ord.reverse()
                } else {
                    ord
                }
            });
            let ranks = scored
                .into_iter()
                .enumerate()
                .map(|(i, (s, _))| (s, i + 1))
                .collect();
            (method, ranks)
        })
        .collect();

    Ok(RunReport {
        task: cfg.task,
        horizon,
        cells,
        trials,
        setting_ranks,
    })
}

impl RunReport {
    pub fn cell(&self, method: MethodKind, setting: OverlapSetting) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.setting == setting)
    }

    /// Ensemble traces of every trial for one setting.
    pub fn traces(&self, setting: OverlapSetting) -> Vec<&EnsembleTrace> {
        self.trials
            .iter()
            .filter_map(|t| t.outcome(MethodKind::Pufe, setting))
            .filter_map(|o| o.run.trace.as_ref())
            .collect()
    }

    /// Alpha trajectories averaged over trials for the first setting that
    /// ran the ensemble.
    pub fn mean_alphas(&self) -> Option<(Vec<String>, Vec<Vector>)> {
        let setting = self
            .cells
            .iter()
            .find(|c| c.method == MethodKind::Pufe)?
            .setting;
        let traces = self.traces(setting);
        let first = traces.first()?;
        let mut mean: Vec<Vector> = first.alphas.iter().map(|a| a * 0.0).collect();
        for t in &traces {
            for (m, a) in mean.iter_mut().zip(&t.alphas) {
                *m += a;
            }
        }
        let n = traces.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Some((first.expert_ids.clone(), mean))
    }

    /// Write `metrics.csv`, `curves.csv`, `alphas.csv`, `ranks.csv` and one
    /// `ensemble_log_<setting>.csv` per setting (first trial).
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::file(dir))?;
        let writer = |name: &str| -> Result<csv::Writer<BufWriter<File>>> {
            Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name)).map_err(Error::file(dir.join(name)))?)))
        };

        let mut w = writer("metrics.csv")?;
        w.write_record(["method", "setting", "mean", "std"])?;
        for c in &self.cells {
            w.write_record([
                c.method.tag(),
                c.setting.tag(),
                &c.mean.to_string(),
                &c.std.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = writer("curves.csv")?;
        w.write_record(["method", "setting", "t", "avg_cum_loss"])?;
        for c in &self.cells {
            for (k, v) in c.curve.iter().enumerate() {
                w.write_record([
                    c.method.tag(),
                    c.setting.tag(),
                    &(self.horizon.t1 + k + 1).to_string(),
                    &v.to_string(),
                ])?;
            }
        }
        w.flush()?;

        let mut w = writer("alphas.csv")?;
        w.write_record(["t", "expert", "alpha"])?;
        if let Some((ids, alphas)) = self.mean_alphas() {
            for (k, a) in alphas.iter().enumerate() {
                for (id, v) in ids.iter().zip(a.iter()) {
                    w.write_record([&(self.horizon.t1 + k + 1).to_string(), id, &v.to_string()])?;
                }
            }
        }
        w.flush()?;

        let mut w = writer("ranks.csv")?;
        w.write_record(["method", "setting", "rank"])?;
        for (method, ranks) in &self.setting_ranks {
            for (setting, r) in ranks {
                w.write_record([method.tag(), setting.tag(), &r.to_string()])?;
            }
        }
        w.flush()?;

        let settings: Vec<OverlapSetting> = self
            .cells
            .iter()
            .filter(|c| c.method == MethodKind::Pufe)
            .map(|c| c.setting)
            .collect();
        for setting in settings {
            let Some(trace) = self.traces(setting).first().copied() else {
                continue;
            };
            let mut w = writer(&format!("ensemble_log_{}.csv", setting.tag()))?;
            let mut header = vec!["t".to_string()];
            header.extend(trace.expert_ids.iter().map(|id| format!("alpha_{id}")));
            header.extend(trace.expert_ids.iter().map(|id| format!("loss_{id}")));
            header.extend(["combined_loss", "weighted_loss", "bound"].map(String::from));
            w.write_record(&header)?;
            for k in 0..trace.alphas.len() {
                let mut rec = vec![(self.horizon.t1 + k + 1).to_string()];
                rec.extend(trace.alphas[k].iter().map(|v| v.to_string()));
                rec.extend(trace.expert_losses[k].iter().map(|v| v.to_string()));
                rec.push(trace.combined_loss[k].to_string());
                rec.push(trace.weighted_loss[k].to_string());
                rec.push(trace.bound[k].to_string());
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}
