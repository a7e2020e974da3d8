//! Feature-evolvable stream generation.
//!
//! A stream has three phases over rounds `1..=T1+T2`:
//!
//! * `1..=T1-b`: previous-space instances only (matrix `A`);
//! * `T1-b+1..=T1`: both spaces; previous-space features vanish one by one
//!   in a uniformly random order, so observation sets are nested (`M`, `N`);
//! * `T1+1..=T1+T2`: current-space instances only (`B`).
//!
//! Current-space features are a random Gaussian image of the original
//! features.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::completion::ObservedRow;
use crate::error::{ensure, Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vector,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rescale every feature column linearly onto `[-1, 1]`. Constant
    /// columns become zero.
    pub fn scale_features(&mut self) {
        for mut col in self.features.column_iter_mut() {
            let lo = col.min();
            let hi = col.max();
            if hi > lo {
                col.apply(|v| *v = 2.0 * (*v - lo) / (hi - lo) - 1.0);
            } else {
                col.fill(0.0);
            }
        }
    }

    /// Shift and scale every feature column to zero mean and unit standard
    /// deviation. Constant columns become zero.
    pub fn standardize_features(&mut self) {
        let n = self.features.nrows() as f64;
        for mut col in self.features.column_iter_mut() {
            let mean = col.sum() / n;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if std > 0.0 {
                col.apply(|v| *v = (*v - mean) / std);
            } else {
                col.fill(0.0);
            }
        }
    }

    pub fn apply_scaling(&mut self, scaling: FeatureScaling) {
        match scaling {
            FeatureScaling::None => {}
            FeatureScaling::MinMax => self.scale_features(),
            FeatureScaling::Standard => self.standardize_features(),
        }
    }

    /// Rescale labels onto `[-1, 1]` (regression targets).
    pub fn scale_labels(&mut self) {
        let lo = self.labels.min();
        let hi = self.labels.max();
        if hi > lo {
            self.labels.apply(|v| *v = 2.0 * (*v - lo) / (hi - lo) - 1.0);
        } else {
            self.labels.fill(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureScaling {
    #[default]
    None,
    /// Per-column min-max onto `[-1, 1]`.
    MinMax,
    /// Per-column zero mean, unit variance.
    Standard,
}

impl FromStr for FeatureScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "minmax" => Ok(Self::MinMax),
            "standard" | "zscore" => Ok(Self::Standard),
            other => Err(Error::Config(format!("unknown feature scaling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `label idx:val idx:val ...` with 1-based indices.
    SparseIndexValue,
    /// Comma-separated features with the label in the last column.
    DenseCsv,
}

impl DatasetFormat {
    /// `.csv` files are dense, everything else is read as sparse.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::DenseCsv,
            _ => DatasetFormat::SparseIndexValue,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" | "libsvm" => Ok(Self::SparseIndexValue),
            "dense" | "csv" => Ok(Self::DenseCsv),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

pub fn ingest_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
    parse_dataset(&text, format, path)
}

/// Parse dataset text; `origin` is only used in error messages.
pub fn parse_dataset(text: &str, format: DatasetFormat, origin: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(origin),
        line,
        msg,
    };
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = lineno + 1;
        let number = |tok: &str| {
            tok.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(lineno, format!("invalid number {tok:?}")))
        };
        match format {
            DatasetFormat::SparseIndexValue => {
                let mut tokens = line.split_whitespace();
                let label = number(tokens.next().expect("line is not empty"))?;
                let mut entries = Vec::new();
                for tok in tokens {
                    let (idx, val) = tok
                        .split_once(':')
                        .ok_or_else(|| parse_err(lineno, format!("expected idx:val, got {tok:?}")))?;
                    let idx: usize = idx
                        .parse()
                        .ok()
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| parse_err(lineno, format!("invalid 1-based index {idx:?}")))?;
                    entries.push((idx - 1, number(val)?));
                    dim = dim.max(idx);
                }
                rows.push(entries);
                labels.push(label);
            }
            DatasetFormat::DenseCsv => {
                let fields: Vec<f64> = line.split(',').map(number).collect::<Result<_>>()?;
                ensure_parse(fields.len() >= 2, || {
                    parse_err(lineno, "need at least one feature and a label".into())
                })?;
                let (label, feats) = fields.split_last().expect("len >= 2");
                if rows.is_empty() {
                    dim = feats.len();
                } else {
                    ensure_parse(feats.len() == dim, || {
                        parse_err(
                            lineno,
                            format!("expected {dim} features, found {}", feats.len()),
                        )
                    })?;
                }
                rows.push(feats.iter().copied().enumerate().collect());
                labels.push(*label);
            }
        }
    }
    if rows.is_empty() {
        return Err(parse_err(0, "dataset contains no instances".into()));
    }
    if dim == 0 {
        return Err(parse_err(0, "dataset has no features".into()));
    }
    let mut features = Matrix::zeros(rows.len(), dim);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[(i, j)] = v;
        }
    }
    Ok(Dataset {
        features,
        labels: Vector::from_vec(binarize_labels(labels)),
    })
}

fn ensure_parse(cond: bool, err: impl FnOnce() -> Error) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(err())
    }
}

/// Two-class labels become `-1` (smaller) and `+1` (larger); anything else is
/// left untouched.
fn binarize_labels(labels: Vec<f64>) -> Vec<f64> {
    let mut distinct: Vec<f64> = labels.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() != 2 {
        return labels;
    }
    labels
        .into_iter()
        .map(|y| if y == distinct[0] { -1.0 } else { 1.0 })
        .collect()
}

/// Random linear map from the previous space (`d1`) to the current space
/// (`d2`); instances map as `G^T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMap {
    matrix: Matrix,
}

impl GaussianMap {
    /// i.i.d. standard normal entries scaled by `1 / sqrt(d1)`.
    pub fn sample<R: Rng + ?Sized>(d1: usize, d2: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (d1 as f64).sqrt();
        let matrix = Matrix::from_fn(d1, d2, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
        Self { matrix }
    }

    pub fn from_matrix(matrix: Matrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        gaussian_map(x, &self.matrix)
    }
}

pub fn gaussian_map(x: &Vector, g: &Matrix) -> Result<Vector> {
    ensure!(
        x.len() == g.nrows(),
        "instance has dimension {} but the map expects {}",
        x.len(),
        g.nrows()
    );
    Ok(g.tr_mul(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OverlapSetting {
    /// Overlap rows fully observed.
    Complete,
    /// Overlap rows keep their vanished entries missing.
    Incomplete,
    /// Overlap rows are missing entries but flagged for completion.
    IncompleteCompleted,
}

impl OverlapSetting {
    pub const ALL: [OverlapSetting; 3] = [
        OverlapSetting::Complete,
        OverlapSetting::Incomplete,
        OverlapSetting::IncompleteCompleted,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            OverlapSetting::Complete => "C",
            OverlapSetting::Incomplete => "I",
            OverlapSetting::IncompleteCompleted => "IC",
        }
    }
}

impl std::fmt::Display for OverlapSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for OverlapSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "C" | "complete" => Ok(Self::Complete),
            "I" | "incomplete" => Ok(Self::Incomplete),
            "IC" | "incomplete_completed" => Ok(Self::IncompleteCompleted),
            other => Err(Error::Config(format!("unknown overlap setting {other:?}"))),
        }
    }
}

/// Timeline of a feature-evolvable stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionScript {
    pub t1: usize,
    pub b: usize,
    pub t2: usize,
    pub d1: usize,
    pub d2: usize,
    pub s_floor: usize,
    /// Per old feature: first round at which it is no longer observed, in
    /// `[T1-b+1, T1+1]`; `T1+1` means it survives the whole overlap.
    pub vanish_round: Vec<usize>,
    /// Standard deviation of additive noise on current-space features.
    pub noise: f64,
    pub seed: u64,
}

const STREAM_PERMUTATION: u64 = 0;
const STREAM_MAP: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of surviving old features at overlap row `i` (1-based), decreasing
/// linearly from `d1` at the first row to `s_floor` at row `b`.
fn surviving(d1: usize, s_floor: usize, b: usize, i: usize) -> usize {
    if b == 1 {
        return s_floor;
    }
    let drop = (d1 - s_floor) as f64 * (i - 1) as f64 / (b - 1) as f64;
    d1 - drop.round() as usize
}

pub fn make_script(
    d1: usize,
    d2: usize,
    b: usize,
    t1: usize,
    t2: usize,
    s_floor: usize,
    seed: u64,
) -> Result<EvolutionScript> {
    ensure!(d1 >= 1 && d2 >= 1, "feature dimensions must be positive");
    ensure!(s_floor >= 1 && s_floor <= d1, "s_floor = {s_floor} must lie in [1, d1 = {d1}]");
    ensure!(b >= 1 && b <= t1, "overlap length b = {b} must lie in [1, T1 = {t1}]");
    ensure!(t2 >= 1, "T2 must be positive");

    let mut order: Vec<usize> = (0..d1).collect();
    order.shuffle(&mut seeded(seed, STREAM_PERMUTATION));

    let first_overlap = t1 - b + 1;
    let mut vanish_round = vec![t1 + 1; d1];
    for (position, &feature) in order.iter().enumerate() {
        if let Some(i) = (1..=b).find(|&i| surviving(d1, s_floor, b, i) <= position) {
            vanish_round[feature] = first_overlap + i - 1;
        }
    }
    Ok(EvolutionScript {
        t1,
        b,
        t2,
        d1,
        d2,
        s_floor,
        vanish_round,
        noise: 0.0,
        seed,
    })
}

impl EvolutionScript {
    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn first_overlap_round(&self) -> usize {
        self.t1 - self.b + 1
    }

    pub fn total_rounds(&self) -> usize {
        self.t1 + self.t2
    }

    pub fn phase(&self, t: usize) -> Phase {
        if t <= self.t1 - self.b {
            Phase::Previous
        } else if t <= self.t1 {
            Phase::Overlap
        } else {
            Phase::Current
        }
    }

    /// Old features observed at round `t` (all of them before the overlap).
    pub fn observed_features(&self, t: usize) -> Vec<usize> {
        (0..self.d1).filter(|&j| t < self.vanish_round[j]).collect()
    }

    /// The Gaussian map is a deterministic function of the seed.
    pub fn gaussian_map(&self) -> GaussianMap {
        GaussianMap::sample(self.d1, self.d2, &mut seeded(self.seed, STREAM_MAP))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let rounds: Vec<String> = self.vanish_round.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "t1={}", self.t1);
        let _ = writeln!(out, "b={}", self.b);
        let _ = writeln!(out, "t2={}", self.t2);
        let _ = writeln!(out, "d1={}", self.d1);
        let _ = writeln!(out, "d2={}", self.d2);
        let _ = writeln!(out, "s_floor={}", self.s_floor);
        let _ = writeln!(out, "noise={}", self.noise);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "vanish_round={}", rounds.join(","));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = crate::config::parse_key_values(text)?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("script is missing {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Config(format!("script key {k} is not an integer")))
        };
        let vanish_round = get("vanish_round")?
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad vanish round {v:?}")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let script = Self {
            t1: num("t1")?,
            b: num("b")?,
            t2: num("t2")?,
            d1: num("d1")?,
            d2: num("d2")?,
            s_floor: num("s_floor")?,
            vanish_round,
            noise: get("noise")?
                .parse()
                .map_err(|_| Error::Config("script noise is not a number".into()))?,
            seed: get("seed")?
                .parse()
                .map_err(|_| Error::Config("script seed is not an integer".into()))?,
        };
        ensure!(
            script.vanish_round.len() == script.d1,
            "script lists {} vanish rounds for d1 = {}",
            script.vanish_round.len(),
            script.d1
        );
        Ok(script)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Previous,
    Overlap,
    Current,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Previous => "A",
            Phase::Overlap => "overlap",
            Phase::Current => "B",
        }
    }
}

/// One round of an evolving stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasedInstance {
    /// 1-based round index.
    pub t: usize,
    pub old_features: Option<ObservedRow>,
    pub new_features: Option<Vector>,
    pub label: f64,
    /// Overlap row that should be passed through completion.
    pub needs_completion: bool,
}

pub fn synthesize_stream(
    data: &Dataset,
    script: &EvolutionScript,
    setting: OverlapSetting,
) -> Result<Vec<PhasedInstance>> {
    ensure!(
        data.len() >= script.total_rounds(),
        "dataset has {} rows but the script needs T1 + T2 = {}",
        data.len(),
        script.total_rounds()
    );
    ensure!(
        data.dim() == script.d1,
        "dataset has {} features but the script expects d1 = {}",
        data.dim(),
        script.d1
    );
    let map = script.gaussian_map();
    let mut noise_rng = seeded(script.seed, STREAM_NOISE);
    let noise = if script.noise > 0.0 {
        Some(Normal::new(0.0, script.noise).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };

    let mut stream = Vec::with_capacity(script.total_rounds());
    for t in 1..=script.total_rounds() {
        let x: Vec<f64> = data.features.row(t - 1).iter().copied().collect();
        let phase = script.phase(t);
        let old_features = match phase {
            Phase::Previous => Some(ObservedRow::full(&x)),
            Phase::Overlap if setting == OverlapSetting::Complete => Some(ObservedRow::full(&x)),
            Phase::Overlap => {
                let keep = script.observed_features(t);
                let values = keep.iter().map(|&j| x[j]).collect();
                Some(ObservedRow::new(script.d1, keep, values)?)
            }
            Phase::Current => None,
        };
        let new_features = match phase {
            Phase::Previous => None,
            Phase::Overlap | Phase::Current => {
                let mut z = map.apply(&Vector::from_vec(x))?;
                if let Some(dist) = &noise {
                    z.apply(|v| *v += dist.sample(&mut noise_rng));
                }
                Some(z)
            }
        };
        stream.push(PhasedInstance {
            t,
            old_features,
            new_features,
            label: data.labels[t - 1],
            needs_completion: phase == Phase::Overlap
                && setting == OverlapSetting::IncompleteCompleted,
        });
    }
    Ok(stream)
}

/// Columns: `t, phase, observed_old_indices, observed_old_values,
/// new_0..new_{d2-1}, label`. Index and value lists are `;`-separated.
pub fn write_stream_csv<W: Write>(
    stream: &[PhasedInstance],
    script: &EvolutionScript,
    out: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec![
        "t".to_string(),
        "phase".into(),
        "observed_old_indices".into(),
        "observed_old_values".into(),
    ];
    header.extend((0..script.d2).map(|j| format!("new_{j}")));
    header.push("label".into());
    wtr.write_record(&header)?;
    for inst in stream {
        let mut rec = vec![inst.t.to_string(), script.phase(inst.t).tag().to_string()];
        match &inst.old_features {
            Some(row) => {
                rec.push(join(row.indices().iter()));
                rec.push(join(row.values().iter()));
            }
            None => rec.extend([String::new(), String::new()]),
        }
        match &inst.new_features {
            Some(z) => rec.extend(z.iter().map(|v| v.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), script.d2)),
        }
        rec.push(inst.label.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Classification data whose features span a `rank`-dimensional subspace.
///
/// Features are `Z W^T` with standard normal latent factors `Z` (`n x rank`)
/// and a random orthonormal `W` (`d x rank`), rescaled so rows have unit
/// expected squared norm per latent factor. Labels are the sign of a random
/// linear function of the latent factors; a `label_noise` fraction is
/// flipped.
pub fn low_rank_classification<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rank: usize,
    label_noise: f64,
    rng: &mut R,
) -> Result<Dataset> {
    ensure!(rank >= 1 && rank <= d, "rank {rank} must lie in [1, d = {d}]");
    ensure!((0.0..=0.5).contains(&label_noise), "label noise must lie in [0, 0.5]");
    let raw = Matrix::from_fn(d, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = raw.qr().q();
    let latent = Matrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let direction = Vector::from_fn(rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let features = &latent * w.transpose();
    let labels = Vector::from_fn(n, |i, _| {
        let y = if latent.row(i).transpose().dot(&direction) >= 0.0 {
            1.0
        } else {
            -1.0
        };
        if rng.random::<f64>() < label_noise {
            -y
        } else {
            y
        }
    });
    Ok(Dataset { features, labels })
}

/// Sensor-style regression stream: each feature is a smooth periodic
/// trajectory of a shared latent state plus Gaussian noise, and the target
/// is a noisy linear read-out of the latent state scaled to `[-1, 1]`.
pub fn sensor_regression<R: Rng + ?Sized>(n: usize, d: usize, noise: f64, rng: &mut R) -> Result<Dataset> {
    ensure!(d >= 1, "need at least one feature");
    ensure!(noise >= 0.0, "noise must be nonnegative");
    let latent_dim = 2;
    let freqs: Vec<f64> = (0..latent_dim).map(|_| rng.random_range(0.005..0.05)).collect();
    let phases: Vec<f64> = (0..latent_dim)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let mixing = Matrix::from_fn(d, 2 * latent_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let readout = Vector::from_fn(2 * latent_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vector::zeros(n);
    for i in 0..n {
        let state = Vector::from_fn(2 * latent_dim, |k, _| {
            let angle = freqs[k / 2] * i as f64 + phases[k / 2];
            if k % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        });
        let row = &mixing * &state;
        for j in 0..d {
            features[(i, j)] = row[j] + if noise > 0.0 { jitter.sample(rng) } else { 0.0 };
        }
        labels[i] = readout.dot(&state) + if noise > 0.0 { jitter.sample(rng) } else { 0.0 };
    }
    let mut data = Dataset { features, labels };
    data.scale_labels();
    Ok(data)
}
