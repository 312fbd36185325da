//! Training loop, convergence test, seed replication and model selection.

use std::cmp::Ordering;
use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaosdata::WindowedDataset;
use crate::error::{config_err, Result};
use crate::mlcore::{AdamConfig, AdamState};
use crate::model::{build_model, Forecaster, ParamCounts};
use crate::qmodels::{sample_ansatz, AnsatzDescriptor, Hyperparams, ModelKind, ModelSpec};

/// Seeds used for every replicated setting.
pub const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
/// Validation history inspected by [`converged`].
pub const CONVERGENCE_WINDOW: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub max_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            adam: AdamConfig::default(),
            max_epochs: 10_000,
        }
    }
}

/// A learning task: dataset, sequence length and prediction horizon.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Task {
    pub dataset: String,
    pub seq_len: usize,
    pub steps: usize,
}

impl Task {
    pub fn new(dataset: impl Into<String>, seq_len: usize, steps: usize) -> Self {
        Task {
            dataset: dataset.into(),
            seq_len,
            steps,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/l{}/k{}", self.dataset, self.seq_len, self.steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: ModelSpec,
    pub task: Task,
    pub seed: u64,
    pub epochs_run: usize,
    pub hit_cap: bool,
    /// Set when training hit a non-finite loss or gradient.
    pub failure: Option<String>,
    pub train_mse: Option<f64>,
    pub val_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub val_history: Vec<f64>,
    pub params: ParamCounts,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// True when the mean of the last 200 validation losses is within
/// `σ₂ / (2√200)` of the mean of the 200 before them, `σ₂` being the
/// population standard deviation of the last 200.
pub fn converged(val_losses: &[f64]) -> bool {
    if val_losses.len() < CONVERGENCE_WINDOW {
        return false;
    }
    let half = CONVERGENCE_WINDOW / 2;
    let tail = &val_losses[val_losses.len() - CONVERGENCE_WINDOW..];
    let (first, second) = tail.split_at(half);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mu1, mu2) = (mean(first), mean(second));
    let sigma2 = (second.iter().map(|x| (x - mu2).powi(2)).sum::<f64>() / half as f64).sqrt();
    (mu1 - mu2).abs() <= sigma2 / (2.0 * (half as f64).sqrt())
}

/// Mean squared error over every entry of every tuple in `range`.
pub fn evaluate_mse(
    model: &dyn Forecaster,
    params: &[f64],
    data: &WindowedDataset,
    range: std::ops::Range<usize>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in range {
        let y = model.predict(params, &data.inputs[i])?;
        total += y
            .iter()
            .zip(&data.labels[i])
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>();
        count += y.len();
    }
    Ok(if count == 0 {
        0.0
    } else {
        total / count as f64
    })
}

fn check_shapes(model: &dyn Forecaster, data: &WindowedDataset) -> Result<()> {
    let spec = model.spec();
    if spec.seq_len != data.seq_len || spec.data_dim != data.dim {
        return Err(config_err!(
            "model expects l={} d={}, dataset has l={} d={}",
            spec.seq_len,
            spec.data_dim,
            data.seq_len,
            data.dim
        ));
    }
    if data.train.is_empty() || data.val.is_empty() {
        return Err(config_err!(
            "dataset has an empty train or validation split"
        ));
    }
    Ok(())
}

/// Trains from the seed's initialization and returns the record together
/// with the final parameters.
pub fn train_with_params(
    model: &dyn Forecaster,
    data: &WindowedDataset,
    task: &Task,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<(RunRecord, Vec<f64>)> {
    check_shapes(model, data)?;
    let start = Instant::now();
    let mut params = model.init_params(seed);
    let mut adam = AdamState::new(params.len(), cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = data.train.clone().collect();
    let mut grad = vec![0.0; params.len()];
    let mut history = Vec::new();
    let mut failure = None;
    let mut hit_cap = false;

    'epochs: loop {
        if history.len() >= cfg.max_epochs {
            hit_cap = true;
            break;
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            grad.fill(0.0);
            let scale = 2.0 / (batch.len() * data.dim) as f64;
            let mut loss = 0.0;
            for &i in batch {
                let target = &data.labels[i];
                let mut d_output = |y: &[f64]| -> Vec<f64> {
                    loss += y
                        .iter()
                        .zip(target)
                        .map(|(p, t)| (p - t).powi(2))
                        .sum::<f64>();
                    y.iter().zip(target).map(|(p, t)| scale * (p - t)).collect()
                };
                model.backprop(&params, &data.inputs[i], &mut d_output, &mut grad)?;
            }
            if !loss.is_finite() {
                failure = Some(format!(
                    "non-finite training loss in epoch {}",
                    history.len() + 1
                ));
                break 'epochs;
            }
            if let Err(e) = adam.step(&mut params, &grad) {
                failure = Some(e.to_string());
                break 'epochs;
            }
        }
        let val = evaluate_mse(model, &params, data, data.val.clone())?;
        if !val.is_finite() {
            failure = Some(format!(
                "non-finite validation loss in epoch {}",
                history.len() + 1
            ));
            break;
        }
        history.push(val);
        if converged(&history) {
            break;
        }
    }

    let (train_mse, val_mse, test_mse) = if failure.is_some() {
        (None, None, None)
    } else {
        (
            Some(evaluate_mse(model, &params, data, data.train.clone())?),
            Some(evaluate_mse(model, &params, data, data.val.clone())?),
            Some(evaluate_mse(model, &params, data, data.test.clone())?),
        )
    };
    let record = RunRecord {
        spec: model.spec().clone(),
        task: task.clone(),
        seed,
        epochs_run: history.len(),
        hit_cap,
        failure,
        train_mse,
        val_mse,
        test_mse,
        val_history: history,
        params: model.param_counts(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((record, params))
}

pub fn train(
    model: &dyn Forecaster,
    data: &WindowedDataset,
    task: &Task,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    train_with_params(model, data, task, seed, cfg).map(|(r, _)| r)
}

/// Source of training outcomes for one task. The benchmark runner wraps this
/// with persistence so finished units are read back instead of retrained.
pub trait RunSource: Sync {
    fn task(&self) -> &Task;
    fn run(&self, spec: &ModelSpec, seed: u64) -> Result<RunRecord>;
}

/// Trains every unit directly.
pub struct DirectRunner<'a> {
    pub data: &'a WindowedDataset,
    pub task: Task,
    pub config: TrainConfig,
}

impl RunSource for DirectRunner<'_> {
    fn task(&self) -> &Task {
        &self.task
    }

    fn run(&self, spec: &ModelSpec, seed: u64) -> Result<RunRecord> {
        let model = build_model(spec)?;
        train(model.as_ref(), self.data, &self.task, seed, &self.config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub spec: ModelSpec,
    pub task: Task,
    pub params: ParamCounts,
    pub median_val_mse: f64,
    pub median_test_mse: f64,
    pub mad_test_mse: f64,
    pub n_failed: usize,
    pub runs: Vec<RunRecord>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    median(&values.iter().map(|x| (x - m).abs()).collect::<Vec<_>>())
}

/// Aggregates per-seed runs; failed runs are counted and left out of the statistics.
pub fn aggregate(
    spec: &ModelSpec,
    task: &Task,
    params: ParamCounts,
    mut runs: Vec<RunRecord>,
) -> AggregateRecord {
    runs.sort_by_key(|r| r.seed);
    let ok: Vec<&RunRecord> = runs.iter().filter(|r| r.succeeded()).collect();
    let val: Vec<f64> = ok.iter().filter_map(|r| r.val_mse).collect();
    let test: Vec<f64> = ok.iter().filter_map(|r| r.test_mse).collect();
    AggregateRecord {
        spec: spec.clone(),
        task: task.clone(),
        params,
        median_val_mse: median(&val),
        median_test_mse: median(&test),
        mad_test_mse: mad(&test),
        n_failed: runs.len() - ok.len(),
        runs,
    }
}

fn param_counts_of(spec: &ModelSpec) -> Result<ParamCounts> {
    Ok(build_model(spec)?.param_counts())
}

/// Runs every `(spec, seed)` unit, in parallel on the current rayon pool.
pub fn run_units(source: &dyn RunSource, units: &[(ModelSpec, u64)]) -> Result<Vec<RunRecord>> {
    units
        .par_iter()
        .map(|(spec, seed)| source.run(spec, *seed))
        .collect()
}

pub fn run_seeds(
    source: &dyn RunSource,
    spec: &ModelSpec,
    seeds: &[u64],
) -> Result<AggregateRecord> {
    let units: Vec<(ModelSpec, u64)> = seeds.iter().map(|&s| (spec.clone(), s)).collect();
    let runs = run_units(source, &units)?;
    Ok(aggregate(spec, source.task(), param_counts_of(spec)?, runs))
}

/// Orders candidates best-first: median validation MSE (NaN last), then
/// fewer parameters, then hyperparameters in lexicographic order.
pub fn compare_candidates(a: &AggregateRecord, b: &AggregateRecord) -> Ordering {
    let key = |r: &AggregateRecord| {
        if r.median_val_mse.is_nan() {
            f64::INFINITY
        } else {
            r.median_val_mse
        }
    };
    key(a)
        .total_cmp(&key(b))
        .then(a.params.total().cmp(&b.params.total()))
        .then_with(|| {
            a.spec
                .hyperparams
                .ordering_key()
                .cmp(&b.spec.hyperparams.ordering_key())
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: usize,
    pub records: Vec<AggregateRecord>,
}

impl GridResult {
    pub fn winner(&self) -> &AggregateRecord {
        &self.records[self.best]
    }
}

pub fn select_best(records: Vec<AggregateRecord>) -> Result<GridResult> {
    let best = (0..records.len())
        .min_by(|&a, &b| compare_candidates(&records[a], &records[b]))
        .ok_or_else(|| config_err!("empty grid"))?;
    Ok(GridResult { best, records })
}

/// Replicates every grid point over `seeds` and picks the best by median
/// validation MSE.
pub fn grid_search(
    source: &dyn RunSource,
    grid: &[ModelSpec],
    seeds: &[u64],
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(config_err!("empty grid"));
    }
    let units: Vec<(ModelSpec, u64)> = grid
        .iter()
        .flat_map(|s| seeds.iter().map(move |&k| (s.clone(), k)))
        .collect();
    let mut runs = run_units(source, &units)?.into_iter();
    let mut records = Vec::with_capacity(grid.len());
    for spec in grid {
        let mine: Vec<RunRecord> = runs.by_ref().take(seeds.len()).collect();
        records.push(aggregate(spec, source.task(), param_counts_of(spec)?, mine));
    }
    select_best(records)
}

/// The benchmark grid of `kind` for a task shape.
pub fn benchmark_grid(kind: ModelKind, seq_len: usize, data_dim: usize) -> Vec<ModelSpec> {
    kind.grid()
        .into_iter()
        .map(|h| ModelSpec::new(h, seq_len, data_dim))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSearchConfig {
    pub n_circuits: usize,
    pub qubit_counts: Vec<usize>,
    pub finalists: usize,
    pub sampler_seed: u64,
}

impl Default for AnsatzSearchConfig {
    fn default() -> Self {
        AnsatzSearchConfig {
            n_circuits: 100,
            qubit_counts: vec![4, 6, 8],
            finalists: 10,
            sampler_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSearchResult {
    pub ansatze: Vec<AnsatzDescriptor>,
    /// One seed-0 run per `(ansatz, qubit count)` candidate.
    pub stage1: Vec<RunRecord>,
    pub stage2: GridResult,
}

impl AnsatzSearchResult {
    pub fn winner(&self) -> &AggregateRecord {
        self.stage2.winner()
    }
}

/// Samples the ansätze a search with `cfg` evaluates.
pub fn search_ansatze(data_dim: usize, cfg: &AnsatzSearchConfig) -> Vec<AnsatzDescriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler_seed);
    (0..cfg.n_circuits)
        .map(|_| sample_ansatz(data_dim, &mut rng))
        .collect()
}

/// Two-stage random ansatz search: every sampled ansatz is trained once (seed
/// 0) at each qubit count, then the best candidates by validation MSE are
/// replicated over `seeds`.
pub fn ansatz_search(
    source: &dyn RunSource,
    data_dim: usize,
    cfg: &AnsatzSearchConfig,
    seeds: &[u64],
) -> Result<AnsatzSearchResult> {
    let task = source.task().clone();
    let ansatze = search_ansatze(data_dim, cfg);
    let candidates: Vec<(ModelSpec, u64)> = ansatze
        .iter()
        .flat_map(|a| {
            cfg.qubit_counts.iter().map(|&n| {
                (
                    ModelSpec::new(
                        Hyperparams::Ruqnn {
                            n_qubits: n,
                            ansatz: a.clone(),
                        },
                        task.seq_len,
                        data_dim,
                    ),
                    0,
                )
            })
        })
        .collect();
    let stage1 = run_units(source, &candidates)?;
    let mut ranked: Vec<&RunRecord> = stage1.iter().filter(|r| r.val_mse.is_some()).collect();
    ranked.sort_by(|a, b| {
        a.val_mse
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.val_mse.unwrap_or(f64::INFINITY))
            .then(a.params.total().cmp(&b.params.total()))
    });
    let finalists: Vec<ModelSpec> = ranked
        .iter()
        .take(cfg.finalists)
        .map(|r| r.spec.clone())
        .collect();
    let stage2 = grid_search(source, &finalists, seeds)?;
    Ok(AnsatzSearchResult {
        ansatze,
        stage1,
        stage2,
    })
}
