//! Benchmark execution on top of a [`ResultStore`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context;
use qforecast_core::chaosdata::{benchmark_dataset, WindowedDataset};
use qforecast_core::trainer::{
    ansatz_search, grid_search, train, AnsatzSearchResult, GridResult, RunRecord, RunSource, Task,
    TrainConfig,
};
use qforecast_core::{build_model, Error, ModelKind, ModelSpec};

use crate::config::BenchmarkConfig;
use crate::store::{unit_key, ResultStore};

/// Counters shared by every runner of one benchmark invocation.
#[derive(Debug, Default)]
pub struct RunCounters {
    pub trained: AtomicUsize,
    pub cached: AtomicUsize,
    /// New trainings still allowed; `None` means unlimited.
    budget: Option<AtomicUsize>,
}

impl RunCounters {
    pub fn with_budget(max_new_runs: Option<usize>) -> Self {
        RunCounters {
            budget: max_new_runs.map(AtomicUsize::new),
            ..Default::default()
        }
    }

    fn take_slot(&self) -> bool {
        match &self.budget {
            None => true,
            Some(b) => b
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok(),
        }
    }

    pub fn trained(&self) -> usize {
        self.trained.load(Ordering::SeqCst)
    }

    pub fn cached(&self) -> usize {
        self.cached.load(Ordering::SeqCst)
    }
}

/// A [`RunSource`] that reads finished units from the store and persists new ones.
pub struct CachedRunner<'a> {
    pub data: &'a WindowedDataset,
    pub task: Task,
    pub config: TrainConfig,
    pub store: &'a ResultStore,
    pub counters: &'a RunCounters,
}

fn failed_record(spec: &ModelSpec, task: &Task, seed: u64, err: &Error) -> RunRecord {
    RunRecord {
        spec: spec.clone(),
        task: task.clone(),
        seed,
        epochs_run: 0,
        hit_cap: false,
        failure: Some(err.to_string()),
        train_mse: None,
        val_mse: None,
        test_mse: None,
        val_history: Vec::new(),
        params: build_model(spec)
            .map(|m| m.param_counts())
            .unwrap_or_default(),
        wall_time_s: 0.0,
    }
}

impl RunSource for CachedRunner<'_> {
    fn task(&self) -> &Task {
        &self.task
    }

    fn run(&self, spec: &ModelSpec, seed: u64) -> qforecast_core::Result<RunRecord> {
        let key = unit_key(&self.task, spec, seed);
        if let Some(r) = self.store.get(&key) {
            self.counters.cached.fetch_add(1, Ordering::SeqCst);
            return Ok(r);
        }
        if !self.counters.take_slot() {
            return Err(Error::Resource("new-run budget exhausted".into()));
        }
        let record = match build_model(spec)
            .and_then(|m| train(m.as_ref(), self.data, &self.task, seed, &self.config))
        {
            Ok(r) => r,
            Err(e) => {
                log::error!("{key}: {e}");
                failed_record(spec, &self.task, seed, &e)
            }
        };
        if let Some(f) = &record.failure {
            log::warn!("{key}: run failed: {f}");
        }
        self.store
            .append(&record)
            .map_err(|e| Error::Resource(format!("persisting {key}: {e:#}")))?;
        self.counters.trained.fetch_add(1, Ordering::SeqCst);
        log::info!(
            "{key}: {} epochs, test mse {}",
            record.epochs_run,
            record.test_mse.map_or("-".into(), |m| m.to_string())
        );
        Ok(record)
    }
}

/// Outcome of one `(task, model)` slice.
pub enum SliceOutcome {
    Grid(GridResult),
    Ansatz(Box<AnsatzSearchResult>),
}

impl SliceOutcome {
    pub fn grid(&self) -> &GridResult {
        match self {
            SliceOutcome::Grid(g) => g,
            SliceOutcome::Ansatz(a) => &a.stage2,
        }
    }
}

pub struct BenchmarkSummary {
    pub trained: usize,
    pub cached: usize,
    pub slices: BTreeMap<(Task, ModelKind), SliceOutcome>,
}

/// The benchmark grid of `kind` for a task, checked against the standard
/// grids unless the config allows otherwise.
pub fn slice_grid(
    config: &BenchmarkConfig,
    kind: ModelKind,
    task: &Task,
    data_dim: usize,
) -> anyhow::Result<Vec<ModelSpec>> {
    let grid = config.grid(kind, task.seq_len, data_dim);
    for spec in &grid {
        if config.allow_off_grid {
            spec.validate()?;
        } else {
            spec.validate_benchmark()?;
        }
    }
    Ok(grid)
}

/// Runs one `(task, model)` slice: a grid search, or the ansatz search for ru-QNN.
pub fn run_slice(
    config: &BenchmarkConfig,
    source: &dyn RunSource,
    kind: ModelKind,
    data_dim: usize,
) -> qforecast_core::Result<SliceOutcome> {
    if kind == ModelKind::Ruqnn {
        return ansatz_search(source, data_dim, &config.ansatz, &config.seeds)
            .map(|r| SliceOutcome::Ansatz(Box::new(r)));
    }
    let grid = slice_grid(config, kind, source.task(), data_dim)
        .map_err(|e| Error::Config(format!("{e:#}")))?;
    grid_search(source, &grid, &config.seeds).map(SliceOutcome::Grid)
}

fn is_budget_stop(e: &Error) -> bool {
    matches!(e, Error::Resource(m) if m == "new-run budget exhausted")
}

/// Runs every configured `(task, model)` slice into `out`. Finished units
/// already in `out` are reused, so an interrupted run picks up where it
/// stopped. `max_new_runs` stops the batch after that many trainings.
pub fn run_benchmark(
    config: &BenchmarkConfig,
    out: &Path,
    jobs: Option<usize>,
    resume: bool,
    max_new_runs: Option<usize>,
) -> anyhow::Result<BenchmarkSummary> {
    let store = ResultStore::open(out)?;
    store.bind_config(config, resume)?;
    let threads = jobs
        .or(config.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    let counters = RunCounters::with_budget(max_new_runs);
    let mut slices = BTreeMap::new();

    for (gen, task) in config.tasks() {
        let data = benchmark_dataset(gen, task.seq_len, task.steps)
            .with_context(|| format!("building {task}"))?;
        let runner = CachedRunner {
            data: &data,
            task: task.clone(),
            config: config.train.clone(),
            store: &store,
            counters: &counters,
        };
        for &kind in &config.models {
            log::info!("{task} {kind}: starting");
            match pool.install(|| run_slice(config, &runner, kind, gen.dim())) {
                Ok(outcome) => {
                    let w = outcome.grid().winner();
                    log::info!(
                        "{task} {kind}: best {} (median val mse {})",
                        w.spec.hyperparams,
                        w.median_val_mse
                    );
                    slices.insert((task.clone(), kind), outcome);
                }
                Err(e) if is_budget_stop(&e) => {
                    log::warn!(
                        "stopping: new-run budget exhausted after {} trainings",
                        counters.trained()
                    );
                    return Err(anyhow::anyhow!("interrupted: new-run budget exhausted"));
                }
                Err(e @ Error::Resource(_)) => return Err(e.into()),
                Err(e) => log::error!("{task} {kind}: {e}"),
            }
        }
    }
    Ok(BenchmarkSummary {
        trained: counters.trained(),
        cached: counters.cached(),
        slices,
    })
}
