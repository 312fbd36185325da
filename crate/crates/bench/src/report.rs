//! Rankings and CSV exports, computed purely from a results directory.
//!
//! CSV schemas (one header row, rows sorted as listed):
//!
//! | file | columns | rows |
//! |---|---|---|
//! | `mse_by_task.csv` | dataset,l,k,model,hyperparams,n_params,median_val_mse,median_test_mse,mad_test_mse,n_failed | best grid point per task and model |
//! | `mse_vs_seqlen.csv` | dataset,k,model,l,hyperparams,median_test_mse,mad_test_mse | best grid point, sorted by sequence length last |
//! | `mse_vs_params.csv` | dataset,l,k,model,hyperparams,n_params,median_test_mse,mad_test_mse | every complete grid point |
//! | `ranking.csv` | model,average_rank,n_tasks | models by average rank |
//! | `ranking_by_task.csv` | dataset,l,k,model,rank,median_test_mse | tasks, then rank |
//!
//! Floats use the shortest decimal form that reads back to the same double.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use qforecast_core::trainer::{
    aggregate, compare_candidates, AggregateRecord, RunRecord, Task, SEEDS,
};
use qforecast_core::{build_model, ModelKind, ModelSpec};
use serde::Serialize;

use crate::config::BenchmarkConfig;
use crate::runner::slice_grid;
use crate::store::{load_records, read_manifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ReportKind {
    MseByTask,
    MseVsSeqlen,
    MseVsParams,
    Ranking,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::MseByTask => "mse_by_task",
            ReportKind::MseVsSeqlen => "mse_vs_seqlen",
            ReportKind::MseVsParams => "mse_vs_params",
            ReportKind::Ranking => "ranking",
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Aggregated view of a results directory.
pub struct Results {
    pub config: BenchmarkConfig,
    /// Grid points with a record for every configured seed, in report order.
    pub candidates: Vec<AggregateRecord>,
    pub warnings: Vec<String>,
}

fn candidate_order(a: &AggregateRecord, b: &AggregateRecord) -> std::cmp::Ordering {
    a.task
        .cmp(&b.task)
        .then(a.spec.kind().cmp(&b.spec.kind()))
        .then_with(|| {
            a.spec
                .hyperparams
                .ordering_key()
                .cmp(&b.spec.hyperparams.ordering_key())
        })
}

pub fn load_results(dir: &Path) -> anyhow::Result<Results> {
    let config = read_manifest(dir)?.unwrap_or_else(|| BenchmarkConfig {
        seeds: SEEDS.to_vec(),
        ..Default::default()
    });
    let records = load_records(dir)?;
    let mut groups: BTreeMap<(Task, String), (ModelSpec, Vec<RunRecord>)> = BTreeMap::new();
    for r in records.into_values() {
        groups
            .entry((r.task.clone(), r.spec.hyperparams.to_string()))
            .or_insert_with(|| (r.spec.clone(), Vec::new()))
            .1
            .push(r);
    }

    let mut candidates = Vec::new();
    let mut warnings = Vec::new();
    for ((task, name), (spec, runs)) in groups {
        let have: Vec<u64> = config
            .seeds
            .iter()
            .copied()
            .filter(|s| runs.iter().any(|r| r.seed == *s))
            .collect();
        if have.len() < config.seeds.len() {
            // screening runs of the ansatz search are single-seed by design
            if spec.kind() != ModelKind::Ruqnn {
                warnings.push(format!(
                    "{task} {name}: {} of {} seeds present",
                    have.len(),
                    config.seeds.len()
                ));
            }
            continue;
        }
        let runs: Vec<RunRecord> = runs
            .into_iter()
            .filter(|r| config.seeds.contains(&r.seed))
            .collect();
        let params = match build_model(&spec) {
            Ok(m) => m.param_counts(),
            Err(_) => runs[0].params,
        };
        candidates.push(aggregate(&spec, &task, params, runs));
    }
    candidates.sort_by(candidate_order);

    for (gen, task) in config.tasks() {
        for &kind in &config.models {
            let present: Vec<&AggregateRecord> = candidates
                .iter()
                .filter(|c| c.task == task && c.spec.kind() == kind)
                .collect();
            if present.is_empty() {
                warnings.push(format!("{task} {kind}: no complete results"));
                continue;
            }
            if kind == ModelKind::Ruqnn {
                continue;
            }
            for spec in slice_grid(&config, kind, &task, gen.dim()).unwrap_or_default() {
                if !present
                    .iter()
                    .any(|c| c.spec.hyperparams == spec.hyperparams)
                {
                    warnings.push(format!("{task} {}: missing", spec.hyperparams));
                }
            }
        }
    }
    warnings.sort();
    warnings.dedup();
    Ok(Results {
        config,
        candidates,
        warnings,
    })
}

impl Results {
    /// Best grid point per `(task, model)` by median validation MSE.
    pub fn winners(&self) -> Vec<&AggregateRecord> {
        let mut best: BTreeMap<(Task, ModelKind), &AggregateRecord> = BTreeMap::new();
        for c in &self.candidates {
            best.entry((c.task.clone(), c.spec.kind()))
                .and_modify(|b| {
                    if compare_candidates(c, b).is_lt() {
                        *b = c;
                    }
                })
                .or_insert(c);
        }
        best.into_values().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankEntry {
    pub model: ModelKind,
    pub rank: usize,
    pub median_test_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskRanking {
    pub task: Task,
    pub entries: Vec<RankEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AverageRank {
    pub model: ModelKind,
    pub average_rank: f64,
    pub n_tasks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingTable {
    pub tasks: Vec<TaskRanking>,
    pub models: Vec<AverageRank>,
}

fn mse_key(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

/// Ranks each task's models by the median test MSE of their winning grid
/// point. Equal MSEs share the lower rank and the next rank is skipped.
pub fn rank_models(winners: &[&AggregateRecord]) -> RankingTable {
    let mut by_task: BTreeMap<&Task, Vec<(ModelKind, f64)>> = BTreeMap::new();
    for w in winners {
        by_task
            .entry(&w.task)
            .or_default()
            .push((w.spec.kind(), w.median_test_mse));
    }
    let mut tasks = Vec::new();
    let mut totals: BTreeMap<ModelKind, (usize, usize)> = BTreeMap::new();
    for (task, mut rows) in by_task {
        rows.sort_by(|a, b| mse_key(a.1).total_cmp(&mse_key(b.1)).then(a.0.cmp(&b.0)));
        let mut entries: Vec<RankEntry> = Vec::with_capacity(rows.len());
        for (i, &(model, mse)) in rows.iter().enumerate() {
            let rank = match entries.last() {
                Some(prev) if mse_key(prev.median_test_mse) == mse_key(mse) => prev.rank,
                _ => i + 1,
            };
            let t = totals.entry(model).or_default();
            t.0 += rank;
            t.1 += 1;
            entries.push(RankEntry {
                model,
                rank,
                median_test_mse: mse,
            });
        }
        tasks.push(TaskRanking {
            task: task.clone(),
            entries,
        });
    }
    let mut models: Vec<AverageRank> = totals
        .into_iter()
        .map(|(model, (sum, n))| AverageRank {
            model,
            average_rank: sum as f64 / n as f64,
            n_tasks: n,
        })
        .collect();
    models.sort_by(|a, b| {
        a.average_rank
            .total_cmp(&b.average_rank)
            .then(a.model.cmp(&b.model))
    });
    RankingTable { tasks, models }
}

impl fmt::Display for RankingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>12} {:>7}", "model", "average rank", "tasks")?;
        for m in &self.models {
            writeln!(
                f,
                "{:<10} {:>12.3} {:>7}",
                m.model.name(),
                m.average_rank,
                m.n_tasks
            )?;
        }
        Ok(())
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    x.to_string()
}

#[derive(Serialize)]
struct ByTaskRow {
    dataset: String,
    l: usize,
    k: usize,
    model: &'static str,
    hyperparams: String,
    n_params: usize,
    median_val_mse: String,
    median_test_mse: String,
    mad_test_mse: String,
    n_failed: usize,
}

#[derive(Serialize)]
struct SeqLenRow {
    dataset: String,
    k: usize,
    model: &'static str,
    l: usize,
    hyperparams: String,
    median_test_mse: String,
    mad_test_mse: String,
}

#[derive(Serialize)]
struct ParamsRow {
    dataset: String,
    l: usize,
    k: usize,
    model: &'static str,
    hyperparams: String,
    n_params: usize,
    median_test_mse: String,
    mad_test_mse: String,
}

#[derive(Serialize)]
struct RankingRow {
    model: &'static str,
    average_rank: String,
    n_tasks: usize,
}

#[derive(Serialize)]
struct TaskRankRow {
    dataset: String,
    l: usize,
    k: usize,
    model: &'static str,
    rank: usize,
    median_test_mse: String,
}

/// Writes the CSV file(s) of `kind` into `<dir>/reports/` and returns their
/// paths. Missing slices are listed in `<kind>.warnings.txt` next to them.
pub fn export_report(dir: &Path, kind: ReportKind) -> anyhow::Result<Vec<PathBuf>> {
    let results = load_results(dir)?;
    let out = dir.join("reports");
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> anyhow::Result<()>| -> anyhow::Result<()> {
        let path = out.join(format!("{name}.csv"));
        f(&path)?;
        written.push(path);
        Ok(())
    };
    match kind {
        ReportKind::MseByTask => emit("mse_by_task", &|p| {
            let rows: Vec<ByTaskRow> = results
                .winners()
                .into_iter()
                .map(|w| ByTaskRow {
                    dataset: w.task.dataset.clone(),
                    l: w.task.seq_len,
                    k: w.task.steps,
                    model: w.spec.kind().name(),
                    hyperparams: w.spec.hyperparams.label(),
                    n_params: w.params.total(),
                    median_val_mse: num(w.median_val_mse),
                    median_test_mse: num(w.median_test_mse),
                    mad_test_mse: num(w.mad_test_mse),
                    n_failed: w.n_failed,
                })
                .collect();
            write_csv(p, &rows)
        })?,
        ReportKind::MseVsSeqlen => emit("mse_vs_seqlen", &|p| {
            let mut winners = results.winners();
            winners.sort_by(|a, b| {
                (&a.task.dataset, a.task.steps, a.spec.kind(), a.task.seq_len).cmp(&(
                    &b.task.dataset,
                    b.task.steps,
                    b.spec.kind(),
                    b.task.seq_len,
                ))
            });
            let rows: Vec<SeqLenRow> = winners
                .into_iter()
                .map(|w| SeqLenRow {
                    dataset: w.task.dataset.clone(),
                    k: w.task.steps,
                    model: w.spec.kind().name(),
                    l: w.task.seq_len,
                    hyperparams: w.spec.hyperparams.label(),
                    median_test_mse: num(w.median_test_mse),
                    mad_test_mse: num(w.mad_test_mse),
                })
                .collect();
            write_csv(p, &rows)
        })?,
        ReportKind::MseVsParams => emit("mse_vs_params", &|p| {
            let rows: Vec<ParamsRow> = results
                .candidates
                .iter()
                .map(|c| ParamsRow {
                    dataset: c.task.dataset.clone(),
                    l: c.task.seq_len,
                    k: c.task.steps,
                    model: c.spec.kind().name(),
                    hyperparams: c.spec.hyperparams.label(),
                    n_params: c.params.total(),
                    median_test_mse: num(c.median_test_mse),
                    mad_test_mse: num(c.mad_test_mse),
                })
                .collect();
            write_csv(p, &rows)
        })?,
        ReportKind::Ranking => {
            let table = rank_models(&results.winners());
            emit("ranking", &|p| {
                let rows: Vec<RankingRow> = table
                    .models
                    .iter()
                    .map(|m| RankingRow {
                        model: m.model.name(),
                        average_rank: num(m.average_rank),
                        n_tasks: m.n_tasks,
                    })
                    .collect();
                write_csv(p, &rows)
            })?;
            emit("ranking_by_task", &|p| {
                let rows: Vec<TaskRankRow> = table
                    .tasks
                    .iter()
                    .flat_map(|t| {
                        t.entries.iter().map(|e| TaskRankRow {
                            dataset: t.task.dataset.clone(),
                            l: t.task.seq_len,
                            k: t.task.steps,
                            model: e.model.name(),
                            rank: e.rank,
                            median_test_mse: num(e.median_test_mse),
                        })
                    })
                    .collect();
                write_csv(p, &rows)
            })?;
        }
    }
    let warn_path = out.join(format!("{kind}.warnings.txt"));
    if results.warnings.is_empty() {
        if warn_path.exists() {
            fs::remove_file(&warn_path)?;
        }
    } else {
        log::warn!(
            "{} slices incomplete; see {}",
            results.warnings.len(),
            warn_path.display()
        );
        fs::write(&warn_path, results.warnings.join("\n") + "\n")?;
        written.push(warn_path);
    }
    Ok(written)
}
