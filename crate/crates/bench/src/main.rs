use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use qforecast_bench::runner::{CachedRunner, RunCounters};
use qforecast_bench::{
    export_report, load_config, load_results, rank_models, run_benchmark, BenchmarkConfig,
    ReportKind, ResultStore,
};
use qforecast_core::chaosdata::{benchmark_dataset, minmax_scale, Generator, BENCHMARK_POINTS};
use qforecast_core::chaostats::dataset_stats;
use qforecast_core::trainer::{ansatz_search, Task};

#[derive(Parser)]
#[command(
    name = "qforecast",
    version,
    about = "Quantum and classical time-series forecasting benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the generated datasets as CSV (raw and min-max scaled).
    DataGen {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = BENCHMARK_POINTS)]
        points: usize,
        /// Restrict to these generators (mackey, henon, lorenz).
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<Generator>,
    },
    /// Print dimension, length, mean period and Lyapunov time per dataset.
    Stats {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the benchmark matrix described by a config file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Continue a results directory that already holds runs.
        #[arg(long)]
        resume: bool,
    },
    /// Run the ru-QNN ansatz search on one task.
    AnsatzSearch {
        #[arg(long)]
        dataset: Generator,
        #[arg(long)]
        seq_len: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        resume: bool,
    },
    /// Export one CSV report from a results directory.
    Report {
        kind: ReportKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the model ranking of a results directory.
    Rank {
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_or_default(path: Option<&Path>) -> anyhow::Result<BenchmarkConfig> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(BenchmarkConfig::default()),
    }
}

fn data_gen(out: &Path, points: usize, datasets: &[Generator]) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let gens = if datasets.is_empty() {
        Generator::ALL.to_vec()
    } else {
        datasets.to_vec()
    };
    for g in gens {
        let raw = g.generate(points);
        let (scaled, _) = minmax_scale(&raw)?;
        for (suffix, series) in [("", &raw), ("_scaled", &scaled)] {
            let path = out.join(format!("{}{suffix}.csv", g.name()));
            let mut w = csv::Writer::from_path(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            let mut header = vec!["t".to_string()];
            header.extend(
                ["x", "y", "z"]
                    .iter()
                    .take(series.dim)
                    .map(|s| s.to_string()),
            );
            w.write_record(&header)?;
            for t in 0..series.n_points() {
                let mut row = vec![t.to_string()];
                row.extend(series.row(t).iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn stats(seed: u64) -> anyhow::Result<()> {
    println!(
        "{:<8} {:>4} {:>7} {:>12} {:>5} {:>12} {:>14}",
        "dataset", "dim", "points", "mean period", "lag", "lyap. exp.", "lyap. time"
    );
    for g in Generator::ALL {
        let series = g.generate(BENCHMARK_POINTS);
        match dataset_stats(&series, seed) {
            Ok(s) => println!(
                "{:<8} {:>4} {:>7} {:>12.3} {:>5} {:>12.6} {:>14.3}",
                g.name(),
                series.dim,
                series.n_points(),
                s.mean_period,
                s.lag,
                s.lyapunov_exponent,
                s.lyapunov_time
            ),
            Err(e) => println!(
                "{:<8} {:>4} {:>7} error: {e}",
                g.name(),
                series.dim,
                series.n_points()
            ),
        }
    }
    Ok(())
}

fn ansatz_search_cmd(
    gen: Generator,
    seq_len: usize,
    steps: usize,
    config: &BenchmarkConfig,
    out: &Path,
    jobs: Option<usize>,
    resume: bool,
) -> anyhow::Result<()> {
    let store = ResultStore::open(out)?;
    store.bind_config(config, resume)?;
    let data = benchmark_dataset(gen, seq_len, steps)?;
    let counters = RunCounters::default();
    let runner = CachedRunner {
        data: &data,
        task: Task::new(gen.name(), seq_len, steps),
        config: config.train.clone(),
        store: &store,
        counters: &counters,
    };
    let threads = jobs
        .or(config.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    let result =
        pool.install(|| ansatz_search(&runner, gen.dim(), &config.ansatz, &config.seeds))?;
    println!(
        "stage 1: {} runs, stage 2: {} runs",
        result.stage1.len(),
        result
            .stage2
            .records
            .iter()
            .map(|r| r.runs.len())
            .sum::<usize>()
    );
    for (i, r) in result.stage2.records.iter().enumerate() {
        let mark = if i == result.stage2.best { "*" } else { " " };
        println!(
            "{mark} {:<60} val {} test {}",
            r.spec.hyperparams.to_string(),
            r.median_val_mse,
            r.median_test_mse
        );
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::DataGen {
            out,
            points,
            datasets,
        } => data_gen(&out, points, &datasets),
        Command::Stats { seed } => stats(seed),
        Command::Run {
            config,
            out,
            jobs,
            resume,
        } => {
            let cfg = config_or_default(config.as_deref())?;
            let summary = run_benchmark(&cfg, &out, jobs, resume, None)?;
            println!(
                "{} new runs, {} reused, {} slices",
                summary.trained,
                summary.cached,
                summary.slices.len()
            );
            Ok(())
        }
        Command::AnsatzSearch {
            dataset,
            seq_len,
            steps,
            config,
            out,
            jobs,
            resume,
        } => {
            let cfg = config_or_default(config.as_deref())?;
            ansatz_search_cmd(dataset, seq_len, steps, &cfg, &out, jobs, resume)
        }
        Command::Report { kind, out } => {
            for p in export_report(&out, kind)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Rank { out } => {
            let results = load_results(&out)?;
            let table = rank_models(&results.winners());
            if table.models.len() < 2 {
                bail!("ranking needs at least two models with results");
            }
            print!("{table}");
            Ok(())
        }
    }
}
