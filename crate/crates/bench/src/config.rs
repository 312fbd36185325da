//! Benchmark configuration: a small INI-style key/value format.
//!
//! ```text
//! # comments start with '#' or ';'
//! [benchmark]
//! datasets = mackey, henon, lorenz
//! seq_lens = 4, 8, 16
//! models = dqnn, ruqnn, qrnn, qlstm, leqlstm, mlp, rnn, lstm
//! seeds = 0-9
//! max_epochs = 10000
//! jobs = 4
//! allow_off_grid = false
//!
//! [dataset.henon]
//! steps = 1, 2, 4
//!
//! [model.lstm]
//! layers = 1
//! hidden = 8, 16
//!
//! [model.ruqnn]
//! n_circuits = 100
//! qubits = 4, 6, 8
//! finalists = 10
//! sampler_seed = 0
//! ```
//!
//! Model sections restrict grid axes; unspecified axes keep the benchmark
//! values. Every file is validated as a whole and errors cite the line.

use std::collections::BTreeMap;
use std::path::Path;

use qforecast_core::chaosdata::Generator;
use qforecast_core::trainer::{AnsatzSearchConfig, Task, TrainConfig, SEEDS};
use qforecast_core::{Hyperparams, ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("{path}:{line}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub generator: Generator,
    pub steps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetConfig>,
    pub seq_lens: Vec<usize>,
    pub models: Vec<ModelKind>,
    /// Per-kind grid axes as `(axis, values)`.
    pub grids: BTreeMap<ModelKind, Vec<(String, Vec<usize>)>>,
    pub ansatz: AnsatzSearchConfig,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub allow_off_grid: bool,
    pub jobs: Option<usize>,
}

fn default_axes(kind: ModelKind) -> Vec<(String, Vec<usize>)> {
    let axes: &[(&str, &[usize])] = match kind {
        ModelKind::Dqnn => &[("n_qubits", &[4, 6, 8]), ("layers", &[1, 2, 3])],
        ModelKind::Ruqnn => &[],
        ModelKind::Qrnn => &[
            ("data_qubits", &[2, 3, 4]),
            ("hidden_qubits", &[2, 3, 4]),
            ("reset", &[0]),
        ],
        ModelKind::Qlstm => &[("n_qubits", &[4, 6]), ("layers", &[1, 2, 3])],
        ModelKind::Leqlstm => &[
            ("n_qubits", &[6]),
            ("layers", &[1, 2, 3]),
            ("hidden", &[8, 16, 32]),
        ],
        ModelKind::Mlp | ModelKind::Rnn | ModelKind::Lstm => {
            &[("layers", &[1, 2, 3]), ("hidden", &[8, 16, 32])]
        }
    };
    axes.iter()
        .map(|(k, v)| (k.to_string(), v.to_vec()))
        .collect()
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            datasets: Generator::ALL
                .iter()
                .map(|&g| DatasetConfig {
                    generator: g,
                    steps: g.default_steps().to_vec(),
                })
                .collect(),
            seq_lens: vec![4, 8, 16],
            models: ModelKind::ALL.to_vec(),
            grids: ModelKind::ALL
                .iter()
                .map(|&k| (k, default_axes(k)))
                .collect(),
            ansatz: AnsatzSearchConfig::default(),
            seeds: SEEDS.to_vec(),
            train: TrainConfig::default(),
            allow_off_grid: false,
            jobs: None,
        }
    }
}

impl BenchmarkConfig {
    /// Every `(dataset, l, k)` task, datasets outermost.
    pub fn tasks(&self) -> Vec<(Generator, Task)> {
        let mut out = Vec::new();
        for ds in &self.datasets {
            for &k in &ds.steps {
                for &l in &self.seq_lens {
                    out.push((ds.generator, Task::new(ds.generator.name(), l, k)));
                }
            }
        }
        out
    }

    /// Grid points of `kind` for a task shape (empty for the ansatz-searched model).
    pub fn grid(&self, kind: ModelKind, seq_len: usize, data_dim: usize) -> Vec<ModelSpec> {
        let axes = self
            .grids
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| default_axes(kind));
        let mut points: Vec<Vec<usize>> = vec![vec![]];
        for (_, values) in &axes {
            points = points
                .iter()
                .flat_map(|p| values.iter().map(move |&v| [p.clone(), vec![v]].concat()))
                .collect();
        }
        if axes.is_empty() {
            return Vec::new();
        }
        let value = |p: &[usize], name: &str| {
            axes.iter()
                .position(|(a, _)| a == name)
                .map(|i| p[i])
                .unwrap_or(0)
        };
        points
            .iter()
            .map(|p| {
                let h = match kind {
                    ModelKind::Dqnn => Hyperparams::Dqnn {
                        n_qubits: value(p, "n_qubits"),
                        layers: value(p, "layers"),
                    },
                    ModelKind::Qrnn => Hyperparams::Qrnn {
                        data_qubits: value(p, "data_qubits"),
                        hidden_qubits: value(p, "hidden_qubits"),
                        reset: value(p, "reset") != 0,
                    },
                    ModelKind::Qlstm => Hyperparams::Qlstm {
                        n_qubits: value(p, "n_qubits"),
                        layers: value(p, "layers"),
                    },
                    ModelKind::Leqlstm => Hyperparams::Leqlstm {
                        n_qubits: value(p, "n_qubits"),
                        layers: value(p, "layers"),
                        hidden: value(p, "hidden"),
                    },
                    ModelKind::Mlp => Hyperparams::Mlp {
                        layers: value(p, "layers"),
                        hidden: value(p, "hidden"),
                    },
                    ModelKind::Rnn => Hyperparams::Rnn {
                        layers: value(p, "layers"),
                        hidden: value(p, "hidden"),
                    },
                    ModelKind::Lstm => Hyperparams::Lstm {
                        layers: value(p, "layers"),
                        hidden: value(p, "hidden"),
                    },
                    ModelKind::Ruqnn => unreachable!("ruqnn has no grid axes"),
                };
                ModelSpec::new(h, seq_len, data_dim)
            })
            .collect()
    }
}

pub fn load_config(path: &Path) -> Result<BenchmarkConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.display().to_string(),
        line: 0,
        message: format!("cannot read: {e}"),
    })?;
    parse_config(&text, &path.display().to_string())
}

struct Parser<'a> {
    source: &'a str,
    line: usize,
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.source.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
        let mut out = Vec::new();
        for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            out.push(
                item.parse()
                    .map_err(|_| self.err(format!("{key}: cannot parse '{item}'")))?,
            );
        }
        if out.is_empty() {
            return Err(self.err(format!("{key}: empty list")));
        }
        Ok(out)
    }

    fn count_list(&self, key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
        let v: Vec<usize> = self.list(key, value)?;
        if v.contains(&0) {
            return Err(self.err(format!("{key}: values must be positive")));
        }
        Ok(v)
    }

    fn single<T: std::str::FromStr>(&self, key: &str, value: &str) -> Result<T, ConfigError> {
        value
            .trim()
            .parse()
            .map_err(|_| self.err(format!("{key}: cannot parse '{}'", value.trim())))
    }

    fn seeds(&self, value: &str) -> Result<Vec<u64>, ConfigError> {
        let mut out = Vec::new();
        for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once('-') {
                Some((a, b)) => {
                    let (a, b): (u64, u64) = (self.single("seeds", a)?, self.single("seeds", b)?);
                    if b < a {
                        return Err(self.err(format!("seeds: empty range '{item}'")));
                    }
                    out.extend(a..=b);
                }
                None => out.push(self.single("seeds", item)?),
            }
        }
        if out.is_empty() {
            return Err(self.err("seeds: empty list"));
        }
        Ok(out)
    }
}

const BENCHMARK_GRID: &[(&str, &[usize])] = &[("seq_lens", &[4, 8, 16])];

fn allowed_axis_values(kind: ModelKind, axis: &str) -> Option<Vec<usize>> {
    if kind == ModelKind::Qrnn && axis == "reset" {
        return Some(vec![0, 1]);
    }
    default_axes(kind)
        .into_iter()
        .find(|(a, _)| a == axis)
        .map(|(_, v)| v)
}

/// Parses the configuration text; `source` names it in error messages.
pub fn parse_config(text: &str, source: &str) -> Result<BenchmarkConfig, ConfigError> {
    let mut cfg = BenchmarkConfig::default();
    let mut p = Parser { source, line: 0 };
    let mut section = String::from("benchmark");
    let mut steps_override: BTreeMap<Generator, Vec<usize>> = BTreeMap::new();
    let mut datasets: Option<Vec<Generator>> = None;
    // (line, check) pairs run after allow_off_grid is known
    let mut off_grid: Vec<(usize, String)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| p.err("unterminated section header"))?
                .trim();
            let known = name == "benchmark"
                || name
                    .strip_prefix("dataset.")
                    .is_some_and(|g| g.parse::<Generator>().is_ok())
                || name
                    .strip_prefix("model.")
                    .is_some_and(|m| m.parse::<ModelKind>().is_ok());
            if !known {
                return Err(p.err(format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| p.err(format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());

        if section == "benchmark" {
            match key {
                "datasets" => datasets = Some(p.list("datasets", value)?),
                "seq_lens" => {
                    let v = p.count_list(key, value)?;
                    for &l in &v {
                        if !BENCHMARK_GRID[0].1.contains(&l) {
                            off_grid.push((p.line, format!("sequence length {l}")));
                        }
                    }
                    cfg.seq_lens = v;
                }
                "models" => cfg.models = p.list("models", value)?,
                "seeds" => cfg.seeds = p.seeds(value)?,
                "max_epochs" => cfg.train.max_epochs = p.single(key, value)?,
                "batch_size" => cfg.train.batch_size = p.single(key, value)?,
                "learning_rate" => cfg.train.adam.lr = p.single(key, value)?,
                "jobs" => cfg.jobs = Some(p.single(key, value)?),
                "allow_off_grid" => cfg.allow_off_grid = p.single(key, value)?,
                _ => return Err(p.err(format!("unknown key '{key}' in [benchmark]"))),
            }
            if matches!(key, "max_epochs" | "batch_size" | "jobs") && value.trim() == "0" {
                return Err(p.err(format!("{key} must be positive")));
            }
        } else if let Some(g) = section.strip_prefix("dataset.") {
            let g: Generator = g.parse().expect("validated section");
            match key {
                "steps" => {
                    let v = p.count_list(key, value)?;
                    for &k in &v {
                        if !g.default_steps().contains(&k) {
                            off_grid.push((p.line, format!("{g} prediction steps {k}")));
                        }
                    }
                    steps_override.insert(g, v);
                }
                _ => return Err(p.err(format!("unknown key '{key}' in [{section}]"))),
            }
        } else if let Some(m) = section.strip_prefix("model.") {
            let kind: ModelKind = m.parse().expect("validated section");
            if kind == ModelKind::Ruqnn {
                match key {
                    "n_circuits" => cfg.ansatz.n_circuits = p.single(key, value)?,
                    "qubits" => {
                        let v = p.count_list(key, value)?;
                        for &n in &v {
                            if ![4, 6, 8].contains(&n) {
                                off_grid.push((p.line, format!("ruqnn qubit count {n}")));
                            }
                        }
                        cfg.ansatz.qubit_counts = v;
                    }
                    "finalists" => cfg.ansatz.finalists = p.single(key, value)?,
                    "sampler_seed" => cfg.ansatz.sampler_seed = p.single(key, value)?,
                    _ => return Err(p.err(format!("unknown key '{key}' in [{section}]"))),
                }
                if matches!(key, "n_circuits" | "finalists") && value.trim() == "0" {
                    return Err(p.err(format!("{key} must be positive")));
                }
                continue;
            }
            let Some(allowed) = allowed_axis_values(kind, key) else {
                return Err(p.err(format!("unknown key '{key}' in [{section}]")));
            };
            let v: Vec<usize> = if key == "reset" {
                p.list::<bool>(key, value)?
                    .into_iter()
                    .map(usize::from)
                    .collect()
            } else {
                p.count_list(key, value)?
            };
            for &x in &v {
                if !allowed.contains(&x) {
                    off_grid.push((p.line, format!("{kind} {key} = {x}")));
                }
            }
            let axes = cfg.grids.entry(kind).or_insert_with(|| default_axes(kind));
            if let Some(axis) = axes.iter_mut().find(|(a, _)| a == key) {
                axis.1 = v;
            }
        }
    }

    if !cfg.allow_off_grid {
        if let Some((line, what)) = off_grid.first() {
            return Err(ConfigError {
                path: source.to_string(),
                line: *line,
                message: format!("{what} is off the benchmark grid (set allow_off_grid = true)"),
            });
        }
    }
    if let Some(gens) = datasets {
        cfg.datasets = gens
            .into_iter()
            .map(|g| DatasetConfig {
                generator: g,
                steps: g.default_steps().to_vec(),
            })
            .collect();
    }
    for ds in &mut cfg.datasets {
        if let Some(v) = steps_override.remove(&ds.generator) {
            ds.steps = v;
        }
    }
    if let Some(g) = steps_override.keys().next() {
        return Err(ConfigError {
            path: source.to_string(),
            line: 0,
            message: format!("[dataset.{g}] given but {g} is not in datasets"),
        });
    }
    Ok(cfg)
}
