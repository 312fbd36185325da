//! Results directory: append-only `runs.jsonl`, a completion index and the
//! manifest of the config that produced it.
//!
//! A unit counts as complete once its key is in `index.txt` and a parsed
//! record with that key exists. Records are appended before their index
//! line, so a crash between the two writes only costs a rerun of that unit.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context};
use qforecast_core::trainer::{RunRecord, Task};
use qforecast_core::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::config::BenchmarkConfig;

pub const RUNS_FILE: &str = "runs.jsonl";
pub const INDEX_FILE: &str = "index.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Identity of one `(task, model, grid point, seed)` unit.
pub fn unit_key(task: &Task, spec: &ModelSpec, seed: u64) -> String {
    format!("{task} {} seed={seed}", spec.hyperparams)
}

#[derive(Serialize, Deserialize)]
struct Line {
    key: String,
    record: RunRecord,
}

/// Complete lines of `text`; a trailing fragment without newline is dropped.
fn complete_lines(text: &str) -> (impl Iterator<Item = &str>, usize) {
    let end = text.rfind('\n').map_or(0, |i| i + 1);
    (text[..end].lines(), end)
}

fn read_or_empty(path: &Path) -> io::Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(e),
    }
}

/// Parses the completed records of a results directory (read-only).
pub fn load_records(dir: &Path) -> anyhow::Result<BTreeMap<String, RunRecord>> {
    Ok(scan(dir)?.0)
}

fn scan(dir: &Path) -> anyhow::Result<(BTreeMap<String, RunRecord>, usize, usize)> {
    let runs = read_or_empty(&dir.join(RUNS_FILE))?;
    let index = read_or_empty(&dir.join(INDEX_FILE))?;
    let (run_lines, runs_end) = complete_lines(&runs);
    let (index_lines, index_end) = complete_lines(&index);
    let done: HashSet<&str> = index_lines.collect();
    let mut records = BTreeMap::new();
    for (n, line) in run_lines.enumerate() {
        match serde_json::from_str::<Line>(line) {
            Ok(l) if done.contains(l.key.as_str()) => {
                records.insert(l.key, l.record);
            }
            Ok(_) => {}
            Err(e) => log::warn!(
                "{}: skipping malformed line {}: {e}",
                dir.join(RUNS_FILE).display(),
                n + 1
            ),
        }
    }
    Ok((records, runs_end, index_end))
}

pub fn read_manifest(dir: &Path) -> anyhow::Result<Option<BenchmarkConfig>> {
    let text = read_or_empty(&dir.join(MANIFEST_FILE))?;
    if text.is_empty() {
        return Ok(None);
    }
    Ok(Some(
        serde_json::from_str(&text).context("parsing manifest")?,
    ))
}

struct Writer {
    runs: File,
    index: File,
}

/// Open results directory; safe to share across worker threads.
pub struct ResultStore {
    dir: PathBuf,
    records: Mutex<BTreeMap<String, RunRecord>>,
    writer: Mutex<Writer>,
}

impl ResultStore {
    /// Opens (creating if needed) `dir`, dropping any torn trailing line left
    /// by an interrupted writer.
    pub fn open(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let (records, runs_end, index_end) = scan(dir)?;
        let open = |name: &str, keep: usize| -> anyhow::Result<File> {
            let path = dir.join(name);
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .with_context(|| format!("opening {}", path.display()))?;
            if f.metadata()?.len() > keep as u64 {
                log::warn!("{}: truncating torn trailing line", path.display());
                f.set_len(keep as u64)?;
            }
            Ok(f)
        };
        let writer = Writer {
            runs: open(RUNS_FILE, runs_end)?,
            index: open(INDEX_FILE, index_end)?,
        };
        Ok(ResultStore {
            dir: dir.to_path_buf(),
            records: Mutex::new(records),
            writer: Mutex::new(writer),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &str) -> Option<RunRecord> {
        self.records.lock().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, record: &RunRecord) -> anyhow::Result<()> {
        let key = unit_key(&record.task, &record.spec, record.seed);
        let mut line = serde_json::to_string(&Line {
            key: key.clone(),
            record: record.clone(),
        })?;
        line.push('\n');
        {
            let mut w = self.writer.lock().unwrap();
            w.runs.write_all(line.as_bytes())?;
            w.runs.sync_data()?;
            w.index.write_all(format!("{key}\n").as_bytes())?;
            w.index.sync_data()?;
        }
        self.records.lock().unwrap().insert(key, record.clone());
        Ok(())
    }

    /// Writes the manifest, or checks a resumed directory against it.
    pub fn bind_config(&self, config: &BenchmarkConfig, resume: bool) -> anyhow::Result<()> {
        let path = self.dir.join(MANIFEST_FILE);
        match read_manifest(&self.dir)? {
            Some(old) => {
                if !resume {
                    bail!(
                        "{} already holds results; pass --resume to continue it",
                        self.dir.display()
                    );
                }
                if old.train != config.train {
                    bail!(
                        "training settings differ from {}; use a fresh output directory",
                        path.display()
                    );
                }
            }
            None if !self.is_empty() && !resume => {
                bail!(
                    "{} already holds results; pass --resume to continue it",
                    self.dir.display()
                );
            }
            None => {}
        }
        fs::write(&path, serde_json::to_string_pretty(config)? + "\n")?;
        Ok(())
    }
}
