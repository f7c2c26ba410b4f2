//! On-disk pool: `pool.jsonl` (one tuple per line, without code),
//! `code/<id>.mcq` and `stats.jsonl` (one line per finished iteration).

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{EvolveError, IterationStats, Pool, ShapeTuple};

#[derive(Debug, Clone)]
pub struct PoolStore {
    dir: PathBuf,
}

fn io(e: impl std::fmt::Display) -> EvolveError {
    EvolveError::Store(e.to_string())
}

fn read_lines(path: &Path) -> Result<Vec<String>, EvolveError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    BufReader::new(File::open(path).map_err(io)?)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io)
}

impl PoolStore {
    pub fn new(dir: impl Into<PathBuf>) -> PoolStore {
        PoolStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn pool_path(&self) -> PathBuf {
        self.dir.join("pool.jsonl")
    }

    fn stats_path(&self) -> PathBuf {
        self.dir.join("stats.jsonl")
    }

    fn code_path(&self, id: u64) -> PathBuf {
        self.dir.join("code").join(format!("{id}.mcq"))
    }

    pub fn exists(&self) -> bool {
        self.pool_path().exists()
    }

    /// Loads the stored run, or creates it from `seeds` when absent.
    pub fn open_or_init(
        &self,
        seeds: impl FnOnce() -> Result<Pool, EvolveError>,
    ) -> Result<(Pool, Vec<IterationStats>), EvolveError> {
        if self.exists() {
            return self.load();
        }
        let pool = seeds()?;
        fs::create_dir_all(self.dir.join("code")).map_err(io)?;
        let tuples: Vec<&ShapeTuple> = pool.tuples.values().collect();
        self.write_tuples(&tuples, false)?;
        File::create(self.stats_path()).map_err(io)?;
        Ok((pool, Vec::new()))
    }

    fn write_tuples(&self, tuples: &[&ShapeTuple], append: bool) -> Result<(), EvolveError> {
        let mut text = String::new();
        for t in tuples {
            fs::write(self.code_path(t.id), &t.code).map_err(io)?;
            text += &serde_json::to_string(t).map_err(io)?;
            text.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(self.pool_path())
            .map_err(io)?;
        f.write_all(text.as_bytes()).map_err(io)
    }

    /// Persists the tuples admitted by `stats.iteration`, then its stats.
    pub fn append(&self, pool: &Pool, stats: &IterationStats) -> Result<(), EvolveError> {
        let born: Vec<&ShapeTuple> = pool
            .tuples
            .values()
            .filter(|t| t.born == Some(stats.iteration))
            .collect();
        self.write_tuples(&born, true)?;
        let mut f = OpenOptions::new()
            .append(true)
            .create(true)
            .open(self.stats_path())
            .map_err(io)?;
        writeln!(f, "{}", serde_json::to_string(stats).map_err(io)?).map_err(io)
    }

    /// Tuples admitted by iterations without a stats line (an interrupted
    /// run) are discarded so the iteration is redone.
    pub fn load(&self) -> Result<(Pool, Vec<IterationStats>), EvolveError> {
        let mut stats: Vec<IterationStats> = Vec::new();
        for line in read_lines(&self.stats_path())? {
            match serde_json::from_str(&line) {
                Ok(s) => stats.push(s),
                Err(_) => break,
            }
        }
        for (i, s) in stats.iter().enumerate() {
            if s.iteration != i {
                return Err(EvolveError::Store(format!(
                    "stats line {} has iteration {}",
                    i + 1,
                    s.iteration
                )));
            }
        }
        let mut pool = Pool::default();
        let mut dropped = false;
        for (n, line) in read_lines(&self.pool_path())?.iter().enumerate() {
            let mut t: ShapeTuple = match serde_json::from_str(line) {
                Ok(t) => t,
                Err(e) => {
                    return Err(EvolveError::Store(format!(
                        "pool.jsonl line {}: {e}",
                        n + 1
                    )))
                }
            };
            if t.born.is_some_and(|b| b >= stats.len()) {
                dropped = true;
                continue;
            }
            t.code = fs::read_to_string(self.code_path(t.id)).map_err(io)?;
            pool.next_id = pool.next_id.max(t.id + 1);
            pool.tuples.insert(t.id, t);
        }
        if dropped {
            let tuples: Vec<&ShapeTuple> = pool.tuples.values().collect();
            self.write_tuples(&tuples, false)?;
        }
        if stats.len() != read_lines(&self.stats_path())?.len() {
            let mut text = String::new();
            for s in &stats {
                text += &serde_json::to_string(s).map_err(io)?;
                text.push('\n');
            }
            fs::write(self.stats_path(), text).map_err(io)?;
        }
        Ok((pool, stats))
    }
}

/// Runs against `store`, resuming whatever it already holds.
pub fn run_stored(
    store: &PoolStore,
    seeds: impl FnOnce() -> Result<Pool, EvolveError>,
    proposer: &dyn crate::proposer::Proposer,
    cfg: &super::EvolveConfig,
    budget: super::Budget,
) -> Result<super::RunOutcome, EvolveError> {
    let (pool, stats) = store.open_or_init(seeds)?;
    super::run_from(pool, stats, proposer, cfg, budget, |p, s| {
        store.append(p, s)
    })
}
