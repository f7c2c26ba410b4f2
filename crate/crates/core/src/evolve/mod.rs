//! The propose-execute-filter loop: parents are sampled from the pool, a
//! [`Proposer`] suggests children and writes their generators, and only
//! children that execute, evaluate to one valid solid and pass visual
//! verification join the pool.

pub mod seeds;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{build, evaluate_default, EvalReport, Model};
use crate::lang::parse_generator;
use crate::proposer::{
    is_snake_case, ChildMeta, CodeBlock, Metadata, ParentInfo, ProposeRequest, Proposer,
    ProposerError, RepairRequest, Stage, SynthesizeRequest, VerifyRequest, MAX_CONTEXT_BYTES,
};
use crate::render::{fit_to_cube, render_grid, write_pgm, RenderOptions, ViewMode};
use crate::trace::trace;

pub use store::{run_stored, PoolStore};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("the pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error("pool storage: {0}")]
    Store(String),
    #[error("seed `{name}` is not admissible: {reason}")]
    BadSeed { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTuple {
    pub id: u64,
    pub name: String,
    pub r#abstract: String,
    pub detailed: String,
    /// Generator source; persisted separately as `code/<id>.mcq`.
    #[serde(skip)]
    pub code: String,
    pub parents: Vec<u64>,
    pub generation: u32,
    /// Iteration that admitted the tuple; `None` for seeds.
    pub born: Option<usize>,
}

impl ShapeTuple {
    pub fn metadata(&self) -> Metadata {
        Metadata {
            name: self.name.clone(),
            r#abstract: self.r#abstract.clone(),
            detailed: self.detailed.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pool {
    pub tuples: BTreeMap<u64, ShapeTuple>,
    pub next_id: u64,
}

impl Pool {
    /// Generation-0 pool. Every seed must parse; seeds are not required to
    /// pass validation but [`check_code`] reports the ones that do not.
    pub fn from_seeds(seeds: Vec<(Metadata, String)>) -> Result<Pool, EvolveError> {
        let mut pool = Pool::default();
        for (meta, code) in seeds {
            if !is_snake_case(&meta.name) {
                return Err(EvolveError::BadSeed {
                    name: meta.name,
                    reason: "name is not snake_case".into(),
                });
            }
            if let Err(e) = parse_generator(&code) {
                return Err(EvolveError::BadSeed {
                    name: meta.name,
                    reason: e.to_string(),
                });
            }
            pool.insert(meta, code, Vec::new(), 0, None);
        }
        Ok(pool)
    }

    fn insert(
        &mut self,
        meta: Metadata,
        code: String,
        parents: Vec<u64>,
        generation: u32,
        born: Option<usize>,
    ) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let t = ShapeTuple {
            id,
            name: meta.name,
            r#abstract: meta.r#abstract,
            detailed: meta.detailed,
            code,
            parents,
            generation,
            born,
        };
        self.tuples.insert(id, t);
        id
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&ShapeTuple> {
        self.tuples.get(&id)
    }

    pub fn seeds(&self) -> usize {
        self.tuples.values().filter(|t| t.born.is_none()).count()
    }

    /// Every parent exists and the lineage graph has no cycle.
    pub fn lineage_is_acyclic(&self) -> bool {
        // Kahn's algorithm over parent -> child edges
        let mut indeg: HashMap<u64, usize> = self.tuples.keys().map(|&id| (id, 0)).collect();
        let mut children: HashMap<u64, Vec<u64>> = HashMap::new();
        for t in self.tuples.values() {
            for p in &t.parents {
                if !self.tuples.contains_key(p) {
                    return false;
                }
                *indeg.get_mut(&t.id).expect("own id") += 1;
                children.entry(*p).or_default().push(t.id);
            }
        }
        let mut ready: Vec<u64> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut seen = 0;
        while let Some(id) = ready.pop() {
            seen += 1;
            for c in children.get(&id).into_iter().flatten() {
                let d = indeg.get_mut(c).expect("known child");
                *d -= 1;
                if *d == 0 {
                    ready.push(*c);
                }
            }
        }
        seen == self.tuples.len()
    }
}

/// `k` tuples uniformly without replacement, or with replacement when the
/// pool holds fewer than `k`.
pub fn sample_parents<'a>(
    pool: &'a Pool,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<&'a ShapeTuple>, EvolveError> {
    if pool.is_empty() {
        return Err(EvolveError::EmptyPool);
    }
    let all: Vec<&ShapeTuple> = pool.tuples.values().collect();
    Ok(if all.len() >= k {
        index::sample(rng, all.len(), k)
            .into_iter()
            .map(|i| all[i])
            .collect()
    } else {
        (0..k).map(|_| all[rng.gen_range(0..all.len())]).collect()
    })
}

/// Lowercase ASCII alphanumeric runs.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

/// TF-IDF cosine similarity of `query` against every tuple's detailed
/// description, highest first, ties by lower id. Uses raw term counts and
/// the smoothed idf `ln((1 + N) / (1 + df)) + 1`.
pub fn similarities(pool: &Pool, query: &str) -> Vec<(u64, f64)> {
    let docs: Vec<(u64, HashMap<String, f64>)> = pool
        .tuples
        .values()
        .map(|t| {
            let mut tf = HashMap::new();
            for w in tokens(&t.detailed) {
                *tf.entry(w).or_insert(0.0) += 1.0;
            }
            (t.id, tf)
        })
        .collect();
    let n = docs.len() as f64;
    let mut df: HashMap<&str, f64> = HashMap::new();
    for (_, tf) in &docs {
        for w in tf.keys() {
            *df.entry(w.as_str()).or_insert(0.0) += 1.0;
        }
    }
    let idf = |w: &str| df.get(w).map(|d| ((1.0 + n) / (1.0 + d)).ln() + 1.0);
    let mut q: BTreeMap<String, f64> = BTreeMap::new();
    for w in tokens(query) {
        *q.entry(w).or_insert(0.0) += 1.0;
    }
    let qv: BTreeMap<&str, f64> = q
        .iter()
        .filter_map(|(w, c)| idf(w).map(|i| (w.as_str(), c * i)))
        .collect();
    let qn = qv.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut out: Vec<(u64, f64)> = docs
        .iter()
        .map(|(id, tf)| {
            let mut words: Vec<&String> = tf.keys().collect();
            words.sort();
            let weight = |w: &str| tf[w] * idf(w).expect("document words have df");
            let dn = words.iter().map(|w| weight(w).powi(2)).sum::<f64>().sqrt();
            let dot: f64 = qv
                .iter()
                .filter(|(w, _)| tf.contains_key(**w))
                .map(|(w, v)| v * weight(w))
                .sum();
            let sim = if qn > 0.0 && dn > 0.0 {
                dot / (qn * dn)
            } else {
                0.0
            };
            (*id, sim)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

pub fn retrieve_neighbors<'a>(pool: &'a Pool, detailed: &str, m: usize) -> Vec<&'a ShapeTuple> {
    similarities(pool, detailed)
        .into_iter()
        .take(m)
        .map(|(id, _)| &pool.tuples[&id])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// Parents sampled per iteration.
    pub parents: usize,
    /// Children requested per iteration.
    pub children: usize,
    /// Retrieved neighbors per child.
    pub neighbors: usize,
    /// Repair round trips per child.
    pub repairs: usize,
    pub seed: u64,
    /// Saturation window in iterations.
    pub window: usize,
    /// Minimum acceptance rate over the window.
    pub floor: f64,
    /// Voxel resolution of the verification montage.
    pub render_resolution: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            parents: 3,
            children: 4,
            neighbors: 3,
            repairs: 2,
            seed: 0,
            window: 20,
            floor: 0.05,
            render_resolution: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Iterations(usize),
    /// Stop once this many non-seed tuples are in the pool.
    Accepted(usize),
}

/// Per-iteration counts. Each proposal is counted once by its terminal
/// outcome, so `proposed = invalid + non_novel + accepted + repair_exhausted`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub proposed: usize,
    /// Final code failed to execute or to evaluate to one valid solid.
    pub invalid: usize,
    /// Valid and verified but byte-identical to code already in the pool.
    pub non_novel: usize,
    pub accepted: usize,
    /// Valid geometry that the verifier still rejected after all repairs.
    pub repair_exhausted: usize,
    /// Repair round trips made.
    pub repairs: usize,
    pub pool_size: usize,
}

impl IterationStats {
    pub fn is_partition(&self) -> bool {
        self.proposed == self.invalid + self.non_novel + self.accepted + self.repair_exhausted
    }
}

/// Outcome of executing a generator on its defaults.
#[derive(Debug, Clone)]
pub enum Check {
    Valid { model: Model, report: EvalReport },
    Failed { stage: Stage, diagnostic: String },
}

/// Execution and geometry stages: parse, trace on defaults, build,
/// evaluate. Results other than exactly one solid fail execution; other
/// evaluation failures fail geometry.
pub fn check_code(code: &str) -> Check {
    let exec = |diagnostic: String| Check::Failed {
        stage: Stage::Execution,
        diagnostic,
    };
    let g = match parse_generator(code) {
        Ok(g) => g,
        Err(e) => return exec(e.to_string()),
    };
    let t = match trace(&g, &Default::default()) {
        Ok(t) => t,
        Err(e) => return exec(e.to_string()),
    };
    let script = t.to_script();
    let model = match build(&script) {
        Ok(m) => m,
        Err(e) => return exec(e.to_string()),
    };
    let report = match evaluate_default(&script) {
        Ok((_, r)) => r,
        Err(e) => return exec(e.to_string()),
    };
    match &report.failure_reason {
        None => Check::Valid { model, report },
        Some(reason) => {
            let stage = if report.solid_count == 1 {
                Stage::Geometry
            } else {
                Stage::Execution
            };
            Check::Failed {
                stage,
                diagnostic: reason.clone(),
            }
        }
    }
}

/// Seven-view montage of a valid model as binary PGM.
pub fn montage(model: &Model, resolution: usize) -> Option<Vec<u8>> {
    let v = fit_to_cube(model, resolution)?;
    render_grid(&v, ViewMode::Seven, &RenderOptions::default())
        .ok()
        .map(|img| write_pgm(&img))
}

#[derive(Debug, Clone, PartialEq)]
enum Outcome {
    Valid(String),
    Invalid,
    Disagreed,
}

/// Parents' code first, then neighbors, within the context size limit.
fn context_for(pool: &Pool, child: &ChildMeta, m: usize) -> Vec<CodeBlock> {
    let mut ids: Vec<u64> = Vec::new();
    for id in child.parents.iter().copied().chain(
        retrieve_neighbors(pool, &child.meta.detailed, m)
            .iter()
            .map(|t| t.id),
    ) {
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    let mut size = 0;
    let mut out = Vec::new();
    for id in ids {
        let t = &pool.tuples[&id];
        if size + t.code.len() > MAX_CONTEXT_BYTES {
            continue;
        }
        size += t.code.len();
        out.push(CodeBlock {
            id,
            name: t.name.clone(),
            code: t.code.clone(),
        });
    }
    out
}

/// One propose-execute-filter round. A proposer error aborts the round and
/// leaves `pool` untouched.
pub fn run_iteration(
    pool: &Pool,
    proposer: &dyn Proposer,
    cfg: &EvolveConfig,
    iteration: usize,
) -> Result<(Pool, IterationStats), EvolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        cfg.seed ^ (iteration as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    );
    let parents = sample_parents(pool, cfg.parents.max(1), &mut rng)?;
    let mut offered: Vec<ParentInfo> = Vec::new();
    for p in parents {
        if !offered.iter().any(|o| o.id == p.id) {
            offered.push(ParentInfo {
                id: p.id,
                meta: p.metadata(),
            });
        }
    }
    let children = proposer.propose_metadata(&ProposeRequest {
        parents: offered.clone(),
        k: cfg.children,
    })?;
    let offered_ids: HashSet<u64> = offered.iter().map(|p| p.id).collect();
    let results: Vec<Result<(Outcome, usize), ProposerError>> = children
        .par_iter()
        .map(|c| {
            if !c.parents.iter().all(|p| offered_ids.contains(p)) {
                return Ok((Outcome::Invalid, 0));
            }
            validate_child(pool, proposer, c, cfg)
        })
        .collect();
    let mut next = pool.clone();
    let mut stats = IterationStats {
        iteration,
        proposed: children.len(),
        ..Default::default()
    };
    let mut codes: HashSet<String> = pool.tuples.values().map(|t| t.code.clone()).collect();
    for (child, r) in children.iter().zip(results) {
        let (outcome, repairs) = r?;
        stats.repairs += repairs;
        match outcome {
            Outcome::Invalid => stats.invalid += 1,
            Outcome::Disagreed => stats.repair_exhausted += 1,
            Outcome::Valid(code) if codes.contains(&code) => stats.non_novel += 1,
            Outcome::Valid(code) => {
                let parents: Vec<u64> = child
                    .parents
                    .iter()
                    .copied()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let generation = 1 + parents
                    .iter()
                    .map(|p| pool.tuples[p].generation)
                    .max()
                    .unwrap_or(0);
                codes.insert(code.clone());
                next.insert(
                    child.meta.clone(),
                    code,
                    parents,
                    generation,
                    Some(iteration),
                );
                stats.accepted += 1;
            }
        }
    }
    stats.pool_size = next.len();
    Ok((next, stats))
}

/// Synthesis followed by staged validation with up to `cfg.repairs`
/// repair round trips.
fn validate_child(
    pool: &Pool,
    proposer: &dyn Proposer,
    child: &ChildMeta,
    cfg: &EvolveConfig,
) -> Result<(Outcome, usize), ProposerError> {
    let mut code = proposer.synthesize_code(&SynthesizeRequest {
        child: child.clone(),
        context: context_for(pool, child, cfg.neighbors),
    })?;
    let mut repairs = 0;
    loop {
        let (stage, diagnostic) = match check_code(&code) {
            Check::Failed { stage, diagnostic } => (stage, diagnostic),
            Check::Valid { model, report } => match montage(&model, cfg.render_resolution) {
                None => (Stage::Geometry, "shape could not be rendered".to_string()),
                Some(img) => {
                    let v = proposer.verify(&VerifyRequest {
                        child: child.clone(),
                        montage: img,
                        solid_count: report.solid_count,
                    })?;
                    if v.agree {
                        return Ok((Outcome::Valid(code), repairs));
                    }
                    (Stage::Agreement, v.critique)
                }
            },
        };
        if repairs >= cfg.repairs {
            let outcome = if stage == Stage::Agreement {
                Outcome::Disagreed
            } else {
                Outcome::Invalid
            };
            return Ok((outcome, repairs));
        }
        log::debug!(
            "{}: {stage:?} failed ({diagnostic}), repairing",
            child.meta.name
        );
        code = proposer.repair(&RepairRequest {
            child: child.clone(),
            code,
            stage,
            diagnostic,
        })?;
        repairs += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    /// Trailing-window acceptance rate fell below the floor.
    Saturated,
    Proposer(String),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub pool: Pool,
    pub stats: Vec<IterationStats>,
    pub stop: StopReason,
}

fn budget_met(pool: &Pool, stats: &[IterationStats], budget: Budget) -> bool {
    match budget {
        Budget::Iterations(n) => stats.len() >= n,
        Budget::Accepted(n) => pool.len() - pool.seeds() >= n,
    }
}

/// Acceptance rate over the last `window` iterations has dropped below
/// `floor`. Needs a full window.
pub fn saturated(stats: &[IterationStats], window: usize, floor: f64) -> bool {
    if window == 0 || stats.len() < window {
        return false;
    }
    let tail = &stats[stats.len() - window..];
    let proposed: usize = tail.iter().map(|s| s.proposed).sum();
    let accepted: usize = tail.iter().map(|s| s.accepted).sum();
    let rate = if proposed == 0 {
        0.0
    } else {
        accepted as f64 / proposed as f64
    };
    rate < floor
}

/// Iterates from `pool` with `history` already done, calling `on_iteration`
/// after every completed round.
pub fn run_from(
    mut pool: Pool,
    mut history: Vec<IterationStats>,
    proposer: &dyn Proposer,
    cfg: &EvolveConfig,
    budget: Budget,
    mut on_iteration: impl FnMut(&Pool, &IterationStats) -> Result<(), EvolveError>,
) -> Result<RunOutcome, EvolveError> {
    loop {
        if budget_met(&pool, &history, budget) {
            return Ok(RunOutcome {
                pool,
                stats: history,
                stop: StopReason::Budget,
            });
        }
        if saturated(&history, cfg.window, cfg.floor) {
            return Ok(RunOutcome {
                pool,
                stats: history,
                stop: StopReason::Saturated,
            });
        }
        match run_iteration(&pool, proposer, cfg, history.len()) {
            Ok((next, stats)) => {
                on_iteration(&next, &stats)?;
                log::info!(
                    "iteration {}: {} proposed, {} accepted, pool {}",
                    stats.iteration,
                    stats.proposed,
                    stats.accepted,
                    stats.pool_size
                );
                pool = next;
                history.push(stats);
            }
            Err(EvolveError::Proposer(e)) => {
                log::warn!("stopping: {e}");
                return Ok(RunOutcome {
                    pool,
                    stats: history,
                    stop: StopReason::Proposer(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn run(
    pool0: Pool,
    proposer: &dyn Proposer,
    cfg: &EvolveConfig,
    budget: Budget,
) -> Result<RunOutcome, EvolveError> {
    run_from(pool0, Vec::new(), proposer, cfg, budget, |_, _| Ok(()))
}
