//! Pipeline stages. Each stage reads one stage directory and writes the
//! next: artifacts named `<id>.<ext>` plus a `manifest.jsonl`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cadforge_core::augment::{rotational_augment, sketch_swap, NoMatch};
use cadforge_core::canon::{self, LENGTH_LIMIT};
use cadforge_core::evolve::{self, seeds, Budget, Pool, PoolStore, StopReason};
use cadforge_core::kernel::{self, read_stl, to_stl, voxelize_mesh, Aabb, Grid, Mesh, VoxelSolid};
use cadforge_core::lang::{self, emit, param_map, Program, Script};
use cadforge_core::manifest::{self, Entry, Record};
use cadforge_core::metrics::{self, MetricReport};
use cadforge_core::proposer::{HttpProposer, MockMode, MockProposer, Proposer};
use cadforge_core::qd::sample_generator;
use cadforge_core::render::{self, RenderOptions, ViewMode, CUBE_HALF};
use cadforge_core::trace::{slice_script, trace};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

const STAMP_FILE: &str = ".stamp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProposerKind {
    Mock,
    Http,
}

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub dry_run: bool,
    pub proposer: ProposerKind,
}

/// How a command ended; rejections make the run partial.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub rejected: usize,
}

fn print_json(v: &impl Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("plain data serializes")
    );
}

/// Stable per-item seed.
pub fn derive_seed(base: u64, id: &str) -> u64 {
    let h = Sha256::digest(id.as_bytes());
    base ^ u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Parses a script, or traces a generator at its defaults.
pub fn script_of(src: &str) -> Result<Script, String> {
    match lang::parse(src).map_err(|e| e.to_string())? {
        Program::Script(s) => Ok(s),
        Program::Generator(g) => trace(&g, &param_map(&g, &g.defaults()))
            .map(|t| t.to_script())
            .map_err(|e| e.to_string()),
    }
}

fn read_text(e: &Entry) -> Result<String, String> {
    fs::read_to_string(&e.file).map_err(|err| format!("{}: {err}", e.file.display()))
}

/// One output of a stage for one input.
enum Produced {
    Artifact {
        id: String,
        bytes: Vec<u8>,
        tag: Option<String>,
        report: Option<canon::CanonReport>,
    },
    Rejected {
        id: String,
        reason: String,
        report: Option<canon::CanonReport>,
    },
}

impl Produced {
    fn script(id: String, s: &Script, tag: Option<String>) -> Produced {
        Produced::Artifact {
            id,
            bytes: emit(s).into_bytes(),
            tag,
            report: None,
        }
    }
}

struct Stage<'a> {
    name: &'static str,
    input: &'a Path,
    out: &'a Path,
    ext: &'static str,
    /// Settings that change the stage's output.
    settings: serde_json::Value,
    dedup: bool,
}

fn digest(stage: &Stage, entries: &[Entry]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(stage.name.as_bytes());
    h.update(stage.settings.to_string().as_bytes());
    for e in entries {
        h.update(serde_json::to_vec(&e.record)?);
        h.update(fs::read(&e.file).with_context(|| format!("reading {}", e.file.display()))?);
    }
    Ok(format!("{:x}", h.finalize()))
}

fn count_rejected(rows: &[Record]) -> usize {
    rows.iter().filter(|r| !r.valid).count()
}

/// Runs `f` over every input entry in parallel and writes the results.
/// Nothing is rewritten when inputs and settings match the previous run.
fn run_stage<F>(ctx: &Ctx, stage: Stage, entries: Vec<Entry>, f: F) -> Result<Outcome>
where
    F: Fn(&Entry) -> Result<Vec<Produced>, String> + Sync,
{
    let stamp = digest(&stage, &entries)?;
    let manifest_path = stage.out.join(manifest::MANIFEST_FILE);
    let fresh = fs::read_to_string(stage.out.join(STAMP_FILE)).is_ok_and(|s| s == stamp)
        && manifest_path.exists();
    if ctx.dry_run {
        print_json(&json!({
            "command": stage.name,
            "input": stage.input,
            "output": stage.out,
            "entries": entries.len(),
            "up_to_date": fresh,
            "settings": stage.settings,
        }));
        return Ok(Outcome::default());
    }
    if fresh {
        log::info!("{}: {} is up to date", stage.name, stage.out.display());
        return Ok(Outcome {
            rejected: count_rejected(&manifest::read(&manifest_path)?),
        });
    }
    if stage.input == stage.out {
        bail!("{}: input and output are the same directory", stage.name);
    }
    let results: Vec<Vec<Produced>> = entries
        .par_iter()
        .map(|e| {
            f(e).unwrap_or_else(|reason| {
                vec![Produced::Rejected {
                    id: e.record.id.clone(),
                    reason,
                    report: None,
                }]
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut seen: Vec<(Vec<u8>, String)> = Vec::new();
    for (entry, produced) in entries.iter().zip(results) {
        for p in produced {
            let row = match p {
                Produced::Rejected { id, reason, report } => Record {
                    canon_report: report,
                    ..Record::rejected(id, stage.name, reason)
                },
                Produced::Artifact {
                    id,
                    bytes,
                    tag,
                    report,
                } => {
                    if let Some((_, first)) = stage
                        .dedup
                        .then(|| seen.iter().find(|(b, _)| *b == bytes))
                        .flatten()
                    {
                        Record {
                            canon_report: report,
                            ..Record::rejected(id, stage.name, format!("duplicate of {first}"))
                        }
                    } else {
                        let path = format!("{id}.{}", stage.ext);
                        manifest::write_if_changed(&stage.out.join(&path), &bytes)?;
                        if stage.dedup {
                            seen.push((bytes, id.clone()));
                        }
                        Record {
                            canon_report: report,
                            tag,
                            ..Record::accepted(id, path, stage.name)
                        }
                    }
                }
            };
            rows.push(row.with_source(entry.record.id.clone()));
        }
    }
    if let Some(r) = rows
        .iter()
        .find(|r| rows.iter().filter(|o| o.id == r.id).count() > 1)
    {
        bail!("{}: two outputs share the id `{}`", stage.name, r.id);
    }
    fs::create_dir_all(stage.out).with_context(|| format!("creating {}", stage.out.display()))?;
    manifest::write(stage.out, &rows)?;
    manifest::write_if_changed(&stage.out.join(STAMP_FILE), stamp.as_bytes())?;
    let rejected = count_rejected(&rows);
    print_json(&json!({
        "command": stage.name,
        "output": stage.out,
        "written": rows.len() - rejected,
        "rejected": rows.iter().filter(|r| !r.valid).map(|r| json!({"id": r.id, "reason": r.reject_reason})).collect::<Vec<_>>(),
    }));
    Ok(Outcome { rejected })
}

fn load(dir: &Path) -> Result<Vec<Entry>> {
    manifest::load_stage(dir).with_context(|| format!("loading stage {}", dir.display()))
}

pub fn sample(ctx: &Ctx, input: &Path, out: &Path) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let stage = Stage {
        name: "sample",
        input,
        out,
        ext: "mcq",
        settings: json!({"sample": cfg.sample, "penalty": cfg.penalty, "seed": cfg.seeds.sample}),
        dedup: false,
    };
    run_stage(ctx, stage, load(input)?, |e| {
        let g = lang::parse_generator(&read_text(e)?).map_err(|err| err.to_string())?;
        let id = &e.record.id;
        let o = sample_generator(
            &g,
            cfg.sample.n,
            &cfg.penalty,
            cfg.sample.budget,
            derive_seed(cfg.seeds.sample, id),
        );
        if o.zero_accepted {
            return Err("invalid at default parameters".into());
        }
        if o.archive.accepted.len() < cfg.sample.n {
            log::warn!(
                "{id}: {} of {} samples within budget",
                o.archive.accepted.len(),
                cfg.sample.n
            );
        }
        Ok(o.archive
            .accepted
            .iter()
            .enumerate()
            .map(|(k, s)| Produced::Artifact {
                id: format!("{id}_q{k:02}"),
                bytes: s.script.clone().into_bytes(),
                tag: Some(format!("qd:{k}")),
                report: None,
            })
            .collect())
    })
}

pub fn slice(ctx: &Ctx, input: &Path, out: &Path) -> Result<Outcome> {
    let k = &ctx.cfg.kernel;
    let stage = Stage {
        name: "slice",
        input,
        out,
        ext: "mcq",
        settings: json!({"kernel": k}),
        dedup: false,
    };
    let domain = k.domain();
    run_stage(ctx, stage, load(input)?, |e| {
        let s = script_of(&read_text(e)?)?;
        let sliced = slice_script(&s, &domain).map_err(|err| err.to_string())?;
        let (_, report) =
            kernel::evaluate(&sliced, k.resolution, &domain).map_err(|err| err.to_string())?;
        if let Some(r) = report.failure_reason {
            return Err(r);
        }
        Ok(vec![Produced::script(e.record.id.clone(), &sliced, None)])
    })
}

pub fn canon(ctx: &Ctx, input: &Path, out: &Path) -> Result<Outcome> {
    let stage = Stage {
        name: "canon",
        input,
        out,
        ext: "mcq",
        settings: json!({"limit": LENGTH_LIMIT}),
        dedup: true,
    };
    run_stage(ctx, stage, load(input)?, |e| {
        let id = e.record.id.clone();
        let s = script_of(&read_text(e)?)?;
        let (c, report) = canon::canonicalize(&s);
        if report.rejected {
            let reason = report.reason.clone().unwrap_or_default();
            return Ok(vec![Produced::Rejected {
                id,
                reason,
                report: Some(report),
            }]);
        }
        if report.char_len_after <= LENGTH_LIMIT {
            return Ok(vec![Produced::Artifact {
                id,
                bytes: emit(&c).into_bytes(),
                tag: None,
                report: Some(report),
            }]);
        }
        Ok(vec![match canon::truncate(&c, LENGTH_LIMIT) {
            Ok((t, r)) => Produced::Artifact {
                id,
                bytes: emit(&t).into_bytes(),
                tag: Some("truncated".into()),
                report: Some(r),
            },
            Err(reason) => Produced::Rejected {
                id,
                reason: format!("over {LENGTH_LIMIT} characters: {reason}"),
                report: Some(report),
            },
        }])
    })
}

pub fn augment(ctx: &Ctx, input: &Path, out: &Path) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let mut donors = Vec::new();
    if let Some(dir) = &cfg.paths.donors {
        for e in load(dir)? {
            match read_text(&e).and_then(|t| lang::parse_script(&t).map_err(|err| err.to_string()))
            {
                Ok(s) => donors.push(s),
                Err(err) => log::warn!("skipping donor {}: {err}", e.record.id),
            }
        }
    }
    let stage = Stage {
        name: "augment",
        input,
        out,
        ext: "mcq",
        settings: json!({"seed": cfg.seeds.augment, "donors": donors.iter().map(emit).collect::<Vec<_>>()}),
        dedup: false,
    };
    run_stage(ctx, stage, load(input)?, |e| {
        let id = &e.record.id;
        let s = script_of(&read_text(e)?)?;
        let seed = derive_seed(cfg.seeds.augment, id);
        let mut out = vec![Produced::script(id.clone(), &s, Some("orig".into()))];
        let (variants, skipped) = rotational_augment(std::slice::from_ref(&s), seed);
        for v in variants {
            out.push(Produced::script(
                format!("{id}_r{:02}", v.rotation),
                &v.script,
                Some(v.tag()),
            ));
        }
        for (_, reason) in skipped {
            out.push(Produced::Rejected {
                id: format!("{id}_r"),
                reason,
                report: None,
            });
        }
        match sketch_swap(&s, &donors, seed) {
            Ok(swapped) => out.push(Produced::script(
                format!("{id}_sk"),
                &swapped,
                Some("aug:sketch".into()),
            )),
            Err(NoMatch::NoDonors | NoMatch::NoTrigger) => {}
            Err(err) => out.push(Produced::Rejected {
                id: format!("{id}_sk"),
                reason: err.to_string(),
                report: None,
            }),
        }
        Ok(out)
    })
}

/// Solid fitted into the rendering cube, from a script or an STL file.
fn fitted_solid(e: &Entry, resolution: usize) -> Result<VoxelSolid, String> {
    if e.file.extension().is_some_and(|x| x == "stl") {
        let m = read_mesh(&e.file)?;
        let b = m.bbox().ok_or("empty mesh")?;
        let v = voxelize_mesh(
            &m,
            resolution,
            &Aabb::cube_around(b.center(), b.longest_side()),
        )
        .map_err(|err| err.to_string())?;
        return Ok(VoxelSolid {
            grid: Grid::over(&Aabb::cube(CUBE_HALF), resolution),
            occupancy: v.occupancy,
        });
    }
    let model = kernel::build(&script_of(&read_text(e)?)?).map_err(|err| err.to_string())?;
    render::fit_to_cube(&model, resolution).ok_or_else(|| "empty shape".to_string())
}

pub fn render_stage(
    ctx: &Ctx,
    files: &[PathBuf],
    input: Option<&Path>,
    out: &Path,
    views: Option<usize>,
) -> Result<Outcome> {
    let r = &ctx.cfg.render;
    let views = views.unwrap_or(r.views);
    let mode = ViewMode::from_count(views)
        .with_context(|| format!("--views must be 7 or 8, got {views}"))?;
    let mut entries = match input {
        Some(dir) => load(dir)?,
        None => Vec::new(),
    };
    for f in files {
        let id = f
            .file_stem()
            .with_context(|| format!("bad file name {}", f.display()))?
            .to_string_lossy()
            .into_owned();
        entries.push(Entry {
            record: Record::accepted(id, f.display().to_string(), "input"),
            file: f.clone(),
        });
    }
    if entries.is_empty() {
        bail!("render: no inputs; pass files or --in");
    }
    let opts = RenderOptions {
        near_bright: r.near_bright,
    };
    let stage = Stage {
        name: "render",
        input: input.unwrap_or(Path::new("")),
        out,
        ext: "pgm",
        settings: json!({"views": views, "resolution": r.resolution, "near_bright": r.near_bright}),
        dedup: false,
    };
    run_stage(ctx, stage, entries, |e| {
        let v = fitted_solid(e, r.resolution)?;
        let img = render::render_grid(&v, mode, &opts).map_err(|err| err.to_string())?;
        Ok(vec![Produced::Artifact {
            id: e.record.id.clone(),
            bytes: render::write_pgm(&img),
            tag: None,
            report: None,
        }])
    })
}

fn read_mesh(path: &Path) -> Result<Mesh, String> {
    let mut f = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_stl(&mut f).map_err(|e| format!("{}: {e}", path.display()))
}

/// Surface mesh of a shape file; `Err` means the shape did not compile.
fn mesh_of(ctx: &Ctx, e: &Entry) -> Result<Mesh, String> {
    if e.file.extension().is_some_and(|x| x == "stl") {
        return read_mesh(&e.file);
    }
    let k = &ctx.cfg.kernel;
    let s = script_of(&read_text(e)?)?;
    let (v, report) =
        kernel::evaluate(&s, k.resolution, &k.domain()).map_err(|err| err.to_string())?;
    if let Some(r) = report.failure_reason {
        return Err(r);
    }
    to_stl(&v).map_err(|err| err.to_string())
}

struct Pair {
    id: String,
    target: Mesh,
    pred: Result<Mesh, String>,
}

/// Loads target shapes and matching predictions. Targets that fail to
/// load are skipped and counted.
fn pairs(ctx: &Ctx, pred: &Path, target: &Path) -> Result<(Vec<Pair>, usize, usize)> {
    let preds = load(pred)?;
    let targets = load(target)?;
    if ctx.dry_run {
        return Ok((Vec::new(), targets.len(), 0));
    }
    let loaded: Vec<Result<Pair, String>> = targets
        .par_iter()
        .map(|t| {
            let target = mesh_of(ctx, t).map_err(|err| format!("target {}: {err}", t.record.id))?;
            let pred = match preds.iter().find(|p| p.record.id == t.record.id) {
                Some(p) => mesh_of(ctx, p),
                None => Err("missing prediction".into()),
            };
            Ok(Pair {
                id: t.record.id.clone(),
                target,
                pred,
            })
        })
        .collect();
    let mut out = Vec::new();
    let mut bad = 0;
    for r in loaded {
        match r {
            Ok(p) => out.push(p),
            Err(err) => {
                log::warn!("{err}");
                bad += 1;
            }
        }
    }
    Ok((out, targets.len(), bad))
}

fn report_for(ctx: &Ctx, p: &Pair) -> MetricReport {
    match &p.pred {
        Err(reason) => MetricReport::invalid(vec![reason.clone()]),
        Ok(m) => metrics::compare(m, &p.target, &ctx.cfg.metrics_config(), Vec::new())
            .unwrap_or_else(|err| MetricReport::invalid(vec![err.to_string()])),
    }
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text += &serde_json::to_string(r)?;
        text.push('\n');
    }
    manifest::write_if_changed(path, text.as_bytes())?;
    Ok(())
}

pub fn eval(ctx: &Ctx, pred: &Path, target: &Path, out: Option<&Path>) -> Result<Outcome> {
    let (pairs, targets, bad) = pairs(ctx, pred, target)?;
    if ctx.dry_run {
        print_json(
            &json!({"command": "eval", "pred": pred, "target": target, "targets": targets, "metrics": ctx.cfg.metrics_config()}),
        );
        return Ok(Outcome::default());
    }
    if pairs.is_empty() {
        bail!("eval: no usable targets in {}", target.display());
    }
    let reports: Vec<MetricReport> = pairs.par_iter().map(|p| report_for(ctx, p)).collect();
    let summary = metrics::summarize(&reports)?;
    if let Some(path) = out {
        let rows: Vec<_> = pairs
            .iter()
            .zip(&reports)
            .map(|(p, r)| json!({"id": p.id, "report": r}))
            .collect();
        write_lines(path, &rows)?;
    }
    print_json(&summary);
    Ok(Outcome { rejected: bad })
}

#[derive(Debug, Serialize)]
struct RewardRow {
    id: String,
    compiled: bool,
    iou: Option<f64>,
    reward: f64,
}

pub fn reward(ctx: &Ctx, pred: &Path, target: &Path, out: Option<&Path>) -> Result<Outcome> {
    let (pairs, targets, bad) = pairs(ctx, pred, target)?;
    if ctx.dry_run {
        print_json(
            &json!({"command": "reward", "pred": pred, "target": target, "targets": targets}),
        );
        return Ok(Outcome::default());
    }
    let rows: Vec<RewardRow> = pairs
        .par_iter()
        .map(|p| {
            let r = report_for(ctx, p);
            let compiled = r.valid;
            let iou01 = r.iou.map_or(0.0, |v| (v / 100.0).clamp(0.0, 1.0));
            RewardRow {
                id: p.id.clone(),
                compiled,
                iou: r.iou,
                reward: metrics::reward(compiled, iou01).expect("iou clamped to [0, 1]"),
            }
        })
        .collect();
    if let Some(path) = out {
        write_lines(path, &rows)?;
    }
    let mean = rows.iter().map(|r| r.reward).sum::<f64>() / rows.len().max(1) as f64;
    print_json(&json!({"mean_reward": mean, "count": rows.len(), "rewards": rows}));
    Ok(Outcome { rejected: bad })
}

fn seed_pool(cfg: &PipelineConfig) -> Result<Pool, evolve::EvolveError> {
    let seeds = match &cfg.paths.seeds {
        Some(dir) => seeds::load_dir(dir)
            .map_err(|e| evolve::EvolveError::Store(format!("{}: {e}", dir.display())))?,
        None => seeds::builtin(),
    };
    Pool::from_seeds(seeds)
}

pub fn evolve(ctx: &Ctx, out: &Path) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let budget = match cfg.evolve.accepted {
        Some(n) => Budget::Accepted(n),
        None => Budget::Iterations(cfg.evolve.iterations),
    };
    let store = PoolStore::new(out);
    if ctx.dry_run {
        let done = fs::read_to_string(out.join("stats.jsonl")).map_or(0, |s| s.lines().count());
        print_json(&json!({
            "command": "evolve",
            "output": out,
            "finished_iterations": done,
            "budget": format!("{budget:?}"),
            "proposer": format!("{:?}", ctx.proposer),
            "config": cfg.evolve_config(),
        }));
        return Ok(Outcome::default());
    }
    let proposer: Box<dyn Proposer> = match ctx.proposer {
        ProposerKind::Mock => {
            Box::new(MockProposer::new(cfg.seeds.proposer, MockMode::Cooperative))
        }
        ProposerKind::Http => {
            let p = HttpProposer::from_env(cfg.proposer.clone())?;
            Box::new(p)
        }
    };
    let outcome = evolve::run_stored(
        &store,
        || seed_pool(cfg),
        proposer.as_ref(),
        &cfg.evolve_config(),
        budget,
    )?;
    let rows: Vec<Record> = outcome
        .pool
        .tuples
        .values()
        .map(|t| {
            let mut r = Record::accepted(
                format!("g{:05}", t.id),
                format!("code/{}.mcq", t.id),
                "evolve",
            )
            .with_tag(format!("gen{}:{}", t.generation, t.name));
            if !t.parents.is_empty() {
                r = r.with_source(
                    t.parents
                        .iter()
                        .map(|p| format!("g{p:05}"))
                        .collect::<Vec<_>>()
                        .join("+"),
                );
            }
            r
        })
        .collect();
    manifest::write(out, &rows)?;
    print_json(&json!({
        "command": "evolve",
        "output": out,
        "pool_size": outcome.pool.len(),
        "iterations": outcome.stats.len(),
        "stop": format!("{:?}", outcome.stop),
    }));
    if let StopReason::Proposer(e) = outcome.stop {
        bail!(
            "proposer failed; progress is saved in {}: {e}",
            out.display()
        );
    }
    Ok(Outcome::default())
}

pub fn stats(ctx: &Ctx, input: &Path) -> Result<Outcome> {
    let path = input.join("stats.jsonl");
    if ctx.dry_run {
        print_json(&json!({"command": "stats", "input": path}));
        return Ok(Outcome::default());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<evolve::IterationStats> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1))
        })
        .collect::<Result<_>>()?;
    let sum = |f: fn(&evolve::IterationStats) -> usize| rows.iter().map(f).sum::<usize>();
    let proposed = sum(|s| s.proposed);
    let rate = |n: usize| {
        if proposed == 0 {
            0.0
        } else {
            n as f64 / proposed as f64
        }
    };
    let accepted = sum(|s| s.accepted);
    let invalid = sum(|s| s.invalid);
    let non_novel = sum(|s| s.non_novel);
    let exhausted = sum(|s| s.repair_exhausted);
    print_json(&json!({
        "iterations": rows.len(),
        "pool_size": rows.last().map(|s| s.pool_size),
        "proposed": proposed,
        "accepted": accepted,
        "invalid": invalid,
        "non_novel": non_novel,
        "repair_exhausted": exhausted,
        "repairs": sum(|s| s.repairs),
        "acceptance_rate": rate(accepted),
        "invalid_rate": rate(invalid),
        "non_novel_rate": rate(non_novel),
        "repair_exhausted_rate": rate(exhausted),
        "partition_holds": rows.iter().all(|s| s.is_partition()),
    }));
    Ok(Outcome::default())
}
