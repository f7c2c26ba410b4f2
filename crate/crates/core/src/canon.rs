//! Source-to-source canonicalization: unified names, centered bounding box,
//! fixed longest side and integer length literals.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{
    self, Aabb, BitGrid, EvalError, EvalReport, Grid, Model, Vec3, DEFAULT_RESOLUTION,
};
use crate::lang::{emit, Arg, Expr, OpKind, Script, Statement, UnitTag, ValueKind};

pub const TARGET_EXTENT: f64 = 200.0;
pub const LENGTH_LIMIT: usize = 3000;
pub const MAX_LENGTH_LITERAL: f64 = 400.0;
/// Minimum unit-cube IoU between a script and its canonical form.
pub const MIN_SHAPE_IOU: f64 = 0.99;
/// Relative deviation of the longest side that triggers the scale fallback.
pub const FALLBACK_TOLERANCE: f64 = 0.02;
/// Half-width, in default voxel spacings, of the longest-side band searched
/// for a scale that survives rounding.
const SEARCH_BAND: f64 = 1.5;
const SEARCH_STEPS: i32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonReport {
    pub scale_factor: f64,
    pub center_shift: [f64; 3],
    pub rounded_literals: usize,
    /// A `scale` statement was inserted instead of rescaling literals.
    pub scale_statement: bool,
    pub rejected: bool,
    pub reason: Option<String>,
    pub char_len_before: usize,
    pub char_len_after: usize,
}

impl CanonReport {
    fn new(before: usize) -> CanonReport {
        CanonReport {
            scale_factor: 1.0,
            center_shift: [0.0; 3],
            rounded_literals: 0,
            scale_statement: false,
            rejected: false,
            reason: None,
            char_len_before: before,
            char_len_after: before,
        }
    }

    fn reject(mut self, reason: impl Into<String>) -> CanonReport {
        self.rejected = true;
        self.reason = Some(reason.into());
        self
    }
}

/// Voxel spacing of the default evaluation grid.
pub fn default_spacing() -> f64 {
    kernel::default_domain().longest_side() / DEFAULT_RESOLUTION as f64
}

fn canonical_name(i: usize) -> String {
    format!("wp{}", i + 1)
}

/// Renames temporaries to `wp1..wpN` in definition order.
pub fn unify(s: &Script) -> Script {
    let map: HashMap<&str, String> = s
        .statements
        .iter()
        .enumerate()
        .map(|(i, st)| (st.target.as_str(), canonical_name(i)))
        .collect();
    let rename = |n: &str| map.get(n).cloned().unwrap_or_else(|| n.to_string());
    Script {
        statements: s
            .statements
            .iter()
            .map(|st| Statement {
                target: rename(&st.target),
                op: st.op,
                args: st
                    .args
                    .iter()
                    .map(|a| match (&a.value, a.unit_tag.is_ref()) {
                        (Expr::Var(v), true) => Arg {
                            value: Expr::Var(rename(v)),
                            unit_tag: a.unit_tag,
                        },
                        _ => a.clone(),
                    })
                    .collect(),
            })
            .collect(),
        result_binding: rename(&s.result_binding),
    }
}

fn fresh_name(s: &Script) -> String {
    let taken: HashSet<&str> = s.statements.iter().map(|st| st.target.as_str()).collect();
    (s.statements.len()..)
        .map(canonical_name)
        .find(|n| !taken.contains(n.as_str()))
        .unwrap()
}

/// Index of the statement defining the result when it is a translate.
fn trailing_translate(s: &Script) -> Option<usize> {
    let i = s.position(&s.result_binding)?;
    (s.statements[i].op == OpKind::Translate).then_some(i)
}

fn translate_stmt(target: String, input: &str, d: Vec3) -> Statement {
    let mut args = vec![Arg {
        value: Expr::Var(input.to_string()),
        unit_tag: UnitTag::Solid,
    }];
    args.extend(d.iter().map(|&c| Arg {
        value: Expr::Num(c),
        unit_tag: UnitTag::Length,
    }));
    Statement {
        target,
        op: OpKind::Translate,
        args,
    }
}

fn add_translation(st: &mut Statement, d: &Vec3) {
    for k in 0..3 {
        let v = st.num(k + 1).unwrap_or(0.0) + d[k];
        st.args[k + 1].value = Expr::Num(v);
    }
}

/// Model of a script that the kernel can fully evaluate.
fn model(s: &Script) -> Result<Model, String> {
    let m = kernel::build(s).map_err(|e| e.to_string())?;
    if !m.unsupported_ops.is_empty() {
        return Err(kernel::KERNEL_UNSUPPORTED.to_string());
    }
    Ok(m)
}

/// Measured bounding box of the result, on a grid fitted to the shape.
pub fn measure(s: &Script) -> Result<Aabb, String> {
    model(s)?
        .measure_aabb(DEFAULT_RESOLUTION)
        .ok_or_else(|| "empty result".to_string())
}

/// Validity on a grid fitted to the shape, for scripts not yet in the
/// default domain.
pub fn validate_fitted(s: &Script) -> Result<EvalReport, String> {
    let m = model(s)?;
    let bound = m.bbox().ok_or("empty result")?;
    let pad = bound.longest_side().max(1e-6) * 4.0 / DEFAULT_RESOLUTION as f64;
    let grid = Grid::over(
        &Aabb::cube_around(bound.center(), bound.longest_side() + 2.0 * pad),
        DEFAULT_RESOLUTION,
    );
    let (_, report) = m.evaluate_on(&grid);
    match &report.failure_reason {
        Some(r) => Err(r.clone()),
        None => Ok(report),
    }
}

/// Shift that moves the measured center to the origin. Components that
/// stay within one default voxel spacing once the shape is scaled by `f`
/// are treated as already centered.
pub fn centering_shift(aabb: &Aabb, f: f64) -> Vec3 {
    let c = aabb.center();
    let dead = default_spacing();
    c.map(|x| if (x * f).abs() <= dead { 0.0 } else { -x })
}

/// Translates the result by `shift`, folding into a trailing translate when
/// there is one.
pub fn apply_shift(s: &Script, shift: &Vec3) -> Script {
    let mut out = s.clone();
    match trailing_translate(&out) {
        Some(i) => add_translation(&mut out.statements[i], shift),
        None => {
            let name = fresh_name(&out);
            out.statements
                .push(translate_stmt(name.clone(), &out.result_binding, *shift));
            out.result_binding = name;
        }
    }
    out
}

/// Injects the centering translate.
pub fn center(s: &Script) -> Result<(Script, Vec3), String> {
    let aabb = measure(s)?;
    let shift = centering_shift(&aabb, extent_factor(&aabb, TARGET_EXTENT));
    Ok((apply_shift(s, &shift), shift))
}

/// Scale factor bringing the longest side to `target`; 1 when the side is
/// already within two default voxel spacings.
pub fn extent_factor(aabb: &Aabb, target: f64) -> f64 {
    let l = aabb.longest_side();
    if (l - target).abs() <= 2.0 * default_spacing() {
        1.0
    } else {
        target / l
    }
}

/// Multiplies every length literal by `f`.
pub fn scale_lengths(s: &Script, f: f64) -> Script {
    let mut out = s.clone();
    for st in &mut out.statements {
        for a in &mut st.args {
            if a.unit_tag == UnitTag::Length {
                if let Expr::Num(v) = &mut a.value {
                    *v *= f;
                }
            }
        }
    }
    out
}

/// Inserts `scale(f)` below the trailing translate, whose vector is scaled
/// to keep the result centered.
fn insert_scale(s: &Script, f: f64) -> Script {
    let mut out = s.clone();
    let name = fresh_name(&out);
    let i = trailing_translate(&out).expect("centered scripts end in a translate");
    let input = out.statements[i].args[0]
        .value
        .as_var()
        .unwrap_or_default()
        .to_string();
    let scale = Statement {
        target: name.clone(),
        op: OpKind::Scale,
        args: vec![
            Arg {
                value: Expr::Var(input),
                unit_tag: UnitTag::Solid,
            },
            Arg {
                value: Expr::Num(f),
                unit_tag: UnitTag::Ratio,
            },
        ],
    };
    let tr = &mut out.statements[i];
    tr.args[0].value = Expr::Var(name);
    for k in 1..4 {
        if let Expr::Num(v) = &mut tr.args[k].value {
            *v *= f;
        }
    }
    out.statements.insert(i, scale);
    out
}

/// Rescales a centered script so its longest side is `target`.
pub fn normalize_extent(s: &Script, target: f64) -> (Script, CanonReport) {
    let mut report = CanonReport::new(emit(s).len());
    let aabb = match measure(s) {
        Ok(b) => b,
        Err(e) => return (s.clone(), report.reject(e)),
    };
    let f = extent_factor(&aabb, target);
    report.scale_factor = f;
    if f == 1.0 {
        return (s.clone(), report);
    }
    let deviant = |c: &Script| match measure(c) {
        Ok(b) => (b.longest_side() - target).abs() > FALLBACK_TOLERANCE * target,
        Err(_) => true,
    };
    let scaled = scale_lengths(s, f);
    if !deviant(&scaled) {
        return (scaled, report);
    }
    let fallback = insert_scale(s, f);
    report.scale_statement = true;
    if deviant(&fallback) {
        return (
            s.clone(),
            report.reject("longest side misses the target after rescaling"),
        );
    }
    (fallback, report)
}

/// Rounds a literal according to its unit tag.
pub fn round_literal(v: f64, tag: UnitTag) -> f64 {
    let r = match tag {
        UnitTag::Length if v.abs() < 1e-6 => 0.0,
        UnitTag::Length | UnitTag::Angle => v.round(),
        UnitTag::Ratio | UnitTag::Axis => (v * 100.0).round() / 100.0,
        _ => v,
    };
    // normalize negative zero
    r + 0.0
}

/// Rounds every numeric literal; returns the number of literals changed.
pub fn binarize(s: &Script) -> (Script, usize) {
    let mut out = s.clone();
    let mut changed = 0;
    for st in &mut out.statements {
        for a in &mut st.args {
            if let Expr::Num(v) = &mut a.value {
                let r = round_literal(*v, a.unit_tag);
                if r.to_bits() != v.to_bits() {
                    changed += 1;
                    *v = r;
                }
            }
        }
    }
    (out, changed)
}

fn length_literals(s: &Script) -> impl Iterator<Item = f64> + '_ {
    s.statements
        .iter()
        .flat_map(|st| st.args.iter())
        .filter(|a| a.unit_tag == UnitTag::Length)
        .filter_map(|a| a.value.as_num())
}

/// Full pipeline: unify, center, normalize, binarize, re-validate.
pub fn canonicalize(s: &Script) -> (Script, CanonReport) {
    canonicalize_with(s, true)
}

fn canonicalize_with(s: &Script, with_unify: bool) -> (Script, CanonReport) {
    let report = CanonReport::new(emit(s).len());
    if let Err(e) = validate_fitted(s) {
        return (s.clone(), report.reject(format!("invalid input: {e}")));
    }
    let s0 = if with_unify { unify(s) } else { s.clone() };
    let aabb = match measure(&s0) {
        Ok(b) => b,
        Err(e) => return (s0, report.reject(e)),
    };
    let shift = centering_shift(&aabb, extent_factor(&aabb, TARGET_EXTENT));
    let s1 = apply_shift(&s0, &shift);
    let (s2, norm) = normalize_extent(&s1, TARGET_EXTENT);
    let mut report = CanonReport {
        center_shift: shift.into(),
        scale_factor: norm.scale_factor,
        scale_statement: norm.scale_statement,
        ..report
    };
    if norm.rejected {
        report.rejected = true;
        report.reason = norm.reason;
        return (s2, report);
    }
    let source = unit_occupancy(s);
    let mut outcome = finish(&s2, source.as_ref(), false);
    if outcome.is_err() && !norm.scale_statement {
        // rounding may carry an offset inside the centering dead band past it
        let exact = (-aabb.center()).map(|x| x + 0.0);
        let centered = if exact == shift {
            s1
        } else {
            apply_shift(&s0, &exact)
        };
        let nominal = (exact != shift).then_some(norm.scale_factor);
        let factors = nominal
            .into_iter()
            .chain(search_sides().map(|t| t / aabb.longest_side()));
        for f in factors {
            if let Ok(found) = finish(&scale_lengths(&centered, f), source.as_ref(), true) {
                report.scale_factor = f;
                report.center_shift = exact.into();
                outcome = Ok(found);
                break;
            }
        }
    }
    match outcome {
        Ok((out, rounded)) => {
            report.rounded_literals = rounded;
            report.char_len_after = emit(&out).len();
            (out, report)
        }
        Err((out, reason)) => {
            report.char_len_after = emit(&out).len();
            (out, report.reject(reason))
        }
    }
}

/// Longest sides tried when rounding at the nominal scale distorts the
/// shape: inside the dead band of [`extent_factor`], nearest first.
fn search_sides() -> impl Iterator<Item = f64> {
    let step = SEARCH_BAND * default_spacing() / SEARCH_STEPS as f64;
    (1..=SEARCH_STEPS)
        .flat_map(move |k| [1.0, -1.0].map(|sign| TARGET_EXTENT + sign * step * k as f64))
}

fn unit_occupancy(s: &Script) -> Option<BitGrid> {
    model(s).ok()?.unit_occupancy(DEFAULT_RESOLUTION)
}

/// Rounds a scaled script and checks it against the canonical constants
/// and the source occupancy, the cheaper shape test first when
/// `shape_first`.
fn finish(
    scaled: &Script,
    source: Option<&BitGrid>,
    shape_first: bool,
) -> Result<(Script, usize), (Script, String)> {
    let (rounded, changed) = binarize(scaled);
    let out = unify(&rounded);
    let too_long = length_literals(&out).find(|v| v.abs() > MAX_LENGTH_LITERAL);
    if let Some(v) = too_long {
        return Err((out, format!("length literal {v} outside [-400, 400]")));
    }
    let shape = |out: &Script| {
        let overlap = match (source, unit_occupancy(out)) {
            (Some(x), Some(y)) if x.dims == y.dims => {
                x.intersection_count(&y) as f64 / x.union_count(&y).max(1) as f64
            }
            _ => 0.0,
        };
        if overlap < MIN_SHAPE_IOU {
            return Err(format!(
                "rounding changes the shape (unit IoU {overlap:.4})"
            ));
        }
        Ok(())
    };
    let checked = if shape_first {
        shape(&out).and_then(|()| check_canonical(&out))
    } else {
        check_canonical(&out).and_then(|()| shape(&out))
    };
    match checked {
        Ok(()) => Ok((out, changed)),
        Err(reason) => Err((out, reason)),
    }
}

/// Validity on the default grid plus the canonical constants: longest side
/// within two spacings of the target and the same measurement a repeated
/// pass would take landing inside its dead bands.
pub fn check_canonical(s: &Script) -> Result<(), String> {
    let (_, report) = kernel::evaluate_default(s).map_err(|e: EvalError| e.to_string())?;
    if let Some(r) = report.failure_reason {
        return Err(r);
    }
    let side = report.aabb.map_or(0.0, |b| b.longest_side());
    if (side - TARGET_EXTENT).abs() > 2.0 * default_spacing() {
        return Err(format!("longest side {side:.3} misses {TARGET_EXTENT}"));
    }
    let aabb = measure(s)?;
    if centering_shift(&aabb, 1.0) != Vec3::zeros() || extent_factor(&aabb, TARGET_EXTENT) != 1.0 {
        return Err("not a fixpoint of canonicalization".into());
    }
    Ok(())
}

/// IoU of two scripts after each is scaled into the unit cube, at the
/// default resolution; 0 when either cannot be evaluated.
pub fn shape_iou(a: &Script, b: &Script) -> f64 {
    let occ = |s: &Script| {
        model(s)
            .ok()
            .and_then(|m| m.unit_occupancy(DEFAULT_RESOLUTION))
    };
    match (occ(a), occ(b)) {
        (Some(x), Some(y)) if x.dims == y.dims => {
            x.intersection_count(&y) as f64 / x.union_count(&y).max(1) as f64
        }
        _ => 0.0,
    }
}

/// Outcome of the length filter over a corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LengthFiltered {
    pub kept: Vec<Script>,
    pub truncated: Vec<(Script, CanonReport)>,
    pub rejected: Vec<(usize, String)>,
}

fn last_solid(statements: &[Statement]) -> Option<&str> {
    statements
        .iter()
        .rev()
        .find(|st| st.op.output() == ValueKind::Solid)
        .map(|st| st.target.as_str())
}

/// Longest statement prefix that, closed by a `result` line on its last
/// solid, re-canonicalizes within `limit` characters.
pub fn truncate(s: &Script, limit: usize) -> Result<(Script, CanonReport), String> {
    let mut n = s.statements.len();
    while n > 0 {
        let prefix = &s.statements[..n];
        let Some(result) = last_solid(prefix) else {
            return Err("no solid statement within the limit".into());
        };
        let cand = Script {
            statements: prefix.to_vec(),
            result_binding: result.to_string(),
        };
        if emit(&cand).len() <= limit {
            let (out, report) = canonicalize_with(&cand, false);
            if report.rejected {
                return Err(report.reason.unwrap_or_default());
            }
            if report.char_len_after <= limit {
                return Ok((out, report));
            }
        }
        n -= 1;
    }
    Err("no solid statement within the limit".into())
}

/// Splits a canonical corpus by emitted length. Scripts within `limit`
/// characters pass through; longer ones are truncated and re-canonicalized
/// without renaming.
pub fn length_filter(corpus: &[Script], limit: usize) -> LengthFiltered {
    let results: Vec<_> = corpus
        .par_iter()
        .map(|s| {
            if emit(s).len() <= limit {
                Ok(None)
            } else {
                truncate(s, limit).map(Some)
            }
        })
        .collect();
    let mut out = LengthFiltered::default();
    for (i, (s, r)) in corpus.iter().zip(results).enumerate() {
        match r {
            Ok(None) => out.kept.push(s.clone()),
            Ok(Some(t)) => out.truncated.push(t),
            Err(e) => out.rejected.push((i, e)),
        }
    }
    out
}

/// Drops exact-byte duplicates, keeping first occurrences in order.
pub fn dedup(corpus: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    corpus
        .into_iter()
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

/// Canonicalizes a corpus in parallel, preserving order.
pub fn canonicalize_corpus(corpus: &[Script]) -> Vec<(Script, CanonReport)> {
    corpus.par_iter().map(canonicalize).collect()
}
