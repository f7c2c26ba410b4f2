//! Orientation augmentation over the 24 proper cube rotations, and base
//! primitive swapping for sketch diversity.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{canonicalize, TARGET_EXTENT};
use crate::kernel::Vec3;
use crate::lang::{
    Expr, FrameClass, OpKind, PlaneCode, Script, SignedAxis, Statement, UnitTag, ValueKind,
};
use crate::trace::reachable;

pub type IMat3 = [[i32; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rotation24 {
    pub index: usize,
    pub matrix: IMat3,
}

fn mul(a: &IMat3, b: &IMat3) -> IMat3 {
    let mut m = [[0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn rz(k: usize) -> IMat3 {
    let (c, s) = [(1, 0), (0, 1), (-1, 0), (0, -1)][k % 4];
    [[c, -s, 0], [s, c, 0], [0, 0, 1]]
}

fn ry(k: usize) -> IMat3 {
    let (c, s) = [(1, 0), (0, 1), (-1, 0), (0, -1)][k % 4];
    [[c, 0, s], [0, 1, 0], [-s, 0, c]]
}

pub fn det(m: &IMat3) -> i32 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Indices 0..4: Rz(k); 4..20: Rz(k)·Ry(90°)·Rz(j) at 4 + 4k + j;
/// 20..24: Rz(k)·Ry(180°).
pub fn rotation_table() -> [Rotation24; 24] {
    let mut out = [Rotation24 {
        index: 0,
        matrix: rz(0),
    }; 24];
    for k in 0..4 {
        out[k].matrix = rz(k);
        for j in 0..4 {
            out[4 + 4 * k + j].matrix = mul(&mul(&rz(k), &ry(1)), &rz(j));
        }
        out[20 + k].matrix = mul(&rz(k), &ry(2));
    }
    for (i, r) in out.iter_mut().enumerate() {
        r.index = i;
    }
    out
}

impl Rotation24 {
    pub fn get(index: usize) -> Option<Rotation24> {
        rotation_table().get(index).copied()
    }

    pub fn from_matrix(m: &IMat3) -> Option<Rotation24> {
        rotation_table().into_iter().find(|r| &r.matrix == m)
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Rotation24) -> Rotation24 {
        Rotation24::from_matrix(&mul(&self.matrix, &first.matrix)).expect("the table is a group")
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        // exact: each row has a single ±1
        Vec3::from_fn(|i, _| {
            let mut acc = 0.0;
            for j in 0..3 {
                match self.matrix[i][j] {
                    1 => acc += v[j],
                    -1 => acc -= v[j],
                    _ => {}
                }
            }
            acc + 0.0
        })
    }

    fn apply_axis(&self, a: SignedAxis) -> SignedAxis {
        let v = a.vector();
        let mut out = [0i8; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|j| self.matrix[i][j] as i8 * v[j]).sum();
        }
        SignedAxis::from_vector(out).expect("signed permutations map axes to axes")
    }

    pub fn apply_plane(&self, p: PlaneCode) -> PlaneCode {
        PlaneCode {
            x_dir: self.apply_axis(p.x_dir),
            y_dir: self.apply_axis(p.y_dir),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum UnsupportedRewriteError {
    #[error("`{target}` ({op}): argument {index} is not a literal")]
    NonLiteral {
        target: String,
        op: OpKind,
        index: usize,
    },
    #[error("`{target}`: bad plane code: {message}")]
    Plane { target: String, message: String },
}

fn rewrite_vector(
    st: &mut Statement,
    start: usize,
    r: &Rotation24,
) -> Result<(), UnsupportedRewriteError> {
    let mut v = Vec3::zeros();
    for k in 0..3 {
        v[k] = st
            .num(start + k)
            .ok_or_else(|| UnsupportedRewriteError::NonLiteral {
                target: st.target.clone(),
                op: st.op,
                index: start + k,
            })?;
    }
    let w = r.apply(&v);
    for k in 0..3 {
        st.args[start + k].value = Expr::Num(w[k]);
    }
    Ok(())
}

/// Rotates a script about the origin by rewriting workplane frames and the
/// world-frame vectors of GLOBAL ops. LOCAL statements are not touched.
pub fn rotate_script(s: &Script, r: &Rotation24) -> Result<Script, UnsupportedRewriteError> {
    let mut out = s.clone();
    if r.index == 0 {
        return Ok(out);
    }
    for st in &mut out.statements {
        if st.op.frame_class() != FrameClass::Global {
            continue;
        }
        if st.op == OpKind::Workplane {
            let code = st.args[0].value.as_str().unwrap_or_default();
            let plane: PlaneCode =
                code.parse()
                    .map_err(|message| UnsupportedRewriteError::Plane {
                        target: st.target.clone(),
                        message,
                    })?;
            st.args[0].value = Expr::Str(r.apply_plane(plane).to_string());
        }
        for v in st.op.signature().vectors {
            rewrite_vector(st, v.start(), r)?;
        }
    }
    Ok(out)
}

/// One rotated variant of a script.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedVariant {
    pub source: usize,
    pub rotation: usize,
    pub script: Script,
}

impl RotatedVariant {
    pub fn tag(&self) -> String {
        format!("aug:rot:{}", self.rotation)
    }
}

/// One variant per script, rotation drawn uniformly from 1..=23. Scripts
/// that cannot be rewritten are skipped and returned with the reason.
pub fn rotational_augment(
    corpus: &[Script],
    seed: u64,
) -> (Vec<RotatedVariant>, Vec<(usize, String)>) {
    let table = rotation_table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (i, s) in corpus.iter().enumerate() {
        let k = rng.gen_range(1..24);
        match rotate_script(s, &table[k]) {
            Ok(script) => out.push(RotatedVariant {
                source: i,
                rotation: k,
                script,
            }),
            Err(e) => {
                log::warn!("skipping script {i}: {e}");
                skipped.push((i, e.to_string()));
            }
        }
    }
    (out, skipped)
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum NoMatch {
    #[error("no donors")]
    NoDonors,
    #[error("first primitive is not a full-extent box or cylinder")]
    NoTrigger,
    #[error("swapped script failed validation: {0}")]
    Invalid(String),
}

const DONOR_OPS: &[OpKind] = &[
    OpKind::Workplane,
    OpKind::MoveTo,
    OpKind::LineTo,
    OpKind::ArcTo,
    OpKind::Close,
    OpKind::Rect,
    OpKind::Circle,
    OpKind::Polygon,
    OpKind::RectArray,
    OpKind::PolarArray,
    OpKind::Extrude,
    OpKind::Union,
    OpKind::Cut,
    OpKind::Intersect,
    OpKind::Translate,
];

/// Sketch-and-extrude programs usable as replacement base shapes.
pub fn is_donor(s: &Script) -> bool {
    s.statements.iter().all(|st| DONOR_OPS.contains(&st.op))
        && s.statements.iter().any(|st| st.op == OpKind::Extrude)
        && s.find(&s.result_binding)
            .is_some_and(|st| st.op.output() == ValueKind::Solid)
}

fn full_extent(v: f64) -> bool {
    (v - TARGET_EXTENT).abs() < 1e-9
}

/// Position of the first solid-producing statement when it is a box whose
/// largest side, or a cylinder whose diameter or height, spans the target.
fn trigger(s: &Script) -> Option<usize> {
    let i = s
        .statements
        .iter()
        .position(|st| st.op.output() == ValueKind::Solid)?;
    let st = &s.statements[i];
    let hit = match st.op {
        OpKind::Box => {
            let dims = [st.num(1)?, st.num(2)?, st.num(3)?];
            full_extent(dims.iter().copied().fold(f64::MIN, f64::max))
        }
        OpKind::Cylinder => full_extent(st.num(1)?) || full_extent(2.0 * st.num(2)?),
        _ => false,
    };
    hit.then_some(i)
}

/// Replaces the base box or cylinder with a donor's statements, placed at
/// the primitive's workplane origin, and re-canonicalizes.
pub fn sketch_swap(s: &Script, donors: &[Script], seed: u64) -> Result<Script, NoMatch> {
    let donors: Vec<&Script> = donors.iter().filter(|d| is_donor(d)).collect();
    if donors.is_empty() {
        return Err(NoMatch::NoDonors);
    }
    let i = trigger(s).ok_or(NoMatch::NoTrigger)?;
    let prim = &s.statements[i];
    let origin = s
        .find(prim.args[0].value.as_var().unwrap_or_default())
        .filter(|wp| wp.op == OpKind::Workplane)
        .map(|wp| {
            Vec3::new(
                wp.num(1).unwrap_or(0.0),
                wp.num(2).unwrap_or(0.0),
                wp.num(3).unwrap_or(0.0),
            )
        })
        .unwrap_or_else(Vec3::zeros);
    let donor = donors[ChaCha8Rng::seed_from_u64(seed).gen_range(0..donors.len())];

    let mut taken: HashSet<String> = s.statements.iter().map(|st| st.target.clone()).collect();
    let mut fresh = |base: &str| {
        let name = (1..)
            .map(|k| format!("{base}_d{k}"))
            .find(|n| !taken.contains(n))
            .unwrap();
        taken.insert(name.clone());
        name
    };
    let mut renamed = crate::canon::unify(donor);
    let mut names = std::collections::HashMap::new();
    for st in &renamed.statements {
        names.insert(st.target.clone(), fresh(&st.target));
    }
    for st in &mut renamed.statements {
        st.target = names[&st.target].clone();
        for a in &mut st.args {
            if let (true, Some(v)) = (a.unit_tag.is_ref(), a.value.as_var()) {
                a.value = Expr::Var(names[v].clone());
            }
        }
    }
    let mut replacement = renamed.statements;
    let mut result = names[&renamed.result_binding].clone();
    if origin != Vec3::zeros() {
        let name = fresh("place");
        let mut args = vec![crate::lang::Arg {
            value: Expr::Var(result),
            unit_tag: UnitTag::Solid,
        }];
        args.extend(origin.iter().map(|&c| crate::lang::Arg {
            value: Expr::Num(c),
            unit_tag: UnitTag::Length,
        }));
        replacement.push(Statement {
            target: name.clone(),
            op: OpKind::Translate,
            args,
        });
        result = name;
    }

    let old = prim.target.clone();
    let mut statements = s.statements[..i].to_vec();
    statements.extend(replacement);
    for st in &s.statements[i + 1..] {
        let mut st = st.clone();
        for a in &mut st.args {
            if a.unit_tag.is_ref() && a.value.as_var() == Some(old.as_str()) {
                a.value = Expr::Var(result.clone());
            }
        }
        statements.push(st);
    }
    let result_binding = if s.result_binding == old {
        result
    } else {
        s.result_binding.clone()
    };
    let swapped = reachable(&Script {
        statements,
        result_binding,
    });
    let (c, report) = canonicalize(&swapped);
    if report.rejected {
        return Err(NoMatch::Invalid(report.reason.unwrap_or_default()));
    }
    Ok(c)
}

#[cfg(test)]
mod tests;
