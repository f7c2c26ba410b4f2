//! Deterministic offline proposer. Every reply is a pure function of the
//! request and the seed.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::*;
use crate::kernel::{build, Aabb};
use crate::lang::{
    emit_generator, parse_generator, Arg, Expr, Generator, Item, OpKind, Span, Statement, UnitTag,
};
use crate::trace::trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    /// Valid feature edits and splices of the parents.
    #[default]
    Cooperative,
    /// Every synthesized or repaired program evaluates to nothing.
    Invalid,
    /// Verification always disagrees.
    Adversarial,
    /// Synthesis adds a detached part; repair bridges it.
    DetachedPart,
}

#[derive(Debug, Clone, Default)]
pub struct MockProposer {
    pub seed: u64,
    pub mode: MockMode,
}

const FEATURES: [&str; 4] = ["cylindrical_boss", "through_hole", "pocket", "blend"];
/// Splices stay below this many characters.
const SPLICE_LIMIT: usize = 2400;
pub const ADVERSARIAL_CRITIQUE: &str = "the rendering does not match the description";

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl MockProposer {
    pub fn new(seed: u64, mode: MockMode) -> MockProposer {
        MockProposer { seed, mode }
    }

    fn rng(&self, tag: &str, req: &impl Serialize) -> ChaCha8Rng {
        let body = serde_json::to_vec(req).expect("requests serialize");
        ChaCha8Rng::seed_from_u64(fnv1a(tag.as_bytes()) ^ fnv1a(&body) ^ self.seed.rotate_left(17))
    }
}

fn root(name: &str) -> &str {
    name.split("_with_").next().unwrap_or(name)
}

fn feature_of(name: &str) -> &str {
    FEATURES
        .iter()
        .copied()
        .find(|f| name.ends_with(f))
        .unwrap_or("blend")
}

impl Proposer for MockProposer {
    fn propose_metadata(&self, req: &ProposeRequest) -> Result<Vec<ChildMeta>, ProposerError> {
        check_propose(req)?;
        let mut rng = self.rng("propose", req);
        Ok((0..req.k)
            .map(|_| {
                let a = req.parents.choose(&mut rng).expect("parents are nonempty");
                let others: Vec<&ParentInfo> =
                    req.parents.iter().filter(|p| p.id != a.id).collect();
                let b = others.choose(&mut rng).copied().unwrap_or(a);
                let feature = FEATURES[rng.gen_range(0..FEATURES.len())];
                let (name, parents, what) = if feature == "blend" && b.id != a.id {
                    (
                        format!("{}_with_{}_blend", root(&a.meta.name), root(&b.meta.name)),
                        vec![a.id, b.id],
                        format!("merged with a {}", root(&b.meta.name).replace('_', " ")),
                    )
                } else {
                    let f = if feature == "blend" {
                        "cylindrical_boss"
                    } else {
                        feature
                    };
                    (
                        format!("{}_with_{f}", root(&a.meta.name)),
                        vec![a.id],
                        format!("with a {}", f.replace('_', " ")),
                    )
                };
                let base = root(&a.meta.name).replace('_', " ");
                ChildMeta {
                    meta: Metadata {
                        name,
                        r#abstract: format!("A {base} {what}."),
                        detailed: format!(
                            "{} Variant {what}, derived from {}.",
                            a.meta.r#abstract, a.meta.name
                        ),
                    },
                    parents,
                }
            })
            .collect())
    }

    fn synthesize_code(&self, req: &SynthesizeRequest) -> Result<String, ProposerError> {
        check_synthesize(req)?;
        let mut rng = self.rng("synthesize", req);
        let block = |id: u64| req.context.iter().find(|b| b.id == id);
        let first = req
            .child
            .parents
            .first()
            .and_then(|&id| block(id))
            .or(req.context.first());
        let Some(base) = first.and_then(|b| parse_generator(&b.code).ok()) else {
            return Err(ProposerError::InvalidRequest(
                "no parseable parent code in context".into(),
            ));
        };
        let mut g = jitter(&base, &mut rng);
        let feature = feature_of(&req.child.meta.name);
        let spliced = (feature == "blend")
            .then(|| req.child.parents.get(1).and_then(|&id| block(id)))
            .flatten()
            .and_then(|b| parse_generator(&b.code).ok())
            .and_then(|other| splice(&g, &jitter(&other, &mut rng)));
        g = match spliced {
            Some(s) => s,
            None => {
                let kind = match feature {
                    "through_hole" => Feature::Hole,
                    "pocket" => Feature::Pocket,
                    _ => Feature::Boss,
                };
                add_feature(&g, kind).unwrap_or(g)
            }
        };
        g = match self.mode {
            MockMode::Invalid => hollow_out(&g),
            MockMode::DetachedPart => detach(&g).unwrap_or(g),
            _ => g,
        };
        Ok(emit_generator(&g))
    }

    fn verify(&self, req: &VerifyRequest) -> Result<Verdict, ProposerError> {
        check_verify(req)?;
        if self.mode == MockMode::Adversarial {
            return Ok(Verdict {
                agree: false,
                critique: ADVERSARIAL_CRITIQUE.into(),
            });
        }
        let agree = req.solid_count == 1;
        let critique = if agree {
            String::new()
        } else {
            format!("expected one solid, saw {}", req.solid_count)
        };
        Ok(Verdict { agree, critique })
    }

    fn repair(&self, req: &RepairRequest) -> Result<String, ProposerError> {
        let g = parse_generator(&req.code).map_err(|e| {
            ProposerError::InvalidRequest(format!("failing code does not parse: {e}"))
        })?;
        if self.mode == MockMode::Invalid {
            return Ok(emit_generator(&hollow_out(&g)));
        }
        let fixed = if req.diagnostic.contains("solids") {
            bridge(&g)
        } else if req.diagnostic.contains("domain boundary") {
            Some(shrink(&g))
        } else {
            None
        };
        Ok(emit_generator(&fixed.unwrap_or(g)))
    }
}

fn round_to(v: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    (v * p).round() / p + 0.0
}

fn jitter(g: &Generator, rng: &mut ChaCha8Rng) -> Generator {
    let mut out = g.clone();
    for p in &mut out.params {
        let f: f64 = rng.gen_range(0.9..1.1);
        if matches!(
            p.unit_tag,
            UnitTag::Length | UnitTag::Angle | UnitTag::Ratio
        ) && p.default != 0.0
        {
            p.default = round_to(p.default * f, 2);
        }
    }
    out
}

fn declared(g: &Generator) -> HashSet<String> {
    fn walk(items: &[Item], out: &mut HashSet<String>) {
        for it in items {
            match it {
                Item::Stmt { stmt, .. } => {
                    out.insert(stmt.target.clone());
                }
                Item::Let { name, .. } => {
                    out.insert(name.clone());
                }
                Item::For { var, body, .. } => {
                    out.insert(var.clone());
                    walk(body, out);
                }
                Item::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    walk(then_body, out);
                    walk(else_body, out);
                }
            }
        }
    }
    let mut out: HashSet<String> = g.params.iter().map(|p| p.name.clone()).collect();
    walk(&g.body, &mut out);
    out
}

fn rename_expr(e: &mut Expr, map: &HashMap<String, String>) {
    match e {
        Expr::Var(v) => {
            if let Some(n) = map.get(v) {
                *v = n.clone();
            }
        }
        Expr::Neg(a) | Expr::Not(a) => rename_expr(a, map),
        Expr::Bin(_, a, b) => {
            rename_expr(a, map);
            rename_expr(b, map);
        }
        Expr::Call(_, args) => args.iter_mut().for_each(|a| rename_expr(a, map)),
        Expr::Num(_) | Expr::Str(_) => {}
    }
}

fn rename_items(items: &mut [Item], map: &HashMap<String, String>) {
    let re = |n: &mut String| {
        if let Some(m) = map.get(n) {
            *n = m.clone();
        }
    };
    for it in items {
        match it {
            Item::Stmt { stmt, .. } => {
                re(&mut stmt.target);
                stmt.args
                    .iter_mut()
                    .for_each(|a| rename_expr(&mut a.value, map));
            }
            Item::Let { name, value, .. } => {
                re(name);
                rename_expr(value, map);
            }
            Item::For {
                var,
                start,
                end,
                body,
                ..
            } => {
                re(var);
                rename_expr(start, map);
                rename_expr(end, map);
                rename_items(body, map);
            }
            Item::If {
                cond,
                then_body,
                else_body,
                ..
            } => {
                rename_expr(cond, map);
                rename_items(then_body, map);
                rename_items(else_body, map);
            }
        }
    }
}

fn fresh(taken: &HashSet<String>, stem: &str) -> String {
    (1..)
        .map(|k| format!("{stem}{k}"))
        .find(|n| !taken.contains(n))
        .expect("unbounded")
}

fn stmt(target: &str, op: OpKind, values: Vec<Expr>) -> Item {
    let tags = op.signature().args;
    let args = values
        .into_iter()
        .zip(tags)
        .map(|(value, &unit_tag)| Arg { value, unit_tag })
        .collect();
    Item::Stmt {
        stmt: Statement {
            target: target.to_string(),
            op,
            args,
        },
        span: Span::default(),
    }
}

fn num(v: f64) -> Expr {
    Expr::Num(round_to(v, 1))
}

fn var(n: &str) -> Expr {
    Expr::Var(n.to_string())
}

/// Re-parses the emitted program so that only well-typed results escape.
fn checked(g: Generator) -> Option<Generator> {
    parse_generator(&emit_generator(&g)).ok()
}

/// Union of `a` with a renamed copy of `b`.
fn splice(a: &Generator, b: &Generator) -> Option<Generator> {
    let taken = declared(a);
    let suffix = (1..).map(|k| format!("_b{k}")).find(|s| {
        declared(b)
            .iter()
            .all(|n| !taken.contains(&format!("{n}{s}")))
    })?;
    let map: HashMap<String, String> = declared(b)
        .into_iter()
        .map(|n| (n.clone(), format!("{n}{suffix}")))
        .collect();
    let mut other = b.clone();
    other
        .params
        .iter_mut()
        .for_each(|p| p.name = map[&p.name].clone());
    rename_items(&mut other.body, &map);
    let mut out = a.clone();
    out.params.extend(other.params);
    out.body.extend(other.body);
    let mut all = declared(&out);
    all.extend(map.values().cloned());
    let joined = fresh(&all, "blend");
    out.body.push(stmt(
        &joined,
        OpKind::Union,
        vec![var(&a.result_binding), var(&map[&b.result_binding])],
    ));
    out.result_binding = joined;
    let out = checked(out)?;
    (emit_generator(&out).len() <= SPLICE_LIMIT).then_some(out)
}

/// Conservative bound of the generator's solid at its defaults.
fn bounds(g: &Generator) -> Option<Aabb> {
    let t = trace(g, &Default::default()).ok()?;
    build(&t.to_script()).ok()?.measure_aabb(64)
}

#[derive(Debug, Clone, Copy)]
enum Feature {
    Boss,
    Hole,
    Pocket,
}

/// Plane code whose normal is axis `a`.
fn plane_for(a: usize) -> &'static str {
    ["YZ", "ZX", "XY"][a]
}

/// Keeps edits well inside the default evaluation domain.
const LIMIT: f64 = 104.0;

fn add_feature(g: &Generator, kind: Feature) -> Option<Generator> {
    let b = bounds(g)?;
    let e = b.extent();
    let c = b.center();
    let taken = declared(g);
    let k = (1..).find(|k| {
        ["wp", "s", "out"]
            .iter()
            .all(|p| !taken.contains(&format!("f{k}_{p}")))
    })?;
    let (wp, s, out) = (format!("f{k}_wp"), format!("f{k}_s"), format!("f{k}_out"));
    // face with the most room to the domain limit
    let (axis, sign) = (0..3).flat_map(|a| [(a, 1.0), (a, -1.0)]).max_by(|x, y| {
        let room = |&(a, s): &(usize, f64)| LIMIT - if s > 0.0 { b.max[a] } else { -b.min[a] };
        room(x).total_cmp(&room(y))
    })?;
    let room = LIMIT
        - if sign > 0.0 {
            b.max[axis]
        } else {
            -b.min[axis]
        };
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let face = if sign > 0.0 { b.max[axis] } else { b.min[axis] };
    let mut at = c;
    let mut body = g.body.clone();
    let (op, solid, combine) = match kind {
        Feature::Boss => {
            let h = (0.3 * e[axis] + 2.0).min(2.0 * (room - 2.0));
            if h < 2.0 {
                return add_feature(g, Feature::Hole);
            }
            at[axis] = face;
            let r = 0.2 * e[u].min(e[v]);
            (
                OpKind::Cylinder,
                vec![var(&wp), num(h), num(r)],
                OpKind::Union,
            )
        }
        Feature::Hole => {
            // drill along the thinnest axis
            let a = (0..3).min_by(|&x, &y| e[x].total_cmp(&e[y]))?;
            let (p, q) = ((a + 1) % 3, (a + 2) % 3);
            let r = 0.15 * e[p].min(e[q]);
            body.push(stmt(
                &wp,
                OpKind::Workplane,
                vec![Expr::Str(plane_for(a).into()), num(c.x), num(c.y), num(c.z)],
            ));
            body.push(stmt(
                &s,
                OpKind::Cylinder,
                vec![var(&wp), num(1.2 * e[a]), num(r)],
            ));
            body.push(stmt(
                &out,
                OpKind::Cut,
                vec![var(&g.result_binding), var(&s)],
            ));
            return checked(Generator {
                params: g.params.clone(),
                body,
                result_binding: out,
            });
        }
        Feature::Pocket => {
            at[axis] = face;
            let mut dims = [0.0; 3];
            dims[u] = 0.4 * e[u];
            dims[v] = 0.4 * e[v];
            dims[axis] = 0.4 * e[axis];
            (
                OpKind::Box,
                vec![var(&wp), num(dims[0]), num(dims[1]), num(dims[2])],
                OpKind::Cut,
            )
        }
    };
    body.push(stmt(
        &wp,
        OpKind::Workplane,
        vec![
            Expr::Str(plane_for(axis).into()),
            num(at.x),
            num(at.y),
            num(at.z),
        ],
    ));
    body.push(stmt(&s, op, solid));
    body.push(stmt(&out, combine, vec![var(&g.result_binding), var(&s)]));
    checked(Generator {
        params: g.params.clone(),
        body,
        result_binding: out,
    })
}

fn append(
    g: &Generator,
    stem: &str,
    build: impl FnOnce(&str, &dyn Fn(&str) -> String) -> Vec<Item>,
) -> Generator {
    let taken = declared(g);
    let k = (1..)
        .find(|k| !taken.iter().any(|n| n.starts_with(&format!("{stem}{k}_"))))
        .expect("unbounded");
    let name = |p: &str| format!("{stem}{k}_{p}");
    let mut out = g.clone();
    let items = build(&name("out"), &name);
    out.body.extend(items);
    out.result_binding = name("out");
    out
}

/// Cuts everything away.
fn hollow_out(g: &Generator) -> Generator {
    append(g, "void", |out, name| {
        vec![
            stmt(
                &name("wp"),
                OpKind::Workplane,
                vec![Expr::Str("XY".into()), num(0.0), num(0.0), num(0.0)],
            ),
            stmt(
                &name("s"),
                OpKind::Box,
                vec![var(&name("wp")), num(1000.0), num(1000.0), num(1000.0)],
            ),
            stmt(
                out,
                OpKind::Cut,
                vec![var(&g.result_binding), var(&name("s"))],
            ),
        ]
    })
}

/// Adds a small box separated from the shape by a gap.
fn detach(g: &Generator) -> Option<Generator> {
    let b = bounds(g)?;
    let c = b.center();
    let (axis, room) = (0..3)
        .map(|a| (a, LIMIT - b.max[a]))
        .max_by(|x, y| x.1.total_cmp(&y.1))?;
    if room < 20.0 {
        return None;
    }
    let mut at = c;
    at[axis] = b.max[axis] + 12.0;
    Some(append(g, "part", |out, name| {
        vec![
            stmt(
                &name("wp"),
                OpKind::Workplane,
                vec![Expr::Str("XY".into()), num(at.x), num(at.y), num(at.z)],
            ),
            stmt(
                &name("s"),
                OpKind::Box,
                vec![var(&name("wp")), num(8.0), num(8.0), num(8.0)],
            ),
            stmt(
                out,
                OpKind::Union,
                vec![var(&g.result_binding), var(&name("s"))],
            ),
        ]
    }))
}

/// Joins components with three bars through the bounding-box center, each
/// spanning the full box.
fn bridge(g: &Generator) -> Option<Generator> {
    let b = bounds_any(g)?;
    let e = b.extent();
    let c = b.center();
    let t = (0.1 * e.min()).max(4.0);
    Some(append(g, "bridge", |out, name| {
        let mut items = vec![stmt(
            &name("wp"),
            OpKind::Workplane,
            vec![Expr::Str("XY".into()), num(c.x), num(c.y), num(c.z)],
        )];
        let mut acc = g.result_binding.clone();
        for (a, bar) in ["x", "y", "z"].iter().enumerate() {
            let mut d = [t; 3];
            d[a] = e[a];
            let s = name(&format!("bar_{bar}"));
            let u = if a == 2 {
                out.to_string()
            } else {
                name(&format!("join_{bar}"))
            };
            items.push(stmt(
                &s,
                OpKind::Box,
                vec![var(&name("wp")), num(d[0]), num(d[1]), num(d[2])],
            ));
            items.push(stmt(&u, OpKind::Union, vec![var(&acc), var(&s)]));
            acc = u;
        }
        items
    }))
}

/// Like [`bounds`] but from the CSG bound, which exists for any nonempty
/// multi-part model.
fn bounds_any(g: &Generator) -> Option<Aabb> {
    let t = trace(g, &Default::default()).ok()?;
    build(&t.to_script()).ok()?.bbox()
}

fn shrink(g: &Generator) -> Generator {
    append(g, "shrink", |out, _| {
        vec![stmt(
            out,
            OpKind::Scale,
            vec![var(&g.result_binding), Expr::Num(0.8)],
        )]
    })
}
