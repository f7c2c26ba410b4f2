//! Script interpreter: statements to sketches and CSG nodes.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Matrix3;

use super::sketch::{Frame, Loop, Region, Sketch, P2};
use super::solid::{BoolOp, Node};
use super::{EvalError, Model, Vec3};
use crate::lang::{OpKind, PlaneCode, Script, Statement};

#[derive(Clone)]
enum Value {
    Sketch(Sketch),
    Solid(Arc<Node>),
}

struct Ctx<'a> {
    st: &'a Statement,
    env: &'a HashMap<String, Value>,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> EvalError {
        EvalError::Runtime {
            target: self.st.target.clone(),
            op: self.st.op,
            message: message.into(),
        }
    }

    fn num(&self, i: usize) -> Result<f64, EvalError> {
        match self.st.num(i) {
            Some(v) if v.is_finite() => Ok(v),
            Some(_) => Err(self.err(format!("argument {} is not finite", i + 1))),
            None => Err(self.err(format!("argument {} is not a numeric literal", i + 1))),
        }
    }

    fn count(&self, i: usize) -> Result<usize, EvalError> {
        let v = self.num(i)?.round();
        if v < 1.0 || v > 10_000.0 {
            return Err(self.err(format!("count {v} outside [1, 10000]")));
        }
        Ok(v as usize)
    }

    fn vec3(&self, i: usize) -> Result<Vec3, EvalError> {
        Ok(Vec3::new(self.num(i)?, self.num(i + 1)?, self.num(i + 2)?))
    }

    fn value(&self, i: usize) -> Result<&Value, EvalError> {
        let name = self.st.args[i]
            .value
            .as_var()
            .ok_or_else(|| self.err(format!("argument {} must name a temporary", i + 1)))?;
        self.env
            .get(name)
            .ok_or_else(|| EvalError::Undefined(name.to_string()))
    }

    fn sketch(&self, i: usize) -> Result<Sketch, EvalError> {
        match self.value(i)? {
            Value::Sketch(s) => Ok(s.clone()),
            Value::Solid(_) => Err(self.err(format!("argument {} must be a sketch", i + 1))),
        }
    }

    fn solid(&self, i: usize) -> Result<Arc<Node>, EvalError> {
        match self.value(i)? {
            Value::Solid(s) => Ok(s.clone()),
            Value::Sketch(_) => Err(self.err(format!("argument {} must be a solid", i + 1))),
        }
    }

    fn positive(&self, i: usize, what: &str) -> Result<f64, EvalError> {
        let v = self.num(i)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(format!("{what} must be positive, got {v}")))
        }
    }
}

enum Outcome {
    Value(Value),
    Unsupported,
}

pub(super) fn build(script: &Script) -> Result<Model, EvalError> {
    let mut env: HashMap<String, Value> = HashMap::new();
    let mut approximated = Vec::new();
    let mut unsupported = Vec::new();
    for st in &script.statements {
        let cx = Ctx { st, env: &env };
        if st.args.len() != st.op.signature().args.len() {
            return Err(cx.err("wrong number of arguments"));
        }
        if st.op.is_approximated() && !approximated.contains(&st.op) {
            approximated.push(st.op);
        }
        match step(&cx)? {
            Outcome::Value(v) => {
                env.insert(st.target.clone(), v);
            }
            Outcome::Unsupported => {
                if !unsupported.contains(&st.op) {
                    unsupported.push(st.op);
                }
                // keep evaluating so later errors still surface
                env.insert(st.target.clone(), Value::Solid(Arc::new(Node::Empty)));
            }
        }
    }
    let root = match env.get(&script.result_binding) {
        Some(Value::Solid(n)) => n.clone(),
        Some(Value::Sketch(_)) => {
            return Err(EvalError::Runtime {
                target: script.result_binding.clone(),
                op: script
                    .find(&script.result_binding)
                    .map_or(OpKind::Workplane, |s| s.op),
                message: "result is a sketch, not a solid".into(),
            })
        }
        None => return Err(EvalError::Undefined(script.result_binding.clone())),
    };
    if !unsupported.is_empty() {
        return Ok(Model {
            root: Arc::new(Node::Empty),
            approximated_ops: approximated,
            unsupported_ops: unsupported,
        });
    }
    Ok(Model {
        root,
        approximated_ops: approximated,
        unsupported_ops: unsupported,
    })
}

fn solid(n: Node) -> Result<Outcome, EvalError> {
    Ok(Outcome::Value(Value::Solid(Arc::new(n))))
}

fn sketch(s: Sketch) -> Result<Outcome, EvalError> {
    Ok(Outcome::Value(Value::Sketch(s)))
}

fn step(cx: &Ctx) -> Result<Outcome, EvalError> {
    let st = cx.st;
    let wrap = |r: Result<(), String>| r.map_err(|m| cx.err(m));
    match st.op {
        OpKind::Workplane => {
            let code = st.args[0]
                .value
                .as_str()
                .ok_or_else(|| cx.err("plane code must be a string"))?;
            let plane: PlaneCode = code.parse().map_err(|e: String| cx.err(e))?;
            sketch(Sketch::new(Frame::new(plane, cx.vec3(1)?)))
        }
        OpKind::MoveTo => {
            let mut s = cx.sketch(0)?;
            s.move_to(P2::new(cx.num(1)?, cx.num(2)?));
            sketch(s)
        }
        OpKind::LineTo => {
            let mut s = cx.sketch(0)?;
            s.line_to(P2::new(cx.num(1)?, cx.num(2)?));
            sketch(s)
        }
        OpKind::ArcTo => {
            let mut s = cx.sketch(0)?;
            s.arc_to(
                P2::new(cx.num(1)?, cx.num(2)?),
                P2::new(cx.num(3)?, cx.num(4)?),
            );
            sketch(s)
        }
        OpKind::Close => {
            let mut s = cx.sketch(0)?;
            wrap(s.close())?;
            sketch(s)
        }
        OpKind::Rect => {
            let mut s = cx.sketch(0)?;
            wrap(s.rect(cx.num(1)?, cx.num(2)?))?;
            sketch(s)
        }
        OpKind::Circle => {
            let mut s = cx.sketch(0)?;
            wrap(s.circle(cx.num(1)?))?;
            sketch(s)
        }
        OpKind::Polygon => {
            let mut s = cx.sketch(0)?;
            wrap(s.polygon(cx.count(1)?, cx.num(2)?))?;
            sketch(s)
        }
        OpKind::RectArray => {
            let mut s = cx.sketch(0)?;
            wrap(s.rect_array(cx.num(1)?, cx.num(2)?, cx.count(3)?, cx.count(4)?))?;
            sketch(s)
        }
        OpKind::PolarArray => {
            let mut s = cx.sketch(0)?;
            wrap(s.polar_array(cx.num(1)?, cx.num(2)?, cx.num(3)?, cx.count(4)?))?;
            sketch(s)
        }
        OpKind::Extrude => {
            let s = cx.sketch(0)?;
            let d = cx.num(1)?;
            if s.region().is_empty() {
                return Err(cx.err("extruding an empty sketch"));
            }
            if d == 0.0 {
                return Err(cx.err("zero extrusion distance"));
            }
            solid(Node::Prism {
                frame: s.frame,
                region: s.region().clone(),
                h0: d.min(0.0),
                h1: d.max(0.0),
            })
        }
        OpKind::Revolve => {
            let s = cx.sketch(0)?;
            let angle = cx.num(1)?;
            let a = P2::new(cx.num(2)?, cx.num(3)?);
            let b = P2::new(cx.num(4)?, cx.num(5)?);
            if s.region().is_empty() {
                return Err(cx.err("revolving an empty sketch"));
            }
            let axis = b - a;
            if axis.norm() <= 1e-12 {
                return Err(cx.err("zero-length revolve axis"));
            }
            if angle == 0.0 {
                return Err(cx.err("zero revolve angle"));
            }
            let angle = angle.clamp(-360.0, 360.0).to_radians();
            solid(Node::Revolve {
                frame: s.frame,
                region: s.region().clone(),
                origin: a,
                axis: axis.normalize(),
                angle,
            })
        }
        OpKind::Loft => loft(cx, cx.sketch(0)?, cx.sketch(1)?),
        OpKind::Sweep => sweep(cx, cx.sketch(0)?, cx.sketch(1)?),
        OpKind::Box => {
            let s = cx.sketch(0)?;
            let (l, w, h) = (
                cx.positive(1, "box length")?,
                cx.positive(2, "box width")?,
                cx.positive(3, "box height")?,
            );
            let (a, b) = (l / 2.0, w / 2.0);
            let base = Loop::Poly(vec![
                P2::new(-a, -b),
                P2::new(a, -b),
                P2::new(a, b),
                P2::new(-a, b),
            ]);
            solid(Node::Prism {
                frame: s.frame,
                region: at_locations(&s, &base),
                h0: -h / 2.0,
                h1: h / 2.0,
            })
        }
        OpKind::Cylinder => {
            let s = cx.sketch(0)?;
            let (h, r) = (
                cx.positive(1, "cylinder height")?,
                cx.positive(2, "cylinder radius")?,
            );
            let base = Loop::Circle {
                center: P2::zeros(),
                r,
            };
            solid(Node::Prism {
                frame: s.frame,
                region: at_locations(&s, &base),
                h0: -h / 2.0,
                h1: h / 2.0,
            })
        }
        OpKind::Sphere => {
            let s = cx.sketch(0)?;
            let r = cx.positive(1, "sphere radius")?;
            let nodes = s
                .locations()
                .iter()
                .map(|l| Node::Sphere {
                    center: s.frame.to_world(l.offset, 0.0),
                    r,
                })
                .collect();
            solid(union_all(nodes))
        }
        OpKind::Union | OpKind::Cut | OpKind::Intersect => {
            let op = match st.op {
                OpKind::Union => BoolOp::Union,
                OpKind::Cut => BoolOp::Cut,
                _ => BoolOp::Intersect,
            };
            solid(Node::Bool {
                op,
                a: cx.solid(0)?,
                b: cx.solid(1)?,
            })
        }
        OpKind::Translate => solid(Node::affine(Matrix3::identity(), cx.vec3(1)?, cx.solid(0)?)),
        OpKind::Rotate => {
            let inner = cx.solid(0)?;
            let p = cx.vec3(1)?;
            let axis = cx.vec3(4)?;
            if axis.norm() <= 1e-12 {
                return Err(cx.err("zero-length rotation axis"));
            }
            let m = rotation_matrix(&axis.normalize(), cx.num(7)?.to_radians());
            solid(Node::affine(m, p - m * p, inner))
        }
        OpKind::Mirror => {
            let inner = cx.solid(0)?;
            let n = cx.vec3(1)?;
            if n.norm() <= 1e-12 {
                return Err(cx.err("zero-length mirror normal"));
            }
            let n = n.normalize();
            let m = snap(Matrix3::identity() - n * n.transpose() * 2.0);
            let p = cx.vec3(4)?;
            solid(Node::affine(m, p - m * p, inner))
        }
        OpKind::Hole => {
            let target = cx.solid(0)?;
            let s = cx.sketch(1)?;
            let d = cx.positive(2, "hole diameter")?;
            let depth = cx.positive(3, "hole depth")?;
            let base = Loop::Circle {
                center: P2::zeros(),
                r: d / 2.0,
            };
            let drill = Node::Prism {
                frame: s.frame,
                region: at_locations(&s, &base),
                h0: -depth,
                h1: 0.0,
            };
            solid(Node::Bool {
                op: BoolOp::Cut,
                a: target,
                b: Arc::new(drill),
            })
        }
        OpKind::Shell => {
            let inner = cx.solid(0)?;
            let t = cx.num(1)?;
            if t == 0.0 {
                return Err(cx.err("zero shell thickness"));
            }
            solid(Node::Shell {
                inner,
                thickness: t.abs(),
            })
        }
        OpKind::Fillet | OpKind::Chamfer => {
            let inner = cx.solid(0)?;
            if cx.num(1)? < 0.0 {
                return Err(cx.err("negative edge size"));
            }
            Ok(Outcome::Value(Value::Solid(inner)))
        }
        OpKind::Scale => {
            let inner = cx.solid(0)?;
            let k = cx.positive(1, "scale factor")?;
            solid(Node::affine(Matrix3::identity() * k, Vec3::zeros(), inner))
        }
    }
}

/// One copy of `base` per sketch location, unioned.
fn at_locations(s: &Sketch, base: &Loop) -> Region {
    Region {
        sets: s.locations().iter().map(|l| vec![base.placed(l)]).collect(),
    }
}

fn union_all(nodes: Vec<Node>) -> Node {
    nodes
        .into_iter()
        .reduce(|a, b| Node::Bool {
            op: BoolOp::Union,
            a: Arc::new(a),
            b: Arc::new(b),
        })
        .unwrap_or(Node::Empty)
}

/// Rounds entries within 1e-12 of -1, 0 or 1 so right-angle maps stay exact.
fn snap(mut m: Matrix3<f64>) -> Matrix3<f64> {
    for v in m.iter_mut() {
        for target in [-1.0, 0.0, 1.0] {
            if (*v - target).abs() <= 1e-12 {
                *v = target;
            }
        }
    }
    m
}

fn rotation_matrix(k: &Vec3, theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    snap(Matrix3::identity() * c + kx * s + k * k.transpose() * (1.0 - c))
}

fn convex_orientation(pts: &[P2]) -> Option<f64> {
    let n = pts.len();
    let mut sign = 0.0;
    for i in 0..n {
        let (a, b, c) = (pts[i], pts[(i + 1) % n], pts[(i + 2) % n]);
        let z = (b - a).perp(&(c - b));
        if z.abs() <= 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return None;
        }
    }
    (sign != 0.0).then_some(sign)
}

fn loft(cx: &Ctx, a: Sketch, b: Sketch) -> Result<Outcome, EvalError> {
    let (Some(la), Some(lb)) = (a.region().single_loop(), b.region().single_loop()) else {
        if a.region().is_empty() || b.region().is_empty() {
            return Err(cx.err("lofting an empty sketch"));
        }
        return Ok(Outcome::Unsupported);
    };
    if a.frame.n.cross(&b.frame.n).norm() > 1e-12 {
        return Ok(Outcome::Unsupported);
    }
    let to_a = |p: P2| a.frame.to_local(b.frame.to_world(p, 0.0));
    let (_, height) = to_a(P2::zeros());
    if height.abs() <= 1e-12 {
        return Err(cx.err("lofted sections are coplanar"));
    }
    let top = match (la, lb) {
        (Loop::Poly(p), Loop::Poly(q)) if p.len() == q.len() => {
            let q: Vec<P2> = q.iter().map(|&v| to_a(v).0).collect();
            match (convex_orientation(p), convex_orientation(&q)) {
                (Some(s1), Some(s2)) if s1 == s2 => Loop::Poly(q),
                _ => return Ok(Outcome::Unsupported),
            }
        }
        (Loop::Circle { .. }, Loop::Circle { center, r }) => Loop::Circle {
            center: to_a(*center).0,
            r: *r,
        },
        _ => return Ok(Outcome::Unsupported),
    };
    solid(Node::Loft {
        frame: a.frame,
        bottom: la.clone(),
        top,
        height,
    })
}

fn sweep(cx: &Ctx, profile: Sketch, path: Sketch) -> Result<Outcome, EvalError> {
    if profile.region().is_empty() {
        return Err(cx.err("sweeping an empty profile"));
    }
    let Some(pts) = path.open_path() else {
        return Ok(Outcome::Unsupported);
    };
    let world: Vec<Vec3> = pts.iter().map(|&p| path.frame.to_world(p, 0.0)).collect();
    let p0 = world[0];
    let mut nodes = Vec::new();
    for w in world.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len <= 1e-12 {
            continue;
        }
        let r = align(&profile.frame.n, &(seg / len), &profile.frame.x);
        let frame = Frame {
            origin: w[0] + r * (profile.frame.origin - p0),
            x: r * profile.frame.x,
            y: r * profile.frame.y,
            n: r * profile.frame.n,
        };
        nodes.push(Node::Prism {
            frame,
            region: profile.region().clone(),
            h0: 0.0,
            h1: len,
        });
    }
    if nodes.is_empty() {
        return Err(cx.err("sweep path has zero length"));
    }
    solid(union_all(nodes))
}

/// Minimal rotation taking unit `from` onto unit `to`; a half turn about
/// `fallback` when they are opposite.
fn align(from: &Vec3, to: &Vec3, fallback: &Vec3) -> Matrix3<f64> {
    let c = from.dot(to);
    if c >= 1.0 - 1e-12 {
        return Matrix3::identity();
    }
    if c <= -1.0 + 1e-12 {
        return rotation_matrix(&fallback.normalize(), std::f64::consts::PI);
    }
    let axis = from.cross(to).normalize();
    rotation_matrix(&axis, c.clamp(-1.0, 1.0).acos())
}
