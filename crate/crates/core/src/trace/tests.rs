use proptest::prelude::*;

use super::*;
use crate::kernel::{default_domain, evaluate_default, Grid, DEFAULT_RESOLUTION};
use crate::lang::{emit, emit_generator, parse, parse_generator};

fn gen(src: &str) -> Generator {
    parse_generator(src).unwrap()
}

fn z(pairs: &[(&str, f64)]) -> ParamMap {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn occupancy(s: &Script) -> crate::kernel::BitGrid {
    let grid = Grid::over(&default_domain(), DEFAULT_RESOLUTION);
    crate::kernel::build(s).unwrap().rasterize(&grid).occupancy
}

const PLATE: &str = "param r: length = 5
param n: count = 3
wp1 = workplane(\"XY\")
wp2 = rect(wp1, 40, 40)
body = extrude(wp2, 2 * r + 1)
for i in 0..n {
  c = workplane(\"XY\", -15 + 10 * i, 0, 0)
  c = circle(c, 2)
  t = extrude(c, 30)
  body = cut(body, t)
}
if r > 4 {
  body = fillet(body, 1)
} else {
  body = translate(body, 0, 0, 1)
}
result = body";

#[test]
fn folds_arguments_and_renames_reassignments() {
    let t = trace(&gen(PLATE), &z(&[("n", 2.0)])).unwrap();
    let targets: Vec<&str> = t.executed.iter().map(|e| e.stmt.target.as_str()).collect();
    assert_eq!(
        targets,
        [
            "wp1", "wp2", "body", "c", "c_2", "t", "body_2", "c_3", "c_4", "t_2", "body_3",
            "body_4"
        ]
    );
    assert_eq!(t.result_binding, "body_4");
    assert_eq!(t.executed[2].stmt.num(1), Some(11.0));
    assert_eq!(t.executed[7].stmt.num(1), Some(-5.0));
    assert_eq!(t.executed[11].stmt.op, OpKind::Fillet);
    // the traced script is a valid flat program
    let text = emit(&t.to_script());
    assert_eq!(crate::lang::parse_script(&text).unwrap(), t.to_script());
}

#[test]
fn else_branch_and_defaults() {
    let t = trace(&gen(PLATE), &z(&[("r", 2.0), ("n", 0.0)])).unwrap();
    let ops: Vec<OpKind> = t.executed.iter().map(|e| e.stmt.op).collect();
    assert_eq!(
        ops,
        [
            OpKind::Workplane,
            OpKind::Rect,
            OpKind::Extrude,
            OpKind::Translate
        ]
    );
    assert_eq!(
        t.binds,
        vec![("r".to_string(), 2.0), ("n".to_string(), 0.0)]
    );
}

#[test]
fn fresh_names_avoid_existing_targets() {
    let g = gen("wp1 = workplane(\"XY\")
a = rect(wp1, 2, 2)
a_2 = rect(wp1, 4, 4)
a = rect(a, 1, 1)
s = extrude(a, 1)
s2 = extrude(a_2, 1)
u = union(s, s2)
result = u");
    let t = trace(&g, &ParamMap::new()).unwrap();
    assert_eq!(t.executed[3].stmt.target, "a_3");
    assert_eq!(t.executed[4].stmt.args[0].value, Expr::Var("a_3".into()));
    assert_eq!(t.executed[5].stmt.args[0].value, Expr::Var("a_2".into()));
}

#[test]
fn loop_bound() {
    let g = gen("param n: count = 20000
wp1 = workplane(\"XY\")
s = rect(wp1, 1, 1)
for i in 0..n {
  s = rect(s, 1, 1)
}
b = extrude(s, 1)
result = b");
    assert_eq!(
        trace(&g, &ParamMap::new()),
        Err(TraceError::LoopBound(MAX_TRACE_STATEMENTS))
    );
    assert!(trace(&g, &z(&[("n", 100.0)])).is_ok());
}

#[test]
fn errors() {
    let g = gen(PLATE);
    assert!(matches!(
        trace(&g, &z(&[("q", 1.0)])),
        Err(TraceError::Lang(LangError::UnknownParam(_)))
    ));
    let g = gen("param d = 0
wp1 = workplane(\"XY\")
wp2 = rect(wp1, 1 / d, 1)
b = extrude(wp2, 1)
result = b");
    match trace(&g, &ParamMap::new()) {
        Err(TraceError::Eval { span, .. }) => assert_eq!(span.line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn slice_drops_dead_and_noop_statements() {
    let g = gen("wp1 = workplane(\"XY\")
wp2 = rect(wp1, 20, 20)
wp3 = extrude(wp2, 10)
dead = workplane(\"XZ\")
dead2 = circle(dead, 4)
dead3 = extrude(dead2, 3)
far = workplane(\"XY\", 80, 80, 80)
far2 = box(far, 5, 5, 5)
wp4 = cut(wp3, far2)
wp5 = translate(wp4, 0, 0, 0)
wp6 = fillet(wp5, 1)
result = wp6");
    let t = trace(&g, &ParamMap::new()).unwrap();
    let s = slice(&t).unwrap();
    let ops: Vec<OpKind> = s.statements.iter().map(|st| st.op).collect();
    assert_eq!(
        ops,
        [
            OpKind::Workplane,
            OpKind::Rect,
            OpKind::Extrude,
            OpKind::Fillet
        ]
    );
    assert_eq!(occupancy(&s), occupancy(&t.to_script()));
}

#[test]
fn zero_fillet_is_sliced() {
    let g = gen("wp1 = workplane(\"XY\")
wp2 = rect(wp1, 20, 20)
wp3 = extrude(wp2, 10)
wp4 = fillet(wp3, 0)
result = wp4");
    let s = slice(&trace(&g, &ParamMap::new()).unwrap()).unwrap();
    assert_eq!(s.statements.len(), 3);
    assert_eq!(s.result_binding, "wp3");
}

#[test]
fn sliced_scripts_are_minimal() {
    let t = trace(&gen(PLATE), &z(&[("n", 3.0), ("r", 2.0)])).unwrap();
    let s = slice(&t).unwrap();
    let reference = occupancy(&s);
    for i in 0..s.statements.len() {
        if protected(&s.statements[i]) {
            continue;
        }
        if let Some(cand) = bypass(&s, i) {
            let changed = crate::kernel::build(&cand).map_or(true, |m| {
                m.rasterize(&Grid::over(&default_domain(), DEFAULT_RESOLUTION))
                    .occupancy
                    != reference
            });
            assert!(changed, "statement {i} is removable");
        }
    }
}

#[test]
fn bind_preserving_form_keeps_parameter_expressions() {
    let t = trace(&gen(PLATE), &z(&[("r", 7.0), ("n", 1.0)])).unwrap();
    let g = slice_with_binds(&t).unwrap();
    let text = emit_generator(&g);
    assert!(text.starts_with("r = 7\nn = 1\n"), "{text}");
    assert!(text.contains("2 * r + 1"), "{text}");
    // it re-traces to the same shape
    let again = trace(&parse(&text).unwrap().into_generator(), &ParamMap::new()).unwrap();
    assert_eq!(occupancy(&again.to_script()), occupancy(&t.to_script()));
}

/// Random generator mixing loops, branches, dead chains and no-op edits.
fn random_generator(seed: u64) -> String {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut src =
        String::from("param w: length = 30\nparam k: count = 2\nparam flag: ratio = 0.5\n");
    src += "wp1 = workplane(\"XY\")\nwp2 = rect(wp1, w, w / 2)\nbody = extrude(wp2, 12)\n";
    for step in 0..rng.gen_range(1..5) {
        match rng.gen_range(0..6) {
            0 => src += &format!(
                "for i in 0..k {{\n  p = workplane(\"XY\", -w / 4 + i * 6, 0, 0)\n  p = circle(p, {})\n  h = extrude(p, 40)\n  body = cut(body, h)\n}}\n",
                rng.gen_range(1..4)
            ),
            1 => src += &format!(
                "if flag > 0.3 {{\n  q = workplane(\"XZ\", 0, {}, 0)\n  q = rect(q, 8, 8)\n  q2 = extrude(q, 6)\n  body = union(body, q2)\n}} else {{\n  body = translate(body, 0, 0, 2)\n}}\n",
                -rng.gen_range(5..12)
            ),
            2 => src += &format!("d{step} = workplane(\"YZ\")\nd{step} = circle(d{step}, 3)\ndd{step} = extrude(d{step}, 5)\n"),
            3 => src += &format!(
                "f{step} = workplane(\"XY\", 90, 90, 90)\nfb{step} = box(f{step}, 4, 4, 4)\nbody = cut(body, fb{step})\n"
            ),
            4 => src += "body = translate(body, 0, 0, 0)\nbody = fillet(body, 0)\n",
            _ => src += &format!("body = rotate(body, 0, 0, 0, 0, 0, 1, {})\n", 90 * rng.gen_range(0..4)),
        }
    }
    src += "result = body";
    src
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn slicing_preserves_occupancy(seed in any::<u64>(), w in 12.0f64..60.0, k in 0.0f64..4.0, flag in 0.0f64..1.0) {
        let g = gen(&random_generator(seed));
        let t = trace(&g, &z(&[("w", w), ("k", k.round()), ("flag", flag)])).unwrap();
        let full = t.to_script();
        let s = slice(&t).unwrap();
        prop_assert!(s.statements.len() <= full.statements.len());
        prop_assert_eq!(occupancy(&s), occupancy(&full));
        prop_assert_eq!(evaluate_default(&s).unwrap().1.success, evaluate_default(&full).unwrap().1.success);
    }
}
