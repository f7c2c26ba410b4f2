use super::*;
use crate::kernel::{default_domain, evaluate_default, BitGrid, Grid, DEFAULT_RESOLUTION};
use crate::lang::{emit, emit_statement, parse_script};

fn script(src: &str) -> Script {
    parse_script(src).unwrap()
}

const SHAPES: [&str; 3] = [
    "wp1 = workplane(\"XY\")\nwp2 = box(wp1, 200, 120, 80)\nwp3 = workplane(\"XZ\", 30, 0, 10)\nwp4 = circle(wp3, 25)\nwp5 = extrude(wp4, 90)\nwp6 = cut(wp2, wp5)\nwp7 = translate(wp6, 0, 0, 0)\nresult = wp7",
    "wp1 = workplane(\"-YZ\", 10, 20, -30)\nwp2 = move_to(wp1, 0, 0)\nwp3 = line_to(wp2, 100, 0)\nwp4 = line_to(wp3, 0, 70)\nwp5 = close(wp4)\nwp6 = extrude(wp5, 60)\nwp7 = rotate(wp6, 5, 0, 0, 0, 0, 1, 30)\nwp8 = mirror(wp7, 1, 0, 0, 40, 0, 0)\nwp9 = translate(wp8, -40, -10, 5)\nresult = wp9",
    "wp1 = workplane(\"XY\")\nwp2 = cylinder(wp1, 150, 60)\nwp3 = shell(wp2, 6)\nwp4 = workplane(\"ZX\", 0, 0, 40)\nwp5 = rect_array(wp4, 30, 30, 2, 2)\nwp6 = hole(wp3, wp5, 10, 80)\nwp7 = translate(wp6, 0, 0, 0)\nresult = wp7",
];

/// Independent oracle: move every voxel of the centered default grid to the
/// cell containing its rotated center.
fn permute(v: &BitGrid, grid: &Grid, m: &IMat3) -> BitGrid {
    let n = grid.dims[0] as i64;
    let mut out = BitGrid::new(grid.dims);
    for idx in v.ones() {
        let c = grid.coords(idx);
        // doubled centered coordinates are odd integers
        let d: Vec<i64> = c.iter().map(|&i| 2 * i as i64 + 1 - n).collect();
        let r: Vec<i64> = (0..3)
            .map(|a| (0..3).map(|b| m[a][b] as i64 * d[b]).sum())
            .collect();
        let back: Vec<usize> = r.iter().map(|&x| ((x + n - 1) / 2) as usize).collect();
        out.set(back[0], back[1], back[2], true);
    }
    out
}

#[test]
fn table_is_the_rotation_group() {
    let t = rotation_table();
    assert_eq!(t[0].matrix, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
    let distinct: HashSet<IMat3> = t.iter().map(|r| r.matrix).collect();
    assert_eq!(distinct.len(), 24);
    for r in &t {
        assert_eq!(det(&r.matrix), 1);
        for i in 0..3 {
            for j in 0..3 {
                let dot: i32 = (0..3).map(|k| r.matrix[i][k] * r.matrix[j][k]).sum();
                assert_eq!(dot, (i == j) as i32);
            }
        }
        for s in &t {
            assert!(distinct.contains(&mul(&r.matrix, &s.matrix)));
        }
    }
    // brute force: every signed permutation with det +1 is listed
    let mut count = 0;
    for p in [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ] {
        for signs in 0..8 {
            let mut m = [[0; 3]; 3];
            for i in 0..3 {
                m[i][p[i]] = if signs >> i & 1 == 1 { -1 } else { 1 };
            }
            if det(&m) == 1 {
                count += 1;
                assert!(distinct.contains(&m));
            }
        }
    }
    assert_eq!(count, 24);
}

#[test]
fn identity_and_quarter_turn() {
    let s = script(SHAPES[1]);
    let t = rotation_table();
    assert_eq!(emit(&rotate_script(&s, &t[0]).unwrap()), emit(&s));
    let tr = script("wp1 = workplane(\"XY\")\nwp2 = box(wp1, 5, 5, 5)\nwp3 = translate(wp2, 10, 0, 0)\nresult = wp3");
    let r = rotate_script(&tr, &t[1]).unwrap();
    assert_eq!(
        r.statements[2]
            .args
            .iter()
            .skip(1)
            .map(|a| a.value.as_num().unwrap())
            .collect::<Vec<_>>(),
        [0.0, 10.0, 0.0]
    );
    assert_eq!(r.statements[0].args[0].value.as_str(), Some("Y-X"));
}

#[test]
fn local_statements_are_untouched() {
    for src in SHAPES {
        let s = script(src);
        for r in rotation_table() {
            let out = rotate_script(&s, &r).unwrap();
            for (a, b) in s.statements.iter().zip(&out.statements) {
                if a.op.frame_class() == FrameClass::Local {
                    assert_eq!(emit_statement(a), emit_statement(b));
                }
            }
        }
    }
}

#[test]
fn rotation_matches_voxel_permutation() {
    let grid = Grid::over(&default_domain(), DEFAULT_RESOLUTION);
    for src in SHAPES {
        let s = script(src);
        let (base, report) = evaluate_default(&s).unwrap();
        assert!(report.success, "{src}: {report:?}");
        for r in rotation_table() {
            let (rot, rep) = evaluate_default(&rotate_script(&s, &r).unwrap()).unwrap();
            assert_eq!(rep.success, report.success, "rotation {}", r.index);
            let expected = permute(&base.occupancy, &grid, &r.matrix);
            let iou = rot.occupancy.intersection_count(&expected) as f64
                / rot.occupancy.union_count(&expected) as f64;
            assert!(iou >= 0.98, "rotation {}: {iou}", r.index);
        }
    }
}

#[test]
fn composition_is_textual() {
    let t = rotation_table();
    let s = script(SHAPES[1]);
    for a in [3usize, 7, 13, 22] {
        for b in [1usize, 9, 18, 21] {
            let twice = rotate_script(&rotate_script(&s, &t[a]).unwrap(), &t[b]).unwrap();
            let once = rotate_script(&s, &t[b].after(&t[a])).unwrap();
            assert_eq!(emit(&twice), emit(&once));
        }
    }
}

#[test]
fn non_literal_global_argument_is_unsupported() {
    let mut s = script(SHAPES[0]);
    s.statements[6].args[2].value = Expr::Var("dy".into());
    assert!(matches!(
        rotate_script(&s, &rotation_table()[5]),
        Err(UnsupportedRewriteError::NonLiteral { index: 2, .. })
    ));
}

#[test]
fn augmenting_a_corpus() {
    let mut corpus: Vec<Script> = SHAPES.iter().map(|s| script(s)).collect();
    let mut bad = script(SHAPES[0]);
    bad.statements[6].args[1].value = Expr::Var("dx".into());
    corpus.push(bad);
    let (variants, skipped) = rotational_augment(&corpus, 11);
    assert_eq!(variants.len() + skipped.len(), corpus.len());
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0].0, 3);
    assert!(variants.iter().all(|v| (1..24).contains(&v.rotation)));
    assert_eq!(variants, rotational_augment(&corpus, 11).0);
    for v in &variants {
        assert!(
            evaluate_default(&v.script).unwrap().1.success,
            "{}",
            v.tag()
        );
    }
}

const DONOR: &str = "wp1 = workplane(\"XY\")\nwp2 = polygon(wp1, 6, 200)\nwp3 = extrude(wp2, 60)\nwp4 = translate(wp3, 0, 0, -30)\nresult = wp4";

#[test]
fn sketch_swap_replaces_the_base_box() {
    let s = script(SHAPES[0]);
    let donors = [script(DONOR)];
    let out = sketch_swap(&s, &donors, 3).unwrap();
    let ops: Vec<OpKind> = out.statements.iter().map(|st| st.op).collect();
    assert!(ops.contains(&OpKind::Polygon));
    assert!(!ops.contains(&OpKind::Box));
    assert!(evaluate_default(&out).unwrap().1.success);
    assert_eq!(sketch_swap(&s, &[], 3), Err(NoMatch::NoDonors));
    let sphere = script("wp1 = workplane(\"XY\")\nwp2 = sphere(wp1, 100)\nwp3 = translate(wp2, 0, 0, 0)\nresult = wp3");
    assert_eq!(sketch_swap(&sphere, &donors, 3), Err(NoMatch::NoTrigger));
    let small = script("wp1 = workplane(\"XY\")\nwp2 = box(wp1, 100, 100, 100)\nresult = wp2");
    assert_eq!(sketch_swap(&small, &donors, 3), Err(NoMatch::NoTrigger));
    // non sketch-extrude donors are ignored
    assert_eq!(sketch_swap(&s, &[sphere], 3), Err(NoMatch::NoDonors));
}
