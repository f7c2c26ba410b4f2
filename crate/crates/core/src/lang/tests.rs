use proptest::prelude::*;

use super::*;

const MINIMAL: &str =
    "wp1 = workplane(\"XY\"); wp2 = rect(wp1, 10, 10); wp3 = extrude(wp2, 5); result = wp3";

#[test]
fn minimal_program_parses_as_script() {
    let s = parse_script(MINIMAL).unwrap();
    assert_eq!(s.statements.len(), 3 + 0);
    assert_eq!(s.result_binding, "wp3");
    // the result line is kept as the binding, so 3 op statements + result = 4 lines
    assert_eq!(emit(&s).lines().count(), 4);
}

#[test]
fn undefined_result_is_use_before_def() {
    assert!(matches!(
        parse("result = undefined_var"),
        Err(LangError::UseBeforeDef { .. })
    ));
}

#[test]
fn missing_extrude_distance_is_arity_error() {
    let err =
        parse("wp1 = workplane(\"XY\")\nwp2 = rect(wp1, 10, 10)\nwp3 = extrude(wp2)\nresult = wp3")
            .unwrap_err();
    match err {
        LangError::Type { message, span } => {
            assert!(message.contains("takes 2 arguments"), "{message}");
            assert_eq!(span.line, 3);
        }
        other => panic!("expected type error, got {other:?}"),
    }
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse("wp1 = workplane(\"XY\"\nresult = wp1").unwrap_err();
    assert!(
        matches!(err, LangError::Parse { span, .. } if span.line == 1 && span.col == 21),
        "{err:?}"
    );
}

#[test]
fn unit_kind_mismatch() {
    let err = parse(
        "wp1 = workplane(\"XY\")\nwp2 = extrude(wp1, 5)\nwp3 = rect(wp2, 1, 1)\nresult = wp3",
    )
    .unwrap_err();
    assert!(matches!(err, LangError::Type { .. }));
    let err = parse("wp1 = workplane(\"QQ\")\nresult = wp1").unwrap_err();
    assert!(matches!(err, LangError::Type { .. }));
}

#[test]
fn result_must_be_a_solid() {
    let err = parse("wp1 = workplane(\"XY\")\nresult = wp1").unwrap_err();
    assert!(matches!(err, LangError::Type { .. }));
}

#[test]
fn whitespace_and_comments_do_not_change_emission() {
    let a = parse_script(MINIMAL).unwrap();
    let b = parse_script(
        "# header\nwp1   = workplane( \"XY\" )\n\n wp2 = rect(wp1,10,10)   # box base\nwp3=extrude(wp2,5)\nresult = wp3\n",
    )
    .unwrap();
    assert_eq!(emit(&a), emit(&b));
}

#[test]
fn emitted_length_is_character_count() {
    let s = parse_script(MINIMAL).unwrap();
    let (text, n) = emit_with_len(&s);
    assert_eq!(n, text.chars().count());
    assert_eq!(n, text.len());
}

#[test]
fn params_make_a_generator() {
    let g = parse_generator("param r = 5\nwp1 = workplane(\"XY\")\nwp2 = circle(wp1, r)\nwp3 = extrude(wp2, 2 * r + 1)\nresult = wp3").unwrap();
    assert_eq!(g.params.len(), 1);
    assert_eq!(g.params[0].unit_tag, UnitTag::Length);
    assert!(matches!(
        parse(&emit_generator(&g)).unwrap(),
        Program::Generator(_)
    ));
}

#[test]
fn reassignment_makes_a_generator() {
    let src = "wp1 = workplane(\"XY\")\nwp2 = rect(wp1, 4, 4)\ns = extrude(wp2, 1)\ns = translate(s, 1, 0, 0)\nresult = s";
    assert!(matches!(parse(src).unwrap(), Program::Generator(_)));
}

#[test]
fn branch_definitions_need_both_arms() {
    let base = "param r = 5\nwp1 = workplane(\"XY\")\n";
    let one_arm =
        format!("{base}if r > 3 {{\n  b = rect(wp1, r, r)\n}}\ns = extrude(b, 1)\nresult = s");
    assert!(matches!(
        parse(&one_arm),
        Err(LangError::UseBeforeDef { .. })
    ));
    let both = format!(
        "{base}if r > 3 {{\n  b = rect(wp1, r, r)\n}} else {{\n  b = circle(wp1, r)\n}}\ns = extrude(b, 1)\nresult = s"
    );
    assert!(parse(&both).is_ok());
}

#[test]
fn bind_prepends_values_in_declaration_order() {
    let g = parse_generator("param r = 5\nparam h = 2\nwp1 = workplane(\"XY\")\nwp2 = circle(wp1, r)\nwp3 = extrude(wp2, h)\nresult = wp3").unwrap();
    let z: ParamMap = [("r".to_string(), 7.0)].into_iter().collect();
    let bound = bind(&g, &z).unwrap();
    let text = emit_generator(&bound);
    assert!(text.starts_with("r = 7\nh = 2\n"), "{text}");
    assert_eq!(&bound.body[2..], &g.body[..]);

    let defaults = emit_generator(&bind(&g, &ParamMap::new()).unwrap());
    assert!(defaults.starts_with("r = 5\nh = 2\n"));

    let bogus: ParamMap = [("bogus".to_string(), 1.0)].into_iter().collect();
    assert_eq!(
        bind(&g, &bogus),
        Err(LangError::UnknownParam("bogus".into()))
    );
}

#[test]
fn number_formatting() {
    assert_eq!(fmt_num(100.0), "100");
    assert_eq!(fmt_num(-0.0), "0");
    assert_eq!(fmt_num(0.25), "0.25");
    assert_eq!(fmt_num(-12.5), "-12.5");
    assert_eq!(fmt_num(3e-9).parse::<f64>().unwrap(), 3e-9);
}

#[test]
fn workplane_short_form_round_trips() {
    let s = parse_script("wp1 = workplane(\"XZ\", 0, 0, 0)\nwp2 = box(wp1, 1, 2, 3)\nresult = wp2")
        .unwrap();
    assert_eq!(
        emit(&s),
        "wp1 = workplane(\"XZ\")\nwp2 = box(wp1, 1, 2, 3)\nresult = wp2\n"
    );
    let s =
        parse_script("wp1 = workplane(\"-YZ\", 0, 0, 5)\nwp2 = box(wp1, 1, 2, 3)\nresult = wp2")
            .unwrap();
    assert!(emit(&s).starts_with("wp1 = workplane(\"-YZ\", 0, 0, 5)\n"));
}

#[test]
fn generator_constructs_round_trip() {
    let src = "\
param n: count = 3
param r = 4
wp1 = workplane(\"XY\")
wp2 = rect(wp1, 40, 40)
body = extrude(wp2, 10)
for i in 0..n {
    wpc = workplane(\"XY\", -15 + i * 15, 0, 10)
    peg = cylinder(wpc, 6, r - (i % 2))
    body = union(body, peg)
}
if r > 5 and not (n < 2) {
    body = fillet(body, 1)
} else if r > 2 {
    body = chamfer(body, 0.5)
}
result = body
";
    let g = parse_generator(src).unwrap();
    let again = parse_generator(&emit_generator(&g)).unwrap();
    assert_eq!(g.params, again.params);
    assert_eq!(emit_generator(&g), emit_generator(&again));
}

/// Builds a random well-formed flat script from a seed.
fn random_script(seed: u64, len: usize) -> String {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let planes = ["XY", "YZ", "ZX", "XZ", "-YX", "Z-X"];
    let mut lines = Vec::new();
    let mut solids: Vec<String> = Vec::new();
    let mut n = 0;
    let fresh = |n: &mut usize| {
        *n += 1;
        format!("t{n}")
    };
    let num = |rng: &mut rand_chacha::ChaCha8Rng| {
        let v: f64 = rng.gen_range(-50.0..50.0);
        (v * 4.0).round() / 4.0
    };
    for _ in 0..len.max(1) {
        let wp = fresh(&mut n);
        lines.push(format!(
            "{wp} = workplane(\"{}\", {}, {}, {})",
            planes[rng.gen_range(0..planes.len())],
            num(&mut rng),
            num(&mut rng),
            num(&mut rng)
        ));
        let sk = fresh(&mut n);
        match rng.gen_range(0..3) {
            0 => lines.push(format!(
                "{sk} = rect({wp}, {}, {})",
                num(&mut rng).abs() + 1.0,
                num(&mut rng).abs() + 1.0
            )),
            1 => lines.push(format!(
                "{sk} = circle({wp}, {})",
                num(&mut rng).abs() + 1.0
            )),
            _ => lines.push(format!(
                "{sk} = polygon({wp}, {}, {})",
                rng.gen_range(3..9),
                num(&mut rng).abs() + 2.0
            )),
        }
        let so = fresh(&mut n);
        lines.push(format!("{so} = extrude({sk}, {})", num(&mut rng)));
        if let Some(prev) = solids.last().cloned() {
            let comb = fresh(&mut n);
            let op = ["union", "cut", "intersect"][rng.gen_range(0..3)];
            lines.push(format!("{comb} = {op}({prev}, {so})"));
            solids.push(comb);
        } else {
            solids.push(so);
        }
    }
    lines.push(format!("result = {}", solids.last().unwrap()));
    lines.join("\n")
}

proptest! {
    #[test]
    fn parse_emit_round_trip(seed in any::<u64>(), len in 1usize..6) {
        let src = random_script(seed, len);
        let s = parse_script(&src).unwrap();
        let text = emit(&s);
        let again = parse_script(&text).unwrap();
        prop_assert_eq!(&s, &again);
        prop_assert_eq!(text, emit(&again));
    }
}
