use super::*;
use crate::kernel::{evaluate_default, EvalReport};
use crate::lang::parse_generator;
use crate::render::{write_pgm, DepthImage};
use crate::trace::trace;

const BOX: &str = "param a: length = 100
param b: length = 80
param c: length = 60
wp1 = workplane(\"XY\")
wp2 = box(wp1, a, b, c)
result = wp2";

const CYL: &str = "param r: length = 40
param h: length = 90
wp1 = workplane(\"XY\")
wp2 = cylinder(wp1, h, r)
result = wp2";

fn meta(name: &str) -> Metadata {
    Metadata {
        name: name.into(),
        r#abstract: format!("A {name}."),
        detailed: format!("A plain {name}."),
    }
}

fn parents() -> Vec<ParentInfo> {
    vec![
        ParentInfo {
            id: 1,
            meta: meta("box"),
        },
        ParentInfo {
            id: 2,
            meta: meta("cylinder"),
        },
    ]
}

fn context() -> Vec<CodeBlock> {
    vec![
        CodeBlock {
            id: 1,
            name: "box".into(),
            code: BOX.into(),
        },
        CodeBlock {
            id: 2,
            name: "cylinder".into(),
            code: CYL.into(),
        },
    ]
}

fn child(name: &str, parents: Vec<u64>) -> ChildMeta {
    ChildMeta {
        meta: meta(name),
        parents,
    }
}

fn eval(code: &str) -> EvalReport {
    let g = parse_generator(code).unwrap();
    let t = trace(&g, &Default::default()).unwrap();
    evaluate_default(&t.to_script()).unwrap().1
}

fn synth(p: &MockProposer, name: &str, parents: Vec<u64>) -> String {
    p.synthesize_code(&SynthesizeRequest {
        child: child(name, parents),
        context: context(),
    })
    .unwrap()
}

fn montage() -> Vec<u8> {
    write_pgm(&DepthImage::blank(8, 4))
}

#[test]
fn snake_case_names() {
    for ok in ["box", "box_with_hole", "m3_bolt"] {
        assert!(is_snake_case(ok), "{ok}");
    }
    for bad in [
        "",
        "Box",
        "box-hole",
        "_box",
        "box_",
        "box__hole",
        "3box",
        "box hole",
    ] {
        assert!(!is_snake_case(bad), "{bad}");
    }
}

#[test]
fn mock_is_deterministic() {
    let req = ProposeRequest {
        parents: parents(),
        k: 4,
    };
    let a = MockProposer::new(7, MockMode::Cooperative);
    assert_eq!(
        a.propose_metadata(&req).unwrap(),
        a.propose_metadata(&req).unwrap()
    );
    let code = synth(&a, "box_with_pocket", vec![1]);
    assert_eq!(code, synth(&a, "box_with_pocket", vec![1]));
    let outs: Vec<_> = (0..8)
        .map(|s| {
            MockProposer::new(s, MockMode::Cooperative)
                .propose_metadata(&req)
                .unwrap()
        })
        .collect();
    assert!(outs.iter().any(|o| o != &outs[0]), "seed has no effect");
}

#[test]
fn mock_children_are_well_formed() {
    let req = ProposeRequest {
        parents: parents(),
        k: 16,
    };
    let kids = MockProposer::new(3, MockMode::Cooperative)
        .propose_metadata(&req)
        .unwrap();
    assert_eq!(kids.len(), 16);
    for c in &kids {
        assert!(is_snake_case(&c.meta.name), "{}", c.meta.name);
        assert!(
            c.meta.name.starts_with("box_with_") || c.meta.name.starts_with("cylinder_with_"),
            "{}",
            c.meta.name
        );
        assert!(!c.parents.is_empty() && c.parents.iter().all(|id| [1, 2].contains(id)));
    }
}

#[test]
fn mock_feature_edits_evaluate_to_one_solid() {
    let p = MockProposer::new(11, MockMode::Cooperative);
    for (name, parents) in [
        ("box_with_cylindrical_boss", vec![1]),
        ("box_with_through_hole", vec![1]),
        ("box_with_pocket", vec![1]),
        ("cylinder_with_through_hole", vec![2]),
        ("box_with_cylinder_blend", vec![1, 2]),
    ] {
        let code = synth(&p, name, parents);
        let r = eval(&code);
        assert!(r.success, "{name}: {:?}\n{code}", r.failure_reason);
        let base = eval(BOX);
        if name.starts_with("box") && !name.ends_with("blend") {
            assert_ne!(r.volume, base.volume, "{name} did not change the shape");
        }
    }
}

#[test]
fn mock_blend_contains_both_parents() {
    let code = synth(
        &MockProposer::new(0, MockMode::Cooperative),
        "box_with_cylinder_blend",
        vec![1, 2],
    );
    let g = parse_generator(&code).unwrap();
    assert!(g.params.len() == 5, "{code}");
    assert!(code.contains("cylinder(") && code.contains("box("));
}

#[test]
fn invalid_mode_yields_empty_results() {
    let p = MockProposer::new(0, MockMode::Invalid);
    let code = synth(&p, "box_with_pocket", vec![1]);
    assert_eq!(eval(&code).failure_reason.as_deref(), Some("empty result"));
    let fixed = p
        .repair(&RepairRequest {
            child: child("box_with_pocket", vec![1]),
            code,
            stage: Stage::Geometry,
            diagnostic: "empty result".into(),
        })
        .unwrap();
    assert!(!eval(&fixed).success);
}

#[test]
fn detached_part_is_repaired_by_bridging() {
    let p = MockProposer::new(0, MockMode::DetachedPart);
    let code = synth(&p, "box_with_pocket", vec![1]);
    let r = eval(&code);
    assert_eq!(r.solid_count, 2, "{code}");
    let fixed = p
        .repair(&RepairRequest {
            child: child("box_with_pocket", vec![1]),
            code,
            stage: Stage::Geometry,
            diagnostic: r.failure_reason.unwrap(),
        })
        .unwrap();
    let r = eval(&fixed);
    assert!(r.success, "{:?}\n{fixed}", r.failure_reason);
}

#[test]
fn boundary_repair_scales_down() {
    let big = BOX.replace("= 100", "= 219.5");
    let r = eval(&big);
    assert_eq!(
        r.failure_reason.as_deref(),
        Some("touches the domain boundary")
    );
    let fixed = MockProposer::default()
        .repair(&RepairRequest {
            child: child("box", vec![1]),
            code: big,
            stage: Stage::Geometry,
            diagnostic: r.failure_reason.unwrap(),
        })
        .unwrap();
    assert!(eval(&fixed).success, "{fixed}");
}

#[test]
fn unknown_diagnostics_leave_code_unchanged() {
    let fixed = MockProposer::default()
        .repair(&RepairRequest {
            child: child("box", vec![1]),
            code: BOX.into(),
            stage: Stage::Agreement,
            diagnostic: "looks wrong".into(),
        })
        .unwrap();
    let g = parse_generator(&fixed).unwrap();
    assert_eq!(g, parse_generator(BOX).unwrap());
}

#[test]
fn verification_modes() {
    let req = |n| VerifyRequest {
        child: child("box", vec![1]),
        montage: montage(),
        solid_count: n,
    };
    let coop = MockProposer::default();
    assert!(coop.verify(&req(1)).unwrap().agree);
    assert!(!coop.verify(&req(2)).unwrap().agree);
    let adv = MockProposer::new(0, MockMode::Adversarial)
        .verify(&req(1))
        .unwrap();
    assert!(!adv.agree && !adv.critique.is_empty());
}

#[test]
fn request_limits() {
    let p = MockProposer::default();
    for k in [0, MAX_CHILDREN + 1] {
        let e = p
            .propose_metadata(&ProposeRequest {
                parents: parents(),
                k,
            })
            .unwrap_err();
        assert!(matches!(e, ProposerError::InvalidRequest(_)));
    }
    assert!(p
        .propose_metadata(&ProposeRequest {
            parents: vec![],
            k: 1
        })
        .is_err());

    let big = vec![CodeBlock {
        id: 1,
        name: "box".into(),
        code: "#".repeat(MAX_CONTEXT_BYTES + 1),
    }];
    let e = p
        .synthesize_code(&SynthesizeRequest {
            child: child("box_with_pocket", vec![1]),
            context: big,
        })
        .unwrap_err();
    assert!(matches!(e, ProposerError::InvalidRequest(_)));
    let e = p
        .synthesize_code(&SynthesizeRequest {
            child: child("Box With Pocket", vec![1]),
            context: context(),
        })
        .unwrap_err();
    assert!(matches!(e, ProposerError::InvalidRequest(_)));

    let mut huge = montage();
    huge.resize(MAX_MONTAGE_BYTES + 1, 0);
    let e = p
        .verify(&VerifyRequest {
            child: child("box", vec![1]),
            montage: huge,
            solid_count: 1,
        })
        .unwrap_err();
    assert!(matches!(e, ProposerError::InvalidRequest(_)));
    let e = p
        .verify(&VerifyRequest {
            child: child("box", vec![1]),
            montage: b"P6 junk".to_vec(),
            solid_count: 1,
        })
        .unwrap_err();
    assert!(matches!(e, ProposerError::InvalidRequest(_)));
}

#[test]
fn montage_travels_as_base64() {
    let req = VerifyRequest {
        child: child("box", vec![1]),
        montage: vec![0, 255, 7],
        solid_count: 1,
    };
    let v = serde_json::to_value(&req).unwrap();
    assert_eq!(v["montage"], "AP8H");
    assert_eq!(v["name"], serde_json::Value::Null);
    assert_eq!(v["child"]["name"], "box");
    assert_eq!(serde_json::from_value::<VerifyRequest>(v).unwrap(), req);
}

#[test]
fn token_is_redacted() {
    let t = ApiToken::new("sk-very-secret");
    assert_eq!(format!("{t:?}"), "ApiToken(<redacted>)");
    let p = HttpProposer::new(ProposerConfig::default(), Some(t)).unwrap();
    assert!(!format!("{p:?}").contains("sk-very-secret"));
    let cfg = serde_json::to_string(p.config()).unwrap();
    assert!(!cfg.contains("sk-very-secret"));
}

#[test]
fn code_check_reports_parse_errors() {
    assert!(check_code(BOX).is_ok());
    assert!(check_code("param a = \nresult = x").is_err());
}
