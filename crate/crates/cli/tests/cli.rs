use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"{
  "evolve": {"iterations": 2, "children": 2},
  "sample": {"n": 2, "budget": 200},
  "seeds": {"evolve": 5, "proposer": 5, "sample": 5, "augment": 5}
}"#;

fn cadforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadforge"))
        .current_dir(dir)
        .env_remove("CADFORGE_API_KEY")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

/// Path to content of every file under `dir`.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn run_pipeline(dir: &Path) {
    fs::write(dir.join("c.json"), CONFIG).unwrap();
    for cmd in ["evolve", "sample", "slice", "canon", "augment"] {
        let o = cadforge(dir, &["--config", "c.json", cmd]);
        assert!(
            [0, 2].contains(&code(&o)),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn pipeline_is_reproducible_and_resumable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());
    let first = snapshot(a.path());
    assert_eq!(first, snapshot(b.path()));
    assert!(first
        .keys()
        .any(|k| k.starts_with("corpus/") && k.ends_with(".mcq")));
    assert!(first.keys().any(|k| k.starts_with("out/augment/")));

    run_pipeline(a.path());
    assert_eq!(first, snapshot(a.path()), "re-running changed outputs");

    let pool = fs::read_to_string(a.path().join("pool/manifest.jsonl")).unwrap();
    assert_eq!(pool.lines().count(), 14);
    let augment = fs::read_to_string(a.path().join("out/augment/manifest.jsonl")).unwrap();
    assert!(augment.contains("\"tag\":\"aug:rot:"));
    for line in fs::read_to_string(a.path().join("corpus/manifest.jsonl"))
        .unwrap()
        .lines()
    {
        let r: Value = serde_json::from_str(line).unwrap();
        assert_eq!(r["stage"], "canon");
        assert!(r["source"].is_string());
        assert!(r["canon_report"].is_object());
        if r["valid"] == false {
            assert!(r["reject_reason"].is_string());
        }
    }

    let stats = stdout_json(&cadforge(a.path(), &["--config", "c.json", "stats"]));
    assert_eq!(stats["iterations"], 2);
    assert_eq!(stats["partition_holds"], true);
}

#[test]
fn stages_leave_their_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    fs::write(
        input.join("plate.mcq"),
        "wp1 = workplane(\"XY\")\nwp2 = box(wp1, 120, 80, 10)\nresult = wp2\n",
    )
    .unwrap();
    let before = snapshot(&input);
    let o = cadforge(dir.path(), &["canon", "--in", "in", "--out", "c"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(before, snapshot(&input));
    let o = cadforge(dir.path(), &["canon", "--in", "c", "--out", "c"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn rejections_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    fs::write(
        input.join("good.mcq"),
        "wp1 = workplane(\"XY\")\nwp2 = box(wp1, 120, 80, 60)\nresult = wp2\n",
    )
    .unwrap();
    fs::write(
        input.join("copy.mcq"),
        "wp1 = workplane(\"XY\")\nwp2 = box(wp1, 120, 80, 60)\nresult = wp2\n",
    )
    .unwrap();
    fs::write(input.join("broken.mcq"), "wp1 = box(\n").unwrap();
    let o = cadforge(dir.path(), &["canon", "--in", "in", "--out", "c"]);
    assert_eq!(code(&o), 2);
    let rows: Vec<Value> = fs::read_to_string(dir.path().join("c/manifest.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["id"], "broken");
    assert_eq!(rows[0]["valid"], false);
    assert_eq!(rows[1]["id"], "copy");
    assert_eq!(rows[2]["reject_reason"], "duplicate of copy");
    assert!(dir.path().join("c/copy.mcq").exists());
    assert!(!dir.path().join("c/good.mcq").exists());
}

#[test]
fn render_writes_the_view_grid() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("shape.mcq"),
        "wp1 = workplane(\"XY\")\nwp2 = cylinder(wp1, 80, 30)\nresult = wp2\n",
    )
    .unwrap();
    for views in ["7", "8"] {
        let o = cadforge(
            dir.path(),
            &["render", "--views", views, "shape.mcq", "--out", views],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let pgm = fs::read(dir.path().join(views).join("shape.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n952 476\n255\n"));
        assert_eq!(pgm.len(), 15 + 952 * 476);
    }
    assert_eq!(
        code(&cadforge(
            dir.path(),
            &["render", "--views", "6", "shape.mcq"]
        )),
        1
    );
    assert_eq!(code(&cadforge(dir.path(), &["render"])), 1);
}

#[test]
fn eval_and_reward_report_per_shape() {
    let dir = tempfile::tempdir().unwrap();
    for d in ["t", "p"] {
        fs::create_dir(dir.path().join(d)).unwrap();
    }
    let cube =
        |s: u32| format!("wp1 = workplane(\"XY\")\nwp2 = box(wp1, {s}, {s}, {s})\nresult = wp2\n");
    fs::write(dir.path().join("t/a.mcq"), cube(100)).unwrap();
    fs::write(dir.path().join("t/b.mcq"), cube(100)).unwrap();
    fs::write(dir.path().join("t/c.mcq"), cube(100)).unwrap();
    fs::write(dir.path().join("p/a.mcq"), cube(60)).unwrap();
    fs::write(dir.path().join("p/b.mcq"), "wp1 = nope(\n").unwrap();

    let o = cadforge(
        dir.path(),
        &["eval", "--pred", "p", "--target", "t", "--out", "e.jsonl"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert_eq!(s["count"], 3);
    assert!((s["ir"].as_f64().unwrap() - 200.0 / 3.0).abs() < 1e-9);
    // cubes of any size coincide after unit normalization
    assert!(s["mean_iou"].as_f64().unwrap() > 99.0);
    assert_eq!(
        fs::read_to_string(dir.path().join("e.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );

    let r = stdout_json(&cadforge(
        dir.path(),
        &["reward", "--pred", "p", "--target", "t"],
    ));
    let rewards: Vec<f64> = r["rewards"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["reward"].as_f64().unwrap())
        .collect();
    assert_eq!(rewards[1..], [-10.0, -10.0]);
    assert!(rewards[0] > 9.9);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"sample": {"n": 2, "budjet": 3}}"#,
    )
    .unwrap();
    let o = cadforge(dir.path(), &["--config", "c.json", "stats"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sample.budjet"));
    assert_eq!(
        code(&cadforge(
            dir.path(),
            &["--config", "missing.json", "stats"]
        )),
        1
    );
    assert_eq!(code(&cadforge(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&cadforge(dir.path(), &["--help"])), 0);
}

#[test]
fn dry_runs_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), CONFIG).unwrap();
    let o = cadforge(dir.path(), &["--dry-run", "--config", "c.json", "evolve"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["finished_iterations"], 0);
    fs::create_dir(dir.path().join("in")).unwrap();
    fs::write(
        dir.path().join("in/a.mcq"),
        "wp1 = workplane(\"XY\")\nwp2 = box(wp1, 120, 80, 60)\nresult = wp2\n",
    )
    .unwrap();
    let o = cadforge(
        dir.path(),
        &["--dry-run", "canon", "--in", "in", "--out", "c"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["entries"], 1);
    assert_eq!(snapshot(dir.path()).len(), 2);
}

#[test]
fn seeds_steer_evolution() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), CONFIG).unwrap();
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["--config", "c.json"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["evolve", "--iterations", "1", "--out", out]);
        assert_eq!(code(&cadforge(dir.path(), &args)), 0);
        fs::read(dir.path().join(out).join("pool.jsonl")).unwrap()
    };
    let a = run("a", &[]);
    assert_eq!(a, run("b", &[]));
    assert_ne!(a, run("c", &["--seed-override", "99"]));
    assert_eq!(
        code(&cadforge(
            dir.path(),
            &["--jobs", "2", "--config", "c.json", "stats", "--in", "a"]
        )),
        0
    );
}

#[test]
fn http_failures_keep_the_token_private() {
    const SECRET: &str = "cf-cli-93b7d1e45a0c2f86";
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"proposer": {"endpoint": "http://127.0.0.1:9/v1/propose", "timeout_secs": 2}, "evolve": {"iterations": 1}}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cadforge"))
        .current_dir(dir.path())
        .env("CADFORGE_API_KEY", SECRET)
        .env("RUST_LOG", "trace")
        .args(["--config", "c.json", "--proposer", "http", "evolve"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("proposer"), "{stderr}");
    assert!(!stderr.contains(SECRET) && !String::from_utf8_lossy(&o.stdout).contains(SECRET));
    let files = snapshot(dir.path());
    assert!(files.contains_key("pool/pool.jsonl"));
    for (name, bytes) in files {
        assert!(
            !bytes.windows(SECRET.len()).any(|w| w == SECRET.as_bytes()),
            "token in {name}"
        );
    }
}
