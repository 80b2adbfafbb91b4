use std::path::Path;
use std::process::{Command, Output};

fn streammem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streammem"))
        .args(args)
        .env_remove("STREAMMEM_BACKEND_URL")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SPEC: &str = r#"{
  "width": 16, "height": 12, "fps": 1.0, "seed": 2,
  "scenes": [
    {"duration_s": 14, "intensity": 30, "noise": 4, "ocr": ["SALE 42%"]},
    {"duration_s": 20, "intensity": 140, "noise": 4},
    {"duration_s": 16, "intensity": 230, "noise": 4}
  ]
}"#;

const QUESTIONS: &str = r#"{"id": "q1", "asked_at_s": 40, "question": "What discount was advertised?", "options": [{"letter": "A", "text": "42%"}, {"letter": "B", "text": "10%"}], "gold": "A", "category": "ocr"}
{"id": "q2", "asked_at_s": 49, "question": "Is the scene bright?", "gold": "yes"}
"#;

const SCRIPT: &str = r#"{"question_id": "q1", "responses": ["Thought: need history.\n```json\n{\"tool\": \"search_memory\", \"arguments\": {\"start_time\": 0, \"end_time\": 13}}\n```", "```json\n{\"tool\": \"ocr\", \"arguments\": {\"event_id\": 0}}\n```", "\\boxed{A}"]}
{"responses": ["\\boxed{Yes.}"]}
"#;

fn setup(root: &Path) {
    std::fs::write(root.join("spec.json"), SPEC).unwrap();
    std::fs::write(root.join("questions.jsonl"), QUESTIONS).unwrap();
    std::fs::write(root.join("script.jsonl"), SCRIPT).unwrap();
    let out = streammem(&[
        "synthetic",
        "--spec",
        p(&root.join("spec.json")),
        "--out",
        p(&root.join("frames")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 50 frames in 3 scenes"));
}

#[test]
fn end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    setup(root);
    let frames = root.join("frames");
    let run = root.join("run");

    let out = streammem(&[
        "ingest",
        "--frames",
        p(&frames),
        "--out",
        p(&run),
        "--k",
        "8",
        "--min-len",
        "4",
        "--seed",
        "3",
        "--checkpoint-every",
        "10",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(table.contains("events created         3"), "{table}");

    let csv = root.join("series.csv");
    let out = streammem(&["stats", "--run", p(&run), "--csv", p(&csv)]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 6);

    let script = format!("scripted:{}", p(&root.join("script.jsonl")));
    let report_dir = root.join("report");
    let out = streammem(&[
        "replay",
        "--run",
        p(&run),
        "--questions",
        p(&root.join("questions.jsonl")),
        "--policy",
        &script,
        "--out",
        p(&report_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["online_violations"], 0);
    assert_eq!(
        report["questions"][0]["tools"],
        serde_json::json!(["search_memory", "ocr"])
    );
    let traj = std::fs::read_to_string(report_dir.join("trajectories.jsonl")).unwrap();
    assert_eq!(traj.lines().count(), 2);
    assert!(traj.contains("SALE 42%"));

    // ingesting on the fly gives the same report
    let out = streammem(&[
        "replay",
        "--frames",
        p(&frames),
        "--questions",
        p(&root.join("questions.jsonl")),
        "--policy",
        &script,
        "--k",
        "8",
        "--min-len",
        "4",
        "--seed",
        "3",
        "--out",
        p(&root.join("live")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(root.join("live/trajectories.jsonl")).unwrap(),
        traj
    );

    let out = streammem(&[
        "compare",
        "--frames",
        p(&frames),
        "--questions",
        p(&root.join("questions.jsonl")),
        "--policy",
        &script,
        "--policies",
        "event,fixed:30",
        "--k",
        "8",
        "--min-len",
        "4",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(
        table.contains("event") && table.contains("fixed:30"),
        "{table}"
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    setup(root);
    let frames = root.join("frames");

    // min_len > K is a configuration error
    let out = streammem(&[
        "ingest",
        "--frames",
        p(&frames),
        "--out",
        p(&root.join("r1")),
        "--k",
        "4",
        "--min-len",
        "8",
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("min_len 8 exceeds K = 4"));
    assert!(!root.join("r1").exists());

    let out = streammem(&[
        "ingest",
        "--frames",
        p(&frames),
        "--out",
        p(&root.join("r2")),
        "--segmentation",
        "random",
    ]);
    assert_eq!(code(&out), 1);

    // unsorted questions are a data error
    let unsorted = root.join("unsorted.jsonl");
    std::fs::write(
        &unsorted,
        QUESTIONS.lines().rev().collect::<Vec<_>>().join("\n"),
    )
    .unwrap();
    let out = streammem(&[
        "replay",
        "--frames",
        p(&frames),
        "--questions",
        p(&unsorted),
        "--policy",
        &format!("scripted:{}", p(&root.join("script.jsonl"))),
    ]);
    assert_eq!(code(&out), 2);

    let out = streammem(&[
        "ingest",
        "--frames",
        p(&root.join("missing")),
        "--out",
        p(&root.join("r3")),
    ]);
    assert_eq!(code(&out), 2);

    // http backend without a URL is a configuration error
    let out = streammem(&[
        "ingest",
        "--frames",
        p(&frames),
        "--out",
        p(&root.join("r4")),
        "--backend",
        "http",
    ]);
    assert_eq!(code(&out), 1);

    // an unreachable backend is a backend error
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let out = Command::new(env!("CARGO_BIN_EXE_streammem"))
        .args([
            "ingest",
            "--frames",
            p(&frames),
            "--out",
            p(&root.join("r5")),
            "--backend",
            "http",
            "--k",
            "8",
            "--min-len",
            "4",
        ])
        .env("STREAMMEM_BACKEND_URL", format!("http://127.0.0.1:{port}"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("r5/ltm/entries.jsonl").is_file());
}

#[test]
fn grpo_batch() {
    let tmp = tempfile::tempdir().unwrap();
    let groups = tmp.path().join("groups.jsonl");
    std::fs::write(
        &groups,
        "{\"rewards\": [1, 0, 0, 1], \"ratios\": [1.5, 1, 1, 1], \"epsilon\": 0.2}\n{\"rewards\": [1, 1, 1, 1]}\n",
    )
    .unwrap();
    let out = streammem(&["grpo", "--groups", p(&groups)]);
    assert_eq!(code(&out), 0);
    let lines: Vec<serde_json::Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(
        lines[0]["advantages"],
        serde_json::json!([1.0, -1.0, -1.0, 1.0])
    );
    assert!((lines[0]["objective"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert_eq!(lines[1]["objective"], 0.0);

    std::fs::write(&groups, "{\"rewards\": [1]}\n").unwrap();
    let out = streammem(&["grpo", "--groups", p(&groups)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}
