use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hallucheck"));
    for s in ["DETECT", "VQA", "CHAT", "CAPTION"] {
        c.env_remove(format!("HALLU_{s}_URL")).env_remove(format!("HALLU_{s}_TOKEN"));
    }
    c
}

fn demo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn parse_and_questions() {
    let o = run(&["parse", "--text", "Cat on the top of Sofa", "--triples"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("cat | on the top of | sofa"));

    let o = run(&["questions", "--text", "a cucumber and a green banana"]);
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["text"], "What is the color of the banana?");

    let o = run(&["parse", "--text", "the of"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn score_from_counts() {
    let o = run(&["score", "--counts", "0,0,1,0", "--objects", "2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["points"], 3);
    assert_eq!(run(&["score", "--counts", "1,2", "--objects", "2"]).status.code(), Some(2));
}

#[test]
fn demo_run_is_clean_and_stats_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = demo().join("config.toml");
    let o = run(&["-c", p(&cfg), "run", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.csv", "run.json", "questions.jsonl", "faithful/faithful-d1.report.json", "drifty/drifty-d2.graph.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = run(&["stats", p(&out), "--human", p(&demo().join("human_scores.csv"))]);
    assert!(o.status.success());
    let table = stdout(&o);
    assert!(table.lines().any(|l| l.starts_with("drifty") && l.contains("0.5667")), "{table}");

    let report = out.join("drifty/drifty-d2.report.json");
    let o = run(&["score", "--report", p(&report), "--prompt", "a black dog chasing a white cat"]);
    assert!(stdout(&o).contains("\"points\": 3"));
}

#[test]
fn per_image_failures_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("manifest.jsonl");
    let lines = fs::read_to_string(demo().join("manifest.jsonl")).unwrap();
    let mut lines: Vec<String> = lines
        .lines()
        .map(|l| l.replace("\"images/", &format!("\"{}/images/", demo().display())))
        .collect();
    lines.push(r#"{"image_id":"ghost","prompt_id":"d1","model_name":"faithful","path":"missing.png"}"#.into());
    fs::write(&manifest, lines.join("\n")).unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        format!(
            "[paths]\nprompts = {:?}\nmanifest = \"manifest.jsonl\"\nfixtures = {:?}\noutput = \"out\"\n",
            demo().join("prompts.jsonl"),
            demo().join("fixtures")
        ),
    )
    .unwrap();
    let o = run(&["-c", p(&cfg), "run"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ghost") && err.contains("15 images scored, 1 failed"), "{err}");
    let runj: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("out/run.json")).unwrap()).unwrap();
    assert_eq!(runj["failures"][0]["stage"], "read");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[scene_graph]\nnear_frac = -1.0\n").unwrap();
    assert_eq!(run(&["-c", p(&bad), "run"]).status.code(), Some(2));
    assert_eq!(run(&["-c", p(&tmp.path().join("absent.toml")), "config", "show"]).status.code(), Some(2));

    // Live mode without endpoints fails before any work.
    let live = tmp.path().join("live.toml");
    let text = fs::read_to_string(demo().join("config.toml")).unwrap().replace("mode = \"replay\"", "mode = \"live\"");
    fs::write(&live, text.replace("\"prompts.jsonl\"", &format!("{:?}", demo().join("prompts.jsonl")))
        .replace("\"manifest.jsonl\"", &format!("{:?}", demo().join("manifest.jsonl")))
        .replace("\"human_scores.csv\"", &format!("{:?}", demo().join("human_scores.csv")))
        .replace("\"gold_errors.csv\"", &format!("{:?}", demo().join("gold_errors.csv")))).unwrap();
    let o = run(&["-c", p(&live), "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("HALLU_DETECT_URL"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn config_show_round_trips() {
    let o = run(&["config", "show"]);
    assert!(o.status.success());
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("c.toml");
    fs::write(&f, stdout(&o)).unwrap();
    let again = run(&["-c", p(&f), "config", "show"]);
    assert!(again.status.success());
    assert!(stdout(&again).contains("knowledge = \"graph\""));
}

#[test]
fn simulate_small_prompt_set() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = tmp.path().join("p.txt");
    fs::write(&prompts, "a red car to the left of a wooden table\na black dog chasing a white cat\n").unwrap();
    let out = tmp.path().join("sim");
    let o = run(&["simulate", "--prompts", p(&prompts), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["identity_perfect"], 2);
    assert_eq!(v["injection_f1"]["relation"]["f1"], 1.0);
    assert!(out.join("injected_errors.csv").is_file());
    assert!(out.join("identity/p001.graph.json").is_file());
}

#[test]
fn qa_on_a_graph_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run(&["-c", p(&demo().join("config.toml")), "run", "--out", p(&out)]).status.success());
    let g = out.join("sketchy/sketchy-d2.graph.json");
    let o = run(&["qa", p(&g), "--prompt", "a black dog chasing a white cat"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["counts"]["attribute"], 2);
    assert_eq!(v["results"].as_array().unwrap().len(), 5);
}
