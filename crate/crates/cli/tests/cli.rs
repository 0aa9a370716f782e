use std::path::Path;
use std::process::{Command, Output};

use jobstr::config::PipelineConfig;

fn jobstr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jobstr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn jobstr")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(jobstr(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(jobstr(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(jobstr(dir.path(), &["predict", "--title-a", "CEO"]).status.code(), Some(1));
    assert_eq!(jobstr(dir.path(), &["explain", "--hops", "3"]).status.code(), Some(1));
    let help = jobstr(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("run-all"));
}

#[test]
fn init_config_round_trips_and_bad_config_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = jobstr(dir.path(), &["init-config", "--output", "cfg.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cfg = PipelineConfig::load(&dir.path().join("cfg.json")).unwrap();
    assert_eq!(cfg, PipelineConfig::default());

    std::fs::write(dir.path().join("bad.json"), r#"{"kg": {"job_skill_threshold": 2.0}, "graph": {"epochs": 0}}"#).unwrap();
    let bad = jobstr(dir.path(), &["--config", "bad.json", "summarize"]);
    assert_eq!(bad.status.code(), Some(2));
    let msg = stderr(&bad);
    assert!(msg.contains("kg.job_skill_threshold") && msg.contains("graph.epochs"), "{msg}");
}

#[test]
fn missing_corpus_names_gen_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = jobstr(dir.path(), &["summarize"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gen-corpus"), "{}", stderr(&out));
}

#[test]
fn staged_run_predict_and_explain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = jobstr(d, &["gen-corpus", "--jobs", "60", "--skills", "80"]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    assert_eq!(stdout(&gen).lines().count(), 3);
    for f in ["source_jobs.csv", "source_skills.csv", "source_skill_hierarchy.csv"] {
        assert!(d.join("data").join(f).is_file(), "{f}");
    }

    let fast = r#"{"graph": {"epochs": 3}, "align": {"epochs": 3}}"#;
    std::fs::write(d.join("fast.json"), fast).unwrap();
    let stages: [&[&str]; 7] = [
        &["summarize"],
        &["embed"],
        &["pairs"],
        &["split"],
        &["kg", "build"],
        &["kg", "embed"],
        &["eval"],
    ];
    for (i, stage) in stages.iter().enumerate() {
        let mut args = vec!["--config", "fast.json"];
        args.extend_from_slice(stage);
        let out = jobstr(d, &args);
        if i == stages.len() - 1 {
            assert_eq!(out.status.code(), Some(2));
            assert!(stderr(&out).contains("align train"), "{}", stderr(&out));
        } else {
            assert!(out.status.success(), "{stage:?}: {}", stderr(&out));
        }
    }

    let train = jobstr(d, &["--config", "fast.json", "align", "train"]);
    assert!(train.status.success(), "{}", stderr(&train));

    let pred = jobstr(d, &["--config", "fast.json", "predict", "--title-a", "CEO", "--title-b", "Managing Director"]);
    assert!(pred.status.success(), "{}", stderr(&pred));
    let text = stdout(&pred);
    assert_eq!(text.lines().count(), 1);
    let score: f64 = text.trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&score));
    let same = jobstr(d, &["--config", "fast.json", "predict", "--title-a", "Nurse", "--title-b", "nurse"]);
    assert_eq!(stdout(&same).trim(), "1.000000");

    let json = jobstr(d, &["--config", "fast.json", "explain", "--job-a", "j0001", "--job-b", "j0021", "--format", "json"]);
    assert!(json.status.success(), "{}", stderr(&json));
    let e = jobstr::explain::parse_json(&stdout(&json)).unwrap();
    assert_eq!((e.job_a.id.as_str(), e.job_b.id.as_str()), ("j0001", "j0021"));
    let dot = jobstr(d, &["--config", "fast.json", "explain", "--job-a", "j0001", "--job-b", "j0021", "--hops", "2", "--format", "dot"]);
    assert!(dot.status.success(), "{}", stderr(&dot));
    assert!(stdout(&dot).starts_with("graph "));
    let unknown = jobstr(d, &["--config", "fast.json", "explain", "--job-a", "j0001", "--job-b", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
}
