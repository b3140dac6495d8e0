use std::path::Path;
use std::process::{Command, Output};

fn rosevo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rosevo"))
        .args(args)
        .current_dir(dir)
        .env_remove("ROSEVO_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn synthetic_run_writes_a_report_and_prints_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = rosevo(dir.path(), &["run", "--synthetic", "--states", "24", "--truth", "4", "--seed", "7", "--out", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("ESR_avg") && out.contains("SSD"), "{out}");
    assert!(dir.path().join("a/metrics.json").exists());
    assert!(dir.path().join("a/set/iter_05.csv").exists());

    let again = rosevo(dir.path(), &["run", "--synthetic", "--states", "24", "--truth", "4", "--seed", "7", "--out", "b"]);
    assert!(again.status.success());
    assert_eq!(read(dir.path().join("a/metrics.json")), read(dir.path().join("b/metrics.json")));
    assert_eq!(read(dir.path().join("a/runlog.jsonl")), read(dir.path().join("b/runlog.jsonl")));
}

#[test]
fn llm_designer_without_a_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rosevo(dir.path(), &["run", "--designer", "llm", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("configuration error"), "{}", stderr(&o));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn bad_flags_and_unknown_presets_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rosevo(dir.path(), &["run", "--variant", "nope"]).status.code(), Some(2));
    assert_eq!(rosevo(dir.path(), &["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(rosevo(dir.path(), &["run", "--config", "missing.toml"]).status.code(), Some(2));
    assert_eq!(rosevo(dir.path(), &["run", "--samples", "0"]).status.code(), Some(2));
}

#[test]
fn config_file_with_a_world_model() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("world.toml"),
        r#"
id = "arm"
states = [
  { name = "goal_dist", kind = "distance", arity = 1 },
  { name = "joint_vel", kind = "velocity", arity = 7 },
  { name = "grip_force", kind = "force", arity = 1 },
  { name = "contact", kind = "boolean-flag", arity = 1 },
]
tasks = [{ id = "reach", description = "touch the goal", success = { cmp = { state = "goal_dist", op = "<", value = 0.05 } } }]
"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        r#"
variant = "set"

[task]
kind = "file"
world = "world.toml"
task = "reach"
truth = { goal_dist = "distance-penalty" }
difficulty = 0.2

[evolution]
iterations = 3
samples = 8
pilot_samples = 8
"#,
    )
    .unwrap();
    let o = rosevo(dir.path(), &["run", "--config", "run.toml", "--seed", "3", "--out", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = read(dir.path().join("out/metrics.json"));
    assert!(metrics.contains("\"variant\": \"set\""), "{metrics}");
    assert!(metrics.contains("\"task_id\": \"reach\""), "{metrics}");
    assert!(dir.path().join("out/set/iter_03.csv").exists());
}

#[test]
fn ablation_covers_every_cell_and_matches_a_replay_of_its_logs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), "workers = 4\noutput_dir = \"abl\"\n").unwrap();
    let o = rosevo(dir.path(), &["ablate", "spec.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut logs = 0;
    for v in ["baseline_du", "set", "dr_fixed", "dr_adaptive"] {
        for seed in 0..20 {
            assert!(dir.path().join(format!("abl/synthetic-24x4-d0.5/{v}/seed-{seed}/runlog.jsonl")).exists());
            logs += 1;
        }
    }
    assert_eq!(logs, 80);
    let csv = read(dir.path().join("abl/ablation.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "task,variant,esr_avg_mean,esr_avg_std,ssd_mean,runs,failed");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("synthetic-24x4-d0.5,baseline_du,"));
    assert!(read(dir.path().join("abl/ablation.txt")).contains("dr_adaptive"));

    // the same numbers come back from the logs alone
    let r = rosevo(dir.path(), &["report", "abl", "--by-variant", "--out", "rep"]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(stdout(&r).matches("replay OK").count(), 80);
    let summary = read(dir.path().join("rep/summary.csv"));
    let strip_task = |text: &str| -> Vec<String> {
        let mut rows: Vec<String> = text.lines().skip(1).map(|l| l.split_once(',').unwrap().1.to_string()).collect();
        rows.sort();
        rows
    };
    assert_eq!(strip_task(&summary), strip_task(&csv));
}

#[test]
fn ablation_results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), "seeds = [3, 1, 4]\nvariants = [\"set\", \"dr_fixed\"]\n").unwrap();
    let one = rosevo(dir.path(), &["ablate", "spec.toml", "--workers", "1", "--out", "w1"]);
    let four = rosevo(dir.path(), &["ablate", "spec.toml", "--workers", "4", "--out", "w4"]);
    assert!(one.status.success() && four.status.success());
    assert_eq!(read(dir.path().join("w1/ablation.csv")), read(dir.path().join("w4/ablation.csv")));
}

#[test]
fn ablation_spec_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.toml"), "variants = []\n").unwrap();
    let o = rosevo(dir.path(), &["ablate", "empty.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("variants"), "{}", stderr(&o));
    std::fs::write(dir.path().join("typo.toml"), "seedz = [1]\n").unwrap();
    assert_eq!(rosevo(dir.path(), &["ablate", "typo.toml"]).status.code(), Some(2));
}

#[cfg(unix)]
#[test]
fn a_cell_where_every_run_fails_makes_the_sweep_fail() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.toml"),
        r#"
seeds = [0, 1]
variants = ["set"]
evaluator = "external"
external = { program = "false" }
"#,
    )
    .unwrap();
    let o = rosevo(dir.path(), &["ablate", "spec.toml", "--out", "abl"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let csv = read(dir.path().join("abl/ablation.csv"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",,,,2,2"), "{csv}");
    // failed runs still leave a log behind
    assert!(dir.path().join("abl/synthetic-24x4-d0.5/set/seed-0/runlog.jsonl").exists());
}

#[test]
fn report_replays_intact_tampered_and_corrupt_logs() {
    let dir = tempfile::tempdir().unwrap();
    for (out, seed) in [("a", "1"), ("b", "2")] {
        assert!(rosevo(dir.path(), &["run", "--seed", seed, "--task-seed", "5", "--variant", "set", "--out", out]).status.success());
    }
    let ok = rosevo(dir.path(), &["report", "a/runlog.jsonl", "--out", "rep"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("replay OK"));
    let curves = read(dir.path().join("rep/curves.csv"));
    assert_eq!(curves.lines().next(), Some("task,variant,seed,iteration,best_success"));
    assert_eq!(curves.lines().count(), 6);

    // two logs, one aggregate row
    let both = rosevo(dir.path(), &["report", "a", "b", "--out", "rep2"]);
    assert!(both.status.success());
    let summary = read(dir.path().join("rep2/summary.csv"));
    assert_eq!(summary.lines().count(), 2, "{summary}");
    assert!(summary.lines().nth(1).unwrap().ends_with(",2,0"));

    // raise the first executed success by 0.3
    let log = read(dir.path().join("b/runlog.jsonl"));
    let mut lines: Vec<String> = log.lines().map(String::from).collect();
    let i = lines.iter().position(|l| l.contains("\"candidate_evaluated\"") && l.contains("\"executed\":true")).unwrap();
    let mut event: serde_json::Value = serde_json::from_str(&lines[i]).unwrap();
    let record = &mut event["outcome"]["record"];
    let s = (record["success"].as_f64().unwrap() + 0.3).min(1.0);
    record["success"] = s.into();
    let last = record["trajectory"].as_array().unwrap().len() - 1;
    record["trajectory"][last] = s.into();
    lines[i] = event.to_string();
    std::fs::write(dir.path().join("b/runlog.jsonl"), lines.join("\n") + "\n").unwrap();
    let bad = rosevo(dir.path(), &["report", "a", "b", "--out", "rep3"]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(stdout(&bad).contains("replay MISMATCH"));
    assert!(stdout(&bad).contains("replay OK"));

    let mut corrupt = log.lines().map(String::from).collect::<Vec<_>>();
    corrupt[2] = "{not json".into();
    std::fs::write(dir.path().join("b/runlog.jsonl"), corrupt.join("\n")).unwrap();
    let o = rosevo(dir.path(), &["report", "b/runlog.jsonl", "--out", "rep4"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}
