use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ccs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccs")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "eval_every = 2\n\
         [world]\n\
         n_entities = 24\n\
         n_relations = 4\n\
         n_facts = 50\n\
         n_distractors = 6\n\
         hops = 2\n\
         n_questions = 30\n\
         seed = 3\n\
         [grpo]\n\
         steps = 4\n\
         questions_per_step = 6\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_then_replay_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("run");
    let run_s = run.to_str().unwrap();

    let o = ccs(&["train", "--config", &cfg, "--out", run_s, "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("gold reads in training 0"));
    for f in ["config.toml", "trajectories.jsonl", "metrics.csv", "summary.json", "checkpoints/final.ckpt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let snapshot = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snapshot.contains("seed = 5"));

    let o = ccs(&["replay", "--run", run_s, "--mode", "obs-only", "--reconstructor", "lexical"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let replay = fs::read_to_string(run.join("replay.csv")).unwrap();
    assert!(replay.starts_with("#schema=ccs.replay.v1"));
    assert_eq!(replay.lines().count(), 2 + 4 * 6 * 5);

    let plots = tmp.path().join("plots");
    let o = ccs(&["plots", "--metrics", run.join("metrics.csv").to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let series = fs::read_to_string(plots.join("reward_series.csv")).unwrap();
    assert_eq!(series.lines().count(), 2 + 4);
    assert!(plots.join("search_series.csv").exists());
}

#[test]
fn probe_leakage_prints_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("probe");
    let o = ccs(&["probe-leakage", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["useful_snippets"], 0);
    assert!(report["unmasked_lexical"]["mean"].as_f64().unwrap() > report["masked_lexical"]["mean"].as_f64().unwrap());
    assert!(out.join("leakage.json").exists());
}

#[test]
fn ablate_writes_one_run_per_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("abl");
    let o = ccs(&[
        "ablate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--steps",
        "2",
        "--modes",
        "masked-actions-obs,obs-only",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("ablation.csv").exists());
    assert!(out.join("obs-only/metrics.csv").exists());
    assert!(stdout(&o).contains("masked-actions-obs"));
}

#[test]
fn bad_invocations_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ccs(&["frobnicate"]);
    assert!(!o.status.success());

    let missing = tmp.path().join("nope.toml");
    let o = ccs(&["train", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let o = ccs(&["train", "--mode", "sideways"]);
    assert!(!o.status.success());

    let o = ccs(&["plots", "--metrics", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "heldout_fraction = 2.0\n").unwrap();
    let o = ccs(&["train", "--config", bad.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
