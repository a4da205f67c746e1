use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sfcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfcomp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((name, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn path(dir: &TempDir, sub: &str) -> String {
    dir.path().join(sub).display().to_string()
}

#[test]
fn zero_episodes_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let o = sfcomp(&["baseline", "--episodes", "0", "--out", &path(&tmp, "o")]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("episodes"));
}

#[test]
fn bad_flags_and_presets_exit_one() {
    assert_eq!(code(&sfcomp(&["baseline", "--bogus"])), 1);
    assert_eq!(code(&sfcomp(&["baseline", "--preset", "huge"])), 1);
    assert_eq!(code(&sfcomp(&["baseline", "--case", "9", "--episodes", "1"])), 1);
    assert_eq!(code(&sfcomp(&["--help"])), 0);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[run]\nepisodes = 5\nbogus = true\n").unwrap();
    let o = sfcomp(&["baseline", "--config", cfg.to_str().unwrap(), "--out", &path(&tmp, "o")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn baseline_reruns_are_byte_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let a = path(&tmp, "a");
    let b = path(&tmp, "b");
    let common = ["baseline", "--case", "0,3", "--episodes", "12", "--seed", "7", "--dump-trajectories", "2"];
    let oa = sfcomp(&[&common[..], &["--workers", "1", "--out", &a]].concat());
    let ob = sfcomp(&[&common[..], &["--workers", "2", "--out", &b]].concat());
    assert_eq!(code(&oa), 0, "{}", stderr(&oa));
    assert_eq!(code(&ob), 0, "{}", stderr(&ob));
    let (fa, fb) = (files(Path::new(&a)), files(Path::new(&b)));
    assert!(!fa.is_empty());
    // The effective configuration records the worker count.
    let strip = |v: Vec<(String, Vec<u8>)>| -> Vec<_> { v.into_iter().filter(|(n, _)| n != "config.toml").collect() };
    assert_eq!(strip(fa), strip(fb));
}

#[test]
fn outputs_carry_metadata_and_trajectory_dumps() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = sfcomp(&[
        "baseline",
        "--case",
        "3",
        "--episodes",
        "5",
        "--dump-trajectories",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let traj: Vec<_> = fs::read_dir(out.join("trajectories")).unwrap().collect();
    assert_eq!(traj.len(), 3);
    let results = fs::read_to_string(out.join("results_baseline.csv")).unwrap();
    assert!(results.starts_with("# sfcomp results\n# config_hash="), "{results}");
    assert!(results.contains("# master_seed=1\n"));
    assert!(results.lines().any(|l| l.starts_with("case,")));
    assert!(out.join("episodes_baseline_case3.csv").exists());
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("[run]"));
}

#[test]
fn eval_requires_an_existing_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let out = path(&tmp, "o");
    assert_eq!(code(&sfcomp(&["eval", "--episodes", "2", "--out", &out])), 1);
    let missing = path(&tmp, "nope.json");
    let o = sfcomp(&["eval", "--episodes", "2", "--checkpoint", &missing, "--out", &out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("does not exist"));
}

#[test]
fn train_then_eval_and_refuse_mismatched_config() {
    let tmp = TempDir::new().unwrap();
    let out = path(&tmp, "train");
    let ck = path(&tmp, "ck.json");
    let o = sfcomp(&["train", "--episodes", "120", "--checkpoint", &ck, "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve = fs::read_to_string(Path::new(&out).join("curve.csv")).unwrap();
    assert!(curve.contains("episode,window_hit50_pct,window_hit100_pct,L,L_o,L_eps"));
    assert_eq!(curve.lines().filter(|l| !l.starts_with('#')).count(), 2);

    let ev = path(&tmp, "eval");
    let o = sfcomp(&["eval", "--case", "3", "--episodes", "4", "--checkpoint", &ck, "--out", &ev]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(Path::new(&ev).join("results_compensated.csv").exists());
    assert!(Path::new(&ev).join("paired.csv").exists());

    let cfg = tmp.path().join("other.toml");
    fs::write(&cfg, "[seeker]\nsigma_theta = 0.002\n").unwrap();
    let o = sfcomp(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--episodes",
        "2",
        "--checkpoint",
        &ck,
        "--out",
        &ev,
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("different"), "{}", stderr(&o));

    let o = sfcomp(&["train", "--resume", "--episodes", "120", "--checkpoint", &ck, "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn selftest_passes() {
    let o = sfcomp(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().all(|l| l.starts_with("PASS")));
}
