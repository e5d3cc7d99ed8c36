//! Binary-level checks: exit codes, emitted files, determinism across
//! processes, and config-file handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dgn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgn"))
        .args(args)
        .env_remove("DGN_OUT_DIR")
        .output()
        .expect("spawn dgn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth_small(dir: &Path, seed: &str) {
    let out = dgn(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--subjects",
        "9",
        "--rois",
        "6",
        "--views",
        "2",
        "--scales",
        "1.0,5.0",
        "--seed",
        seed,
    ]);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
}

#[test]
fn synth_writes_manifest_and_matrix_files_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    synth_small(&a, "7");
    synth_small(&b, "7");

    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    // 9 subjects x 2 views.
    let files: Vec<_> = manifest
        .lines()
        .filter(|l| l.starts_with("subject "))
        .collect();
    assert_eq!(files.len(), 9);
    let mut matrix_count = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.contains("_v") {
            matrix_count += 1;
        }
    }
    assert_eq!(matrix_count, 18);

    // Same flags, same bytes, file by file.
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let left = fs::read(a.join(&name)).unwrap();
        let right = fs::read(b.join(&name)).unwrap();
        assert_eq!(left, right, "{name:?} differs between identical runs");
    }
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let o = out_dir.to_str().unwrap();

    assert_eq!(code(&dgn(&[])), 1); // missing subcommand
    assert_eq!(code(&dgn(&["synth", "--out", o, "--rois", "0"])), 1);
    assert_eq!(code(&dgn(&["train", "--out", o])), 1); // missing --data

    // k=1 is rejected before any training happens.
    let data = tmp.path().join("pop");
    synth_small(&data, "1");
    let out = dgn(&[
        "cross-validate",
        "--data",
        data.to_str().unwrap(),
        "--out",
        o,
        "--k",
        "1",
        "--dims",
        "3,2",
        "--epochs",
        "1",
        "--snl-samples",
        "2",
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("error:"));
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().join("o");

    // Missing manifest.
    let out = dgn(&[
        "train",
        "--data",
        tmp.path().join("missing").to_str().unwrap(),
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));

    // Mismatched template sizes.
    let small = o.join("small.txt");
    let big = o.join("big.txt");
    fs::create_dir_all(&o).unwrap();
    fs::write(&small, "0 1\n1 0\n").unwrap();
    fs::write(&big, "0 1 1\n1 0 1\n1 1 0\n").unwrap();
    let out = dgn(&[
        "rank-rois",
        "--cbt-a",
        small.to_str().unwrap(),
        "--cbt-b",
        big.to_str().unwrap(),
        "--k",
        "2",
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));

    // Corrupt matrix data behind a valid manifest.
    let data = tmp.path().join("pop");
    synth_small(&data, "2");
    let victim = fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().contains("_v0"))
        .unwrap();
    fs::write(&victim, "0 nope\nnope 0\n").unwrap();
    let out = dgn(&[
        "inspect",
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

#[test]
fn numerical_divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("pop");
    // Edge weights near 1e200 overflow the squared terms of the loss.
    let out = dgn(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--subjects",
        "4",
        "--rois",
        "5",
        "--views",
        "2",
        "--scales",
        "1e200,1e200",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let out = dgn(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
        "--dims",
        "3,2",
        "--epochs",
        "1",
        "--snl-samples",
        "2",
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("diverged"), "stderr: {}", stderr(&out));
}

#[test]
fn out_dir_falls_back_to_environment_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("envpop");
    let out = Command::new(env!("CARGO_BIN_EXE_dgn"))
        .args([
            "synth", "--subjects", "3", "--rois", "4", "--views", "1", "--seed", "5",
        ])
        .env("DGN_OUT_DIR", &data)
        .output()
        .expect("spawn dgn");
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(data.join("manifest.txt").is_file());
}

#[test]
fn train_writes_artifacts_and_respects_fold_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("pop");
    synth_small(&data, "11");
    let out_dir = tmp.path().join("run");
    let out = dgn(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--dims",
        "3,2",
        "--epochs",
        "2",
        "--snl-samples",
        "2",
        "--fold",
        "0",
        "--k",
        "3",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for f in ["cbt.txt", "checkpoint.txt", "loss_history.txt", "run_metadata.txt"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let meta = fs::read_to_string(out_dir.join("run_metadata.txt")).unwrap();
    assert!(meta.contains("fold 0 of 3"), "metadata:\n{meta}");
    assert!(meta.contains("train_subjects 6"), "metadata:\n{meta}");
    assert!(meta.contains("learning_rate 0.0005"), "metadata:\n{meta}");

    // --fold without --k is a usage error.
    let out = dgn(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--fold",
        "0",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn config_file_merges_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("pop");
    synth_small(&data, "13");
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "dims = [3, 2]\nepochs = 5\nlearning_rate = 0.001\nsample_size = 2\nseed = 8\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("run");
    let out = dgn(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--epochs",
        "2",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let meta = fs::read_to_string(out_dir.join("run_metadata.txt")).unwrap();
    assert!(meta.contains("epochs 2"), "flag must beat file:\n{meta}");
    assert!(meta.contains("learning_rate 0.001"), "file must beat default:\n{meta}");
    assert!(meta.contains("seed 8"), "metadata:\n{meta}");

    // Unknown config keys are rejected as malformed input.
    fs::write(&cfg, "epochz = 5\n").unwrap();
    let out = dgn(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

#[test]
fn cross_validate_is_deterministic_across_processes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("pop");
    synth_small(&data, "17");
    let run = |dir: &Path| {
        let out = dgn(&[
            "cross-validate",
            "--data",
            data.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--k",
            "3",
            "--dims",
            "3,2",
            "--epochs",
            "2",
            "--snl-samples",
            "2",
            "--seed",
            "21",
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&a);
    run(&b);
    let csv_a = fs::read(a.join("report.csv")).unwrap();
    let csv_b = fs::read(b.join("report.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "reports differ between identical runs");
    assert!(a.join("report.txt").is_file());
    // One template artifact per (fold, method).
    for fold in 0..3 {
        for m in ["dgn", "mean", "median"] {
            assert!(a.join(format!("fold{fold}_{m}_cbt.txt")).is_file());
        }
    }
    // 3 methods x 3 folds + header.
    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.starts_with("method,fold,score\n"));
}

#[test]
fn rank_rois_reports_planted_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("base");
    let shifted = tmp.path().join("shifted");
    // Twin populations, one with a strongly planted node 3.
    for (dir, extra) in [(&base, None), (&shifted, Some(("3", "4.0")))] {
        let mut args = vec![
            "synth",
            "--out",
            dir.to_str().unwrap(),
            "--subjects",
            "6",
            "--rois",
            "7",
            "--views",
            "2",
            "--seed",
            "29",
        ];
        if let Some((plant, effect)) = extra {
            args.extend(["--plant", plant, "--effect", effect]);
        }
        let out = dgn(&args);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    // Model-free templates are enough to expose the plant.
    let mut cbts = Vec::new();
    for dir in [&base, &shifted] {
        let out_dir = dir.join("run");
        let out = dgn(&[
            "train",
            "--data",
            dir.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--dims",
            "4,2",
            "--epochs",
            "4",
            "--snl-samples",
            "2",
            "--lr",
            "0.005",
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        cbts.push(out_dir.join("cbt.txt"));
    }
    let rank_out = tmp.path().join("rank");
    let out = dgn(&[
        "rank-rois",
        "--cbt-a",
        cbts[0].to_str().unwrap(),
        "--cbt-b",
        cbts[1].to_str().unwrap(),
        "--k",
        "3",
        "--out",
        rank_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let table = fs::read_to_string(rank_out.join("roi_ranking.txt")).unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout, table, "stdout and artifact must match");
    assert!(table.starts_with("rank node score\n"));
    assert_eq!(table.lines().count(), 4); // header + k rows
}
