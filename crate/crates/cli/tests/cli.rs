use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gazeloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazeloc")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(gazeloc(&["gen-data", "--n", "0", "--seed", "7"]).status.code(), Some(2));
    assert_eq!(gazeloc(&["gen-data", "--n", "3"]).status.code(), Some(2));
    assert_eq!(gazeloc(&["train-rl", "--seed", "7", "--bogus"]).status.code(), Some(2));
    assert_eq!(gazeloc(&[]).status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    for cmd in ["train-rl", "train-sdl"] {
        let out = gazeloc(&[cmd, "--seed", "7", "--data-dir", p(&missing)]);
        assert_eq!(out.status.code(), Some(1), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
    }
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = gazeloc(&[
            "gen-data",
            "--n",
            "4",
            "--seed",
            "3",
            "--image-size",
            "32",
            "--data-dir",
            p(d),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4 * 3 + 1);
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn corrupt_case_is_reported_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(gazeloc(&[
        "gen-data",
        "--n",
        "5",
        "--seed",
        "1",
        "--image-size",
        "32",
        "--data-dir",
        p(&data)
    ])
    .status
    .success());
    fs::write(data.join("case002_gaze.csv"), "999,999\n1,1\n").unwrap();
    let out = gazeloc(&[
        "train-rl",
        "--seed",
        "1",
        "--train-n",
        "3",
        "--test-n",
        "2",
        "--data-dir",
        p(&data),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("case002") && err.contains("1 of 5"), "{err}");
}

#[test]
fn full_pipeline_on_a_small_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let runs = dir.path().join("runs");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 5\ndata_dir = \"{}\"\nout_dir = \"{}\"\nimage_size = 32\ngaze_length = 12\ntrain_n = 6\ntest_n = 4\n",
            p(&data),
            p(&runs)
        ),
    )
    .unwrap();
    let c = p(&cfg);
    let ok = |args: &[&str]| {
        let out = gazeloc(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    ok(&["--config", c, "gen-data", "--n", "10"]);
    ok(&["--config", c, "train-rl", "--episodes", "10", "--checkpoint-every", "5"]);
    let log = fs::read_to_string(runs.join("rl/training_log.csv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().filter(|r| !r.ends_with(',')).count(), 1);
    for f in [
        "q_network.ckpt",
        "q_network_ep0005.ckpt",
        "q_network_ep0010.ckpt",
        "learning_curves.svg",
        "run.json",
    ] {
        assert!(runs.join("rl").join(f).exists(), "{f}");
    }

    ok(&["--config", c, "train-sdl", "--epochs", "12"]);
    let losses = fs::read_to_string(runs.join("sdl/loss_log.csv")).unwrap();
    assert_eq!(losses.lines().count(), 13);
    assert!(fs::read_to_string(runs.join("sdl/summary.txt"))
        .unwrap()
        .contains("divergence_epoch"));

    let rl = runs.join("rl/q_network.ckpt");
    let sdl = runs.join("sdl/keypoint.ckpt");
    let stdout = ok(&["--config", c, "eval", "--checkpoint", p(&rl)]);
    assert!(stdout.contains("accuracy"));
    ok(&[
        "--config",
        c,
        "compare",
        "--rl-checkpoint",
        p(&rl),
        "--sdl-checkpoint",
        p(&sdl),
    ]);
    let acc = fs::read_to_string(runs.join("compare/accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 3);
    assert!(fs::read_to_string(runs.join("compare/significance.csv"))
        .unwrap()
        .contains("two-proportion"));

    // identical checkpoints give identical accuracies and p = 1
    ok(&[
        "--config",
        c,
        "compare",
        "--rl-checkpoint",
        p(&rl),
        "--sdl-checkpoint",
        p(&rl),
    ]);
    let sig = fs::read_to_string(runs.join("compare/significance.csv")).unwrap();
    let p_value: f64 = sig.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(p_value, 1.0);
}

#[test]
fn checkpoint_for_another_image_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (small, large) = (dir.path().join("s"), dir.path().join("l"));
    let runs = dir.path().join("runs");
    for (d, size) in [(&small, "24"), (&large, "32")] {
        assert!(gazeloc(&[
            "gen-data",
            "--n",
            "4",
            "--seed",
            "2",
            "--image-size",
            size,
            "--gaze-length",
            "6",
            "--data-dir",
            p(d)
        ])
        .status
        .success());
    }
    let common = ["--seed", "2", "--train-n", "2", "--test-n", "2", "--out-dir", p(&runs)];
    let mut args = vec!["train-rl", "--episodes", "2", "--data-dir", p(&small)];
    args.extend(common);
    assert!(gazeloc(&args).status.success());
    let ckpt = runs.join("rl/q_network.ckpt");
    let mut args = vec!["eval", "--checkpoint", p(&ckpt), "--data-dir", p(&large)];
    args.extend(common);
    assert_eq!(gazeloc(&args).status.code(), Some(1));
}
