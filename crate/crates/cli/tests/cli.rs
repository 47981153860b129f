//! End-to-end tests of the command-line interface: the documented exit
//! codes, determinism of file outputs, config precedence, and the full
//! make-dataset / train / predict / eval pipeline.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crbm-bp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output, context: &str) {
    assert!(
        out.status.success(),
        "{context} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn make_synthetic_dataset(dir: &Path, seed: u64) {
    let out = run(&[
        "make-dataset",
        "--synthetic",
        "90",
        "--height",
        "8",
        "--width",
        "8",
        "--gen-hidden",
        "6",
        "--flip-prob",
        "0.2",
        "--train-count",
        "60",
        "--val-count",
        "15",
        "--test-count",
        "15",
        "--seed",
        &seed.to_string(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_success(&out, "make-dataset");
}

#[test]
fn make_dataset_is_deterministic_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    make_synthetic_dataset(&a, 5);
    make_synthetic_dataset(&b, 5);
    for name in [
        "train_clean.binmat",
        "train_corrupted.binmat",
        "train_mask.binmat",
        "val_clean.binmat",
        "test_clean.binmat",
        "manifest.txt",
    ] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
    // A different seed must produce different corruption.
    let c = tmp.path().join("c");
    make_synthetic_dataset(&c, 6);
    assert_ne!(
        std::fs::read(a.join("train_corrupted.binmat")).unwrap(),
        std::fs::read(c.join("train_corrupted.binmat")).unwrap()
    );
}

#[test]
fn make_dataset_zero_flip_copies_the_clean_images() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    let out = run(&[
        "make-dataset",
        "--synthetic",
        "10",
        "--height",
        "6",
        "--width",
        "6",
        "--gen-hidden",
        "4",
        "--flip-prob",
        "0.0",
        "--seed",
        "1",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_success(&out, "make-dataset with zero flip");
    let clean = std::fs::read(dir.join("train_clean.binmat")).unwrap();
    let corrupted = std::fs::read(dir.join("train_corrupted.binmat")).unwrap();
    assert_eq!(clean, corrupted);
    let mask = std::fs::read(dir.join("train_mask.binmat")).unwrap();
    assert!(mask[20..].iter().all(|&b| b == 0), "mask must be empty");
}

#[test]
fn make_dataset_full_occlusion_fills_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    let out = run(&[
        "make-dataset",
        "--synthetic",
        "6",
        "--height",
        "6",
        "--width",
        "6",
        "--gen-hidden",
        "4",
        "--corrupt",
        "occlude",
        "--patch-h",
        "6",
        "--patch-w",
        "6",
        "--fill",
        "0",
        "--seed",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_success(&out, "make-dataset with full occlusion");
    let corrupted = std::fs::read(dir.join("train_corrupted.binmat")).unwrap();
    assert!(
        corrupted[20..].iter().all(|&b| b == 0),
        "full occlusion with fill 0 must zero every pixel"
    );
}

fn train_model(dir: &Path, model: &Path, epochs: &str) -> Output {
    run(&[
        "train",
        "--data-dir",
        dir.to_str().unwrap(),
        "--algo",
        "mle-bp",
        "--hidden",
        "12",
        "--learning-rate",
        "0.002",
        "--epochs",
        epochs,
        "--minibatch",
        "30",
        "--seed",
        "3",
        "--out",
        model.to_str().unwrap(),
    ])
}

#[test]
fn pipeline_trains_predicts_and_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_synthetic_dataset(&data, 7);
    let model = tmp.path().join("model.crbm");
    let out = train_model(&data, &model, "4");
    assert_success(&out, "train");
    assert!(model.exists());
    assert!(tmp.path().join("model.crbm.cfg").exists());

    // Training must have reduced the validation error versus the first
    // epoch.
    let history = std::fs::read_to_string(tmp.path().join("model.crbm.history.tsv")).unwrap();
    let rows: Vec<&str> = history.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let first: f64 = rows[0].split('\t').nth(1).unwrap().parse().unwrap();
    let last: f64 = rows[rows.len() - 1].split('\t').nth(1).unwrap().parse().unwrap();
    assert!(
        last < first,
        "validation error did not improve: {first} -> {last}"
    );

    // Predict on the test observations and render a grid.
    let preds = tmp.path().join("preds.binmat");
    let pgm = tmp.path().join("preds.pgm");
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        data.join("test_corrupted.binmat").to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
        "--pgm",
        pgm.to_str().unwrap(),
    ]);
    assert_success(&out, "predict");
    assert!(preds.exists());
    let pgm_bytes = std::fs::read(&pgm).unwrap();
    assert_eq!(&pgm_bytes[..2], b"P5");

    // Matched evaluation of the model.
    let out = run(&[
        "eval",
        "--data-dir",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--model",
        model.to_str().unwrap(),
    ]);
    assert_success(&out, "eval");
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("mle-bp\t"));
    let all_err: f64 = row.split('\t').nth(2).unwrap().parse().unwrap();
    assert!(all_err.is_finite());

    // Evaluating the prediction file gives the same numbers as the model.
    let out = run(&[
        "eval",
        "--data-dir",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    assert_success(&out, "eval on predictions");
    let via_file: f64 = stdout(&out)
        .lines()
        .nth(1)
        .unwrap()
        .split('\t')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!((via_file - all_err).abs() < 1e-9);

    // Rerunning predict reproduces the file byte for byte.
    let preds2 = tmp.path().join("preds2.binmat");
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        data.join("test_corrupted.binmat").to_str().unwrap(),
        "--out",
        preds2.to_str().unwrap(),
    ]);
    assert_success(&out, "predict again");
    assert_eq!(
        std::fs::read(&preds).unwrap(),
        std::fs::read(&preds2).unwrap()
    );
}

#[test]
fn perfect_and_identity_predictors_bracket_the_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_synthetic_dataset(&data, 9);

    // The clean images as predictions: zero error everywhere.
    let out = run(&[
        "eval",
        "--data-dir",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--predictions",
        data.join("test_clean.binmat").to_str().unwrap(),
    ]);
    assert_success(&out, "eval perfect");
    let text = stdout(&out);
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(fields[2].parse::<f64>().unwrap(), 0.0);
    assert_eq!(fields[3].parse::<f64>().unwrap(), 0.0);

    // The corrupted images as predictions: every changed pixel is wrong.
    let out = run(&[
        "eval",
        "--data-dir",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--predictions",
        data.join("test_corrupted.binmat").to_str().unwrap(),
    ]);
    assert_success(&out, "eval identity");
    let text = stdout(&out);
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    let all_err: f64 = fields[2].parse().unwrap();
    let changed_err: f64 = fields[3].parse().unwrap();
    assert_eq!(changed_err, 100.0);
    assert!(all_err > 2.0 && all_err < 25.0, "all = {all_err}");
}

#[test]
fn train_with_zero_epochs_saves_the_initialized_model() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_synthetic_dataset(&data, 11);
    let model = tmp.path().join("init.crbm");
    let out = train_model(&data, &model, "0");
    assert_success(&out, "train with zero epochs");
    assert!(model.exists());
    let history = std::fs::read_to_string(tmp.path().join("init.crbm.history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 1, "header only");
}

#[test]
fn evaluation_refuses_a_silent_inference_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_synthetic_dataset(&data, 13);
    let model = tmp.path().join("model.crbm");
    assert_success(&train_model(&data, &model, "1"), "train");

    let mismatch = run(&[
        "eval",
        "--data-dir",
        data.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--decode",
        "mean-field",
    ]);
    assert_eq!(mismatch.status.code(), Some(1), "mismatch must be a usage error");

    let allowed = run(&[
        "eval",
        "--data-dir",
        data.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--decode",
        "mean-field",
        "--allow-mismatch",
    ]);
    assert_success(&allowed, "eval with acknowledged mismatch");
}

#[test]
fn config_file_is_used_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.cfg");
    std::fs::write(
        &config,
        "synthetic = 10\nheight = 6\nwidth = 6\ngen_hidden = 4\nflip_prob = 0.2\nseed = 1\n",
    )
    .unwrap();

    // File seed 1 + flag seed 2: the flag must win, matching a pure-flag
    // run with seed 2.
    let from_config = tmp.path().join("from_config");
    let out = run(&[
        "make-dataset",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "2",
        "--out-dir",
        from_config.to_str().unwrap(),
    ]);
    assert_success(&out, "make-dataset with config");

    let from_flags = tmp.path().join("from_flags");
    let out = run(&[
        "make-dataset",
        "--synthetic",
        "10",
        "--height",
        "6",
        "--width",
        "6",
        "--gen-hidden",
        "4",
        "--flip-prob",
        "0.2",
        "--seed",
        "2",
        "--out-dir",
        from_flags.to_str().unwrap(),
    ]);
    assert_success(&out, "make-dataset with flags");
    assert_eq!(
        std::fs::read(from_config.join("train_corrupted.binmat")).unwrap(),
        std::fs::read(from_flags.join("train_corrupted.binmat")).unwrap()
    );

    // Unknown config keys are rejected as usage errors.
    let bad = tmp.path().join("bad.cfg");
    std::fs::write(&bad, "synthetic = 10\nbogus = 1\n").unwrap();
    let out = run(&[
        "make-dataset",
        "--config",
        bad.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("never").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_bp_emits_the_timing_table() {
    let out = run(&["bench-bp", "--sizes", "1x1,20x10,1000x500", "--sweeps", "10"]);
    assert_success(&out, "bench-bp");
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n_visible\tn_hidden\tsweeps\twall_ms\tconverged\tfinal_delta"
    );
    let first: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(first[0], "1");
    assert_eq!(first[1], "1");
    let wall_ms: f64 = first[3].parse().unwrap();
    assert!(wall_ms < 50.0, "1x1 run took {wall_ms} ms");
    // The large-model row is present and parses.
    let large: Vec<&str> = text.lines().last().unwrap().split('\t').collect();
    assert_eq!(large[0], "1000");
    assert_eq!(large[1], "500");
    assert!(large[3].parse::<f64>().unwrap() > 0.0);
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn grid_search_picks_a_configuration_and_reports_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_synthetic_dataset(&data, 17);
    let model = tmp.path().join("grid.crbm");
    let out = run(&[
        "train",
        "--data-dir",
        data.to_str().unwrap(),
        "--algo",
        "lr",
        "--hidden",
        "4",
        "--epochs",
        "2",
        "--seed",
        "3",
        "--grid-search",
        "--lr-grid",
        "0.05,0.005",
        "--minibatch-grid",
        "10,20",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_success(&out, "grid search");
    let text = stdout(&out);
    assert!(text.starts_with("learning_rate\tminibatch\tval_all_err"));
    // One row per grid point, then the summary line.
    assert_eq!(text.lines().count(), 1 + 4 + 1);
    assert!(model.exists());
    // The sidecar records the winning combination.
    let sidecar = std::fs::read_to_string(tmp.path().join("grid.crbm.cfg")).unwrap();
    assert!(
        sidecar.contains("learning_rate = 0.05") || sidecar.contains("learning_rate = 0.005")
    );
}

#[test]
fn lr_baseline_trains_and_evaluates_to_a_finite_row() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_synthetic_dataset(&data, 19);
    let model = tmp.path().join("lr.crbm");
    let out = run(&[
        "train",
        "--data-dir",
        data.to_str().unwrap(),
        "--algo",
        "lr",
        "--hidden",
        "4",
        "--learning-rate",
        "0.05",
        "--epochs",
        "6",
        "--minibatch",
        "10",
        "--seed",
        "3",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_success(&out, "train lr baseline");
    let out = run(&[
        "eval",
        "--data-dir",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--model",
        model.to_str().unwrap(),
    ]);
    assert_success(&out, "eval lr baseline");
    let text = stdout(&out);
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(fields[0], "lr");
    let all_err: f64 = fields[2].parse().unwrap();
    assert!(all_err.is_finite() && all_err < 50.0, "all = {all_err}");
}

#[test]
fn oracle_check_passes_and_negative_control_fails() {
    let clean = run(&["oracle-check"]);
    assert_success(&clean, "oracle-check");
    let text = stdout(&clean);
    assert_eq!(text.matches("PASS").count(), 4);
    assert!(text.contains("tolerance="));

    let injected = run(&["oracle-check", "--inject-fd-error", "0.01"]);
    assert_eq!(injected.status.code(), Some(3), "negative control must fail");
    assert!(stdout(&injected).contains("FAIL gradient-finite-difference"));
}

#[test]
fn exit_codes_match_the_documented_contract() {
    // Usage problem.
    let out = run(&["definitely-not-a-command"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));

    // Data problem: missing input file.
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "predict",
        "--model",
        tmp.path().join("missing.crbm").to_str().unwrap(),
        "--input",
        tmp.path().join("missing.binmat").to_str().unwrap(),
        "--out",
        tmp.path().join("out.binmat").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Data problem: malformed model file.
    let junk = tmp.path().join("junk.crbm");
    std::fs::write(&junk, b"JUNKJUNKJUNK").unwrap();
    let out = run(&[
        "predict",
        "--model",
        junk.to_str().unwrap(),
        "--input",
        junk.to_str().unwrap(),
        "--out",
        tmp.path().join("out.binmat").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Help is not an error.
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn idx_input_is_accepted_and_binarized() {
    let tmp = tempfile::tempdir().unwrap();
    // Two 3x3 images with values straddling the 127 threshold.
    let mut idx = Vec::new();
    idx.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    for n in [2u32, 3, 3] {
        idx.extend_from_slice(&n.to_be_bytes());
    }
    idx.extend_from_slice(&[0, 127, 128, 255, 1, 126, 200, 90, 130]);
    idx.extend_from_slice(&[255; 9]);
    let input = tmp.path().join("images.idx");
    std::fs::write(&input, idx).unwrap();

    let dir = tmp.path().join("data");
    let out = run(&[
        "make-dataset",
        "--input",
        input.to_str().unwrap(),
        "--flip-prob",
        "0.0",
        "--seed",
        "4",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_success(&out, "make-dataset from IDX");
    let clean = std::fs::read(dir.join("train_clean.binmat")).unwrap();
    // Header is 20 bytes; the split shuffles, so compare as a set. The
    // strict threshold maps 127 to 0 and 128 to 1.
    let first = &clean[20..29];
    let second = &clean[29..38];
    let graded: &[u8] = &[0, 0, 1, 1, 0, 0, 1, 0, 1];
    let saturated: &[u8] = &[1; 9];
    assert!(
        (first == graded && second == saturated) || (first == saturated && second == graded),
        "unexpected binarized images: {first:?} / {second:?}"
    );
}
