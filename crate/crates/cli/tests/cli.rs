use std::path::Path;
use std::process::{Command, Output};

const ENV_VARS: [&str; 9] = [
    "FIXTURE_DIR",
    "FIXTURE_MODE",
    "RESULTS_DIR",
    "SEARCH_PROVIDER",
    "RENDERER_ENDPOINT",
    "LMM_API_BASE",
    "LMM_API_KEY",
    "LMM_MODEL",
    "RUST_LOG",
];

fn websight(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_websight"));
    for var in ENV_VARS {
        cmd.env_remove(var);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn generate(root: &Path, count: usize) {
    let out = websight(&["fixtures", "generate", root.to_str().unwrap(), "--count", &count.to_string()], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn validate_generated_dataset() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 4);
    let out = websight(&["validate-dataset", dir.path().join("dataset").to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("4 valid records"));
}

#[test]
fn invalid_dataset_exits_2_listing_problems() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.json"), "{}").unwrap();
    std::fs::write(dir.path().join("b.json"), "[").unwrap();
    let out = websight(&["validate-dataset", dir.path().to_str().unwrap()], &[]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("a.json") && err.contains("b.json"), "{err}");
}

#[test]
fn replay_without_fixture_dir_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = websight(&["run", "e2e", "--mode", "replay", "--dataset", dir.path().to_str().unwrap()], &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("FIXTURE_DIR"));
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(code(&websight(&["frobnicate"], &[])), 1);
    assert_eq!(code(&websight(&["run", "everything", "--dataset", "x"], &[])), 1);
    assert_eq!(code(&websight(&["ttc", "--n", "5,5", "--dataset", "x"], &[])), 1);
    assert_eq!(code(&websight(&["--help"], &[])), 0);
}

#[test]
fn missing_run_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = websight(&["score", "--run-id", "missing"], &[("RESULTS_DIR", dir.path())]);
    assert_eq!(code(&out), 2);
    let out = websight(&["report", "--run-id", "missing"], &[("RESULTS_DIR", dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn oracle_replay_run_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 4);
    let dataset = dir.path().join("dataset");
    let fixtures = dir.path().join("fixtures");
    let results = dir.path().join("results");
    let env = [("FIXTURE_DIR", fixtures.as_path()), ("RESULTS_DIR", results.as_path())];
    let args = [
        "run",
        "all",
        "--mode",
        "replay",
        "--endpoint",
        "oracle",
        "--run-id",
        "r1",
        "--score",
        "--dataset",
        dataset.to_str().unwrap(),
    ];
    let out = websight(&args, &env);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    let final_row = table.lines().find(|l| l.starts_with("Final")).unwrap();
    assert!(final_row.contains("100.0"), "{table}");
    assert!(results.join("r1/manifest.json").is_file());
    assert!(results.join("r1/q000.json").is_file());

    let out = websight(&["report", "--run-id", "r1", "--format", "json"], &env);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["s_final"], 100.0);
    assert_eq!(report["query_count"], 4);

    assert_eq!(code(&websight(&args, &env)), 2, "run ids are unique");
}

#[test]
fn stub_ttc_run() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 2);
    let stub = format!("stub:{}", dir.path().join("stub.json").display());
    let fixtures = dir.path().join("fixtures");
    let results = dir.path().join("results");
    let env = [
        ("FIXTURE_DIR", fixtures.as_path()),
        ("RESULTS_DIR", results.as_path()),
        ("FIXTURE_MODE", Path::new("replay")),
    ];
    let dataset = dir.path().join("dataset");
    let out = websight(
        &["ttc", "--n", "1,2,2", "--endpoint", &stub, "--run-id", "t", "--dataset", dataset.to_str().unwrap()],
        &env,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stored: serde_json::Value =
        serde_json::from_slice(&std::fs::read(results.join("t/q000.json")).unwrap()).unwrap();
    assert_eq!(stored["ttc"]["candidates"].as_array().unwrap().len(), 4);
    let out = websight(&["score", "--run-id", "t", "--format", "json"], &env);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn unreachable_search_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 1);
    let results = dir.path().join("results");
    let out = websight(
        &[
            "run",
            "e2e",
            "--mode",
            "live",
            "--endpoint",
            "oracle",
            "--sequential",
            "--dataset",
            dir.path().join("dataset").to_str().unwrap(),
        ],
        &[("RESULTS_DIR", results.as_path()), ("SEARCH_PROVIDER", Path::new("searxng:http://127.0.0.1:9"))],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn slim_screenshot_shrinks_blank_page() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    let output = dir.path().join("out.png");
    image::RgbaImage::from_pixel(40, 300, image::Rgba([255, 255, 255, 255])).save(&input).unwrap();
    let out = websight(&["slim-screenshot", input.to_str().unwrap(), "-o", output.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "40x300 -> 40x2");
    assert_eq!(image::open(&output).unwrap().height(), 2);
}
