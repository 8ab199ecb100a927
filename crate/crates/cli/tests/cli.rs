use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_placeshift");

const SMALL_CONFIG: &str = r#"
config_version = 1
seed = 5

[model]
place_dim = 12
readout_dim = 12
lstm_size = 16
lstm_layers = 1
epochs = 2
bptt_window = 8

[sweep]
label = "residential"
n_values = [5, 20]
"#;

fn city_spec(name: &str, seed: u64, cols: u32) -> String {
    format!(
        "name = \"{name}\"\nn_cols = {cols}\nn_rows = 20\nn_business = 40\nn_shopping = 40\n\
         n_residential = 100\nn_farmland = 40\nn_other = 30\nn_agents = 40\ndays = 7\nseed = {seed}\n"
    )
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is json")
}

/// Exit code and the parsed error object printed on stderr.
fn run_err(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no error json in {stderr}"));
    (out.status.code().unwrap(), serde_json::from_str(line).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Bench {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Bench {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        let config = root.join("config.toml");
        fs::write(&config, SMALL_CONFIG).unwrap();
        fs::write(root.join("a.toml"), city_spec("alpha", 3, 20)).unwrap();
        fs::write(root.join("b.toml"), city_spec("beta", 4, 22)).unwrap();
        Bench {
            _dir: dir,
            root,
            config,
        }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn synth(&self, out: &str) -> Value {
        run_ok(&[
            "synth",
            "--config",
            s(&self.config),
            "--spec",
            s(&self.p("a.toml")),
            "--other-spec",
            s(&self.p("b.toml")),
            "--out",
            s(&self.p(out)),
        ])
    }

    fn extract(&self, city: &str, out: &str) -> Value {
        run_ok(&[
            "extract",
            "--config",
            s(&self.config),
            "--gps",
            s(&self.p(&format!("synth/{city}/gps.csv"))),
            "--grid",
            s(&self.p(&format!("synth/{city}/grid.json"))),
            "--city",
            city,
            "--out",
            s(&self.p(out)),
        ])
    }
}

#[test]
fn version_mentions_config_version() {
    let out = run(&["--version"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
    let out = run(&["-V"]);
    assert!(out.status.success());
}

#[test]
fn unknown_method_is_a_usage_error() {
    let (code, err) = run_err(&["align", "--source", "a", "--target", "b", "--method", "magic"]);
    assert_eq!(code, 1);
    assert_eq!(err["error"]["kind"], "usage");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (code, _) = run_err(&["frobnicate"]);
    assert_eq!(code, 1);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    fs::write(
        &grid,
        r#"{"origin_lon":139.0,"origin_lat":35.0,"cell_size_m":1000.0,"ref_latitude":35.0,"n_cols":4,"n_rows":4}"#,
    )
    .unwrap();
    let (code, err) = run_err(&[
        "extract",
        "--gps",
        s(&dir.path().join("nope.csv")),
        "--grid",
        s(&grid),
        "--city",
        "x",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, 2);
    assert_eq!(err["error"]["kind"], "data");
    assert!(err["error"]["message"].as_str().unwrap().contains("nope.csv"));
}

#[test]
fn mismatched_config_version_refuses_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "config_version = 99\n").unwrap();
    let (code, err) = run_err(&["synth", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code, 1);
    assert!(err["error"]["message"].as_str().unwrap().contains("99"));
    assert!(!dir.path().join("northport").exists());
}

#[test]
fn infeasible_spec_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.toml");
    fs::write(&spec, "name = \"tiny\"\nn_cols = 5\nn_rows = 5\n").unwrap();
    let (code, err) = run_err(&["synth", "--spec", s(&spec), "--out", s(dir.path())]);
    assert_ne!(code, 0);
    assert!(err["error"]["message"].as_str().unwrap().contains("do not fit"));
}

#[test]
fn synth_is_reproducible() {
    let bench = Bench::new();
    let summary = bench.synth("one");
    assert_eq!(summary["cities"].as_array().unwrap().len(), 2);
    bench.synth("two");
    for city in ["alpha", "beta"] {
        for file in ["gps.csv", "landuse.csv", "truth.json", "grid.json"] {
            let a = fs::read(bench.p(&format!("one/{city}/{file}"))).unwrap();
            let b = fs::read(bench.p(&format!("two/{city}/{file}"))).unwrap();
            assert!(a == b, "{city}/{file} differs");
        }
    }
}

#[test]
fn full_pipeline_through_files() {
    let bench = Bench::new();
    bench.synth("synth");

    let summary = bench.extract("alpha", "corpus/alpha");
    assert_eq!(summary["n_users"], 40);
    bench.extract("beta", "corpus/beta");
    let again = bench.extract("alpha", "corpus/alpha2");
    assert_eq!(again, summary);
    for file in ["corpus.tsv", "corpus.json"] {
        assert_eq!(
            fs::read(bench.p(&format!("corpus/alpha/{file}"))).unwrap(),
            fs::read(bench.p(&format!("corpus/alpha2/{file}"))).unwrap()
        );
    }

    let cfg = s(&bench.config);
    for city in ["alpha", "beta"] {
        let training = run_ok(&[
            "train",
            "--config",
            cfg,
            "--corpus",
            s(&bench.p(&format!("corpus/{city}"))),
            "--out",
            s(&bench.p(&format!("model/{city}"))),
        ]);
        let losses: Vec<f64> = training["validation_loss_history"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let argmin = (0..losses.len()).min_by(|&a, &b| losses[a].total_cmp(&losses[b])).unwrap();
        assert_eq!(training["best_epoch"], argmin);
        let header = fs::read_to_string(bench.p(&format!("model/{city}/embedding.tsv"))).unwrap();
        assert!(header.lines().next().unwrap().contains(" d=12 "), "{header:.80}");
        assert!(bench.p(&format!("model/{city}/model.ckpt")).exists());
    }

    // Twin embeddings align to the identity.
    let emb_a = bench.p("model/alpha/embedding.tsv");
    let twin = run_ok(&[
        "align",
        "--config",
        cfg,
        "--source",
        s(&emb_a),
        "--target",
        s(&emb_a),
        "--source-corpus",
        s(&bench.p("corpus/alpha")),
        "--target-corpus",
        s(&bench.p("corpus/alpha")),
        "--n-anchors",
        "50",
        "--out",
        s(&bench.p("align/twin")),
    ]);
    assert!(twin["identity_distance"].as_f64().unwrap() < 1e-8, "{twin}");

    let aligned = run_ok(&[
        "align",
        "--config",
        cfg,
        "--source",
        s(&emb_a),
        "--target",
        s(&bench.p("model/beta/embedding.tsv")),
        "--source-corpus",
        s(&bench.p("corpus/alpha")),
        "--target-corpus",
        s(&bench.p("corpus/beta")),
        "--n-anchors",
        "30",
        "--out",
        s(&bench.p("align/ab")),
    ]);
    assert_eq!(aligned["method"], "procrustes");
    assert_eq!(aligned["n_anchors"], 30);
    assert!(aligned["orthogonality_error"].as_f64().unwrap() < 1e-8);

    run_ok(&[
        "translate",
        "--matrix",
        s(&bench.p("align/ab/translation.tsv")),
        "--embedding",
        s(&emb_a),
        "--out",
        s(&bench.p("translated")),
    ]);
    let translated = bench.p("translated/translated.tsv");

    let pair = |src: &Path| -> Vec<String> {
        [
            "--source",
            s(src),
            "--source-landuse",
            s(&bench.p("synth/alpha/landuse.csv")),
            "--source-grid",
            s(&bench.p("synth/alpha/grid.json")),
            "--target",
            s(&bench.p("model/beta/embedding.tsv")),
            "--target-landuse",
            s(&bench.p("synth/beta/landuse.csv")),
            "--target-grid",
            s(&bench.p("synth/beta/grid.json")),
        ]
        .map(String::from)
        .to_vec()
    };
    let mut args: Vec<String> = ["evaluate", "--config", cfg, "--out"].map(String::from).to_vec();
    args.push(s(&bench.p("eval")).into());
    args.push("inter".into());
    args.extend(pair(&translated));
    let report = run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let entries = report["entries"].as_array().unwrap();
    let skipped = report["skipped"].as_array().unwrap();
    assert_eq!(entries.len() + 2 * skipped.len(), 8, "{report}");
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(bench.p("eval/inter.json")).unwrap()).unwrap();
    assert_eq!(on_disk, report);

    let mut args: Vec<String> = ["evaluate", "--config", cfg, "--out"].map(String::from).to_vec();
    args.push(s(&bench.p("eval")).into());
    args.push("sweep".into());
    args.extend(pair(&emb_a));
    args.extend(
        [
            "--source-corpus",
            s(&bench.p("corpus/alpha")),
            "--target-corpus",
            s(&bench.p("corpus/beta")),
        ]
        .map(String::from),
    );
    let curve = run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let ns: Vec<u64> = curve["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["n_anchors"].as_u64().unwrap())
        .collect();
    assert_eq!(ns, [5, 20]);

    let n_target = fs::read_to_string(bench.p("model/beta/embedding.tsv")).unwrap().lines().count() - 1;
    let place = fs::read_to_string(&translated).unwrap().lines().nth(1).unwrap().split('\t').next().unwrap().to_owned();
    let map = run_ok(&[
        "simmap",
        "--place",
        &place,
        "--source",
        s(&translated),
        "--target",
        s(&bench.p("model/beta/embedding.tsv")),
        "--grid",
        s(&bench.p("synth/beta/grid.json")),
        "--out",
        s(&bench.p("simmap")),
    ]);
    assert_eq!(map["n_features"], n_target);
    let geo: Value = serde_json::from_str(&fs::read_to_string(bench.p("simmap/simmap.geojson")).unwrap()).unwrap();
    assert_eq!(geo["features"].as_array().unwrap().len(), n_target);
    let csv_rows = fs::read_to_string(bench.p("simmap/simmap.csv")).unwrap().lines().count();
    assert_eq!(csv_rows, n_target + 1);
}

#[test]
fn joint_training_shares_one_space() {
    let bench = Bench::new();
    bench.synth("synth");
    bench.extract("alpha", "corpus/alpha");
    bench.extract("beta", "corpus/beta");
    let summary = run_ok(&[
        "train-joint",
        "--config",
        s(&bench.config),
        "--corpus",
        s(&bench.p("corpus/alpha")),
        "--other-corpus",
        s(&bench.p("corpus/beta")),
        "--out",
        s(&bench.p("joint")),
    ]);
    assert_eq!(summary["cities"].as_array().unwrap().len(), 2);
    let space = |city: &str| {
        let text = fs::read_to_string(bench.p(&format!("joint/{city}.tsv"))).unwrap();
        let header = text.lines().next().unwrap().to_owned();
        header.split(' ').find(|f| f.starts_with("space=")).map(str::to_owned)
    };
    let (a, b) = (space("alpha"), space("beta"));
    assert!(a.is_some());
    assert_eq!(a, b);
}

#[test]
fn procrustes_without_corpora_is_a_usage_error() {
    let (code, _) = run_err(&["align", "--source", "a.tsv", "--target", "b.tsv"]);
    assert_eq!(code, 1);
}
