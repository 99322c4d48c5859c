use std::path::Path;
use std::process::{Command, Output};

use ocean_gnn::autodiff::Checkpoint;
use ocean_gnn::grid::FieldSet;
use ocean_gnn::rollout::{ForcingKind, ForecastRun};
use ocean_gnn::synthetic::DatasetDir;
use ocean_gnn::training::load_model;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocean-gnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], code: i32, tag: &str) {
    let out = cli(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with(&format!("error[{tag}]: ")), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CONFIG: &str = r#"{
  "generator": {"n_lat": 24, "n_lon": 96, "n_eddies": 10, "spinup_days": 5},
  "data": {"dataset": "data", "train_days": [0, 19], "val_days": [20, 29]},
  "model": {"latent": 8, "processor_iterations": 1, "mesh_level": 2},
  "training": {"steps": 3, "checkpoint_every": 2, "validate_every": 3, "val_samples": 2},
  "output_dir": "out"
}"#;

#[test]
fn build_mesh_reports_node_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["build-mesh", "--levels", "1", "--out", s(dir.path())]);
    assert_eq!(out.trim(), "coarse nodes=12 fine nodes=42");
    assert!(dir.path().join("mesh_L0.omsh").is_file());
    assert!(dir.path().join("mesh_L1.omsh").is_file());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("sha256"));
    fails_with(&["build-mesh", "--levels", "0", "--out", s(dir.path())], 2, "E_CONFIG");
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    fails_with(&["gen-data", "--config", s(&missing), "--days", "5", "--out", s(dir.path())], 2, "E_CONFIG");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"model": {"latnet": 4}}"#).unwrap();
    fails_with(&["train", "--config", s(&bad), "--phase", "1"], 2, "E_CONFIG");
    // a data directory that does not exist is a data error
    let cfg = dir.path().join("ok.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    fails_with(&["train", "--config", s(&cfg), "--phase", "1"], 3, "E_DATA");
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("experiment.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let data = root.join("data");

    let out = ok(&["gen-data", "--config", s(&cfg), "--days", "30", "--out", s(&data)]);
    assert!(out.starts_with("days=30 first=0 grid=24x96"));
    let dataset = DatasetDir::open(&data).unwrap();
    assert_eq!(dataset.days().unwrap().len(), 30);

    let meshes = root.join("meshes");
    ok(&["build-mesh", "--levels", "2", "--out", s(&meshes)]);
    let graph = root.join("graph.ogrf");
    let out = ok(&["build-graph", "--grid", s(&data), "--mesh", s(&meshes), "--out", s(&graph)]);
    assert!(out.contains("coarse nodes=") && graph.is_file());

    // fine-tuning needs the phase-1 checkpoint
    fails_with(&["train", "--config", s(&cfg), "--phase", "2"], 2, "E_CONFIG");
    let out = ok(&["--threads", "1", "train", "--config", s(&cfg), "--phase", "1"]);
    assert!(out.starts_with("phase=one_step steps=3"), "{out}");
    let ckpt = root.join("out/phase1.ockp");
    let log = std::fs::read_to_string(root.join("out/phase1_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let out = ok(&["train", "--config", s(&cfg), "--phase", "2"]);
    assert!(out.starts_with("phase=two_step steps=3"), "{out}");

    // persistence checkpoint: the forecast repeats the initial state
    let ck = Checkpoint::read(&ckpt).unwrap();
    let (model, _) = load_model(&ck).unwrap();
    let mut zero = ck.clone();
    model.zero_output_layer(&mut zero.params);
    let zero_path = root.join("zero.ockp");
    zero.write(&zero_path).unwrap();
    let fc = root.join("fc_zero");
    let out = ok(&[
        "forecast", "--ckpt", s(&zero_path), "--init", s(&data), "--forcing", "reanalysis",
        "--horizon", "3", "--out", s(&fc),
    ]);
    assert_eq!(out.trim(), "forcing=reanalysis init_day=21 leads=3");
    let x0 = dataset.ocean(21).unwrap();
    for lead in 1..=3 {
        let f = FieldSet::read(&fc.join(format!("lead_{lead:02}.ogf"))).unwrap();
        assert_eq!(f.day, 21 + lead);
        for (a, b) in f.values.iter().zip(&x0.values) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    let fc = root.join("fc_trained");
    ok(&[
        "forecast", "--ckpt", s(&ckpt), "--init", s(&data), "--forcing", "forecast",
        "--day", "24", "--horizon", "4", "--out", s(&fc),
    ]);
    assert!(fc.join("manifest.json").is_file() && fc.join("provenance.json").is_file());
    // climatology needs a full year of training days
    fails_with(
        &[
            "forecast", "--ckpt", s(&ckpt), "--init", s(&data), "--forcing", "climatology",
            "--out", s(&root.join("fc_clim")),
        ],
        3,
        "E_DATA",
    );
    // forcing past the end of the dataset
    fails_with(
        &[
            "forecast", "--ckpt", s(&ckpt), "--init", s(&data), "--forcing", "reanalysis",
            "--day", "27", "--horizon", "5", "--out", s(&root.join("fc_gap")),
        ],
        3,
        "E_DATA",
    );

    // a "forecast" that is the truth scores zero everywhere
    let truth_run = ForecastRun {
        forcing: ForcingKind::Reanalysis,
        init_days: [20, 21],
        states: (22..=24).map(|d| dataset.ocean(d).unwrap()).collect(),
    };
    let exact = root.join("fc_exact");
    truth_run.write(&exact, serde_json::json!({})).unwrap();
    let csv_path = root.join("rmse.csv");
    let out = ok(&["eval-rmse", "--pred", s(&exact), "--truth", s(&data), "--out", s(&csv_path)]);
    assert_eq!(out.trim(), "rows=27");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("case,lead,variable,depth,region,value\n"));
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",0"), "{line}");
    }

    let prof = root.join("profile.csv");
    ok(&[
        "eval-rmse", "--pred", s(&fc), "--truth", s(&data), "--depth-profile", "--cos-lat",
        "--out", s(&prof),
    ]);
    let rows: Vec<String> = std::fs::read_to_string(&prof).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 4 * 8);
    assert!(rows.iter().all(|r| !r.contains("sea_surface_height")));

    let spec = root.join("spectra.csv");
    ok(&[
        "eval-spectra", "--pred", s(&fc), "--truth", s(&data), "--region", "north pacific",
        "--out", s(&spec),
    ]);
    let text = std::fs::read_to_string(&spec).unwrap();
    assert!(text.starts_with("region,lead,wavenumber,amplitude,source\n"));
    assert!(text.contains(",pred\n") && text.contains(",truth\n"));
    fails_with(
        &["eval-rmse", "--pred", s(&fc), "--truth", s(&data), "--region", "atlantis", "--out", s(&spec)],
        2,
        "E_CONFIG",
    );

    // a corrupted checkpoint is a numerical failure at run time
    let mut broken = ck.clone();
    let biases: Vec<String> = broken
        .params
        .iter()
        .map(|(n, _)| n.to_string())
        .filter(|n| n.ends_with(".b"))
        .collect();
    for name in biases {
        let id = broken.params.id(&name).unwrap();
        broken.params.values_mut(id).fill(f32::INFINITY);
    }
    let broken_path = root.join("broken.ockp");
    broken.write(&broken_path).unwrap();
    fails_with(
        &[
            "forecast", "--ckpt", s(&broken_path), "--init", s(&data), "--forcing", "reanalysis",
            "--horizon", "2", "--out", s(&root.join("fc_nan")),
        ],
        4,
        "E_NUMERIC",
    );
}
