use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FAST: &str = r#"{
  "sweep": {
    "ttt_values": [64, 512],
    "th1_range": {"min_dbm": -120, "max_dbm": -90, "step_db": 15},
    "th2_range": {"min_dbm": -120, "max_dbm": -90, "step_db": 15},
    "seeds": [1, 2],
    "duration_s": 20,
    "warmup_s": 2
  }
}"#;

fn a5tune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a5tune"))
        .args(args)
        .env_remove("A5TUNE_PARALLELISM")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

struct Fixture {
    _dir: TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Fixture {
    fn new(config_text: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("scenario.json");
        fs::write(&config, config_text).unwrap();
        let out = dir.path().join("out");
        Self { _dir: dir, config, out }
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut all = vec!["--config", self.config.to_str().unwrap(), "--out", self.out.to_str().unwrap()];
        all.extend_from_slice(args);
        a5tune(&all)
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.out.join(rel)).unwrap()
    }
}

fn files_in(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(ext))
        .collect();
    v.sort();
    v
}

#[test]
fn full_pipeline() {
    let fx = Fixture::new(FAST);
    let o = fx.run(&["sweep", "--parallelism", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fx.read("dataset.csv");
    assert_eq!(csv.lines().count(), 1 + 18 * 2);
    assert!(fx.out.join("dataset.json").exists());

    // Resuming a complete dataset runs nothing and leaves the bytes alone.
    let o = fx.run(&["sweep", "--resume"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("(0 simulated)"));
    assert_eq!(fx.read("dataset.csv"), csv);

    let o = fx.run(&["train"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_in(&fx.out.join("models"), ".json").len(), 10);
    let report = fx.read("eval_report.csv");
    assert!(report.starts_with("kpi,model,rmse,n_train,n_test,split_seed\n"));
    assert_eq!(report.lines().count(), 11);
    let gbt = fx.read("models/gbt_hosr.json");
    assert_eq!(code(&fx.run(&["train"])), 0);
    assert_eq!(fx.read("models/gbt_hosr.json"), gbt, "train is idempotent");

    let o = fx.run(&["sensitivity", "--n-base", "256"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sobol = fx.read("sobol.csv");
    assert!(sobol.starts_with("kpi,input,first_order,first_order_se,total_order,total_order_se\n"));
    assert_eq!(sobol.lines().count(), 7);

    let o = fx.run(&["optimize", "--method", "both"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = fx.read("comparison.csv");
    let lines: Vec<&str> = cmp.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "method,objective,mean_rsrp_dbm,hosr_pct,evaluations");
    assert!(lines[1].starts_with("brute,") && lines[1].ends_with(",4805"));
    assert!(lines[2].starts_with("ga,"));
    let ga: serde_json::Value = serde_json::from_str(&fx.read("opt_ga.json")).unwrap();
    assert!(ga["evaluations"].as_u64().unwrap() <= 100);
    assert_eq!(ga["trace"].as_array().unwrap().len(), 5);

    let o = fx.run(&["report", "--kpi", "hosr", "--ttt", "64"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let map = fx.read("report/heatmap_hosr_ttt64.csv");
    assert_eq!(map.lines().count(), 4);
    assert!(fx.out.join("report/heatmap_hosr_ttt64.svg").exists());

    let o = fx.run(&["report", "--kpi", "hosr", "--ttt", "all", "--source", "model"]);
    assert_eq!(code(&o), 0);
    let report_dir = fx.out.join("report");
    let model_maps = files_in(&report_dir, ".csv");
    assert_eq!(model_maps.len(), 5);
    assert_eq!(files_in(&report_dir, ".svg").len(), 5);
    let map = fx.read("report/heatmap_hosr_ttt128.csv");
    assert_eq!(map.lines().count(), 32);
    assert!(map.lines().all(|l| l.split(',').count() == 32));

    let o = fx.run(&["report", "--kpi", "objective", "--ttt", "256"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fx.out.join("report/heatmap_objective_ttt256.svg").exists());

    for cmd in ["sweep", "train", "sensitivity", "optimize", "report"] {
        let m: serde_json::Value = serde_json::from_str(&fx.read(&format!("run_manifest_{cmd}.json"))).unwrap();
        for p in m["outputs"].as_array().unwrap() {
            assert!(Path::new(p.as_str().unwrap()).exists(), "{cmd}: {p}");
        }
    }
}

#[test]
fn dataset_cell_matches_heatmap_cell() {
    let fx = Fixture::new(
        r#"{"sweep": {"ttt_values": [128], "th1_range": {"min_dbm": -107, "max_dbm": -101, "step_db": 3},
            "th2_range": {"min_dbm": -113, "max_dbm": -107, "step_db": 3}, "seeds": [4],
            "duration_s": 10, "warmup_s": 1}}"#,
    );
    assert_eq!(code(&fx.run(&["sweep"])), 0);
    assert_eq!(code(&fx.run(&["report", "--kpi", "mean-rsrp", "--ttt", "128"])), 0);
    let row = fx
        .read("dataset.csv")
        .lines()
        .find(|l| l.starts_with("128,-104,-110,"))
        .map(|l| l.split(',').nth(4).unwrap().to_string())
        .unwrap();
    let map = fx.read("report/heatmap_mean_rsrp_ttt128.csv");
    let header: Vec<&str> = map.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "-110").unwrap();
    let line = map.lines().find(|l| l.starts_with("-104,")).unwrap();
    assert_eq!(line.split(',').nth(col).unwrap(), row);
}

#[test]
fn usage_errors_exit_2() {
    let fx = Fixture::new("{not json");
    let o = fx.run(&["sweep"]);
    assert_eq!(code(&o), 2);
    assert!(!fx.out.join("dataset.csv").exists());

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&a5tune(&["--config", "/nonexistent/scenario.json", "--out", out, "sweep"])), 2);
    assert_eq!(code(&a5tune(&["--out", out, "train"])), 2, "missing dataset");
    assert_eq!(code(&a5tune(&["--out", out, "report", "--kpi", "throughput"])), 2);
    assert_eq!(code(&a5tune(&["--out", out, "frobnicate"])), 2);
    assert_eq!(code(&a5tune(&["--out", out, "optimize", "--method", "annealing"])), 2);
}

#[test]
fn fingerprint_mismatch_exits_2() {
    let fx = Fixture::new(FAST);
    assert_eq!(code(&fx.run(&["sweep"])), 0);
    assert_eq!(code(&fx.run(&["train"])), 0);

    let other = fx.config.with_file_name("other.json");
    fs::write(&other, FAST.replace("\"seeds\"", "\"step_ms\": 16, \"seeds\"")).unwrap();
    let out = fx.out.to_str().unwrap();
    let o = a5tune(&["--config", other.to_str().unwrap(), "--out", out, "train"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fingerprint"));

    // Models from one scenario, dataset from another.
    let fx2 = Fixture::new(&FAST.replace("\"seeds\"", "\"step_ms\": 16, \"seeds\""));
    assert_eq!(code(&fx2.run(&["sweep"])), 0);
    let o = a5tune(&[
        "--out",
        fx2.out.to_str().unwrap(),
        "optimize",
        "--models",
        fx.out.join("models").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn parallelism_env_var_is_honoured() {
    let fx = Fixture::new(FAST);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_a5tune"))
            .args(["--config", fx.config.to_str().unwrap(), "--out", fx.out.to_str().unwrap(), "sweep"])
            .env("A5TUNE_PARALLELISM", threads)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1")), 0);
    let one = fx.read("dataset.csv");
    assert_eq!(code(&run("4")), 0);
    assert_eq!(fx.read("dataset.csv"), one);
    assert_eq!(code(&run("lots")), 2);
}
