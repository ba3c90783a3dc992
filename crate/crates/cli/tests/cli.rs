use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn netal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.conf");
    let seeds = if extra.contains("seeds") { "" } else { "seeds = 0,1\n" };
    let text = format!(
        "data = synthetic\nsynthetic_samples = 300\nseed_fraction = 0.1\n{seeds}\
         batch_size = 4\niterations = 2\nhidden_layers = 8\ninitial_epochs = 10\n\
         finetune_epochs = 2\nmc_passes = 5\noutput = out\n{extra}"
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_curves_summary_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = netal(&["run", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for stem in ["uncertainty_seed0", "uncertainty_seed1", "random_seed0", "random_seed1"] {
        let curve = fs::read_to_string(out.join("curves").join(format!("{stem}.csv"))).unwrap();
        assert_eq!(curve.lines().count(), 4, "{stem}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("row_type,strategy,seed,"));
    assert_eq!(String::from_utf8_lossy(&o.stdout), summary);
    let echo = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(echo.contains("batch_size = 4"));
    assert!(echo.contains("dropout_rate = 0.2"));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let alt = dir.path().join("alt");
    let o = netal(&[
        "run", "--config", &cfg, "--seed", "7", "--strategy", "coreset", "--iterations", "1",
        "--batch-size", "3", "--output", alt.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<_> = fs::read_dir(alt.join("curves")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec![std::ffi::OsString::from("coreset_seed7.csv")]);
    let curve = fs::read_to_string(alt.join("curves/coreset_seed7.csv")).unwrap();
    let last = curve.lines().last().unwrap();
    assert!(last.starts_with("1,"), "{last}");
    let echo = fs::read_to_string(alt.join("config.resolved")).unwrap();
    assert!(echo.contains("batch_size = 3") && echo.contains("seeds = 7"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strategies = hybrid,qbc\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = netal(&["run", "--config", &cfg, "--output", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for rel in ["summary.csv", "curves/hybrid_seed0.csv", "curves/qbc_seed1.csv", "acquired/qbc_seed0.csv"] {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn config_errors_exit_one_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "train_batch_size = -1\n");
    let o = netal(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 12"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "colour = blue\n");
    let o = netal(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown key"), "{}", stderr(&o));

    let o = netal(&["run", "--config", dir.path().join("missing.conf").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn geo_marks_new_queries_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strategies = uncertainty\nseeds = 3\n");
    assert!(netal(&["run", "--config", &cfg]).status.success());
    let out = dir.path().join("out");
    let o = netal(&["geo", "--run", out.to_str().unwrap(), "--lon-col", "0", "--lat-col", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let geo = fs::read_to_string(out.join("geo/uncertainty_seed3.csv")).unwrap();
    let rows: Vec<Vec<&str>> = geo.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let new_at = |k: &str| rows.iter().filter(|r| r[0] == k && r[4] == "new_query").count();
    assert_eq!(new_at("0"), 0);
    assert_eq!(new_at("1"), 4);
    assert_eq!(new_at("2"), 4);
    let mut ids: Vec<&str> = rows.iter().filter(|r| r[4] == "new_query").map(|r| r[1]).collect();
    let n = ids.len();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), n);
    // Longitudes of the twin world sit near -93.
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() < -90.0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = netal(&["geo", "--run", dir.path().to_str().unwrap(), "--lon-col", "0", "--lat-col", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), "strategies = random\nseeds = 0\n");
    assert!(netal(&["run", "--config", &cfg]).status.success());
    let out = dir.path().join("out");
    let o = netal(&["geo", "--run", out.to_str().unwrap(), "--lon-col", "40", "--lat-col", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("out of range"));
}

#[test]
fn synth_output_feeds_a_csv_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let csv = dir.path().join("world.csv");
    let o = netal(&["synth", "--config", &cfg, "--n", "250", "--out", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 251);
    assert!(text.lines().next().unwrap().ends_with(",throughput"));

    fs::write(dir.path().join("modes.map"), "walking=0\ndriving=1\n").unwrap();
    let csv_cfg = dir.path().join("csv.conf");
    fs::write(
        &csv_cfg,
        "data = csv\ncsv_path = world.csv\ncategory_map = modes.map\nstrategies = random\nseeds = 0\n\
         iterations = 1\nhidden_layers = 8\ninitial_epochs = 5\nfinetune_epochs = 1\nmc_passes = 3\noutput = csvout\n",
    )
    .unwrap();
    let o = netal(&["run", "--config", csv_cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("csvout/curves/random_seed0.csv").is_file());
}
