use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FAST: &str = r#"
[sim]
seeds = 2
measured_time = "1000s"

[sweep]
axis = "velocity"
values = [10, 20]
"#;

fn uavmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavmac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn model_on_baseline_prints_clusters_delta_and_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.toml", "");
    let out = uavmac(&["model", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("N=1 clusters"), "{text}");
    assert!(text.contains("Delta="));
    assert!(text.contains("S=0.55"));
    assert!(text.contains("radius,velocity,density,cw_min,retry_limit,mode,S_model"));
}

#[test]
fn shipped_example_config_is_the_baseline() {
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.toml");
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "empty.toml", "");
    let a = uavmac(&["model", example.to_str().unwrap()]);
    let b = uavmac(&["model", empty.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_csv_header_and_byte_stability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fast.toml", FAST);
    let first = uavmac(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let text = stdout(&first);
    assert_eq!(
        text.lines().next(),
        Some("axis,value,mode,S_model,S_sim_mean,S_sim_ci95,abs_err,rel_err,iters_outer,iters_inner,n_clusters")
    );
    assert_eq!(text.lines().count(), 5);
    assert!(!text.contains('\r'));
    assert!(stderr(&first).contains("agreement:"));
    let second = uavmac(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn simulate_is_reproducible_and_honours_seed_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fast.toml", FAST);
    let a = uavmac(&["simulate", cfg.to_str().unwrap(), "--seeds", "3"]);
    let b = uavmac(&["simulate", cfg.to_str().unwrap(), "--seeds", "3"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("seeds=3"));
    let single = uavmac(&["simulate", cfg.to_str().unwrap(), "--seeds", "1"]);
    assert!(stdout(&single).contains("ci95=undefined"));
}

#[test]
fn sweep_to_file_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fast.toml", FAST);
    let csv = dir.path().join("sweep.csv");
    let out = uavmac(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let plots = dir.path().join("plots");
    let out = uavmac(&[
        "plot",
        csv.to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let basic = std::fs::read_to_string(plots.join("velocity_basic.svg")).unwrap();
    assert!(basic.starts_with("<svg"));
    assert!(basic.contains("UAV velocity (m/s)"));
    assert!(plots.join("velocity_rts-cts.svg").exists());
}

#[test]
fn plot_of_empty_csv_fails_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_config(
        dir.path(),
        "empty.csv",
        "axis,value,mode,S_model,S_sim_mean,S_sim_ci95,abs_err,rel_err,iters_outer,iters_inner,n_clusters\n",
    );
    let plots = dir.path().join("plots");
    let out = uavmac(&[
        "plot",
        csv.to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!plots.exists());
}

#[test]
fn bad_config_exits_with_parse_status() {
    let dir = tempfile::tempdir().unwrap();
    let negative = write_config(dir.path(), "neg.toml", "[scenario]\nradius = -5\n");
    let out = uavmac(&["model", negative.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("radius"), "{}", stderr(&out));
    let unknown = write_config(dir.path(), "unknown.toml", "[scenario]\nradios = 5\n");
    assert_eq!(
        uavmac(&["model", unknown.to_str().unwrap()]).status.code(),
        Some(1)
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        uavmac(&["model", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn usage_errors_exit_with_parse_status() {
    assert_eq!(uavmac(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(uavmac(&["model"]).status.code(), Some(1));
    assert_eq!(uavmac(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_without_axis_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.toml", "");
    let out = uavmac(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--axis"));
}

#[test]
fn infeasible_scenario_exits_with_solver_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "slow.toml",
        "[scenario]\nradius = 984\nvelocity = 22.3\ndensity = 187\ncw_min = 4\nretry_limit = 0\naccess_mode = \"rts-cts\"\n",
    );
    let out = uavmac(&["model", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("infeasible"));
}
