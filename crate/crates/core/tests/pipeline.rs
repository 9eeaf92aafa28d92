use uavmac::config::RunConfig;
use uavmac::coverage::baseline_scenario;
use uavmac::experiments::{run_sweep, Axis, SimSettings, SweepSpec};
use uavmac::model::{solve_fixed_point, SolverOptions};
use uavmac::plot::render_plots;
use uavmac::report::{read_sweep_csv, sweep_csv, SWEEP_HEADER};
use uavmac::sim::replicate;
use uavmac::timing::AccessMode;

#[test]
fn empty_config_is_the_baseline() {
    let cfg = RunConfig::parse("").unwrap();
    assert_eq!(cfg.scenario().unwrap(), baseline_scenario());
    let t = cfg.scenario().unwrap().timing;
    assert_eq!(
        (
            t.delta_idle,
            t.sifs,
            t.difs,
            t.t_ack,
            t.t_rts,
            t.t_cts,
            t.t_ack_timeout,
            t.t_cts_timeout
        ),
        (50, 28, 128, 112, 160, 112, 300, 300)
    );
    assert_eq!(t.t_payload, 65_536);
    let again = RunConfig::parse(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn negative_radius_names_the_field() {
    let err = RunConfig::parse("[scenario]\nradius = -5\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("radius"), "{err}");
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn baseline_model_and_simulation() {
    let scenario = baseline_scenario();
    let solution = solve_fixed_point(&scenario, &SolverOptions::default()).unwrap();
    assert!(solution.cluster_count() >= 1);
    assert!((0.0..=1.0).contains(&solution.throughput));
    assert!(solution.residuals.max_class() < 1e-10);

    let sim = SimSettings {
        n_seeds: 3,
        measured_time: 1_000.0,
        ..SimSettings::default()
    };
    let rep = replicate(&sim.config(scenario), sim.n_seeds).unwrap();
    assert_eq!(rep.reports.len(), 3);
    assert!(rep.ci95.is_some());
    assert!((0.0..=1.0).contains(&rep.mean));
}

#[test]
fn sweep_csv_round_trips_into_plots() {
    let mut spec = SweepSpec::new(Axis::Density, vec![50.0, 100.0], baseline_scenario());
    spec.modes = vec![AccessMode::RtsCts];
    spec.sim = SimSettings {
        n_seeds: 2,
        measured_time: 1_000.0,
        ..SimSettings::default()
    };
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 2);
    let text = sweep_csv(&rows);
    assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER.join(","));
    assert_eq!(sweep_csv(&run_sweep(&spec).unwrap()), text);
    let records = read_sweep_csv(text.as_bytes()).unwrap();
    let charts = render_plots(&records).unwrap();
    assert_eq!(charts.keys().collect::<Vec<_>>(), ["density_rts-cts.svg"]);
}
