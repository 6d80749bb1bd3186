use uno3d::geology::{GeologyConfig, GeologyField};
use uno3d::wavesim::record::run_with_solver;
use uno3d::wavesim::{run_simulation, PointSource, SimConfig, Solver, SourceSpec};

/// Homogeneous test medium with a single sensor above the grid centre.
fn homogeneous_setup(grid: [usize; 3], h: f64, dt: f64, end: f64, sponge: usize) -> (GeologyField<f64>, SimConfig) {
    let geology = GeologyField::homogeneous(grid, 2000.0);
    let config = SimConfig {
        spacing_m: h,
        dt_s: dt,
        duration_s: end,
        sponge_width: sponge,
        sensor_grid: [1, 1],
        record_rate_hz: 1.0 / dt,
        record_window_s: [dt, end],
        ..SimConfig::default()
    };
    (geology, config)
}

/// First time the trace exceeds `fraction` of its peak magnitude.
fn onset(trace: &[f64], times: &[f64], fraction: f64) -> f64 {
    let peak = trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let i = trace.iter().position(|v| v.abs() >= fraction * peak).unwrap();
    times[i]
}

fn component(data: &[f64], nt: usize, c: usize) -> &[f64] {
    &data[c * nt..(c + 1) * nt]
}

#[test]
fn straight_ray_arrival_times() {
    let (h, dt) = (100.0, 0.01);
    let (geology, config) = homogeneous_setup([48; 3], h, dt, 2.5, 12);
    // source 3 km below the sensor: M_zz radiates P vertically, M_xz radiates S
    let tensor = [[0.0, 0.0, 1e16], [0.0, 0.0, 0.0], [1e16, 0.0, 1e16]];
    let src = PointSource { node: [24, 24, 30], tensor, tau_s: 0.127 };
    let solver = Solver::new(&geology, &config, Some(src)).unwrap();
    let rec = run_with_solver(&solver, &config).unwrap();
    let nt = rec.times_s.len();
    // the pick level sits above the near-field ramp between the two phases
    let p = onset(component(rec.data.data(), nt, 2), &rec.times_s, 0.25);
    let s = onset(component(rec.data.data(), nt, 0), &rec.times_s, 0.25);
    let tol = 2.0 * dt.max(h / 2000.0);
    assert!((p - 3000.0 / 3400.0).abs() <= tol, "P onset {p}");
    assert!((s - 1.5).abs() <= tol, "S onset {s}");
}

#[test]
fn sponge_reflections_are_small() {
    let (h, dt, end) = (100.0, 0.01, 2.5);
    let tensor = [[0.0, 0.0, 1e16], [0.0, 0.0, 0.0], [1e16, 0.0, 1e16]];
    let trace = |grid: [usize; 3], sponge: usize| {
        let (geology, config) = homogeneous_setup(grid, h, dt, end, sponge);
        let src = PointSource { node: [grid[0] / 2, grid[1] / 2, 15], tensor, tau_s: 0.127 };
        let solver = Solver::new(&geology, &config, Some(src)).unwrap();
        run_with_solver(&solver, &config).unwrap()
    };
    let small = trace([32, 32, 24], 12);
    // boundary echoes of the reference cannot reach the sensor within the window
    let reference = trace([86, 86, 50], 0);
    let nt = small.times_s.len();
    let energy = |d: &[f64], t: usize| (0..3).map(|c| d[c * nt + t].powi(2)).sum::<f64>();
    let mut peak = 0.0f64;
    let mut worst = 0.0f64;
    for t in 0..nt {
        peak = peak.max(energy(reference.data.data(), t));
        let diff: Vec<f64> = small.data.data().iter().zip(reference.data.data()).map(|(a, b)| a - b).collect();
        worst = worst.max(energy(&diff, t));
    }
    assert!(worst < 0.05 * peak, "reflected/incident = {}", worst / peak);
}

#[test]
fn energy_does_not_grow_after_the_source_stops() {
    let (geology, config) = homogeneous_setup([24; 3], 100.0, 0.01, 4.0, 8);
    let tensor = [[0.3e16, 0.5e16, 0.0], [0.5e16, -0.3e16, 0.2e16], [0.0, 0.2e16, 0.0]];
    let src = PointSource { node: [12, 12, 10], tensor, tau_s: 0.127 };
    let solver = Solver::new(&geology, &config, Some(src)).unwrap();
    let mut state = solver.new_state();
    let mut last: Option<f64> = None;
    let mut peak = 0.0f64;
    for n in 0..400 {
        let before = state.clone();
        solver.step(&mut state).unwrap();
        let e = solver.energy(&state, Some(&before));
        peak = peak.max(e);
        // moment rate has decayed below 1e-5 of its peak after ~15 τ
        if n as f64 * 0.01 > 2.0 {
            if let Some(prev) = last {
                assert!(e <= prev * (1.0 + 1e-3), "step {n}: {prev} -> {e}");
            }
        }
        last = Some(e);
    }
    assert!(peak > 0.0);
    assert!(last.unwrap() < peak);
}

#[test]
fn zero_source_keeps_a_zero_field() {
    let (geology, config) = homogeneous_setup([12; 3], 100.0, 0.01, 0.5, 4);
    let solver = Solver::new(&geology, &config, None).unwrap();
    let mut state = solver.new_state();
    for _ in 0..50 {
        solver.step(&mut state).unwrap();
    }
    assert!(state.is_zero());
}

fn desk_run(scale: f64) -> uno3d::wavesim::SurfaceRecord<f64> {
    let geo_cfg = GeologyConfig::desk(16);
    let geology = uno3d::geology::generate::<f64>(&geo_cfg, 3).unwrap();
    let config = SimConfig {
        sensor_grid: [8, 8],
        sensor_spacing_m: 1200.0,
        ..SimConfig::for_domain(16, 9600.0, 4500.0, 10.0, [1.0, 3.0])
    };
    let source = SourceSpec { moment_scale: scale, ..SourceSpec::default() };
    run_simulation(&geology, &source, &config).unwrap()
}

#[test]
fn runs_are_deterministic_and_linear_in_the_moment() {
    let a = desk_run(1e16);
    let b = desk_run(1e16);
    assert_eq!(a.data, b.data);
    assert!(a.data.max_abs() > 0.0);
    let doubled = desk_run(2e16);
    let rel = doubled.data.rel_l2_error(&a.data.scale(2.0)).unwrap();
    assert!(rel < 1e-12, "{rel}");
}

#[test]
fn paper_layout_record_shape() {
    let geology = GeologyField::<f64>::homogeneous([32; 3], 3000.0);
    let config = SimConfig::for_domain(32, 9600.0, 4500.0, 20.0, [1.0, 7.4]);
    let rec = run_simulation(&geology, &SourceSpec::default(), &config).unwrap();
    assert_eq!(rec.data.shape(), &[3, 16, 16, 128]);
    assert_eq!(rec.times_s.len(), 128);
    assert!((rec.times_s[127] - 7.35).abs() < 1e-12);
    assert!(rec.data.all_finite());
}

#[test]
fn unstable_time_step_is_rejected_and_source_must_be_inside() {
    let geology = GeologyField::<f64>::homogeneous([16; 3], 4500.0);
    let config = SimConfig { dt_s: 0.05, ..SimConfig::for_domain(16, 9600.0, 4500.0, 20.0, [1.0, 3.0]) };
    assert!(run_simulation(&geology, &SourceSpec::default(), &config).is_err());
    let config = SimConfig::for_domain(16, 9600.0, 4500.0, 10.0, [1.0, 3.0]);
    let outside = SourceSpec { position_m: [12000.0, 4800.0, -8400.0], ..SourceSpec::default() };
    assert!(run_simulation(&geology, &outside, &config).is_err());
}
