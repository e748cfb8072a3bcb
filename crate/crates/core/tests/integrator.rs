use dlo_msd::forces::mechanical_energy;
use dlo_msd::integrator::{run, BoundaryScript};
use dlo_msd::scenario::build_scenario_scripts;
use dlo_msd::stability::detect_instability;
use dlo_msd::{discretize, CableSpec, Discretization, Scenario, Trajectory, Vec3};

fn cable(e: f64, n: usize, dt: f64, kd: f64) -> (CableSpec, Discretization) {
    let spec = CableSpec {
        youngs_modulus: e,
        num_masses: n,
        time_step: dt,
        damping_coefficient: kd,
        ..CableSpec::default()
    };
    let d = discretize(&spec, Vec3::zeros(), Vec3::x()).unwrap();
    (spec, d)
}

fn held_ends(d: &Discretization) -> Vec<BoundaryScript> {
    let last = d.state.len() - 1;
    vec![
        BoundaryScript::hold(0, d.state.positions[0]),
        BoundaryScript::hold(last, d.state.positions[last]),
    ]
}

fn simulate(
    spec: &CableSpec,
    d: &Discretization,
    scripts: &[BoundaryScript],
    t: f64,
    stride: usize,
) -> Trajectory {
    run(spec, &d.state, &d.segments, &d.bends, scripts, t, stride).unwrap()
}

#[test]
fn repeated_runs_are_bit_identical() {
    let (spec, d) = cable(526e6, 8, 5e-6, 0.05);
    let scripts = build_scenario_scripts(
        &Scenario {
            settle_duration: 0.01,
            ramp_duration: 0.01,
            total_duration: 0.05,
            ..Scenario::default()
        },
        &d.state,
    );
    let a = simulate(&spec, &d, &scripts, 0.05, 7);
    let b = simulate(&spec, &d, &scripts, 0.05, 7);
    assert_eq!(a.sample_times, b.sample_times);
    for (x, y) in a.states.iter().zip(&b.states) {
        assert_eq!(x.positions, y.positions);
        assert_eq!(x.velocities, y.velocities);
    }
    for (x, y) in a.force_records.iter().zip(&b.force_records) {
        assert_eq!(x.total, y.total);
    }
}

#[test]
fn snapshots_are_evenly_spaced() {
    let (spec, d) = cable(12.6e6, 6, 5e-6, 0.05);
    let traj = simulate(&spec, &d, &held_ends(&d), 0.01, 13);
    // 2000 steps: every 13th plus the final one.
    assert_eq!(traj.len(), 2000 / 13 + 2);
    for w in traj.sample_times.windows(2).take(traj.len() - 2) {
        assert!((w[1] - w[0] - 13.0 * spec.time_step).abs() <= 1e-12);
    }
    assert!((traj.duration() - 0.01).abs() <= 1e-12);
}

/// Energy may only fall between snapshots once the first 1% of steps is past.
/// The tolerance scale is the energy dissipated over the run: a straight
/// cable at the origin starts with zero energy.
fn assert_energy_non_increasing(spec: &CableSpec, d: &Discretization, stride: usize) {
    let traj = simulate(spec, d, &held_ends(d), 0.3, stride);
    assert!(!detect_instability(&traj, 10.0 * spec.length, 1e3).is_finite());
    let energy: Vec<f64> = traj
        .states
        .iter()
        .map(|s| mechanical_energy(s, &d.segments, &d.bends, &spec.gravity).unwrap())
        .collect();
    let scale = (energy[0] - energy[energy.len() - 1]).abs();
    assert!(scale > 0.0);
    let skip = (traj.steps_taken / 100).div_ceil(stride);
    for (k, w) in energy.windows(2).enumerate().skip(skip) {
        let steps = ((traj.sample_times[k + 1] - traj.sample_times[k]) / spec.time_step).round();
        assert!(
            w[1] - w[0] <= 1e-9 * scale * steps,
            "energy rose by {:e} at t = {}",
            w[1] - w[0],
            traj.sample_times[k + 1]
        );
    }
}

#[test]
fn damped_free_oscillation_loses_energy() {
    for (e, n, dt, kd) in [
        (12.6e6, 10, 5e-6, 0.05),
        (526e6, 10, 5e-6, 0.05),
        (1002e6, 6, 5e-6, 0.05),
        (12.6e6, 10, 5e-6, 0.002),
    ] {
        let (spec, d) = cable(e, n, dt, kd);
        assert_energy_non_increasing(&spec, &d, 1);
        assert_energy_non_increasing(&spec, &d, 50);
    }
}

#[test]
fn scripted_nodes_follow_their_script_exactly() {
    let (spec, d) = cable(526e6, 10, 5e-6, 0.05);
    let scenario = Scenario {
        settle_duration: 0.01,
        ramp_duration: 0.02,
        total_duration: 0.05,
        ..Scenario::default()
    };
    let scripts = build_scenario_scripts(&scenario, &d.state);
    let traj = simulate(&spec, &d, &scripts, scenario.total_duration, 3);
    for (t, s) in traj.sample_times.iter().zip(&traj.states) {
        for script in &scripts {
            let (x, v) = script.evaluate(*t);
            assert_eq!(s.positions[script.node_index], x);
            assert_eq!(s.velocities[script.node_index], v);
        }
    }
    let end = traj.states.last().unwrap().positions[9];
    assert_eq!(end, d.state.positions[9] + scenario.displacement);
}

#[test]
fn halving_the_step_converges() {
    let positions = |dt: f64| {
        let (spec, d) = cable(12.6e6, 8, dt, 0.05);
        let traj = simulate(&spec, &d, &held_ends(&d), 0.02, usize::MAX);
        traj.states.last().unwrap().positions.clone()
    };
    let diff = |a: &[Vec3], b: &[Vec3]| {
        a.iter()
            .zip(b)
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max)
    };
    let (p1, p2, p4) = (positions(2e-5), positions(1e-5), positions(5e-6));
    let (coarse, fine) = (diff(&p1, &p2), diff(&p2, &p4));
    assert!(fine > 0.0);
    assert!(coarse / fine >= 1.5, "ratio {}", coarse / fine);
}

#[test]
fn overly_stiff_cable_halts_invalid() {
    let (spec, d) = cable(1002.6e6, 10, 1e-4, 0.05);
    let traj = simulate(&spec, &d, &held_ends(&d), 0.2, 10);
    let halt = traj.halted_at.expect("explicit limit exceeded");
    assert!(halt > 0.0 && halt < 0.2);
    assert!(!traj.states.last().unwrap().valid);
    let detected = detect_instability(&traj, 10.0 * spec.length, 1e3);
    assert!(detected <= halt);
}
