use airborne::dynamics::{HostState, ModelVariant, SystemState, Variant};
use airborne::integrator::{integrate, IntegrationError, Trajectory};
use airborne::scenario::{load_scenario, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn run(cfg: &ScenarioConfig) -> Trajectory {
    integrate(cfg, &cfg.integrator).unwrap()
}

#[test]
fn empty_room_follows_exponential_decay() {
    let traj = run(&ScenarioConfig::empty_room(1.0, 5.0));
    for (t, y) in traj.sample(101).unwrap() {
        assert!((y[0] - (-t).exp()).abs() < 1e-8, "t={t}");
    }
}

#[test]
fn virus_free_tcl_host_stays_put() {
    let mut cfg = ScenarioConfig::single_host(1.0, ModelVariant::new(Variant::Tcl, false));
    cfg.initial = SystemState::new(0.0, &[HostState::susceptible()]);
    let traj = run(&cfg);
    for i in 0..traj.len() {
        assert_eq!(traj.state(i), cfg.initial.as_slice());
    }
}

#[test]
fn peak_comes_later_with_faster_diffusion() {
    let mut last = 0.0;
    for d0 in [0.002, 0.02, 0.2, 2.0] {
        let traj = run(&ScenarioConfig::single_host(d0, ModelVariant::default()));
        let (t, _) = traj.peak_virus(0).unwrap();
        assert!(t >= last, "D0={d0}: {t} < {last}");
        last = t;
    }
    let tcl = run(&ScenarioConfig::single_host(2.0, ModelVariant::new(Variant::Tcl, false)));
    assert!((last - tcl.peak_virus(0).unwrap().0).abs() < 0.1 * last);
}

// Airborne concentration never exceeds its initial value plus everything
// exhaled so far.
#[test]
fn airborne_level_bounded_by_cumulative_shedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0;
    while checked < 40 {
        let mut cfg = ScenarioConfig::random(&mut rng);
        if cfg.model.variant == Variant::Multiscale {
            continue;
        }
        cfg.t_end = 15.0;
        let traj = run(&cfg);
        let m = cfg.domain.host_count();
        let v0 = traj.state(0)[0];
        let mut shed = 0.0;
        for i in 1..traj.len() {
            let dt = traj.times()[i] - traj.times()[i - 1];
            for (j, h) in cfg.hosts.iter().enumerate().take(m) {
                let k = 4 + 4 * j;
                shed += h.xi / std::f64::consts::PI * 0.5 * dt * (traj.state(i)[k] + traj.state(i - 1)[k]);
            }
            let v = traj.state(i)[0];
            assert!(v <= (v0 + shed) * (1.0 + 1e-6) + 1e-9, "{v} > {}", v0 + shed);
        }
        checked += 1;
    }
}

#[test]
fn cell_mass_never_grows_outside_multiscale() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    while checked < 60 {
        let cfg = ScenarioConfig::random(&mut rng);
        if cfg.model.variant == Variant::Multiscale {
            continue;
        }
        let traj = run(&cfg);
        for j in 0..cfg.domain.host_count() {
            let mass = |i: usize| {
                let y = traj.state(i);
                y[1 + 4 * j] + y[2 + 4 * j] + y[3 + 4 * j]
            };
            for i in 1..traj.len() {
                assert!(mass(i) <= mass(i - 1) + 1e-9);
            }
        }
        checked += 1;
    }
}

#[test]
fn multiscale_layout_with_negative_coupling_leaves_the_orthant() {
    let cfg = ScenarioConfig::two_host(
        airborne::Point::new(-0.5, 0.0),
        airborne::Point::new(0.5, 0.0),
        0.05,
        ModelVariant::default(),
    );
    match integrate(&cfg, &cfg.integrator) {
        Err(IntegrationError::Negative { index, .. }) => assert!((5..=8).contains(&index), "{index}"),
        other => panic!("expected a negativity error, got {other:?}"),
    }
}

#[test]
fn reruns_are_bit_identical_across_threads() {
    let cfg = ScenarioConfig::two_host_case(airborne::TwoHostCase::II, 0.2);
    let reference = run(&cfg);
    let copies: Vec<Trajectory> = (0..8).into_par_iter().map(|_| run(&cfg)).collect();
    for traj in copies {
        assert_eq!(traj.times(), reference.times());
        for i in 0..traj.len() {
            assert_eq!(traj.state(i), reference.state(i));
        }
    }
}

#[test]
fn scenario_file_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("room.toml");
    let cfg = ScenarioConfig::two_host_case(airborne::TwoHostCase::I, 0.2);
    std::fs::write(&path, airborne::scenario::ScenarioFile::from_config(&cfg).to_toml()).unwrap();
    let loaded = load_scenario(&path).unwrap();
    assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    assert_eq!(loaded.config, cfg);
    let a = run(&loaded.config);
    let b = run(&cfg);
    assert_eq!(a.final_state(), b.final_state());
}
