use std::path::{Path, PathBuf};

use fts_teleop::controllers::Variant;
use fts_teleop::scenario::{load_scenario, ScenarioFile};
use fts_teleop::sim::{ForceProfile, Integrator};
use fts_teleop::Error;

fn bundled_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

const C3: &str = r#"
name = "budget"

[robot.local]
mass = [1.8, 1.6]
length = [0.8, 0.6]
com = [0.4, 0.3]
inertia = [0.096, 0.048]
torque_limit = [40.0, 20.0]

[controller]
variant = "C3"
r1 = 1.5
r2 = 1.0
K_s = 6.0
D_s = 8.0
delta_u = 0.5
delta_f = 0.5

[initial]
q_local = [1.0, -0.4]
q_remote = [1.3, 0.3]
"#;

fn parse(text: &str) -> Result<fts_teleop::scenario::Scenario, Error> {
    ScenarioFile::parse(text, Path::new("inline.cfg"))?.build("inline")
}

#[test]
fn bundled_scenarios_load_and_round_trip() {
    let expected = [
        ("c1_sim.cfg", Variant::C1, Integrator::Euler),
        ("c2_sim.cfg", Variant::C2, Integrator::Rk4),
        ("c3_sim.cfg", Variant::C3, Integrator::Euler),
        ("c4_sim.cfg", Variant::C4, Integrator::Rk4),
    ];
    for (file, variant, integrator) in expected {
        let s = load_scenario(&bundled_dir().join(file)).unwrap();
        assert_eq!(s.system.controller.variant(), variant);
        assert_eq!(s.options.integrator, integrator);
        assert_eq!(s.tol, 1e-3);
        assert_eq!(s.system.params.local, s.system.params.remote);
        let again = parse(&s.to_toml()).unwrap();
        assert_eq!(again.system, s.system);
        assert_eq!(again.initial, s.initial);
        assert_eq!(again.options, s.options);
        assert_eq!(again.name, s.name);
    }
}

#[test]
fn gravity_defaults_to_standard() {
    let s = parse(C3).unwrap();
    assert_eq!(s.system.params.local.gravity(), 9.81);
    assert_eq!(s.options.dt, 1e-4);
    assert_eq!(s.options.integrator, Integrator::Euler);
    assert!(s.system.forces.local.is_zero());
}

#[test]
fn weight_condition_is_enforced() {
    let text = C3.replace("r1 = 1.5", "r1 = 2.0");
    let err = parse(&text).unwrap_err().to_string();
    assert!(err.contains("2*r2 > r1"), "{err}");
}

#[test]
fn saturation_budget_is_enforced() {
    let text = C3.replace("D_s = 8.0", "D_s = 40.0");
    let err = parse(&text).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
    let msg = err.to_string();
    assert!(msg.contains("saturation condition") && msg.contains("joint"), "{msg}");
}

#[test]
fn actuator_weaker_than_gravity_is_rejected() {
    let text = C3.replace("torque_limit = [40.0, 20.0]", "torque_limit = [10.0, 20.0]");
    let msg = parse(&text).unwrap_err().to_string();
    assert!(msg.contains("tau_max > g"), "{msg}");
}

#[test]
fn remote_overrides_and_force_sections() {
    let text = format!(
        "{C3}\n[controller.remote]\nD_s = [2.0, 3.0]\n\n[force.remote]\nkind = \"spring_damper\"\nstiffness = 20.0\ndamping = [1.0, 2.0]\nanchor = [0.0, 0.5]\n\n[force.local]\nkind = \"pulse\"\nstart = 0.5\nstop = 1.0\namplitude = [3.0, 0.0]\n"
    );
    let s = parse(&text).unwrap();
    assert_eq!(s.system.controller.gains().remote.damping.as_slice(), &[2.0, 3.0]);
    assert_eq!(s.system.controller.gains().local.damping.as_slice(), &[8.0, 8.0]);
    match &s.system.forces.remote {
        ForceProfile::SpringDamper { stiffness, .. } => assert_eq!(stiffness.as_slice(), &[20.0, 20.0]),
        other => panic!("{other:?}"),
    }
    assert!(matches!(s.system.forces.local, ForceProfile::Pulse { .. }));
}

#[test]
fn unknown_keys_and_bad_types_carry_positions() {
    let text = C3.replace("K_s = 6.0", "K_s = 6.0\nK_x = 1.0");
    match parse(&text).unwrap_err() {
        Error::Parse { line, message, .. } => {
            assert!(line > 0);
            assert!(message.contains("K_x"), "{message}");
        }
        other => panic!("{other}"),
    }
    assert!(matches!(parse(&C3.replace("r2 = 1.0", "r2 = \"one\"")), Err(Error::Parse { .. })));
}

#[test]
fn dimension_mismatches_are_collected() {
    let text = C3.replace("q_remote = [1.3, 0.3]", "q_remote = [1.3]").replace("D_s = 8.0", "D_s = [8.0]");
    let msg = parse(&text).unwrap_err().to_string();
    assert!(msg.contains("q_remote"), "{msg}");
    assert!(msg.contains("D_s"), "{msg}");
}

#[test]
fn edits_produce_variants_of_a_scenario() {
    let s = load_scenario(&bundled_dir().join("c1_sim.cfg")).unwrap();
    let asym = s.asymptotic().unwrap();
    assert_eq!(asym.system.controller.weights().r1(), 1.0);
    assert_eq!(asym.system.controller.p_u(), 1.0);
    assert_eq!(s.with_dt(1e-3).unwrap().options.dt, 1e-3);
    assert!(s.with_dt(-1.0).is_err());
    assert_eq!(s.with_delay(0.01).unwrap().options.delay, 0.01);
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(load_scenario(Path::new("/nonexistent/x.cfg")), Err(Error::Io { .. })));
}
