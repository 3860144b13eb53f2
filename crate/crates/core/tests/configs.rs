//! The shipped TOML configs must reproduce the built-in scenarios exactly,
//! and the parser must reject malformed files with a configuration error.

use std::path::Path;

use contact_rbpf::scenario::Scenario;
use contact_rbpf::Error;

fn shipped(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    Scenario::from_toml(&path).unwrap_or_else(|e| panic!("loading {name}: {e}"))
}

#[test]
fn block_wall_config_matches_builtin() {
    let from_file = shipped("block_wall.toml");
    let builtin = Scenario::builtin("block_wall").unwrap();
    assert_eq!(format!("{from_file:?}"), format!("{builtin:?}"));
}

#[test]
fn gripper_config_matches_builtin() {
    let from_file = shipped("gripper_triangle.toml");
    let builtin = Scenario::builtin("gripper_triangle").unwrap();
    assert_eq!(format!("{from_file:?}"), format!("{builtin:?}"));
}

#[test]
fn unknown_key_is_rejected() {
    let text = r#"
name = "bad"
h = 0.01
n_steps = 10
seed = 1
frobnicate = true

[noise]
sigma_pos = 0.01
sigma_theta = 0.01

[[body]]
id = 0
kind = "static"
shape = { box = [1.0, 1.0] }
pose = [0.0, 0.0, 0.0]
friction = 0.5
"#;
    match Scenario::from_toml_str(text) {
        Err(Error::Config(msg)) => assert!(msg.contains("frobnicate"), "message: {msg}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn concave_polygon_is_rejected() {
    let text = r#"
name = "bad"
h = 0.01
n_steps = 10
seed = 1

[noise]
sigma_pos = 0.01
sigma_theta = 0.01

[[body]]
id = 0
kind = "dynamic"
shape = { polygon = [[0.0, 0.0], [1.0, 0.0], [0.2, 0.1], [0.0, 1.0]] }
pose = [0.0, 0.0, 0.0]
mass = 1.0
friction = 0.5
"#;
    assert!(Scenario::from_toml_str(text).is_err());
}
