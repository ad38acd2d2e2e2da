use std::path::PathBuf;

use trunctail::simulation::SimulationConfig;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_reference_config_is_the_default_grid() {
    let cfg = SimulationConfig::from_path(config("reference_grid.cfg")).unwrap().unwrap();
    assert_eq!(cfg, SimulationConfig::default());
    assert_eq!(cfg.cells().len(), 21);
    let again = SimulationConfig::parse(&cfg.to_config_string()).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn shipped_smoke_config_parses() {
    let cfg = SimulationConfig::from_path(config("smoke.cfg")).unwrap().unwrap();
    assert_eq!(cfg.cells().len(), 2);
    assert!(cfg.replicates <= 10);
}
