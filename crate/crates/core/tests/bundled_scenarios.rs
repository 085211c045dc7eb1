use std::path::{Path, PathBuf};

use minsoftmax::scenarios::{build_fig3_scenario, build_fig4_scenario, irrigation_scenario, load_scenario, ScenarioKind};
use minsoftmax::verify::scalar_benchmark;
use minsoftmax::Horizon;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn irrigation_file_equals_builder() {
    assert_eq!(load_scenario(bundled("irrigation.json")).unwrap(), irrigation_scenario());
}

#[test]
fn design_files_equal_builders() {
    assert_eq!(load_scenario(bundled("fig3.json")).unwrap(), build_fig3_scenario());
    assert_eq!(load_scenario(bundled("fig4.json")).unwrap(), build_fig4_scenario());
}

#[test]
fn lq_files_load() {
    let sc = load_scenario(bundled("lq_scalar.json")).unwrap();
    assert_eq!(sc.as_lq().unwrap(), &scalar_benchmark(Horizon::Finite(1)));
    let inf = load_scenario(bundled("lq_scalar_infinite.json")).unwrap();
    assert_eq!(inf.kind(), ScenarioKind::Lq);
    assert_eq!(inf.as_lq().unwrap().horizon(), Horizon::INFINITE);
}
