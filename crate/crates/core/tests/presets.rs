//! The shipped preset files must stay interchangeable with the built-in
//! preset constructors.

use std::path::Path;

use kflow::experiment::ExperimentConfig;

fn read_preset(file: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(file);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    ExperimentConfig::parse(&text).expect("preset file parses")
}

#[test]
fn preset_files_match_builtin_presets() {
    for (file, name) in [("henon.cfg", "henon"), ("vdp.cfg", "vanderpol"), ("lorenz.cfg", "lorenz")]
    {
        let from_file = read_preset(file);
        let builtin = ExperimentConfig::preset(name).unwrap();
        assert_eq!(
            from_file.to_config_string(),
            builtin.to_config_string(),
            "{file} drifted from ExperimentConfig::preset({name:?})"
        );
    }
}

#[test]
fn preset_files_validate() {
    for file in ["henon.cfg", "vdp.cfg", "lorenz.cfg"] {
        read_preset(file).validate().expect("preset validates");
    }
}
