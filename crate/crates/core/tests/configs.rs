use std::path::PathBuf;

use chipforge::Pyramid;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_match_builtins() {
    for (name, builtin) in [
        ("three_scale.json", Pyramid::three_scale()),
        ("two_scale.json", Pyramid::two_scale()),
    ] {
        let loaded = Pyramid::load(config(name)).unwrap_or_else(|e| panic!("{name}: {e}\n{}", builtin.to_json()));
        assert_eq!(loaded, builtin, "{name}");
    }
}
