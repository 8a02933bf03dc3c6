#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use scenescout_core::providers::fixture::DEMO_BUNDLE_DIR;
use scenescout_core::providers::{FixtureBundle, Providers};

pub fn demo_bundle() -> FixtureBundle {
    FixtureBundle::load(DEMO_BUNDLE_DIR).expect("demo bundle loads")
}

pub fn demo_providers() -> Providers {
    Providers::from_bundle(Arc::new(demo_bundle()))
}

/// Copies the demo bundle into `dir` so a test can edit it.
pub fn copy_demo(dir: &Path) -> PathBuf {
    let src = Path::new(DEMO_BUNDLE_DIR);
    let dst = dir.join("bundle");
    std::fs::create_dir_all(dst.join("tiles")).unwrap();
    for f in ["routes.json", "panoramas.json", "places.json", "mllm_script.json"] {
        std::fs::copy(src.join(f), dst.join(f)).unwrap();
    }
    for e in std::fs::read_dir(src.join("tiles")).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), dst.join("tiles").join(e.file_name())).unwrap();
    }
    dst
}

/// Writes a minimal bundle from raw JSON values.
pub fn write_bundle(
    dir: &Path,
    panoramas: serde_json::Value,
    places: serde_json::Value,
    routes: serde_json::Value,
    script: serde_json::Value,
) -> PathBuf {
    std::fs::create_dir_all(dir.join("tiles")).unwrap();
    let w = |name: &str, v: &serde_json::Value| {
        std::fs::write(dir.join(name), serde_json::to_string_pretty(v).unwrap()).unwrap()
    };
    w("panoramas.json", &panoramas);
    w("places.json", &places);
    w("routes.json", &routes);
    w("mllm_script.json", &script);
    dir.to_path_buf()
}
