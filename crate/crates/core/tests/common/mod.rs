#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use reviver_core::baseline::{prepare_descriptions, BaselineEngine};
use reviver_core::builder::{build_memory_tree, BuildOptions};
use reviver_core::dialogue::{DialogueConfig, ReviverEngine};
use reviver_core::domain::{load_manifest, CollectionManifest, MemoryTree};
use reviver_core::engine::ChatEngine;
use reviver_core::gateway::{Gateway, GatewayConfig, MockBackend};
use reviver_core::Exec;

pub const FIXTURES: [&str; 4] = ["campus_day", "wedding", "hike", "seaside_40"];

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub struct Fixture {
    pub manifest_path: PathBuf,
    pub manifest: CollectionManifest,
    pub gateway: Arc<Gateway>,
}

pub fn fixture(name: &str) -> Fixture {
    fixture_at(&fixture_dir(name).join("manifest.json"))
}

pub fn fixture_at(manifest_path: &Path) -> Fixture {
    let manifest = load_manifest(manifest_path).unwrap();
    let backend = MockBackend::for_manifest(manifest_path).unwrap();
    let gateway = Arc::new(Gateway::new(Arc::new(backend), GatewayConfig::default()));
    Fixture { manifest_path: manifest_path.to_path_buf(), manifest, gateway }
}

impl Fixture {
    pub fn build(&self, exec: Exec) -> MemoryTree {
        let opts = BuildOptions { exec, ..Default::default() };
        build_memory_tree(&self.manifest, None, &self.gateway, &opts).unwrap()
    }

    pub fn reviver(&self, tree: &MemoryTree) -> ChatEngine {
        let config = DialogueConfig::for_locale(&self.manifest.locale);
        ReviverEngine::new(Arc::new(tree.clone()), self.gateway.clone(), config)
            .unwrap()
            .with_manifest(&self.manifest)
            .into()
    }

    pub fn baseline(&self) -> ChatEngine {
        let mut m = self.manifest.clone();
        let report = prepare_descriptions(&mut m, &self.gateway, Exec::Sequential);
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        BaselineEngine::new(Arc::new(m), self.gateway.clone()).unwrap().into()
    }
}

pub fn mock_reviver(tree: &MemoryTree) -> ChatEngine {
    ReviverEngine::new(Arc::new(tree.clone()), Arc::new(Gateway::mock()), DialogueConfig::default())
        .unwrap()
        .into()
}
