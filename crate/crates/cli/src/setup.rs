//! Wiring shared by the CLI commands and the service: locating the
//! manifest of a tree and assembling chat engines.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};

use reviver_core::baseline::{prepare_descriptions, BaselineEngine};
use reviver_core::dialogue::ReviverEngine;
use reviver_core::domain::{load_manifest, load_tree, CollectionManifest, EngineKind, MemoryTree};
use reviver_core::engine::ChatEngine;
use reviver_core::gateway::Gateway;

use crate::config::Config;

/// A tree together with the collection it was built from.
pub struct Loaded {
    pub tree: Arc<MemoryTree>,
    pub manifest: Option<CollectionManifest>,
    pub manifest_path: Option<PathBuf>,
}

/// `source_manifest` is stored relative to the tree file when possible.
pub fn relative_to(path: &Path, base_dir: &Path) -> PathBuf {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let (path, base) = (abs(path), abs(base_dir));
    path.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(path)
}

pub fn load(tree_path: &Path, manifest_override: Option<&Path>) -> anyhow::Result<Loaded> {
    let tree = load_tree(tree_path)?;
    let manifest_path = match manifest_override {
        Some(p) => Some(p.to_path_buf()),
        None => tree.build_metadata.source_manifest.as_ref().map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                tree_path.parent().unwrap_or(Path::new(".")).join(p)
            }
        }),
    };
    let manifest = match &manifest_path {
        Some(p) if p.exists() || manifest_override.is_some() => Some(load_manifest(p)?),
        Some(p) => {
            tracing::warn!(path = %p.display(), "source manifest not found; photo ids will be used as paths");
            None
        }
        None => None,
    };
    let manifest_path = manifest.as_ref().and(manifest_path);
    if let Some(m) = &manifest {
        if m.collection_id != tree.collection_id {
            bail!("manifest is for collection {:?}, tree for {:?}", m.collection_id, tree.collection_id);
        }
    }
    Ok(Loaded { tree: Arc::new(tree), manifest, manifest_path })
}

pub fn reviver(
    cfg: &Config,
    tree: Arc<MemoryTree>,
    manifest: Option<&CollectionManifest>,
    gateway: Arc<Gateway>,
) -> anyhow::Result<ChatEngine> {
    let locale = manifest.map_or("en", |m| m.locale.as_str());
    let mut engine = ReviverEngine::new(tree, gateway, cfg.dialogue_for(locale))?;
    if let Some(m) = manifest {
        engine = engine.with_manifest(m);
    }
    Ok(engine.into())
}

/// Describes any undescribed photos first; fails if some stay undescribed.
pub fn baseline(cfg: &Config, manifest: &mut CollectionManifest, gateway: Arc<Gateway>) -> anyhow::Result<ChatEngine> {
    let report = prepare_descriptions(manifest, &gateway, cfg.build.exec);
    for (id, err) in &report.failures {
        tracing::error!(photo = %id, "description failed: {err}");
    }
    Ok(BaselineEngine::new(Arc::new(manifest.clone()), gateway)?.into())
}

pub fn engine(cfg: &Config, kind: EngineKind, loaded: &Loaded) -> anyhow::Result<ChatEngine> {
    let gateway = Arc::new(cfg.gateway(loaded.manifest_path.as_deref())?);
    match kind {
        EngineKind::Reviver => reviver(cfg, loaded.tree.clone(), loaded.manifest.as_ref(), gateway),
        EngineKind::Baseline => {
            let mut manifest = loaded.manifest.clone().context("the baseline engine needs the collection manifest")?;
            baseline(cfg, &mut manifest, gateway)
        }
    }
}
