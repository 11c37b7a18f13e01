//! The naive photo-retrieval chatbot: pick up to five photos relevant to the
//! user's message from their text descriptions, then answer from those
//! photos. No tree, no guidance.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Annotations, ChatTurn, CollectionManifest, Phase, SessionState};
use crate::exec::Exec;
use crate::gateway::{Gateway, MAX_SELECTED_PHOTOS};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionReport {
    /// Photos described by this call (cache hits excluded).
    pub described: usize,
    /// `(photo_id, error)` for photos that could not be described.
    pub failures: Vec<(String, String)>,
}

/// Fills `cached_description` for every photo that lacks one. Failures are
/// recorded and the remaining photos are still processed.
pub fn prepare_descriptions(manifest: &mut CollectionManifest, gateway: &Gateway, exec: Exec) -> DescriptionReport {
    let todo: Vec<usize> = (0..manifest.photos.len())
        .filter(|&i| manifest.photos[i].cached_description.as_deref().is_none_or(|d| d.trim().is_empty()))
        .collect();
    let results = exec.map(&todo, |&i| gateway.describe_photo(&manifest.photos[i]));
    let mut report = DescriptionReport::default();
    for (i, r) in todo.into_iter().zip(results) {
        match r {
            Ok(d) => {
                manifest.photos[i].cached_description = Some(d);
                report.described += 1;
            }
            Err(e) => report.failures.push((manifest.photos[i].photo_id.clone(), e.to_string())),
        }
    }
    report
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("photos without a description: {}", .0.join(", "))]
    MissingDescriptions(Vec<String>),
    #[error("session belongs to collection {found:?}, engine serves {expected:?}")]
    WrongCollection { found: String, expected: String },
}

const GREETING: &str = "Hello! I have looked through your photos. What would you like to talk about?";
const APOLOGY: &str = "Sorry, I could not come up with a reply just now. Please try again.";

#[derive(Debug, Clone)]
pub struct BaselineEngine {
    manifest: Arc<CollectionManifest>,
    gateway: Arc<Gateway>,
    descriptions: Vec<(String, String)>,
}

impl BaselineEngine {
    /// Refuses manifests with undescribed photos; run
    /// [`prepare_descriptions`] first.
    pub fn new(manifest: Arc<CollectionManifest>, gateway: Arc<Gateway>) -> Result<Self, BaselineError> {
        let missing: Vec<String> = manifest
            .photos
            .iter()
            .filter(|p| p.cached_description.as_deref().is_none_or(|d| d.trim().is_empty()))
            .map(|p| p.photo_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(BaselineError::MissingDescriptions(missing));
        }
        let mut photos: Vec<_> = manifest.photos.iter().collect();
        photos.sort_by_key(|p| p.manifest_index);
        let descriptions =
            photos.iter().map(|p| (p.photo_id.clone(), p.cached_description.clone().unwrap_or_default())).collect();
        Ok(BaselineEngine { manifest, gateway, descriptions })
    }

    pub fn manifest(&self) -> &CollectionManifest {
        &self.manifest
    }

    pub fn start_session(&self, session_id: impl Into<String>) -> SessionState {
        let mut state = SessionState::new(session_id, self.manifest.collection_id.clone());
        state.history.push(ChatTurn::bot(0, GREETING, Annotations::default()));
        state
    }

    /// One two-step turn: select photos, then reply from them (plus the
    /// portrait). The selection is always `min(5, n)` distinct photos.
    pub fn reply(&self, state: &mut SessionState, user_text: &str) -> Result<ChatTurn, BaselineError> {
        if state.collection_id != self.manifest.collection_id {
            return Err(BaselineError::WrongCollection {
                found: state.collection_id.clone(),
                expected: self.manifest.collection_id.clone(),
            });
        }
        let user_index = state.next_turn_index();
        state.history.push(ChatTurn::user(user_index, user_text, None));
        let history = &state.history[..user_index];

        let result = self.gateway.select_photos(user_text, history, &self.descriptions).map(|chosen| {
            let selected = self.top_up(chosen);
            let mut photos: Vec<(String, PathBuf)> = selected
                .iter()
                .filter_map(|id| self.manifest.photo(id).map(|p| (id.clone(), p.source_path.clone())))
                .collect();
            if let Some(portrait) = &self.manifest.portrait_photo {
                photos.push(("portrait".to_string(), portrait.clone()));
            }
            let text = self.gateway.generate_raw_reply(user_text, history, None, user_index, &photos);
            (selected, text)
        });

        let turn = match result {
            Ok((selected, Ok(text))) => {
                if state.phase == Phase::Opened {
                    state.phase = Phase::Exploring;
                }
                ChatTurn::bot(user_index + 1, text, Annotations { selected_photos: Some(selected), ..Default::default() })
            }
            Ok((selected, Err(e))) => error_turn(user_index + 1, Some(selected), &e),
            Err(e) => error_turn(user_index + 1, None, &e),
        };
        state.history.push(turn.clone());
        Ok(turn)
    }

    /// Pads a model selection to `min(5, n)` with unselected photos in
    /// manifest order.
    fn top_up(&self, mut chosen: Vec<String>) -> Vec<String> {
        let want = MAX_SELECTED_PHOTOS.min(self.descriptions.len());
        chosen.truncate(want);
        for (id, _) in &self.descriptions {
            if chosen.len() >= want {
                break;
            }
            if !chosen.contains(id) {
                chosen.push(id.clone());
            }
        }
        chosen
    }
}

fn error_turn(index: usize, selected: Option<Vec<String>>, e: &crate::gateway::GatewayError) -> ChatTurn {
    tracing::warn!(error = %e, "baseline turn failed");
    ChatTurn::bot(
        index,
        APOLOGY,
        Annotations { selected_photos: selected, gateway_error: Some(e.to_string()), ..Default::default() },
    )
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::fs;

    use super::*;
    use crate::domain::PhotoRecord;
    use crate::gateway::{GatewayConfig, MockAnnotations, MockBackend, MockPhoto};

    fn manifest(dir: &std::path::Path, n: usize) -> CollectionManifest {
        let photos = (0..n)
            .map(|i| {
                let path = dir.join(format!("p{}.jpg", i + 1));
                fs::write(&path, format!("img {i}")).unwrap();
                PhotoRecord {
                    photo_id: format!("p{}", i + 1),
                    source_path: path,
                    timestamp: None,
                    manifest_index: i,
                    cached_description: None,
                }
            })
            .collect();
        CollectionManifest { collection_id: "c".into(), title: String::new(), photos, portrait_photo: None, locale: "en".into() }
    }

    fn gateway(tags: &[(&str, &str)]) -> Arc<Gateway> {
        let photos: BTreeMap<String, MockPhoto> = tags
            .iter()
            .map(|(id, tag)| (id.to_string(), MockPhoto { tags: vec![tag.to_string()], description: None }))
            .collect();
        let mock = MockBackend::new(MockAnnotations { photos, ..Default::default() });
        Arc::new(Gateway::new(Arc::new(mock), GatewayConfig::default()))
    }

    #[test]
    fn descriptions_are_cached_and_failures_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), 8);
        fs::remove_file(&m.photos[3].source_path).unwrap();
        let gw = gateway(&[]);
        let report = prepare_descriptions(&mut m, &gw, Exec::Parallel);
        assert_eq!(report.described, 7);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].0, "p4");
        assert!(matches!(
            BaselineEngine::new(Arc::new(m.clone()), gw.clone()),
            Err(BaselineError::MissingDescriptions(ids)) if ids == ["p4"]
        ));

        fs::write(&m.photos[3].source_path, "back").unwrap();
        let calls = gw.backend_calls(crate::gateway::Task::DescribePhoto);
        let report = prepare_descriptions(&mut m, &gw, Exec::Sequential);
        assert_eq!(report.described, 1);
        assert_eq!(gw.backend_calls(crate::gateway::Task::DescribePhoto), calls + 1);
        assert!(prepare_descriptions(&mut m, &gw, Exec::Sequential).described == 0);
    }

    fn ready(n: usize, tags: &[(&str, &str)]) -> (tempfile::TempDir, BaselineEngine) {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), n);
        let gw = gateway(tags);
        prepare_descriptions(&mut m, &gw, Exec::Sequential);
        let e = BaselineEngine::new(Arc::new(m), gw).unwrap();
        (dir, e)
    }

    #[test]
    fn beach_selects_tagged_photos() {
        let tags = [("p3", "beach"), ("p9", "beach"), ("p17", "beach"), ("p22", "beach"), ("p30", "beach")];
        let (_d, e) = ready(40, &tags);
        let mut st = e.start_session("s");
        let t = e.reply(&mut st, "beach").unwrap();
        assert_eq!(t.annotations.selected_photos.unwrap(), ["p3", "p9", "p17", "p22", "p30"]);
        assert!(t.text.contains("p3"));
    }

    #[test]
    fn small_collection_selects_everything() {
        let (_d, e) = ready(4, &[]);
        let mut st = e.start_session("s");
        let t = e.reply(&mut st, "hello").unwrap();
        assert_eq!(t.annotations.selected_photos.unwrap(), ["p1", "p2", "p3", "p4"]);
    }

    #[test]
    fn selection_is_topped_up_and_deterministic() {
        let (_d, e) = ready(12, &[("p7", "dog"), ("p2", "dog")]);
        let mut st = e.start_session("s");
        let a = e.reply(&mut st, "the dog").unwrap().annotations.selected_photos.unwrap();
        let b = e.reply(&mut st, "the dog").unwrap().annotations.selected_photos.unwrap();
        assert_eq!(a, ["p2", "p7", "p1", "p3", "p4"]);
        assert_eq!(a, b);
    }

    #[test]
    fn portrait_is_sent_with_the_selection() {
        let (d, e) = ready(3, &[]);
        let mut m = e.manifest().clone();
        let portrait = d.path().join("me.jpg");
        fs::write(&portrait, "me").unwrap();
        m.portrait_photo = Some(portrait);
        let e = BaselineEngine::new(Arc::new(m), e.gateway.clone()).unwrap();
        let mut st = e.start_session("s");
        let t = e.reply(&mut st, "hi").unwrap();
        assert!(t.text.contains("portrait"), "{}", t.text);
    }
}
