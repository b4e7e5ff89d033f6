use serde::{Deserialize, Serialize};

use super::uri::UriRef;

/// Case-folds, trims and collapses internal whitespace runs to one space.
pub fn normalize_label(label: &str) -> String {
    let folded = caseless::default_case_fold_str(label);
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text embedded as a memory key: `Label. Description`, or the label alone
/// when the description is empty.
pub fn compose_key_text(label: &str, description: &str) -> String {
    let description = description.trim();
    if description.is_empty() {
        label.trim().to_string()
    } else {
        format!("{}. {}", label.trim(), description)
    }
}

/// One URI with its label, description and optional embedding key.
#[derive(Debug, Clone, PartialEq)]
pub struct KgRecord {
    uri: UriRef,
    label: String,
    normalized_label: String,
    description: String,
    embedding: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("record {uri} has an empty label")]
pub struct EmptyLabel {
    pub uri: UriRef,
}

impl KgRecord {
    pub fn new(
        uri: UriRef,
        label: impl Into<String>,
        description: impl Into<String>,
    ) -> Result<Self, EmptyLabel> {
        let label = label.into();
        let normalized_label = normalize_label(&label);
        if normalized_label.is_empty() {
            return Err(EmptyLabel { uri });
        }
        Ok(KgRecord {
            uri,
            label,
            normalized_label,
            description: description.into(),
            embedding: None,
        })
    }

    pub fn with_embedding(mut self, embedding: Vec<f32>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn uri(&self) -> UriRef {
        self.uri
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn normalized_label(&self) -> &str {
        &self.normalized_label
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn embedding(&self) -> Option<&[f32]> {
        self.embedding.as_deref()
    }

    pub fn key_text(&self) -> String {
        compose_key_text(&self.label, &self.description)
    }

    pub(crate) fn set_embedding(&mut self, embedding: Option<Vec<f32>>) {
        self.embedding = embedding;
    }
}

/// Line format of metadata files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetadataLine {
    pub uri: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
}

impl From<&KgRecord> for MetadataLine {
    fn from(record: &KgRecord) -> Self {
        MetadataLine {
            uri: record.uri.canonical_text(),
            label: record.label.clone(),
            description: record.description.clone(),
        }
    }
}
