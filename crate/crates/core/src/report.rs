use serde::{Deserialize, Serialize};

/// One per-record failure collected while processing a batch.
///
/// Serialized as one JSON object per line in error reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub id: String,
    pub stage: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

impl ReportEntry {
    pub fn new(id: impl Into<String>, stage: impl Into<String>, message: impl Into<String>) -> Self {
        ReportEntry {
            id: id.into(),
            stage: stage.into(),
            message: message.into(),
            offset: None,
        }
    }

    pub fn from_error(id: &str, stage: &str, err: &crate::Error) -> Self {
        let offset = match err {
            crate::Error::Leiden { offset, .. } => Some(*offset),
            _ => None,
        };
        ReportEntry {
            id: id.to_string(),
            stage: stage.to_string(),
            message: err.to_string(),
            offset,
        }
    }
}
