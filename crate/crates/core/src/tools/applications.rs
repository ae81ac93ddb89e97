use std::path::Path;
use std::time::{Duration, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::ToolError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Submitted,
    Screening,
    Interview,
    Offer,
    Rejected,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Submitted => "submitted",
            Stage::Screening => "screening",
            Stage::Interview => "interview",
            Stage::Offer => "offer",
            Stage::Rejected => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicationRecord {
    pub user: String,
    pub opening: String,
    pub stage: Stage,
    pub updated_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interview_ms: Option<u64>,
}

/// RFC 7231 date of a millisecond timestamp.
pub fn format_ms(ms: u64) -> String {
    httpdate::fmt_http_date(UNIX_EPOCH + Duration::from_millis(ms))
}

/// Read-only job application records.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ApplicationStore {
    records: Vec<ApplicationRecord>,
}

impl ApplicationStore {
    /// Rejects interview-stage records without an interview time.
    pub fn new(records: Vec<ApplicationRecord>) -> Result<Self, ToolError> {
        if let Some(r) = records
            .iter()
            .find(|r| r.stage == Stage::Interview && r.interview_ms.is_none())
        {
            return Err(ToolError::InvalidFixture(format!(
                "application of {} for {} is at interview stage without an interview time",
                r.user, r.opening
            )));
        }
        Ok(ApplicationStore { records })
    }

    pub fn from_json(text: &str) -> Result<Self, ToolError> {
        let records = serde_json::from_str(text).map_err(|e| ToolError::InvalidFixture(e.to_string()))?;
        Self::new(records)
    }

    pub fn load(path: &Path) -> Result<Self, ToolError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ToolError::InvalidFixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn records(&self) -> &[ApplicationRecord] {
        &self.records
    }

    /// The most recently updated application of `user`; ties go to the
    /// smaller opening id.
    pub fn latest(&self, user: &str) -> Result<&ApplicationRecord, ToolError> {
        self.records
            .iter()
            .filter(|r| r.user == user)
            .max_by(|a, b| a.updated_ms.cmp(&b.updated_ms).then_with(|| b.opening.cmp(&a.opening)))
            .ok_or_else(|| ToolError::NoApplications(user.to_string()))
    }
}
