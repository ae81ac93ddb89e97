use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendLabel, LmError, LmRequest, Rendered, Result, TaskTag};

#[derive(Serialize)]
struct CompletionRequest<'a> {
    system: &'a str,
    input: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Single request/response JSON endpoint: `{system, input, max_tokens}` in,
/// `{text}` out.
#[derive(Clone, Debug)]
pub struct RemoteBackend {
    endpoint: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        RemoteBackend {
            endpoint: endpoint.into(),
            timeout,
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Backend for RemoteBackend {
    fn label(&self) -> BackendLabel {
        BackendLabel::Remote
    }

    fn generate(&self, _task: TaskTag, prompt: &Rendered, request: &LmRequest) -> Result<String> {
        let body = CompletionRequest {
            system: &prompt.system,
            input: &prompt.input,
            max_tokens: request.max_output_length,
        };
        let timeout_ms = self.timeout.as_millis() as u64;
        let mut response = self.agent.post(&self.endpoint).send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => LmError::BackendError(format!("HTTP {code}")),
            // an endpoint that cannot be reached within the deadline is
            // reported the same way as one that never answers
            ureq::Error::Timeout(_)
            | ureq::Error::Io(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound => LmError::BackendTimeout(timeout_ms),
            other => LmError::BackendError(other.to_string()),
        })?;
        let parsed: CompletionResponse = response.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => LmError::BackendTimeout(timeout_ms),
            other => LmError::BackendError(other.to_string()),
        })?;
        Ok(parsed.text)
    }
}
