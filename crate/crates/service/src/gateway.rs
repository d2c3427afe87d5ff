//! [`CrowdGateway`] over the HTTP API, so simulated workers can drive a
//! running server exactly as real ones would.

use std::time::Duration;

use crowdscreen_core::crowdsim::{CrowdGateway, GatewayError, VoteSubmission};
use crowdscreen_core::project::TaskAssignment;
use crowdscreen_core::WorkerId;
use serde_json::json;
use ureq::http::StatusCode;
use ureq::Agent;

pub struct HttpGateway {
    agent: Agent,
    project_url: String,
}

impl HttpGateway {
    /// `base_url` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: &str, project_id: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            agent,
            project_url: format!("{}/api/v1/projects/{project_id}", base_url.trim_end_matches('/')),
        }
    }
}

fn transport(e: ureq::Error) -> GatewayError {
    GatewayError::Transport(e.to_string())
}

fn unexpected(status: StatusCode, body: String) -> GatewayError {
    match status {
        StatusCode::FORBIDDEN => GatewayError::Forbidden,
        StatusCode::CONFLICT => GatewayError::Conflict(body),
        s => GatewayError::Transport(format!("HTTP {s}: {body}")),
    }
}

impl CrowdGateway for HttpGateway {
    fn register_badge(&mut self, worker: &WorkerId) -> Result<(), GatewayError> {
        let mut resp = self
            .agent
            .post(format!("{}/workers", self.project_url))
            .send_json(json!({ "worker_id": worker, "badge": true }))
            .map_err(transport)?;
        match resp.status() {
            StatusCode::OK => Ok(()),
            s => Err(unexpected(s, resp.body_mut().read_to_string().unwrap_or_default())),
        }
    }

    fn next_task(&mut self, worker: &WorkerId) -> Result<Option<TaskAssignment>, GatewayError> {
        let mut resp = self
            .agent
            .get(format!("{}/tasks/next", self.project_url))
            .query("worker_id", worker.as_str())
            .call()
            .map_err(transport)?;
        match resp.status() {
            StatusCode::OK => resp.body_mut().read_json().map(Some).map_err(transport),
            StatusCode::NO_CONTENT => Ok(None),
            s => Err(unexpected(s, resp.body_mut().read_to_string().unwrap_or_default())),
        }
    }

    fn submit_vote(&mut self, vote: &VoteSubmission) -> Result<(), GatewayError> {
        let mut resp = self
            .agent
            .post(format!("{}/votes", self.project_url))
            .send_json(json!({
                "assignment_id": vote.assignment_id,
                "paper_id": vote.paper_id,
                "criterion_id": vote.criterion_id,
                "label": vote.label,
            }))
            .map_err(transport)?;
        match resp.status() {
            StatusCode::OK => Ok(()),
            s => Err(unexpected(s, resp.body_mut().read_to_string().unwrap_or_default())),
        }
    }
}
