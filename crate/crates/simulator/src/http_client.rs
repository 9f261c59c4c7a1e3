use std::time::Duration;

use heatdispatch_core::{Reply, Transport, TransportError};

/// Blocking HTTP transport against an ingest service base URL.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        HttpTransport {
            base: base_url.trim_end_matches('/').to_owned(),
            agent,
            token: None,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }
}

impl Transport for HttpTransport {
    fn get(&self, path_and_query: &str) -> Result<Reply, TransportError> {
        let url = format!("{}{}", self.base, path_and_query);
        let mut req = self.agent.get(&url);
        if let Some(token) = &self.token {
            req = req.header("x-auth-token", token);
        }
        let mut resp = req.call().map_err(|e| TransportError(format!("GET {url}: {e}")))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(format!("GET {url}: reading body: {e}")))?;
        Ok(Reply { status, body })
    }
}
