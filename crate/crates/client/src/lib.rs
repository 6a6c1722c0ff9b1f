//! Async client for the stock-and-flow HTTP service.

use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use stockflow_core::wire::{ErrorBody, LoopsPayload, ModelList, RunPayload, RunRequest};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with a non-2xx status and a JSON error body.
    #[error("service returned {status}: {}", .body.error)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("service returned {status} with an unreadable body: {text}")]
    Unexpected { status: StatusCode, text: String },
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Transport(e) => e.status(),
            ClientError::Api { status, .. } | ClientError::Unexpected { status, .. } => Some(*status),
        }
    }

    /// The partial run attached to a numeric fault (HTTP 422).
    pub fn partial_run(&self) -> Option<&RunPayload> {
        match self {
            ClientError::Api { body, .. } => body.run.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base_url` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: &str) -> Self {
        Client { base: base_url.trim_end_matches('/').to_owned(), http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub async fn list_models(&self) -> Result<ModelList, ClientError> {
        decode(self.http.get(format!("{}/models", self.base)).send().await?).await
    }

    pub async fn run(&self, id: &str, request: &RunRequest) -> Result<RunPayload, ClientError> {
        let url = format!("{}/models/{}/run", self.base, id);
        decode(self.http.post(url).json(request).send().await?).await
    }

    pub async fn loops(&self, id: &str) -> Result<LoopsPayload, ClientError> {
        decode(self.http.get(format!("{}/models/{}/loops", self.base, id)).send().await?).await
    }
}

async fn decode<T: DeserializeOwned>(response: Response) -> Result<T, ClientError> {
    let status = response.status();
    if status.is_success() {
        return Ok(response.json().await?);
    }
    let text = response.text().await?;
    match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => Err(ClientError::Api { status, body }),
        Err(_) => Err(ClientError::Unexpected { status, text }),
    }
}
