//! Typed client for the campaign advisor API.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use spkg_api::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{status}: {} ({})", .body.error.message, .body.error.code)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response ({status}): {text}")]
    Unexpected { status: StatusCode, text: String },
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } | ClientError::Unexpected { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
        }
    }

    pub fn is_conflict(&self) -> bool {
        self.status() == Some(StatusCode::CONFLICT)
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` like `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{}", self.base, path));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        let text = resp.text().await?;
        if status.is_success() {
            return serde_json::from_str(&text).map_err(|_| ClientError::Unexpected { status, text });
        }
        match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => Err(ClientError::Api { status, body }),
            Err(_) => Err(ClientError::Unexpected { status, text }),
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.call::<(), T>(Method::GET, path, None).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/healthz").await
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<SessionCreated> {
        self.call(Method::POST, "/sessions", Some(req)).await
    }

    pub async fn list_sessions(&self) -> Result<Vec<SessionInfo>> {
        self.get("/sessions").await
    }

    pub async fn session(&self, id: &str) -> Result<SessionInfo> {
        self.get(&format!("/sessions/{id}")).await
    }

    pub async fn suggest(&self, id: &str, req: &SuggestRequest) -> Result<SuggestResponse> {
        self.call(Method::POST, &format!("/sessions/{id}/suggest"), Some(req))
            .await
    }

    pub async fn record_observation(&self, id: &str, req: &ObservationRequest) -> Result<ObservationResponse> {
        self.call(Method::POST, &format!("/sessions/{id}/observations"), Some(req))
            .await
    }

    pub async fn posterior(&self, id: &str) -> Result<PosteriorResponse> {
        self.get(&format!("/sessions/{id}/posterior")).await
    }

    pub async fn history(&self, id: &str) -> Result<HistoryResponse> {
        self.get(&format!("/sessions/{id}/history")).await
    }

    pub async fn replay(&self, id: &str) -> Result<ReplayResponse> {
        self.get(&format!("/sessions/{id}/replay")).await
    }
}
