use std::time::Instant;

use serde::Deserialize;
use serde_json::json;

use super::{
    BackendConfig, BackendError, Completion, Conversation, DecisionBackend, SceneDescription,
};

/// Client for a chat-completion style HTTP endpoint.
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    temperature: f64,
    key_env: String,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("key_env", &self.key_env)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let base = cfg
            .endpoint
            .as_deref()
            .unwrap_or_default()
            .trim_end_matches('/');
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{base}/chat/completions"),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            key_env: cfg.api_key_env.clone().unwrap_or_default(),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

fn transport(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else if e.is_decode() {
        BackendError::Malformed(e.to_string())
    } else {
        // strip the URL so query strings never reach the logs
        BackendError::Transport(e.without_url().to_string())
    }
}

impl DecisionBackend for RemoteBackend {
    fn complete(
        &mut self,
        conv: &Conversation,
        _scene: &SceneDescription,
    ) -> Result<Completion, BackendError> {
        let key = std::env::var(&self.key_env)
            .map_err(|_| BackendError::MissingKey(self.key_env.clone()))?;
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": conv.messages(),
        });
        log::debug!(
            "requesting completion from {} ({} messages)",
            self.url,
            conv.messages().len()
        );
        let started = Instant::now();
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Status(status.as_u16()));
        }
        let bytes = resp.bytes().map_err(transport)?;
        let latency = started.elapsed();
        let parsed: ChatResponse =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no assistant message in response".into()))?;
        Ok(Completion { text, latency })
    }
}
