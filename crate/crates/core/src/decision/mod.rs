//! The decision-maker side of the loop: scene text, prompt templates, the
//! `DECISION:` line protocol and the backends that answer it.

mod parse;
mod prompt;
mod remote;
mod scene;
mod scripted;

pub use parse::{parse_decision, ParseError};
pub use prompt::{build_system_prompt, format_reminder, PromptConfig, PROMPT_VERSION};
pub use remote::RemoteBackend;
pub use scene::{describe_scene, LaneChangeStatus, SceneDescription, SceneFact, SCENE_HEADER};
pub use scripted::ScriptedBackend;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::BehaviorState;
use crate::world::LaneId;

/// Which decision protocol is running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionCase {
    /// Free lane selection every decision cycle.
    Case1,
    /// State-machine-guided lane change.
    Case2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    Lane(LaneId),
    State(BehaviorState),
}

impl Choice {
    /// Token as it appears after `DECISION:`.
    pub fn token(self) -> &'static str {
        match self {
            Choice::Lane(l) => l.label(),
            Choice::State(s) => s.word(),
        }
    }

    pub fn case(self) -> DecisionCase {
        match self {
            Choice::Lane(_) => DecisionCase::Case1,
            Choice::State(_) => DecisionCase::Case2,
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub choice: Choice,
    pub rationale: String,
}

impl Decision {
    pub fn lane(lane: LaneId) -> Self {
        Self {
            choice: Choice::Lane(lane),
            rationale: String::new(),
        }
    }

    pub fn state(state: BehaviorState) -> Self {
        Self {
            choice: Choice::State(state),
            rationale: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Ordered chat history. Always starts with the single system message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    messages: Vec<Message>,
}

impl Conversation {
    pub fn new(system_prompt: impl Into<String>) -> Self {
        Self {
            messages: vec![Message {
                role: Role::System,
                content: system_prompt.into(),
            }],
        }
    }

    pub fn push_user(&mut self, text: impl Into<String>) {
        self.messages.push(Message {
            role: Role::User,
            content: text.into(),
        });
    }

    pub fn push_assistant(&mut self, text: impl Into<String>) {
        self.messages.push(Message {
            role: Role::Assistant,
            content: text.into(),
        });
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn last(&self) -> &Message {
        self.messages
            .last()
            .expect("conversation always holds the system message")
    }

    /// Drops everything after the system message, keeping at most the last
    /// `keep` messages, so long episodes do not grow the prompt unboundedly.
    pub fn truncate_history(&mut self, keep: usize) {
        let n = self.messages.len();
        if n > keep + 1 {
            self.messages.drain(1..n - keep);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL of a chat-completion service; `/chat/completions` is appended.
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout_s: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint: None,
            model: "gpt-4".into(),
            temperature: 0.0,
            timeout_s: 30.0,
            api_key_env: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(BackendError::Config(format!(
                "timeout must be positive, got {}",
                self.timeout_s
            )));
        }
        if self.kind == BackendKind::Remote {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(BackendError::Config(
                    "remote backend needs an endpoint".into(),
                ));
            }
            if self.api_key_env.as_deref().is_none_or(str::is_empty) {
                return Err(BackendError::Config(
                    "remote backend needs an API-key variable name".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint answered with HTTP {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
}

/// Something that answers a conversation with raw decision text.
pub trait DecisionBackend: Send {
    fn complete(
        &mut self,
        conv: &Conversation,
        scene: &SceneDescription,
    ) -> Result<Completion, BackendError>;
}

impl<B: DecisionBackend + ?Sized> DecisionBackend for Box<B> {
    fn complete(
        &mut self,
        conv: &Conversation,
        scene: &SceneDescription,
    ) -> Result<Completion, BackendError> {
        (**self).complete(conv, scene)
    }
}

/// Builds the backend described by `cfg` for the given protocol.
pub fn make_backend(
    cfg: &BackendConfig,
    case: DecisionCase,
) -> Result<Box<dyn DecisionBackend>, BackendError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::Scripted => Box::new(ScriptedBackend::new(case)),
        BackendKind::Remote => Box::new(RemoteBackend::new(cfg)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remote_config_needs_endpoint_and_key() {
        let mut cfg = BackendConfig {
            kind: BackendKind::Remote,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(BackendError::Config(_))));
        cfg.endpoint = Some("http://127.0.0.1:9".into());
        assert!(matches!(cfg.validate(), Err(BackendError::Config(_))));
        cfg.api_key_env = Some("SAFEDRIVE_KEY".into());
        assert!(cfg.validate().is_ok());
        assert!(BackendConfig::default().validate().is_ok());
    }

    #[test]
    fn truncation_keeps_system_message() {
        let mut c = Conversation::new("sys");
        for i in 0..10 {
            c.push_user(format!("u{i}"));
        }
        c.truncate_history(3);
        assert_eq!(c.messages().len(), 4);
        assert_eq!(c.messages()[0].role, Role::System);
        assert_eq!(c.last().content, "u9");
    }
}
