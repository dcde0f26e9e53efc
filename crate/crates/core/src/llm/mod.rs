//! Language-model access and the two-stage build pipeline.

#[cfg(feature = "live")]
pub mod live;
pub mod pipeline;
pub mod prompts;
pub mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pipeline::{
    generate_blueprint, run_task, synopsis, BuildArtifacts, BuildResult, BuildStatus, LayoutSynopsis,
    PipelineError, RunOptions, TaskConfig, TaskInput,
};
pub use scripted::{ScriptedClient, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub mime: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub text: String,
    pub image: Option<Image>,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            text: text.into(),
            image: None,
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            text: text.into(),
            image: None,
        }
    }

    pub fn with_image(mut self, image: Option<Image>) -> Self {
        self.image = image;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionOptions {
    pub temperature: f64,
    pub json_mode: bool,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        CompletionOptions {
            temperature: 0.0,
            json_mode: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transcript exhausted after {used} response(s)")]
    Exhausted { used: usize },
    #[error("transcript entry {index}: prompt does not contain {expected:?}")]
    UnexpectedPrompt { index: usize, expected: String },
    #[error("transcript {path}: {reason}")]
    Transcript { path: String, reason: String },
    #[error("missing environment variable {0}")]
    MissingEnv(&'static str),
    #[error("request failed: {0}")]
    Transport(String),
    #[error("malformed completion: {0}")]
    BadResponse(String),
}

pub trait LlmClient {
    fn complete(&mut self, messages: &[Message], opts: &CompletionOptions) -> Result<String, LlmError>;
    fn supports_images(&self) -> bool;
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn complete(&mut self, messages: &[Message], opts: &CompletionOptions) -> Result<String, LlmError> {
        (**self).complete(messages, opts)
    }

    fn supports_images(&self) -> bool {
        (**self).supports_images()
    }
}

/// One logged request/response pair. Images are recorded by size only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub stage: String,
    pub messages: Vec<LoggedMessage>,
    pub options: CompletionOptions,
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub role: Role,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_bytes: Option<usize>,
}

/// A client plus the log of everything sent through it.
pub struct Session<'a> {
    client: &'a mut dyn LlmClient,
    pub log: Vec<Exchange>,
    pub temperature: f64,
}

impl<'a> Session<'a> {
    pub fn new(client: &'a mut dyn LlmClient, temperature: f64) -> Self {
        Session {
            client,
            log: Vec::new(),
            temperature,
        }
    }

    pub fn supports_images(&self) -> bool {
        self.client.supports_images()
    }

    pub fn ask(&mut self, stage: &str, messages: &[Message], json_mode: bool) -> Result<String, LlmError> {
        let options = CompletionOptions {
            temperature: self.temperature,
            json_mode,
        };
        let result = self.client.complete(messages, &options);
        self.log.push(Exchange {
            stage: stage.to_string(),
            messages: messages
                .iter()
                .map(|m| LoggedMessage {
                    role: m.role,
                    text: m.text.clone(),
                    image_bytes: m.image.as_ref().map(|i| i.bytes.len()),
                })
                .collect(),
            options,
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
        });
        result
    }
}

/// Pulls the JSON object out of a response, tolerating code fences and
/// surrounding prose.
pub fn extract_json_object(text: &str) -> Result<serde_json::Map<String, serde_json::Value>, String> {
    let start = text.find('{').ok_or("no JSON object in response")?;
    let end = text.rfind('}').ok_or("unterminated JSON object")?;
    if end < start {
        return Err("unterminated JSON object".into());
    }
    match serde_json::from_str::<serde_json::Value>(&text[start..=end]) {
        Ok(serde_json::Value::Object(map)) => Ok(map),
        Ok(_) => Err("response is not a JSON object".into()),
        Err(e) => Err(format!("invalid JSON: {e}")),
    }
}

/// Reads a string field from an extracted object.
pub fn string_field(map: &serde_json::Map<String, serde_json::Value>, key: &str) -> Result<String, String> {
    match map.get(key) {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(format!("key `{key}` is not a string")),
        None => {
            let mut keys: Vec<_> = map.keys().map(String::as_str).collect();
            keys.sort_unstable();
            Err(format!("missing key `{key}` (found: {})", keys.join(", ")))
        }
    }
}
