//! OpenAI-compatible chat-completion client.

use std::path::PathBuf;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{CompletionOptions, LlmClient, LlmError, Message};

pub const URL_VAR: &str = "VOXELSMITH_LLM_URL";
pub const KEY_VAR: &str = "VOXELSMITH_LLM_KEY";
pub const MODEL_VAR: &str = "VOXELSMITH_LLM_MODEL";
pub const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone)]
pub struct LiveClient {
    pub base_url: String,
    key: String,
    pub model: String,
    pub images: bool,
    /// Raw request and response bodies are written here when set.
    pub trace_dir: Option<PathBuf>,
    calls: usize,
}

impl LiveClient {
    pub fn new(base_url: impl Into<String>, key: impl Into<String>, model: impl Into<String>) -> Self {
        LiveClient {
            base_url: base_url.into(),
            key: key.into(),
            model: model.into(),
            images: true,
            trace_dir: None,
            calls: 0,
        }
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let url = std::env::var(URL_VAR).map_err(|_| LlmError::MissingEnv(URL_VAR))?;
        let key = std::env::var(KEY_VAR).map_err(|_| LlmError::MissingEnv(KEY_VAR))?;
        let model = std::env::var(MODEL_VAR).unwrap_or_else(|_| DEFAULT_MODEL.to_string());
        Ok(Self::new(url, key, model))
    }

    fn body(&self, messages: &[Message], opts: &CompletionOptions) -> Value {
        let messages: Vec<Value> = messages
            .iter()
            .map(|m| {
                let content = match (&m.image, self.images) {
                    (Some(img), true) => {
                        let data = base64::engine::general_purpose::STANDARD.encode(&img.bytes);
                        json!([
                            {"type": "text", "text": m.text},
                            {"type": "image_url", "image_url": {"url": format!("data:{};base64,{data}", img.mime)}}
                        ])
                    }
                    _ => json!(m.text),
                };
                json!({"role": m.role, "content": content})
            })
            .collect();
        let mut body = json!({
            "model": self.model,
            "temperature": opts.temperature,
            "messages": messages,
        });
        if opts.json_mode {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }

    fn trace(&self, suffix: &str, value: &Value) {
        if let Some(dir) = &self.trace_dir {
            let _ = std::fs::create_dir_all(dir);
            let path = dir.join(format!("{:03}_{suffix}.json", self.calls));
            let _ = std::fs::write(path, serde_json::to_string_pretty(value).unwrap_or_default());
        }
    }
}

impl LlmClient for LiveClient {
    fn complete(&mut self, messages: &[Message], opts: &CompletionOptions) -> Result<String, LlmError> {
        self.calls += 1;
        let body = self.body(messages, opts);
        self.trace("request", &body);
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let mut response = ureq::post(&url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let reply: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::BadResponse(e.to_string()))?;
        self.trace("response", &reply);
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::BadResponse("no choices[0].message.content".into()))
    }

    fn supports_images(&self) -> bool {
        self.images
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Image;

    #[test]
    fn request_shape() {
        let c = LiveClient::new("http://localhost", "k", "m");
        let msg = Message::user("hi").with_image(Some(Image {
            mime: "image/png".into(),
            bytes: vec![1, 2, 3],
        }));
        let body = c.body(
            &[Message::system("s"), msg],
            &CompletionOptions {
                temperature: 0.0,
                json_mode: true,
            },
        );
        assert_eq!(body["messages"][0]["content"], "s");
        assert_eq!(body["messages"][1]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(body["response_format"]["type"], "json_object");
    }
}
