use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompletionOptions, LlmClient, LlmError, Message};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(default)]
    pub expect_substring: String,
    pub response: String,
}

/// Replays canned responses in order. Every request must contain the
/// entry's `expect_substring`; running past the end is an error.
#[derive(Debug, Clone)]
pub struct ScriptedClient {
    entries: Vec<TranscriptEntry>,
    cursor: usize,
    images: bool,
}

impl ScriptedClient {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        ScriptedClient {
            entries,
            cursor: 0,
            images: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let fail = |reason: String| LlmError::Transcript {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        Self::from_json(&text).map_err(|e| fail(e.to_string()))
    }

    /// Pretends to accept image attachments.
    pub fn with_images(mut self, images: bool) -> Self {
        self.images = images;
        self
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.cursor
    }

    pub fn used(&self) -> usize {
        self.cursor
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&mut self, messages: &[Message], _opts: &CompletionOptions) -> Result<String, LlmError> {
        let entry = self
            .entries
            .get(self.cursor)
            .ok_or(LlmError::Exhausted { used: self.cursor })?;
        let prompt: Vec<&str> = messages.iter().map(|m| m.text.as_str()).collect();
        if !prompt.join("\n").contains(&entry.expect_substring) {
            return Err(LlmError::UnexpectedPrompt {
                index: self.cursor,
                expected: entry.expect_substring.clone(),
            });
        }
        self.cursor += 1;
        Ok(entry.response.clone())
    }

    fn supports_images(&self) -> bool {
        self.images
    }
}
