//! Scripted mock client so every test and demo runs offline.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;

use serde::Deserialize;

use super::{ClientError, LlmClient, LlmRequest};

enum Script {
    /// Return the prompt itself.
    Echo,
    /// Always return the same response.
    Fixed(String),
    /// Exact prompt -> response table, with an optional default.
    Table {
        exact: HashMap<String, String>,
        default: Option<String>,
    },
    /// Responses handed out in call order.
    Sequence(Mutex<VecDeque<String>>),
}

/// Deterministic scripted client with failure injection.
pub struct MockClient {
    script: Script,
    fail_first: AtomicU32,
    prompts: Mutex<Vec<String>>,
}

impl MockClient {
    pub fn echo() -> Self {
        Self::with_script(Script::Echo)
    }

    pub fn fixed(response: impl Into<String>) -> Self {
        Self::with_script(Script::Fixed(response.into()))
    }

    pub fn table(entries: Vec<(String, String)>, default: Option<String>) -> Self {
        Self::with_script(Script::Table {
            exact: entries.into_iter().collect(),
            default,
        })
    }

    pub fn sequence(responses: Vec<String>) -> Self {
        Self::with_script(Script::Sequence(Mutex::new(responses.into())))
    }

    fn with_script(script: Script) -> Self {
        MockClient {
            script,
            fail_first: AtomicU32::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Fail the first `n` attempts with a transient error.
    pub fn with_failures(self, n: u32) -> Self {
        self.fail_first.store(n, Ordering::Relaxed);
        self
    }

    /// Every prompt seen so far, in call order.
    pub fn seen_prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }

    /// Load a script file: JSONL lines of `{"prompt": ..., "response": ...}`.
    /// A line with `"prompt": null` (or omitted) sets the default response.
    pub fn from_script_reader<R: Read>(reader: R) -> std::io::Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            #[serde(default)]
            prompt: Option<String>,
            response: String,
        }
        let mut exact = HashMap::new();
        let mut default = None;
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("mock script line {}: {}", lineno + 1, e),
                )
            })?;
            match row.prompt {
                Some(p) => {
                    exact.insert(p, row.response);
                }
                None => default = Some(row.response),
            }
        }
        Ok(Self::with_script(Script::Table { exact, default }))
    }

    pub fn from_script_path(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Self::from_script_reader(std::fs::File::open(path)?)
    }
}

impl LlmClient for MockClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError> {
        self.prompts.lock().unwrap().push(request.prompt.clone());
        let remaining = self.fail_first.load(Ordering::Relaxed);
        if remaining > 0 {
            self.fail_first.store(remaining - 1, Ordering::Relaxed);
            return Err(ClientError::Transient("injected failure".into()));
        }
        match &self.script {
            Script::Echo => Ok(request.prompt.clone()),
            Script::Fixed(r) => Ok(r.clone()),
            Script::Table { exact, default } => exact
                .get(&request.prompt)
                .or(default.as_ref())
                .cloned()
                .ok_or_else(|| {
                    ClientError::Fatal(format!(
                        "mock script has no entry for prompt starting {:?}",
                        request.prompt.chars().take(60).collect::<String>()
                    ))
                }),
            Script::Sequence(queue) => queue
                .lock()
                .unwrap()
                .pop_front()
                .ok_or_else(|| ClientError::Fatal("mock response sequence exhausted".into())),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}
