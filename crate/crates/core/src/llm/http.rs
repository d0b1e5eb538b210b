//! HTTP client for OpenAI-compatible chat-completion endpoints.
//!
//! Credentials come from an environment variable named in the run config;
//! the endpoint URL and model name come from the config itself.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ClientError, LlmClient, LlmRequest};

#[derive(Debug, Clone)]
pub struct HttpLlmConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Bearer token, typically read from the environment by the caller.
    pub api_key: Option<String>,
}

pub struct HttpLlmClient {
    config: HttpLlmConfig,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

impl HttpLlmClient {
    pub fn new(config: HttpLlmConfig) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ClientError::Fatal(e.to_string()))?;
        Ok(HttpLlmClient { config, http })
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut builder = self
            .http
            .post(&self.config.endpoint)
            .timeout(Duration::from_secs_f64(request.timeout_s))
            .json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                ClientError::Timeout
            } else {
                ClientError::Transient(e.to_string())
            }
        })?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(ClientError::Transient(format!("http status {status}")));
        }
        if !status.is_success() {
            return Err(ClientError::Fatal(format!("http status {status}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| ClientError::Transient(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ClientError::Transient("response had no choices".into()))
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server for exercising the client end to end.
    fn serve_once(status: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 8192];
                let _ = stream.read(&mut buf);
                let response = format!(
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}/v1/chat/completions")
    }

    #[test]
    fn parses_chat_completion_response() {
        let endpoint = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"hello back"}}]}"#,
        );
        let client = HttpLlmClient::new(HttpLlmConfig {
            endpoint,
            model: "test-model".into(),
            api_key: Some("sk-test".into()),
        })
        .unwrap();
        let out = client.complete(&LlmRequest::new("hi")).unwrap();
        assert_eq!(out, "hello back");
    }

    #[test]
    fn server_error_is_transient() {
        let endpoint = serve_once("500 Internal Server Error", "{}");
        let client = HttpLlmClient::new(HttpLlmConfig {
            endpoint,
            model: "m".into(),
            api_key: None,
        })
        .unwrap();
        assert!(matches!(
            client.complete(&LlmRequest::new("hi")),
            Err(ClientError::Transient(_))
        ));
    }

    #[test]
    fn auth_error_is_fatal() {
        let endpoint = serve_once("401 Unauthorized", "{}");
        let client = HttpLlmClient::new(HttpLlmConfig {
            endpoint,
            model: "m".into(),
            api_key: None,
        })
        .unwrap();
        assert!(matches!(
            client.complete(&LlmRequest::new("hi")),
            Err(ClientError::Fatal(_))
        ));
    }
}
