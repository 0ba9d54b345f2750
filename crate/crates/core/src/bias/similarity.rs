//! Client side of the image-text similarity service used for gender
//! classification.
//!
//! Wire protocol: `POST <url>` with `{"image": <base64 bytes>, "texts": [..]}`
//! and a response `{"scores": [..]}` aligned to `texts`.

use std::path::Path;
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::metrics::Gender;
use crate::error::{Error, Result};

pub const GENDER_PROMPTS: [&str; 2] = ["a photo of a male", "a photo of a female"];

pub trait SimilarityClient: Sync {
    /// One score per text, in order.
    fn scores(&self, image: &Path, texts: &[&str]) -> Result<Vec<f64>>;
}

#[derive(Debug, Serialize)]
pub struct SimilarityRequest<'a> {
    pub image: String,
    pub texts: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
pub struct SimilarityResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub url: String,
    #[serde(default = "SimilarityConfig::default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "SimilarityConfig::default_retries")]
    pub retries: u32,
    #[serde(default = "SimilarityConfig::default_max_in_flight")]
    pub max_in_flight: usize,
}

impl SimilarityConfig {
    fn default_timeout_ms() -> u64 {
        10_000
    }

    fn default_retries() -> u32 {
        2
    }

    fn default_max_in_flight() -> usize {
        4
    }

    pub fn new(url: impl Into<String>) -> Self {
        SimilarityConfig {
            url: url.into(),
            timeout_ms: Self::default_timeout_ms(),
            retries: Self::default_retries(),
            max_in_flight: Self::default_max_in_flight(),
        }
    }
}

pub struct HttpSimilarityClient {
    config: SimilarityConfig,
    http: reqwest::blocking::Client,
}

impl HttpSimilarityClient {
    pub fn new(config: SimilarityConfig) -> Result<Self> {
        if config.timeout_ms == 0 {
            return Err(Error::invalid("similarity timeout", "must be positive"));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(HttpSimilarityClient { config, http })
    }

    pub fn config(&self) -> &SimilarityConfig {
        &self.config
    }

    fn attempt(&self, body: &SimilarityRequest<'_>) -> std::result::Result<SimilarityResponse, AttemptError> {
        let resp = self
            .http
            .post(&self.config.url)
            .json(body)
            .send()
            .map_err(|e| AttemptError::Retry(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(AttemptError::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(Error::Transport {
                attempts: 1,
                message: format!("HTTP {status}"),
            }));
        }
        let text = resp.text().map_err(|e| AttemptError::Retry(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| AttemptError::Fatal(Error::MalformedResponse(e.to_string())))
    }
}

enum AttemptError {
    Retry(String),
    Fatal(Error),
}

impl SimilarityClient for HttpSimilarityClient {
    fn scores(&self, image: &Path, texts: &[&str]) -> Result<Vec<f64>> {
        let bytes = std::fs::read(image).map_err(|e| Error::io(image, e))?;
        let body = SimilarityRequest {
            image: base64::engine::general_purpose::STANDARD.encode(bytes),
            texts,
        };
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&body) {
                Ok(resp) => {
                    if resp.scores.len() != texts.len() {
                        return Err(Error::MalformedResponse(format!(
                            "{} scores for {} texts",
                            resp.scores.len(),
                            texts.len()
                        )));
                    }
                    return Ok(resp.scores);
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retry(msg)) => {
                    log::warn!("similarity request attempt {attempt}/{attempts} failed: {msg}");
                    last = msg;
                    if attempt < attempts {
                        thread::sleep(Duration::from_millis(50 * attempt as u64));
                    }
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }
}

/// Argmax over the two gender prompts. Equal scores are an error.
pub fn classify_gender(image: &Path, client: &dyn SimilarityClient) -> Result<Gender> {
    let scores = client.scores(image, &GENDER_PROMPTS)?;
    let [male, female] = scores[..] else {
        return Err(Error::MalformedResponse(format!("expected 2 scores, got {}", scores.len())));
    };
    if !male.is_finite() || !female.is_finite() {
        return Err(Error::MalformedResponse("non-finite score".into()));
    }
    if male > female {
        Ok(Gender::Male)
    } else if female > male {
        Ok(Gender::Female)
    } else {
        Err(Error::Tie(male))
    }
}
