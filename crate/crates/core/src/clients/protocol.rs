//! Wire types for the /detect, /vqa, /chat and /caption endpoints.
//! Schemas are documented in `docs/protocols.md`.

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::sha256_hex;

/// Validation applied to every decoded response.
pub trait Validate {
    fn validate(&self) -> Result<(), String>;
}

/// An image or crop. `sha256` identifies the bytes; `data_b64` carries them
/// on the wire and is excluded from fixture digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_b64: Option<String>,
    /// For crops: the full image they were cut from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_sha256: Option<String>,
    /// For crops: `[x, y, w, h]` in source-image pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<[f64; 4]>,
}

impl ImageRef {
    pub fn inline(bytes: &[u8]) -> Self {
        Self {
            sha256: sha256_hex(bytes),
            data_b64: Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
            source_sha256: None,
            region: None,
        }
    }

    pub fn crop(bytes: &[u8], source_sha256: &str, region: [f64; 4]) -> Self {
        Self {
            source_sha256: Some(source_sha256.to_string()),
            region: Some(region),
            ..Self::inline(bytes)
        }
    }

    pub fn digest_only(sha256: &str) -> Self {
        Self {
            sha256: sha256.to_string(),
            data_b64: None,
            source_sha256: None,
            region: None,
        }
    }

    pub fn decode_bytes(&self) -> Option<Vec<u8>> {
        self.data_b64
            .as_ref()
            .and_then(|s| base64::engine::general_purpose::STANDARD.decode(s).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: ImageRef,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    /// `[x, y, w, h]`, pixels from the top-left corner.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<Detection>,
}

impl Validate for DetectResponse {
    fn validate(&self) -> Result<(), String> {
        for (i, d) in self.detections.iter().enumerate() {
            if d.label.trim().is_empty() {
                return Err(format!("detections[{i}].label is empty"));
            }
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(format!("detections[{i}].confidence {} outside [0, 1]", d.confidence));
            }
            if d.bbox.iter().any(|v| !v.is_finite()) {
                return Err(format!("detections[{i}].box is not finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaRequest {
    /// One crop for attribute questions, two for relation questions.
    pub images: Vec<ImageRef>,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaResponse {
    pub answer: String,
}

impl Validate for VqaResponse {
    fn validate(&self) -> Result<(), String> {
        if self.answer.trim().is_empty() {
            return Err("answer is empty (use \"unknown\")".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn single(system: &str, user: String) -> Self {
        Self {
            system: system.to_string(),
            messages: vec![ChatMessage { role: Role::User, text: user }],
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
}

impl Validate for ChatResponse {
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image: ImageRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

impl Validate for CaptionResponse {
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}
