//! In-process stand-ins for the four services, driven by scene
//! descriptions. Used to record the bundled demo fixtures and in tests;
//! they speak the same JSON protocol as a real deployment.

use std::collections::BTreeMap;
use std::io::Cursor;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::protocol::{CaptionRequest, ChatRequest, DetectRequest, VqaRequest};
use super::transport::{HttpRequest, Transport, TransportError};
use super::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub label: String,
    pub confidence: f64,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    pub rgb: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<String>,
}

/// VQA answer for the ordered pair (`a`, `b`) of object indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRelation {
    pub a: usize,
    pub b: usize,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub relations: Vec<SceneRelation>,
    #[serde(default)]
    pub caption: String,
}

impl Scene {
    /// Flat-colored rectangles on a light background. The image id is
    /// stamped into the first pixel row so distinct scenes never share bytes.
    pub fn render_png(&self) -> Vec<u8> {
        let mut img = image::RgbImage::from_pixel(self.width, self.height, image::Rgb([235, 235, 235]));
        for o in &self.objects {
            let [x, y, w, h] = o.bbox;
            let x0 = x.max(0.0) as u32;
            let y0 = y.max(0.0) as u32;
            let x1 = ((x + w).max(0.0) as u32).min(self.width);
            let y1 = ((y + h).max(0.0) as u32).min(self.height);
            for py in y0..y1 {
                for px in x0..x1 {
                    img.put_pixel(px, py, image::Rgb(o.rgb));
                }
            }
        }
        let stamp = sha256_hex(self.image_id.as_bytes());
        for (i, chunk) in stamp.as_bytes().chunks(3).enumerate().take(self.width as usize) {
            let mut px = [0u8; 3];
            px[..chunk.len()].copy_from_slice(chunk);
            img.put_pixel(i as u32, 0, image::Rgb(px));
        }
        let mut buf = Cursor::new(Vec::new());
        image::DynamicImage::ImageRgb8(img)
            .write_to(&mut buf, image::ImageFormat::Png)
            .expect("PNG encoding into memory");
        buf.into_inner()
    }

    fn object_at(&self, region: &[f64; 4]) -> Option<usize> {
        let clamp = |o: &SceneObject| {
            let [x, y, w, h] = o.bbox;
            let (iw, ih) = (self.width as f64, self.height as f64);
            let x0 = x.clamp(0.0, iw);
            let y0 = y.clamp(0.0, ih);
            [x0, y0, (x + w).clamp(0.0, iw) - x0, (y + h).clamp(0.0, ih) - y0]
        };
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let b = clamp(o);
                let d: f64 = b.iter().zip(region).map(|(p, q)| (p - q).abs()).sum();
                (i, d)
            })
            .filter(|(_, d)| *d < 4.0)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

type ChatResponder = dyn Fn(&ChatRequest) -> String + Send + Sync;

/// Answers requests from a set of scenes keyed by rendered image digest.
pub struct SimulatedServices {
    scenes: BTreeMap<String, Scene>,
    chat: Option<Box<ChatResponder>>,
}

impl SimulatedServices {
    pub fn new(scenes: impl IntoIterator<Item = Scene>) -> Self {
        let scenes = scenes
            .into_iter()
            .map(|s| (sha256_hex(&s.render_png()), s))
            .collect();
        Self { scenes, chat: None }
    }

    pub fn with_chat(mut self, f: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        self.chat = Some(Box::new(f));
        self
    }

    fn scene(&self, sha: &str) -> Result<&Scene, TransportError> {
        self.scenes.get(sha).ok_or(TransportError::Status(404))
    }

    fn detect(&self, req: DetectRequest) -> Result<Value, TransportError> {
        let scene = self.scene(&req.image.sha256)?;
        let dets: Vec<Value> = scene
            .objects
            .iter()
            .map(|o| json!({"label": o.label, "confidence": o.confidence, "box": o.bbox}))
            .collect();
        Ok(json!({ "detections": dets }))
    }

    fn vqa(&self, req: VqaRequest) -> Result<Value, TransportError> {
        let locate = |i: usize| -> Result<(&Scene, usize), TransportError> {
            let img = req.images.get(i).ok_or(TransportError::Status(400))?;
            let (Some(src), Some(region)) = (&img.source_sha256, &img.region) else {
                return Err(TransportError::Status(400));
            };
            let scene = self.scene(src)?;
            let idx = scene.object_at(region).ok_or(TransportError::Status(404))?;
            Ok((scene, idx))
        };
        let answer = if req.images.len() == 2 {
            let (scene, a) = locate(0)?;
            let (_, b) = locate(1)?;
            scene
                .relations
                .iter()
                .find(|r| r.a == a && r.b == b)
                .map_or_else(|| "none".to_string(), |r| r.answer.clone())
        } else {
            let (scene, i) = locate(0)?;
            let o = &scene.objects[i];
            let q = req.question.to_lowercase();
            let v = if q.contains("color") {
                &o.color
            } else if q.contains("shape") {
                &o.shape
            } else if q.contains("texture") {
                &o.texture
            } else {
                &None
            };
            v.clone().unwrap_or_else(|| "unknown".to_string())
        };
        Ok(json!({ "answer": answer }))
    }

    fn caption(&self, req: CaptionRequest) -> Result<Value, TransportError> {
        Ok(json!({ "caption": self.scene(&req.image.sha256)?.caption }))
    }
}

impl Transport for SimulatedServices {
    fn post(&self, req: &HttpRequest<'_>) -> Result<Vec<u8>, TransportError> {
        fn body<T: serde::de::DeserializeOwned>(b: &[u8]) -> Result<T, TransportError> {
            serde_json::from_slice(b).map_err(|_| TransportError::Status(400))
        }
        let service = req.url.rsplit('/').next().unwrap_or_default();
        let out = match service {
            "detect" => self.detect(body(req.body)?)?,
            "vqa" => self.vqa(body(req.body)?)?,
            "caption" => self.caption(body(req.body)?)?,
            "chat" => {
                let f = self.chat.as_ref().ok_or(TransportError::Status(404))?;
                json!({ "text": f(&body(req.body)?) })
            }
            _ => return Err(TransportError::Status(404)),
        };
        Ok(serde_json::to_vec(&out).expect("JSON values always serialize"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::ImageRef;
    use std::time::Duration;

    fn scene() -> Scene {
        Scene {
            image_id: "cat_sofa".into(),
            width: 200,
            height: 160,
            objects: vec![
                SceneObject {
                    label: "cat".into(),
                    confidence: 0.9,
                    bbox: [70.0, 30.0, 50.0, 40.0],
                    rgb: [20, 20, 20],
                    color: Some("black".into()),
                    shape: None,
                    texture: Some("furry".into()),
                },
                SceneObject {
                    label: "sofa".into(),
                    confidence: 0.8,
                    bbox: [40.0, 70.0, 120.0, 60.0],
                    rgb: [150, 30, 30],
                    color: Some("red".into()),
                    shape: None,
                    texture: None,
                },
            ],
            relations: vec![SceneRelation { a: 0, b: 1, answer: "sitting on".into() }],
            caption: "a black cat on a red sofa".into(),
        }
    }

    fn post(sim: &SimulatedServices, service: &str, body: Value) -> Value {
        let b = serde_json::to_vec(&body).unwrap();
        let out = sim
            .post(&HttpRequest { url: &format!("sim/{service}"), token: None, body: &b, timeout: Duration::ZERO })
            .unwrap();
        serde_json::from_slice(&out).unwrap()
    }

    #[test]
    fn rendering_is_deterministic_and_unique() {
        let s = scene();
        assert_eq!(s.render_png(), s.render_png());
        let mut t = s.clone();
        t.image_id = "other".into();
        assert_ne!(s.render_png(), t.render_png());
    }

    #[test]
    fn answers_from_scene() {
        let s = scene();
        let png = s.render_png();
        let sha = sha256_hex(&png);
        let sim = SimulatedServices::new([s]);
        let det = post(&sim, "detect", json!({"image": ImageRef::inline(&png), "vocabulary": ["cat"]}));
        assert_eq!(det["detections"].as_array().unwrap().len(), 2);
        let crop = |r: [f64; 4]| ImageRef { sha256: "x".into(), data_b64: None, source_sha256: Some(sha.clone()), region: Some(r) };
        let a = post(&sim, "vqa", json!({"images": [crop([70.0, 30.0, 50.0, 40.0])], "question": "What is the color of the cat?"}));
        assert_eq!(a["answer"], "black");
        let a = post(&sim, "vqa", json!({"images": [crop([70.0, 30.0, 50.0, 40.0])], "question": "What is the shape of the cat?"}));
        assert_eq!(a["answer"], "unknown");
        let pair = json!({"images": [crop([70.0, 30.0, 50.0, 40.0]), crop([40.0, 70.0, 120.0, 60.0])], "question": "?"});
        assert_eq!(post(&sim, "vqa", pair)["answer"], "sitting on");
        let rev = json!({"images": [crop([40.0, 70.0, 120.0, 60.0]), crop([70.0, 30.0, 50.0, 40.0])], "question": "?"});
        assert_eq!(post(&sim, "vqa", rev)["answer"], "none");
    }
}
