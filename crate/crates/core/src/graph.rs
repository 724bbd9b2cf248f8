//! Per-image attribute-aware scene graph: object nodes from detections,
//! attribute nodes from crop VQA, spatial edges from box geometry and
//! non-spatial edges from pairwise VQA.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clients::{ClientError, DetectClient, DetectRequest, ImageRef, VqaClient, VqaRequest};
use crate::lexicon::{AttributeKind, Lexicon};
use crate::par;
use crate::prompt::{Provenance, SourceTag, Triple, TripleKind};
use crate::text;

pub const SCHEMA_VERSION: u64 = 1;

pub const LEFT_OF: &str = "to the left of";
pub const RIGHT_OF: &str = "to the right of";
pub const ABOVE: &str = "above";
pub const ON_TOP_OF: &str = "on the top of";
pub const BELOW: &str = "below";
pub const NEXT_TO: &str = "next to";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("image {image_id}: {source}")]
    Client {
        image_id: String,
        #[source]
        source: ClientError,
    },
    #[error("image {image_id}: cannot decode image: {message}")]
    Decode { image_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scene graph schema error at {pointer}: {message}")]
pub struct SchemaError {
    /// JSON pointer to the offending value.
    pub pointer: String,
    pub message: String,
}

/// Thresholds for graph construction and pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Detections below this confidence are dropped.
    pub confidence_min: f64,
    /// Center offset (as a fraction of image width) below which an axis does not dominate.
    pub center_epsilon_frac: f64,
    /// "next to" requires center distance below this fraction of the image diagonal.
    pub near_frac: f64,
    /// Vertical gap, as a fraction of the lower box height, still counted as contact.
    pub contact_frac: f64,
    /// Horizontal overlap, as a fraction of the narrower box, needed for contact.
    pub overlap_frac: f64,
    /// Lemma similarity at or above which two detections are the same object type.
    pub dup_threshold: f64,
    /// Object pairs farther apart than this fraction of the diagonal get no relation edges.
    pub max_pair_frac: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            confidence_min: 0.35,
            center_epsilon_frac: 0.02,
            near_frac: 0.3,
            contact_frac: 0.1,
            overlap_frac: 0.5,
            dup_threshold: 0.8,
            max_pair_frac: 0.9,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = [
            ("confidence_min", self.confidence_min),
            ("center_epsilon_frac", self.center_epsilon_frac),
            ("near_frac", self.near_frac),
            ("contact_frac", self.contact_frac),
            ("overlap_frac", self.overlap_frac),
            ("dup_threshold", self.dup_threshold),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("scene_graph.{name} = {v} is outside [0, 1]"));
            }
        }
        if !(self.max_pair_frac > 0.0 && self.max_pair_frac <= 1.0) {
            return Err(format!("scene_graph.max_pair_frac = {} is outside (0, 1]", self.max_pair_frac));
        }
        Ok(())
    }
}

/// Axis-aligned box, top-left origin, y grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub image_w: f64,
    pub image_h: f64,
}

impl BoundingBox {
    /// Clamp `[x, y, w, h]` into the image; `None` if nothing is left.
    pub fn clamped(r: [f64; 4], image_w: f64, image_h: f64) -> Option<Self> {
        let x0 = r[0].clamp(0.0, image_w);
        let y0 = r[1].clamp(0.0, image_h);
        let x1 = (r[0] + r[2]).clamp(0.0, image_w);
        let y1 = (r[1] + r[3]).clamp(0.0, image_h);
        (x1 > x0 && y1 > y0).then_some(Self {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            image_w,
            image_h,
        })
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.image_w.hypot(self.image_h)
    }

    pub fn center_distance(&self, other: &Self) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (bx - ax).hypot(by - ay)
    }

    pub fn region(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Object,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: String,
    pub kind: NodeKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_kind: Option<AttributeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
    pub confidence: f64,
    /// Shared by object nodes judged to be duplicate detections of one type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub same_group: Option<String>,
}

impl Node {
    pub fn object(node_id: impl Into<String>, label: impl Into<String>, bbox: BoundingBox, confidence: f64) -> Self {
        Self {
            node_id: node_id.into(),
            kind: NodeKind::Object,
            label: label.into(),
            attribute_kind: None,
            bbox: Some(bbox),
            confidence,
            same_group: None,
        }
    }

    pub fn attribute(node_id: impl Into<String>, label: impl Into<String>, kind: AttributeKind, confidence: f64) -> Self {
        Self {
            node_id: node_id.into(),
            kind: NodeKind::Attribute,
            label: label.into(),
            attribute_kind: Some(kind),
            bbox: None,
            confidence,
            same_group: None,
        }
    }

    pub fn is_object(&self) -> bool {
        self.kind == NodeKind::Object
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    AttributeBinding,
    Spatial,
    Nonspatial,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub label: String,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_relation(&self) -> bool {
        self.kind != EdgeKind::AttributeBinding
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub image_id: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl SceneGraph {
    pub fn empty(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_object())
    }

    /// Sort nodes by id and edges by (src, dst, label, kind).
    pub fn canonicalize(&mut self) {
        self.nodes.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        self.edges.sort();
    }

    /// Check structural invariants; the error points into the saved JSON.
    pub fn check(&self) -> Result<(), SchemaError> {
        let err = |pointer: String, message: &str| SchemaError { pointer, message: message.to_string() };
        let mut ids = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if ids.insert(n.node_id.as_str(), n).is_some() {
                return Err(err(format!("/nodes/{i}/node_id"), "duplicate node_id"));
            }
            if !(0.0..=1.0).contains(&n.confidence) {
                return Err(err(format!("/nodes/{i}/confidence"), "confidence outside [0, 1]"));
            }
            match n.kind {
                NodeKind::Object if n.bbox.is_none() || n.attribute_kind.is_some() => {
                    return Err(err(format!("/nodes/{i}"), "object nodes need a bbox and no attribute_kind"));
                }
                NodeKind::Attribute if n.bbox.is_some() || n.attribute_kind.is_none() => {
                    return Err(err(format!("/nodes/{i}"), "attribute nodes need an attribute_kind and no bbox"));
                }
                _ => {}
            }
            if let Some(b) = n.bbox {
                if !(b.w > 0.0 && b.h > 0.0) {
                    return Err(err(format!("/nodes/{i}/bbox"), "box must have positive size"));
                }
            }
        }
        let mut bindings = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            let (Some(s), Some(d)) = (ids.get(e.src.as_str()), ids.get(e.dst.as_str())) else {
                return Err(err(format!("/edges/{i}"), "edge endpoint does not exist"));
            };
            if e.src == e.dst {
                return Err(err(format!("/edges/{i}"), "self-loop"));
            }
            let ok = match e.kind {
                EdgeKind::AttributeBinding => s.is_object() && !d.is_object(),
                _ => s.is_object() && d.is_object(),
            };
            if !ok {
                return Err(err(format!("/edges/{i}/kind"), "edge kind does not fit its endpoints"));
            }
            if e.kind == EdgeKind::AttributeBinding {
                *bindings.entry(e.dst.as_str()).or_insert(0) += 1;
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.is_object() && bindings.get(n.node_id.as_str()) != Some(&1) {
                return Err(err(format!("/nodes/{i}"), "attribute node needs exactly one binding edge"));
            }
        }
        Ok(())
    }
}

/// Spatial label for "a ? b" from box geometry, or `None`.
pub fn infer_spatial_relation(a: &BoundingBox, b: &BoundingBox, cfg: &GraphConfig) -> Option<&'static str> {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let dx = bx - ax;
    let dy = by - ay;
    let eps = cfg.center_epsilon_frac * a.image_w;
    if dx.abs() <= eps && dy.abs() <= eps {
        return (a.center_distance(b) < cfg.near_frac * a.diagonal()).then_some(NEXT_TO);
    }
    if dx.abs() >= dy.abs() {
        if dx > eps {
            Some(LEFT_OF)
        } else if dx < -eps {
            Some(RIGHT_OF)
        } else {
            None
        }
    } else if dy > eps {
        let gap = b.y - (a.y + a.h);
        let overlap = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
        let overlap_frac = overlap.max(0.0) / a.w.min(b.w);
        if gap <= cfg.contact_frac * b.h && overlap_frac >= cfg.overlap_frac {
            Some(ON_TOP_OF)
        } else {
            Some(ABOVE)
        }
    } else if dy < -eps {
        Some(BELOW)
    } else {
        None
    }
}

/// Group duplicate detections (lemma similarity ≥ `dup_threshold`), drop
/// relation edges inside a group, and drop relation edges spanning more
/// than `max_pair_frac` of the image diagonal.
pub fn prune_edges(g: &SceneGraph, cfg: &GraphConfig, lx: &Lexicon) -> SceneGraph {
    let objects: Vec<&Node> = g.objects().collect();
    let n = objects.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    let lemmas: Vec<String> = objects.iter().map(|o| lx.lemmatize(&o.label)).collect();
    for i in 0..n {
        for j in i + 1..n {
            if text::similarity(&lemmas[i], &lemmas[j]) >= cfg.dup_threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        members.entry(r).or_default().push(i);
    }
    let mut group_of: BTreeMap<&str, String> = BTreeMap::new();
    for ms in members.values().filter(|m| m.len() > 1) {
        let gid = ms.iter().map(|&i| objects[i].node_id.as_str()).min().expect("non-empty").to_string();
        for &i in ms {
            group_of.insert(objects[i].node_id.as_str(), gid.clone());
        }
    }

    let mut out = g.clone();
    for node in out.nodes.iter_mut().filter(|n| n.is_object()) {
        node.same_group = group_of.get(node.node_id.as_str()).cloned();
    }
    let boxes: BTreeMap<&str, BoundingBox> = g
        .objects()
        .filter_map(|o| o.bbox.map(|b| (o.node_id.as_str(), b)))
        .collect();
    out.edges.retain(|e| {
        if !e.is_relation() {
            return true;
        }
        if let (Some(a), Some(b)) = (group_of.get(e.src.as_str()), group_of.get(e.dst.as_str())) {
            if a == b {
                return false;
            }
        }
        match (boxes.get(e.src.as_str()), boxes.get(e.dst.as_str())) {
            (Some(a), Some(b)) => a.center_distance(b) <= cfg.max_pair_frac * a.diagonal(),
            _ => true,
        }
    });
    out
}

/// Canonical JSON: sorted keys, nodes sorted by id, edges sorted, trailing newline.
pub fn save_graph(g: &SceneGraph) -> Vec<u8> {
    let mut g = g.clone();
    g.canonicalize();
    let mut v = serde_json::to_value(&g).expect("scene graphs serialize");
    v.as_object_mut()
        .expect("struct serializes to an object")
        .insert("schema_version".into(), SCHEMA_VERSION.into());
    let mut out = serde_json::to_vec_pretty(&v).expect("values serialize");
    out.push(b'\n');
    out
}

pub fn load_graph(bytes: &[u8]) -> Result<SceneGraph, SchemaError> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| SchemaError {
        pointer: String::new(),
        message: format!("invalid JSON: {e}"),
    })?;
    validate_shape(&v)?;
    let g: SceneGraph = serde_json::from_value(v).map_err(|e| SchemaError {
        pointer: String::new(),
        message: e.to_string(),
    })?;
    g.check()?;
    Ok(g)
}

fn validate_shape(v: &Value) -> Result<(), SchemaError> {
    fn fail<T>(pointer: String, message: &str) -> Result<T, SchemaError> {
        Err(SchemaError { pointer, message: message.to_string() })
    }
    fn field<'a>(obj: &'a serde_json::Map<String, Value>, base: &str, key: &str) -> Result<&'a Value, SchemaError> {
        obj.get(key).map_or_else(|| fail(format!("{base}/{key}"), "missing"), Ok)
    }
    fn string(v: &Value, p: String) -> Result<(), SchemaError> {
        if v.is_string() { Ok(()) } else { fail(p, "expected a string") }
    }
    fn number(v: &Value, p: String) -> Result<(), SchemaError> {
        if v.is_number() { Ok(()) } else { fail(p, "expected a number") }
    }

    let Some(root) = v.as_object() else { return fail(String::new(), "expected an object") };
    match field(root, "", "schema_version")?.as_u64() {
        Some(SCHEMA_VERSION) => {}
        _ => return fail("/schema_version".into(), "unsupported schema_version"),
    }
    string(field(root, "", "image_id")?, "/image_id".into())?;
    let Some(nodes) = field(root, "", "nodes")?.as_array() else { return fail("/nodes".into(), "expected an array") };
    let Some(edges) = field(root, "", "edges")?.as_array() else { return fail("/edges".into(), "expected an array") };
    for (i, n) in nodes.iter().enumerate() {
        let base = format!("/nodes/{i}");
        let Some(o) = n.as_object() else { return fail(base, "expected an object") };
        string(field(o, &base, "node_id")?, format!("{base}/node_id"))?;
        string(field(o, &base, "label")?, format!("{base}/label"))?;
        number(field(o, &base, "confidence")?, format!("{base}/confidence"))?;
        match field(o, &base, "kind")?.as_str() {
            Some("object" | "attribute") => {}
            _ => return fail(format!("{base}/kind"), "expected \"object\" or \"attribute\""),
        }
        if let Some(k) = o.get("attribute_kind") {
            if k.as_str().and_then(AttributeKind::parse).is_none() {
                return fail(format!("{base}/attribute_kind"), "unknown attribute kind");
            }
        }
        if let Some(b) = o.get("bbox") {
            let Some(bo) = b.as_object() else { return fail(format!("{base}/bbox"), "expected an object") };
            for k in ["x", "y", "w", "h", "image_w", "image_h"] {
                number(field(bo, &format!("{base}/bbox"), k)?, format!("{base}/bbox/{k}"))?;
            }
        }
    }
    for (i, e) in edges.iter().enumerate() {
        let base = format!("/edges/{i}");
        let Some(o) = e.as_object() else { return fail(base, "expected an object") };
        for k in ["src", "dst", "label"] {
            string(field(o, &base, k)?, format!("{base}/{k}"))?;
        }
        match field(o, &base, "kind")?.as_str() {
            Some("attribute_binding" | "spatial" | "nonspatial") => {}
            _ => return fail(format!("{base}/kind"), "unknown edge kind"),
        }
    }
    Ok(())
}

/// Triples over the graph: existence per object node (by node id), then one
/// per edge in edge order. Provenance is the image id.
pub fn triples_of_graph(g: &SceneGraph) -> Vec<Triple> {
    let prov = Provenance {
        source: SourceTag::Image,
        id: g.image_id.clone(),
    };
    let mut objs: Vec<&Node> = g.objects().collect();
    objs.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    let mut out: Vec<Triple> = objs.iter().map(|o| Triple::existence(&o.label, prov.clone())).collect();
    let label = |id: &str| g.node(id).map(|n| n.label.clone()).unwrap_or_default();
    for e in &g.edges {
        let kind = match e.kind {
            EdgeKind::AttributeBinding => {
                let attr = g.node(&e.dst);
                let ak = attr.and_then(|n| n.attribute_kind).unwrap_or(AttributeKind::Other);
                out.push(Triple::binding(&label(&e.src), ak, &label(&e.dst), prov.clone()));
                continue;
            }
            EdgeKind::Spatial => TripleKind::Spatial,
            EdgeKind::Nonspatial => TripleKind::Nonspatial,
        };
        out.push(Triple {
            head: label(&e.src),
            relation: e.label.clone(),
            tail: label(&e.dst),
            kind,
            provenance: prov.clone(),
        });
    }
    out
}

const NO_ANSWER: [&str; 7] = ["unknown", "none", "nothing", "no relation", "no relationship", "n/a", "not sure"];

/// Map a VQA attribute answer to a node label: the first lexicon word of the
/// asked class, else the normalized answer verbatim; `None` for non-answers.
pub fn normalize_attribute_answer(answer: &str, kind: AttributeKind, lx: &Lexicon) -> Option<String> {
    let phrase = text::normalize_phrase(answer);
    if phrase.is_empty() || NO_ANSWER.contains(&phrase.as_str()) {
        return None;
    }
    let toks: Vec<String> = phrase.split(' ').filter(|t| !lx.is_stopword(t)).map(str::to_string).collect();
    if let Some(hit) = toks.iter().find(|t| lx.is_attribute_of(t, kind)) {
        return Some(hit.clone());
    }
    if toks.is_empty() {
        return None;
    }
    Some(lx.lemmatize(&toks.join(" ")))
}

/// Relation answer with object names and fillers removed; `None` for non-answers.
pub fn normalize_relation_answer(answer: &str, a: &str, b: &str, lx: &Lexicon) -> Option<String> {
    let phrase = text::normalize_phrase(answer);
    if phrase.is_empty() || NO_ANSWER.contains(&phrase.as_str()) {
        return None;
    }
    let drop: BTreeSet<&str> = a.split(' ').chain(b.split(' ')).collect();
    let toks: Vec<&str> = phrase
        .split(' ')
        .filter(|t| !drop.contains(t) && !matches!(*t, "a" | "an" | "is" | "are" | "it" | "they"))
        .filter(|t| !drop.contains(lx.lemmatize(t).as_str()))
        .collect();
    let out = toks.join(" ");
    let out = out.trim_start_matches("the ").trim_end_matches(" the").to_string();
    (!out.is_empty() && out != "the").then_some(out)
}

fn crop_png(img: &image::DynamicImage, b: &BoundingBox) -> Vec<u8> {
    let x0 = b.x.floor().max(0.0) as u32;
    let y0 = b.y.floor().max(0.0) as u32;
    let x1 = ((b.x + b.w).ceil() as u32).min(img.width());
    let y1 = ((b.y + b.h).ceil() as u32).min(img.height());
    let c = img.crop_imm(x0, y0, x1.saturating_sub(x0).max(1), y1.saturating_sub(y0).max(1));
    let mut buf = Cursor::new(Vec::new());
    c.write_to(&mut buf, image::ImageFormat::Png).expect("PNG encoding into memory");
    buf.into_inner()
}

enum Query {
    Attribute { obj: usize, kind: AttributeKind },
    Relation { a: usize, b: usize },
}

/// Build, then prune, the scene graph for one image.
///
/// `workers` bounds the VQA fan-out for this image; results are merged in
/// (node id, pair) order regardless.
#[allow(clippy::too_many_arguments)]
pub fn build_graph(
    image_id: &str,
    image_bytes: &[u8],
    vocab: &[String],
    detector: &dyn DetectClient,
    vqa: &dyn VqaClient,
    cfg: &GraphConfig,
    lx: &Lexicon,
    workers: usize,
) -> Result<SceneGraph, GraphError> {
    let img = image::load_from_memory(image_bytes).map_err(|e| GraphError::Decode {
        image_id: image_id.to_string(),
        message: e.to_string(),
    })?;
    let client_err = |source| GraphError::Client { image_id: image_id.to_string(), source };
    let (iw, ih) = (img.width() as f64, img.height() as f64);
    let image_ref = ImageRef::inline(image_bytes);
    let source_sha = image_ref.sha256.clone();

    let resp = detector
        .detect(&DetectRequest { image: image_ref, vocabulary: vocab.to_vec() })
        .map_err(client_err)?;

    let mut g = SceneGraph::empty(image_id);
    let mut objs: Vec<(String, String, BoundingBox)> = Vec::new();
    for d in resp.detections.iter().filter(|d| d.confidence >= cfg.confidence_min) {
        let Some(bbox) = BoundingBox::clamped(d.bbox, iw, ih) else { continue };
        let id = format!("o{:03}", objs.len());
        let label = lx.lemmatize(&text::normalize_phrase(&d.label));
        g.nodes.push(Node::object(&id, &label, bbox, d.confidence));
        objs.push((id, label, bbox));
    }

    let crops: Vec<ImageRef> = objs
        .iter()
        .map(|(_, _, b)| {
            let bytes = crop_png(&img, b);
            ImageRef::crop(&bytes, &source_sha, b.region())
        })
        .collect();

    let mut queries = Vec::new();
    for obj in 0..objs.len() {
        for kind in AttributeKind::QUERIED {
            queries.push(Query::Attribute { obj, kind });
        }
    }
    for a in 0..objs.len() {
        for b in a + 1..objs.len() {
            if objs[a].2.center_distance(&objs[b].2) <= cfg.max_pair_frac * objs[a].2.diagonal() {
                queries.push(Query::Relation { a, b });
            }
        }
    }

    let answers = par::map(&queries, workers, |q| {
        let req = match q {
            Query::Attribute { obj, kind } => VqaRequest {
                images: vec![crops[*obj].clone()],
                question: format!("What is the {} of the {}?", kind.as_str(), objs[*obj].1),
            },
            Query::Relation { a, b } => VqaRequest {
                images: vec![crops[*a].clone(), crops[*b].clone()],
                question: format!(
                    "What is the relationship between the {} in the first image and the {} in the second image?",
                    objs[*a].1, objs[*b].1
                ),
            },
        };
        vqa.vqa(&req).map(|r| r.answer)
    });

    for (q, ans) in queries.iter().zip(answers) {
        let ans = ans.map_err(client_err)?;
        match *q {
            Query::Attribute { obj, kind } => {
                if let Some(label) = normalize_attribute_answer(&ans, kind, lx) {
                    let (oid, _, _) = &objs[obj];
                    let aid = format!("{oid}.{}", kind.as_str());
                    g.nodes.push(Node::attribute(&aid, label, kind, 1.0));
                    g.edges.push(Edge {
                        src: oid.clone(),
                        dst: aid,
                        label: kind.relation(),
                        kind: EdgeKind::AttributeBinding,
                    });
                }
            }
            Query::Relation { a, b } => {
                if let Some(label) = infer_spatial_relation(&objs[a].2, &objs[b].2, cfg) {
                    g.edges.push(Edge {
                        src: objs[a].0.clone(),
                        dst: objs[b].0.clone(),
                        label: label.to_string(),
                        kind: EdgeKind::Spatial,
                    });
                }
                if let Some(label) = normalize_relation_answer(&ans, &objs[a].1, &objs[b].1, lx) {
                    g.edges.push(Edge {
                        src: objs[a].0.clone(),
                        dst: objs[b].0.clone(),
                        label,
                        kind: EdgeKind::Nonspatial,
                    });
                }
            }
        }
    }
    let mut g = prune_edges(&g, cfg, lx);
    g.canonicalize();
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Resources;
    use proptest::prelude::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox { x: cx - w / 2.0, y: cy - h / 2.0, w, h, image_w: 200.0, image_h: 200.0 }
    }

    #[test]
    fn left_of_by_centers() {
        let cfg = GraphConfig::default();
        let a = bx(10.0, 50.0, 10.0, 10.0);
        let b = bx(100.0, 50.0, 10.0, 10.0);
        assert_eq!(infer_spatial_relation(&a, &b, &cfg), Some(LEFT_OF));
        assert_eq!(infer_spatial_relation(&b, &a, &cfg), Some(RIGHT_OF));
    }

    #[test]
    fn identical_boxes_are_next_to() {
        let a = bx(50.0, 50.0, 20.0, 20.0);
        assert_eq!(infer_spatial_relation(&a, &a, &GraphConfig::default()), Some(NEXT_TO));
    }

    #[test]
    fn touching_with_overlap_is_on_top() {
        let cfg = GraphConfig::default();
        // a: x 20..70, y 0..40 ; b: x 10..100, y 40..100 → 50/50 of the narrower box.
        let a = BoundingBox { x: 20.0, y: 0.0, w: 50.0, h: 40.0, image_w: 200.0, image_h: 200.0 };
        let b = BoundingBox { x: 30.0, y: 40.0, w: 40.0, h: 60.0, image_w: 200.0, image_h: 200.0 };
        // overlap x 30..70 = 40 of min width 40 → 100%; use 80% case too.
        assert_eq!(infer_spatial_relation(&a, &b, &cfg), Some(ON_TOP_OF));
        let a80 = BoundingBox { x: 38.0, y: 0.0, w: 40.0, h: 40.0, image_w: 200.0, image_h: 200.0 };
        assert_eq!(infer_spatial_relation(&a80, &b, &cfg), Some(ON_TOP_OF));
        let far = BoundingBox { y: -30.0, ..a80 };
        assert_eq!(infer_spatial_relation(&far, &b, &cfg), Some(ABOVE));
        assert_eq!(infer_spatial_relation(&b, &a80, &cfg), Some(BELOW));
    }

    proptest! {
        #[test]
        fn lateral_and_vertical_antisymmetry(
            ax in 0.0f64..180.0, ay in 0.0f64..180.0, aw in 1.0f64..20.0, ah in 1.0f64..20.0,
            bx_ in 0.0f64..180.0, by in 0.0f64..180.0, bw in 1.0f64..20.0, bh in 1.0f64..20.0,
        ) {
            let cfg = GraphConfig::default();
            let a = BoundingBox { x: ax, y: ay, w: aw, h: ah, image_w: 200.0, image_h: 200.0 };
            let b = BoundingBox { x: bx_, y: by, w: bw, h: bh, image_w: 200.0, image_h: 200.0 };
            let fwd = infer_spatial_relation(&a, &b, &cfg);
            let back = infer_spatial_relation(&b, &a, &cfg);
            match fwd {
                Some(LEFT_OF) => prop_assert_eq!(back, Some(RIGHT_OF)),
                Some(RIGHT_OF) => prop_assert_eq!(back, Some(LEFT_OF)),
                Some(ABOVE) | Some(ON_TOP_OF) => prop_assert_eq!(back, Some(BELOW)),
                Some(NEXT_TO) => prop_assert_eq!(back, Some(NEXT_TO)),
                _ => {}
            }
        }
    }

    fn two_node_graph(a: &str, b: &str) -> SceneGraph {
        let mut g = SceneGraph::empty("img");
        g.nodes.push(Node::object("o000", a, bx(50.0, 50.0, 20.0, 20.0), 0.9));
        g.nodes.push(Node::object("o001", b, bx(90.0, 50.0, 20.0, 20.0), 0.9));
        g.edges.push(Edge { src: "o000".into(), dst: "o001".into(), label: LEFT_OF.into(), kind: EdgeKind::Spatial });
        g
    }

    #[test]
    fn duplicates_lose_their_edge_and_share_a_group() {
        let lx = Resources::bundled().lexicon;
        let cfg = GraphConfig::default();
        let p = prune_edges(&two_node_graph("cat", "cats"), &cfg, &lx);
        assert!(p.edges.is_empty());
        assert_eq!(p.nodes[0].same_group.as_deref(), Some("o000"));
        assert_eq!(p.nodes[1].same_group.as_deref(), Some("o000"));
        let p = prune_edges(&two_node_graph("cat", "sofa"), &cfg, &lx);
        assert_eq!(p.edges.len(), 1);
        assert!(p.nodes.iter().all(|n| n.same_group.is_none()));
        let empty = SceneGraph::empty("e");
        assert_eq!(prune_edges(&empty, &cfg, &lx), empty);
    }

    #[test]
    fn far_pairs_are_pruned() {
        let lx = Resources::bundled().lexicon;
        let mut g = two_node_graph("cat", "sofa");
        g.nodes[0].bbox = Some(bx(1.0, 1.0, 2.0, 2.0));
        g.nodes[1].bbox = Some(bx(199.0, 199.0, 2.0, 2.0));
        let p = prune_edges(&g, &GraphConfig::default(), &lx);
        assert!(p.edges.is_empty());
    }

    #[test]
    fn prune_is_idempotent() {
        let lx = Resources::bundled().lexicon;
        let cfg = GraphConfig::default();
        let mut g = two_node_graph("cat", "cats");
        g.nodes.push(Node::object("o002", "sofa", bx(50.0, 90.0, 40.0, 20.0), 0.8));
        g.edges.push(Edge { src: "o000".into(), dst: "o002".into(), label: ABOVE.into(), kind: EdgeKind::Spatial });
        let once = prune_edges(&g, &cfg, &lx);
        assert_eq!(prune_edges(&once, &cfg, &lx), once);
        assert_eq!(once.edges.len(), 1);
    }

    #[test]
    fn save_load_round_trip_and_schema_errors() {
        let mut g = two_node_graph("cat", "sofa");
        g.nodes.push(Node::attribute("o000.color", "black", AttributeKind::Color, 1.0));
        g.edges.push(Edge { src: "o000".into(), dst: "o000.color".into(), label: "has_color".into(), kind: EdgeKind::AttributeBinding });
        g.canonicalize();
        let bytes = save_graph(&g);
        let back = load_graph(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(save_graph(&back), bytes);

        let mut v: Value = serde_json::from_slice(&bytes).unwrap();
        v.as_object_mut().unwrap().remove("nodes");
        let e = load_graph(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert_eq!(e.pointer, "/nodes");

        let mut v: Value = serde_json::from_slice(&bytes).unwrap();
        v["nodes"][1]["label"] = Value::from(3);
        assert_eq!(load_graph(&serde_json::to_vec(&v).unwrap()).unwrap_err().pointer, "/nodes/1/label");

        let mut v: Value = serde_json::from_slice(&bytes).unwrap();
        v["edges"][0]["dst"] = Value::from("nope");
        assert_eq!(load_graph(&serde_json::to_vec(&v).unwrap()).unwrap_err().pointer, "/edges/0");
    }

    #[test]
    fn graph_triples() {
        let mut g = two_node_graph("cat", "sofa");
        g.nodes.push(Node::attribute("o000.color", "black", AttributeKind::Color, 1.0));
        g.edges.push(Edge { src: "o000".into(), dst: "o000.color".into(), label: "has_color".into(), kind: EdgeKind::AttributeBinding });
        let t = triples_of_graph(&g);
        assert_eq!(t.len(), 2 + 1 + 1);
        assert!(t.iter().any(|t| t.head == "cat" && t.relation == "has_color" && t.tail == "black"));
        assert!(triples_of_graph(&SceneGraph::empty("x")).is_empty());
    }

    #[test]
    fn answer_normalization() {
        let lx = Resources::bundled().lexicon;
        assert_eq!(normalize_attribute_answer("It is Black.", AttributeKind::Color, &lx).as_deref(), Some("black"));
        assert_eq!(normalize_attribute_answer("speckled", AttributeKind::Texture, &lx).as_deref(), Some("speckled"));
        assert_eq!(normalize_attribute_answer("unknown", AttributeKind::Shape, &lx), None);
        assert_eq!(normalize_relation_answer("the cat is chasing the dog", "cat", "dog", &lx).as_deref(), Some("chasing"));
        assert_eq!(normalize_relation_answer("none", "cat", "dog", &lx), None);
    }
}
