//! Synthetic graphs with known errors: the identity graph of a prompt, and
//! seeded single-site corruptions of it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BoundingBox, Edge, EdgeKind, Node, SceneGraph};
use crate::lexicon::{AttributeKind, Lexicon, RelationKind, SynonymTable};
use crate::prompt::PromptSpec;
use crate::scoring::ErrorType;
use crate::stats::{self, LabeledFinding, F1};
use crate::clients::Transport;
use crate::prompt::PromptRecord;
use super::config::{ConfigError, Knowledge, RunConfig};
use super::pipeline::{summarize, write_outputs, Evaluator, Failure, HarnessError, Input, RunOutcome, RunSummary, Unit, UnitOutput};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulateError {
    #[error("prompt {prompt_id}: spatial relations cannot all hold ({detail})")]
    UnsatisfiableLayout { prompt_id: String, detail: String },
    #[error("{kind:?}: target {target:?} not found in graph {image_id}")]
    TargetNotFound { kind: CorruptionKind, target: String, image_id: String },
    #[error("{kind:?}: replacement {replacement:?} does not change {target:?}")]
    InvalidReplacement { kind: CorruptionKind, target: String, replacement: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    AttributeSwap,
    ObjectDelete,
    RelationFlip,
    ExtraneousInsert,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 4] = [Self::AttributeSwap, Self::ObjectDelete, Self::RelationFlip, Self::ExtraneousInsert];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AttributeSwap => "attribute_swap",
            Self::ObjectDelete => "object_delete",
            Self::RelationFlip => "relation_flip",
            Self::ExtraneousInsert => "extraneous_insert",
        }
    }

    pub fn error_type(self) -> ErrorType {
        match self {
            Self::AttributeSwap => ErrorType::Attribute,
            Self::ObjectDelete => ErrorType::Omission,
            Self::RelationFlip => ErrorType::Relation,
            Self::ExtraneousInsert => ErrorType::Extraneous,
        }
    }
}

/// One semantic change to a graph.
///
/// Targets: `lemma.kind` or `lemma.value` (attribute_swap), `lemma`
/// (object_delete), `head/tail` (relation_flip), the new label or empty
/// (extraneous_insert). Without a replacement one is drawn with `seed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub kind: CorruptionKind,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
    pub seed: u64,
}

const PITCH: f64 = 100.0;
const SIDE: f64 = 60.0;
const MARGIN: f64 = 20.0;

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, i: usize) -> usize {
        let p = self.0[i];
        if p == i {
            return i;
        }
        let r = self.find(p);
        self.0[i] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

/// Longest-path offsets over a weighted DAG; `None` on a cycle.
fn longest_paths(n: usize, edges: &[(usize, usize, f64)]) -> Option<Vec<f64>> {
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        out[a].push((b, w));
        indeg[b] += 1;
    }
    let mut pos = vec![0.0; n];
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).rev().collect();
    let mut seen = 0;
    while let Some(i) = ready.pop() {
        seen += 1;
        for &(j, w) in &out[i] {
            pos[j] = f64::max(pos[j], pos[i] + w);
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push(j);
            }
        }
    }
    (seen == n).then_some(pos)
}

fn node_id(i: usize) -> String {
    format!("o{i:03}")
}

/// A graph holding exactly the prompt's content: one object node per
/// mention, its attributes, and every declared relation as an edge. Boxes
/// follow the declared left/right/above/below/next-to constraints.
pub fn ideal_graph_of(spec: &PromptSpec, syn: &SynonymTable) -> Result<SceneGraph, SimulateError> {
    let n = spec.objects.len();
    let mut dsu = Dsu((0..n).collect());
    for r in &spec.relations {
        if r.kind == RelationKind::Spatial && syn.relation_class(&r.phrase) == "near" {
            dsu.union(r.subject_ref, r.object_ref);
        }
    }
    let cell: Vec<usize> = (0..n).map(|i| dsu.find(i)).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in spec.relations.iter().filter(|r| r.kind == RelationKind::Spatial) {
        let (s, o) = (cell[r.subject_ref], cell[r.object_ref]);
        let contact = !matches!(r.phrase.as_str(), "above" | "over");
        match syn.relation_class(&r.phrase).as_str() {
            "left" => xs.push((s, o, PITCH)),
            "right" => xs.push((o, s, PITCH)),
            "above" => ys.push((s, o, if contact { SIDE } else { PITCH })),
            "below" => ys.push((o, s, PITCH)),
            _ => {}
        }
    }
    let unsat = |axis: &str| SimulateError::UnsatisfiableLayout {
        prompt_id: spec.prompt_id.clone(),
        detail: format!("cycle in {axis} ordering"),
    };
    if xs.iter().chain(&ys).any(|(a, b, _)| a == b) {
        return Err(unsat("next-to"));
    }
    let px = longest_paths(n, &xs).ok_or_else(|| unsat("horizontal"))?;
    let py = longest_paths(n, &ys).ok_or_else(|| unsat("vertical"))?;
    let image_w = px.iter().fold(0.0f64, |m, v| m.max(*v)) + 2.0 * MARGIN + SIDE;
    let image_h = py.iter().fold(0.0f64, |m, v| m.max(*v)) + 2.0 * MARGIN + SIDE;

    let mut g = SceneGraph::empty(&spec.prompt_id);
    for (i, o) in spec.objects.iter().enumerate() {
        let c = cell[i];
        let bbox = BoundingBox { x: MARGIN + px[c], y: MARGIN + py[c], w: SIDE, h: SIDE, image_w, image_h };
        let oid = node_id(i);
        g.nodes.push(Node::object(&oid, &o.lemma, bbox, 1.0));
        let mut used: BTreeMap<AttributeKind, usize> = BTreeMap::new();
        for a in &o.attributes {
            let k = used.entry(a.kind).or_insert(0);
            let aid = if *k == 0 { format!("{oid}.{}", a.kind.as_str()) } else { format!("{oid}.{}{}", a.kind.as_str(), *k + 1) };
            *k += 1;
            g.nodes.push(Node::attribute(&aid, &a.value, a.kind, 1.0));
            g.edges.push(Edge { src: oid.clone(), dst: aid, label: a.kind.relation(), kind: EdgeKind::AttributeBinding });
        }
    }
    for r in &spec.relations {
        if r.subject_ref == r.object_ref {
            continue;
        }
        g.edges.push(Edge {
            src: node_id(r.subject_ref),
            dst: node_id(r.object_ref),
            label: r.phrase.clone(),
            kind: match r.kind {
                RelationKind::Spatial => EdgeKind::Spatial,
                RelationKind::Nonspatial => EdgeKind::Nonspatial,
            },
        });
    }
    g.edges.dedup();
    g.canonicalize();
    Ok(g)
}

const OTHER_REPLACEMENTS: [&str; 4] = ["plain", "ordinary", "unremarkable", "nondescript"];
const EXTRA_OBJECTS: [&str; 12] = [
    "chair", "lamp", "clock", "vase", "bottle", "umbrella", "plant", "book", "cushion", "basket", "candle", "kite",
];

/// Label that reads as a different relation from `label`.
pub fn flipped_relation(label: &str, syn: &SynonymTable) -> &'static str {
    match syn.relation_class(label).as_str() {
        "above" => "below",
        "below" => "above",
        "left" => "to the right of",
        "right" => "to the left of",
        "near" => "to the left of",
        "front" => "behind",
        "behind" => "in front of",
        "inside" => "next to",
        _ => "ignoring",
    }
}

/// Apply one corruption.
pub fn corrupt(g: &SceneGraph, c: &Corruption, lx: &Lexicon, syn: &SynonymTable) -> Result<SceneGraph, SimulateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let not_found = || SimulateError::TargetNotFound { kind: c.kind, target: c.target.clone(), image_id: g.image_id.clone() };
    let mut out = g.clone();
    match c.kind {
        CorruptionKind::AttributeSwap => {
            let (lemma, which) = c.target.split_once('.').ok_or_else(not_found)?;
            let owners: BTreeSet<&str> = g.objects().filter(|o| o.label == lemma).map(|o| o.node_id.as_str()).collect();
            let kind = AttributeKind::parse(which).filter(|k| *k != AttributeKind::Other);
            let candidates: Vec<&Node> = g
                .edges
                .iter()
                .filter(|e| e.kind == EdgeKind::AttributeBinding && owners.contains(e.src.as_str()))
                .filter_map(|e| g.node(&e.dst))
                .filter(|n| match kind {
                    Some(k) => n.attribute_kind == Some(k),
                    None => n.label == which,
                })
                .collect();
            let node = *candidates.choose(&mut rng).ok_or_else(not_found)?;
            let ak = node.attribute_kind.unwrap_or(AttributeKind::Other);
            let replacement = match &c.replacement {
                Some(r) => r.clone(),
                None => {
                    let pool: Vec<&str> = if ak == AttributeKind::Other {
                        OTHER_REPLACEMENTS.to_vec()
                    } else {
                        lx.attribute_words(ak).collect()
                    };
                    let pool: Vec<&str> = pool.into_iter().filter(|w| !syn.attributes_match(w, &node.label)).collect();
                    pool.choose(&mut rng).ok_or_else(not_found)?.to_string()
                }
            };
            if syn.attributes_match(&replacement, &node.label) {
                return Err(SimulateError::InvalidReplacement { kind: c.kind, target: c.target.clone(), replacement });
            }
            let id = node.node_id.clone();
            out.nodes.iter_mut().filter(|n| n.node_id == id).for_each(|n| n.label = replacement.clone());
        }
        CorruptionKind::ObjectDelete => {
            let gone: BTreeSet<String> = g.objects().filter(|o| o.label == c.target).map(|o| o.node_id.clone()).collect();
            if gone.is_empty() {
                return Err(not_found());
            }
            let attrs: BTreeSet<String> = g
                .edges
                .iter()
                .filter(|e| e.kind == EdgeKind::AttributeBinding && gone.contains(&e.src))
                .map(|e| e.dst.clone())
                .collect();
            out.nodes.retain(|n| !gone.contains(&n.node_id) && !attrs.contains(&n.node_id));
            out.edges.retain(|e| !gone.contains(&e.src) && !gone.contains(&e.dst));
        }
        CorruptionKind::RelationFlip => {
            let (h, t) = c.target.split_once('/').ok_or_else(not_found)?;
            let label_of = |id: &str| g.node(id).map(|n| n.label.as_str());
            let idx: Vec<usize> = g
                .edges
                .iter()
                .enumerate()
                .filter(|(_, e)| e.is_relation() && label_of(&e.src) == Some(h) && label_of(&e.dst) == Some(t))
                .map(|(i, _)| i)
                .collect();
            let i = *idx.choose(&mut rng).ok_or_else(not_found)?;
            let old = &g.edges[i];
            let new = c.replacement.clone().unwrap_or_else(|| flipped_relation(&old.label, syn).to_string());
            if syn.relations_match(&new, &old.label) {
                return Err(SimulateError::InvalidReplacement { kind: c.kind, target: c.target.clone(), replacement: new });
            }
            let nonspatial = new == "ignoring";
            let e = &mut out.edges[i];
            e.label = new;
            if nonspatial {
                e.kind = EdgeKind::Nonspatial;
            }
        }
        CorruptionKind::ExtraneousInsert => {
            let label = match (&c.replacement, c.target.is_empty()) {
                (Some(r), _) => r.clone(),
                (None, false) => c.target.clone(),
                (None, true) => {
                    let pool: Vec<&str> = EXTRA_OBJECTS
                        .iter()
                        .copied()
                        .chain(lx.open_vocabulary().iter().map(String::as_str))
                        .filter(|w| !g.objects().any(|o| syn.nouns_match(w, &o.label)))
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    pool.choose(&mut rng).ok_or_else(not_found)?.to_string()
                }
            };
            let next = g
                .objects()
                .filter_map(|o| o.node_id.strip_prefix('o').and_then(|s| s.parse::<usize>().ok()))
                .max()
                .map_or(0, |m| m + 1);
            let (image_w, image_h) = g
                .objects()
                .find_map(|o| o.bbox.map(|b| (b.image_w, b.image_h)))
                .unwrap_or((PITCH, PITCH));
            let bbox = BoundingBox { x: 0.0, y: 0.0, w: MARGIN, h: MARGIN, image_w, image_h };
            out.nodes.push(Node::object(node_id(next), label, bbox, 1.0));
        }
    }
    out.canonicalize();
    Ok(out)
}

/// A label no prompt object (or current graph object) could match.
fn extraneous_label(spec: &PromptSpec, g: &SceneGraph, lx: &Lexicon, syn: &SynonymTable, rng: &mut ChaCha8Rng) -> Option<String> {
    let pool: BTreeSet<&str> = EXTRA_OBJECTS
        .iter()
        .copied()
        .chain(lx.open_vocabulary().iter().map(String::as_str))
        .filter(|w| !spec.objects.iter().any(|o| syn.nouns_match(w, &o.lemma)))
        .filter(|w| !g.objects().any(|o| syn.nouns_match(w, &o.label)))
        .collect();
    pool.into_iter().collect::<Vec<_>>().choose(rng).map(|w| w.to_string())
}

/// Where a corruption can be applied so that it produces exactly one
/// finding: targets that no other prompt object could stand in for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sites {
    /// `(target, expected finding target)`.
    pub attributes: Vec<(String, String)>,
    pub objects: Vec<String>,
    pub relations: Vec<String>,
}

pub fn sites(spec: &PromptSpec, syn: &SynonymTable) -> Sites {
    let lemmas = spec.distinct_lemmas();
    let unique = |l: &str| {
        spec.objects.iter().filter(|o| o.lemma == l).count() == 1
            && lemmas.iter().filter(|m| **m != l).all(|m| !syn.nouns_match(m, l))
    };
    let mut attributes = Vec::new();
    for o in spec.objects.iter().filter(|o| unique(&o.lemma)) {
        for a in &o.attributes {
            let same_kind = o.attributes.iter().filter(|b| b.kind == a.kind).count();
            let (target, expected) = match a.kind {
                AttributeKind::Other => (format!("{}.{}", o.lemma, a.value), format!("{}.{}", o.lemma, a.value)),
                k if same_kind == 1 => (format!("{}.{}", o.lemma, k.as_str()), format!("{}.{}", o.lemma, k.as_str())),
                _ => continue,
            };
            if a.kind == AttributeKind::Other && o.attributes.iter().filter(|b| syn.attributes_match(&b.value, &a.value)).count() > 1 {
                continue;
            }
            attributes.push((target, expected));
        }
    }
    let objects = lemmas.iter().filter(|l| unique(l)).map(|l| l.to_string()).collect();
    let mut relations = Vec::new();
    for r in &spec.relations {
        let (h, t) = (spec.object_lemma(r.subject_ref), spec.object_lemma(r.object_ref));
        if h == t || !unique(h) || !unique(t) {
            continue;
        }
        let same_pair = spec
            .relations
            .iter()
            .filter(|s| {
                let (a, b) = (spec.object_lemma(s.subject_ref), spec.object_lemma(s.object_ref));
                (a == h && b == t) || (a == t && b == h)
            })
            .count();
        if same_pair == 1 {
            relations.push(format!("{h}/{t}"));
        }
    }
    Sites { attributes, objects, relations }
}

/// One corrupted identity graph and the finding it should produce.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionCase {
    pub image_id: String,
    pub prompt_id: String,
    pub corruption: Corruption,
    pub graph: SceneGraph,
    pub expected: LabeledFinding,
}

fn case_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed, |acc, p| acc.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(*p + 1))
}

/// For every prompt and corruption kind with an applicable site, one
/// seeded single corruption of the identity graph.
pub fn injection_suite(
    specs: &[PromptSpec],
    lx: &Lexicon,
    syn: &SynonymTable,
    seed: u64,
) -> Result<Vec<InjectionCase>, SimulateError> {
    let mut out = Vec::new();
    for (pi, spec) in specs.iter().enumerate() {
        let ideal = ideal_graph_of(spec, syn)?;
        let s = sites(spec, syn);
        for (ki, kind) in CorruptionKind::ALL.into_iter().enumerate() {
            let cseed = case_seed(seed, &[pi as u64, ki as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(cseed);
            let (target, expected) = match kind {
                CorruptionKind::AttributeSwap => match s.attributes.choose(&mut rng) {
                    Some((t, e)) => (t.clone(), e.clone()),
                    None => continue,
                },
                CorruptionKind::ObjectDelete => match s.objects.choose(&mut rng) {
                    Some(t) => (t.clone(), t.clone()),
                    None => continue,
                },
                CorruptionKind::RelationFlip => match s.relations.choose(&mut rng) {
                    Some(t) => (t.clone(), t.clone()),
                    None => continue,
                },
                CorruptionKind::ExtraneousInsert => match extraneous_label(spec, &ideal, lx, syn, &mut rng) {
                    Some(l) => (l.clone(), l),
                    None => continue,
                },
            };
            let image_id = format!("{}.{}", spec.prompt_id, kind.as_str());
            let corruption = Corruption { kind, target, replacement: None, seed: cseed };
            let mut graph = corrupt(&ideal, &corruption, lx, syn)?;
            graph.image_id = image_id.clone();
            out.push(InjectionCase {
                image_id: image_id.clone(),
                prompt_id: spec.prompt_id.clone(),
                corruption,
                graph,
                expected: LabeledFinding { image_id, error_type: kind.error_type(), target: expected },
            });
        }
    }
    Ok(out)
}

/// A synthetic model output with a known number of injected errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepImage {
    pub image_id: String,
    pub prompt_id: String,
    pub model_name: String,
    pub graph: SceneGraph,
    pub injected: Vec<LabeledFinding>,
}

pub fn model_name_for_rate(rate: f64) -> String {
    format!("synthetic-r{:02}", (rate * 100.0).round() as u32)
}

/// Identity graphs corrupted site by site with probability `rate`, one
/// synthetic model per rate and `replicas` images per prompt.
pub fn ranking_sweep(
    specs: &[PromptSpec],
    lx: &Lexicon,
    syn: &SynonymTable,
    rates: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<SweepImage>, SimulateError> {
    let mut out = Vec::new();
    for (ri, &rate) in rates.iter().enumerate() {
        let model = model_name_for_rate(rate);
        for (pi, spec) in specs.iter().enumerate() {
            let ideal = ideal_graph_of(spec, syn)?;
            let s = sites(spec, syn);
            for k in 0..replicas {
                let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, &[ri as u64, pi as u64, k as u64]));
                let image_id = format!("{}.{model}.{k}", spec.prompt_id);
                let mut g = ideal.clone();
                let mut injected = Vec::new();
                let mut deleted: Vec<&str> = Vec::new();
                let apply = |g: &mut SceneGraph, kind: CorruptionKind, target: &str, rng: &mut ChaCha8Rng| -> Result<(), SimulateError> {
                    let c = Corruption { kind, target: target.to_string(), replacement: None, seed: rng.gen() };
                    *g = corrupt(g, &c, lx, syn)?;
                    Ok(())
                };
                let mut log = |kind: CorruptionKind, target: String| {
                    injected.push(LabeledFinding { image_id: image_id.clone(), error_type: kind.error_type(), target });
                };
                for l in &s.objects {
                    if rng.gen_bool(rate) {
                        apply(&mut g, CorruptionKind::ObjectDelete, l, &mut rng)?;
                        deleted.push(l);
                        log(CorruptionKind::ObjectDelete, l.clone());
                    }
                }
                let live = |t: &str| !t.split(['/', '.']).any(|p| deleted.contains(&p));
                for (t, e) in &s.attributes {
                    let lemma = t.split_once('.').map_or(t.as_str(), |p| p.0);
                    if rng.gen_bool(rate) && !deleted.contains(&lemma) {
                        apply(&mut g, CorruptionKind::AttributeSwap, t, &mut rng)?;
                        log(CorruptionKind::AttributeSwap, e.clone());
                    }
                }
                for t in &s.relations {
                    if rng.gen_bool(rate) && live(t) {
                        apply(&mut g, CorruptionKind::RelationFlip, t, &mut rng)?;
                        log(CorruptionKind::RelationFlip, t.clone());
                    }
                }
                if rng.gen_bool(rate) {
                    if let Some(label) = extraneous_label(spec, &g, lx, syn, &mut rng) {
                        apply(&mut g, CorruptionKind::ExtraneousInsert, &label, &mut rng)?;
                        log(CorruptionKind::ExtraneousInsert, label);
                    }
                }
                g.image_id = image_id.clone();
                out.push(SweepImage { image_id, prompt_id: spec.prompt_id.clone(), model_name: model.clone(), graph: g, injected });
            }
        }
    }
    Ok(out)
}

/// Pipeline results for the three synthetic suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub prompts: usize,
    pub identity_images: usize,
    pub identity_perfect: usize,
    pub injection_cases: usize,
    pub injection_f1: BTreeMap<ErrorType, F1>,
    pub sweep: Vec<SweepModel>,
    /// Spearman correlation of score against injected error count.
    pub sweep_spearman: Option<f64>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepModel {
    pub model_name: String,
    pub rate: f64,
    pub images: usize,
    pub injected: usize,
    pub mean_normalized: f64,
}

pub const IDENTITY_MODEL: &str = "identity";
pub const INJECTED_MODEL: &str = "injected";

/// Everything a simulation evaluated, for writing out.
pub struct Simulation {
    pub evaluator: Evaluator,
    pub outcome: RunOutcome,
    /// Expected findings of the single-corruption suite.
    pub injection_log: Vec<LabeledFinding>,
    /// The injection log followed by every sweep injection.
    pub gold: Vec<LabeledFinding>,
    pub summary: SimulationSummary,
}

/// Build identity, injection and sweep graphs for `prompts` and score them
/// all with the graph decoder configured in `cfg`.
pub fn run_simulation(
    cfg: &RunConfig,
    prompts: &[PromptRecord],
    transport: Arc<dyn Transport>,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<Simulation, HarnessError> {
    let mut cfg = cfg.clone();
    cfg.graph_qa.knowledge = Knowledge::Graph;
    let ev = Evaluator::new(cfg.clone(), prompts, &[], transport, env)?;
    let (lx, syn) = (&ev.res.lexicon, &ev.res.synonyms);
    let specs: Vec<PromptSpec> = prompts.iter().filter_map(|p| ev.spec(&p.id).cloned()).collect();
    let bad = |e: SimulateError| HarnessError::from(ConfigError::Invalid(e.to_string()));
    let unit = |image_id: &str, prompt_id: &str, model: &str, g: SceneGraph| Unit {
        image_id: image_id.to_string(),
        prompt_id: prompt_id.to_string(),
        model_name: model.to_string(),
        input: Input::Graph(g),
    };

    let mut units = Vec::new();
    for s in &specs {
        units.push(unit(&s.prompt_id, &s.prompt_id, IDENTITY_MODEL, ideal_graph_of(s, syn).map_err(bad)?));
    }
    let sim = &cfg.simulate;
    let cases = injection_suite(&specs, lx, syn, sim.seed).map_err(bad)?;
    let mut gold = Vec::new();
    for c in &cases {
        units.push(unit(&c.image_id, &c.prompt_id, INJECTED_MODEL, c.graph.clone()));
        gold.push(c.expected.clone());
    }
    let sweep = ranking_sweep(&specs, lx, syn, &sim.rates, sim.replicas, sim.seed).map_err(bad)?;
    let mut injected_count = BTreeMap::new();
    for s in &sweep {
        units.push(unit(&s.image_id, &s.prompt_id, &s.model_name, s.graph.clone()));
        injected_count.insert((s.model_name.clone(), s.image_id.clone()), s.injected.len());
        gold.extend(s.injected.iter().cloned());
    }
    let outcome = ev.run(&units);

    fn of<'a>(outcome: &'a RunOutcome, m: &'a str) -> impl Iterator<Item = &'a UnitOutput> + 'a {
        outcome.outputs.iter().filter(move |o| o.report.model_name == m)
    }
    let predicted: Vec<LabeledFinding> = of(&outcome, INJECTED_MODEL)
        .flat_map(|o| {
            o.report.findings.iter().map(|f| LabeledFinding {
                image_id: o.report.image_id.clone(),
                error_type: f.error_type,
                target: f.target.clone(),
            })
        })
        .collect();
    let case_gold: Vec<LabeledFinding> = cases.iter().map(|c| c.expected.clone()).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut models = Vec::new();
    for &rate in &sim.rates {
        let name = model_name_for_rate(rate);
        let (mut n, mut inj, mut total) = (0, 0, 0.0);
        for o in of(&outcome, &name) {
            let k = injected_count[&(name.clone(), o.report.image_id.clone())];
            xs.push(o.report.normalized);
            ys.push(k as f64);
            n += 1;
            inj += k;
            total += o.report.normalized;
        }
        models.push(SweepModel {
            model_name: name,
            rate,
            images: n,
            injected: inj,
            mean_normalized: if n == 0 { 0.0 } else { total / n as f64 },
        });
    }
    let summary = SimulationSummary {
        prompts: specs.len(),
        identity_images: of(&outcome, IDENTITY_MODEL).count(),
        identity_perfect: of(&outcome, IDENTITY_MODEL).filter(|o| o.report.points == 7).count(),
        injection_cases: cases.len(),
        injection_f1: stats::f1_by_type(&predicted, &case_gold, syn),
        sweep: models,
        sweep_spearman: stats::spearman_rho(&xs, &ys).ok(),
        failures: outcome.failures.clone(),
    };
    Ok(Simulation { evaluator: ev, outcome, injection_log: case_gold, gold, summary })
}

/// Reports, summary CSV and `run.json` as for `run`, plus the injection
/// log as a gold-labels CSV and `simulation.json`.
pub fn write_simulation(out: &Path, sim: &Simulation) -> Result<RunSummary, HarnessError> {
    let run = summarize(&sim.evaluator, &sim.outcome, None, Some(&sim.gold));
    write_outputs(out, &sim.evaluator, &sim.outcome, &run)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for g in &sim.gold {
        w.serialize(g).expect("in-memory csv");
    }
    let io = |p: PathBuf| move |e: std::io::Error| HarnessError::Io { path: p, message: e.to_string() };
    let gold_path = out.join("injected_errors.csv");
    std::fs::write(&gold_path, w.into_inner().expect("in-memory csv")).map_err(io(gold_path.clone()))?;
    let sim_path = out.join("simulation.json");
    let mut body = serde_json::to_string_pretty(&sim.summary).expect("summary serializes");
    body.push('\n');
    std::fs::write(&sim_path, body).map_err(io(sim_path.clone()))?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{infer_spatial_relation, GraphConfig, ON_TOP_OF};
    use crate::lexicon::Resources;
    use crate::prompt::parse_prompt;

    fn spec(text: &str) -> PromptSpec {
        parse_prompt("p", text, &Resources::bundled().lexicon).unwrap()
    }

    fn boxes(g: &SceneGraph) -> Vec<BoundingBox> {
        g.objects().map(|o| o.bbox.unwrap()).collect()
    }

    #[test]
    fn cat_on_sofa_layout() {
        let syn = Resources::bundled().synonyms;
        let g = ideal_graph_of(&spec("Cat on the top of Sofa"), &syn).unwrap();
        assert_eq!(g.objects().count(), 2);
        assert_eq!(g.edges.len(), 1);
        let b = boxes(&g);
        assert_eq!(b[0].x, b[1].x);
        assert_eq!(b[0].y + b[0].h, b[1].y);
        assert_eq!(infer_spatial_relation(&b[0], &b[1], &GraphConfig::default()), Some(ON_TOP_OF));
        g.check().unwrap();
    }

    #[test]
    fn layout_agrees_with_inference() {
        let syn = Resources::bundled().synonyms;
        let cfg = GraphConfig::default();
        for (text, class) in [
            ("a cup to the left of a plate", "left"),
            ("a cup to the right of a plate", "right"),
            ("a bird above a tree", "above"),
            ("a ball below a table", "below"),
            ("a dog next to a cat", "near"),
        ] {
            let g = ideal_graph_of(&spec(text), &syn).unwrap();
            let b = boxes(&g);
            let got = infer_spatial_relation(&b[0], &b[1], &cfg).unwrap();
            assert_eq!(syn.relation_class(got), class, "{text}");
        }
    }

    #[test]
    fn attributes_and_contradictions() {
        let syn = Resources::bundled().synonyms;
        let g = ideal_graph_of(&spec("a green banana"), &syn).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges[0].kind, EdgeKind::AttributeBinding);
        let mut s = spec("a cat to the left of a dog");
        let mut back = s.relations[0].clone();
        std::mem::swap(&mut back.subject_ref, &mut back.object_ref);
        s.relations.push(back);
        assert!(matches!(ideal_graph_of(&s, &syn), Err(SimulateError::UnsatisfiableLayout { .. })));
    }

    #[test]
    fn corruptions() {
        let r = Resources::bundled();
        let (lx, syn) = (&r.lexicon, &r.synonyms);
        let g = ideal_graph_of(&spec("a green banana on the top of a wooden table"), syn).unwrap();
        let c = |kind, target: &str, replacement: Option<&str>| Corruption {
            kind,
            target: target.into(),
            replacement: replacement.map(str::to_string),
            seed: 3,
        };
        let swapped = corrupt(&g, &c(CorruptionKind::AttributeSwap, "banana.color", Some("blue")), lx, syn).unwrap();
        assert!(swapped.nodes.iter().any(|n| n.label == "blue"));
        assert!(corrupt(&g, &c(CorruptionKind::AttributeSwap, "banana.color", Some("green")), lx, syn).is_err());
        let deleted = corrupt(&g, &c(CorruptionKind::ObjectDelete, "table", None), lx, syn).unwrap();
        assert_eq!(deleted.objects().count(), 1);
        assert!(deleted.edges.iter().all(|e| e.kind == EdgeKind::AttributeBinding));
        deleted.check().unwrap();
        let flipped = corrupt(&g, &c(CorruptionKind::RelationFlip, "banana/table", None), lx, syn).unwrap();
        assert!(flipped.edges.iter().any(|e| e.label == "below"));
        let extra = corrupt(&g, &c(CorruptionKind::ExtraneousInsert, "", Some("chair")), lx, syn).unwrap();
        assert_eq!(extra.objects().count(), 3);
        assert!(matches!(
            corrupt(&g, &c(CorruptionKind::ObjectDelete, "dog", None), lx, syn),
            Err(SimulateError::TargetNotFound { .. })
        ));
    }

    #[test]
    fn seeded_and_reproducible() {
        let r = Resources::bundled();
        let specs = vec![spec("a red car to the left of a wooden table"), spec("a dog chasing a cat")];
        let a = injection_suite(&specs, &r.lexicon, &r.synonyms, 5).unwrap();
        let b = injection_suite(&specs, &r.lexicon, &r.synonyms, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4 + 3);
        let s = ranking_sweep(&specs, &r.lexicon, &r.synonyms, &[0.0, 0.5], 2, 5).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s[..4].iter().all(|i| i.injected.is_empty()));
    }
}
