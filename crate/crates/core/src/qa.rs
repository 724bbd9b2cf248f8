//! Question answering over a scene graph (or caption sentences):
//! extract entities, retrieve the triples that mention them, decode.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ChatClient, ChatRequest};
use crate::graph::{self, SceneGraph};
use crate::lexicon::{AttributeKind, Lexicon, SynonymTable};
use crate::prompt::{self, PromptSpec, Provenance, SourceTag, Triple, TripleKind};
use crate::questions::{Question, QuestionKind};
use crate::scoring::{ErrorType, Finding};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("question {question_id}: no entity found in {text:?}")]
pub struct ExtractionError {
    pub question_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entities {
    pub lemmas: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memory {
    pub triples: Vec<Triple>,
}

impl Memory {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    fn has_object(&self, e: &str, syn: &SynonymTable) -> bool {
        self.triples
            .iter()
            .any(|t| matches!(t.kind, TripleKind::Existence | TripleKind::Mention) && syn.nouns_match(e, &t.head))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unanswerable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAResult {
    pub question_id: String,
    pub predicted: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_type: Option<ErrorType>,
    /// What the error is about: a lemma, `lemma.kind`, or `head/tail`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub memory_size: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub client_failed: bool,
}

/// Words that can look like nouns in a question but never name an entity.
const QUESTION_WORDS: [&str; 11] = [
    "what", "which", "there", "image", "picture", "photo", "relationship", "color", "shape", "texture", "it",
];

/// The question's entity lemmas: carried refs when present, else nouns
/// found by the prompt grammar.
pub fn extract_entities(q: &Question, lx: &Lexicon) -> Result<Entities, ExtractionError> {
    if !q.entity_refs.is_empty() {
        return Ok(Entities { lemmas: q.entity_refs.clone() });
    }
    let err = || ExtractionError { question_id: q.question_id.clone(), text: q.text.clone() };
    let spec = prompt::parse_prompt(&q.question_id, &q.text, lx).map_err(|_| err())?;
    let mut lemmas: Vec<String> = Vec::new();
    for o in spec.objects {
        if !QUESTION_WORDS.contains(&o.lemma.as_str()) && !lemmas.contains(&o.lemma) {
            lemmas.push(o.lemma);
        }
    }
    if lemmas.is_empty() {
        return Err(err());
    }
    Ok(Entities { lemmas })
}

fn mentions(t: &Triple, ent: &Entities, syn: &SynonymTable) -> bool {
    ent.lemmas
        .iter()
        .any(|e| syn.nouns_match(e, &t.head) || (t.is_relation() && syn.nouns_match(e, &t.tail)))
}

/// Graph triples whose head (or relation tail) matches an entity.
pub fn retrieve_memory(ent: &Entities, g: &SceneGraph, syn: &SynonymTable) -> Memory {
    retrieve_from(ent, &graph::triples_of_graph(g), syn)
}

pub fn retrieve_from(ent: &Entities, kb: &[Triple], syn: &SynonymTable) -> Memory {
    Memory {
        triples: kb.iter().filter(|t| mentions(t, ent, syn)).cloned().collect(),
    }
}

/// Caption sentences mentioning an entity, as `(entity, mentioned_in, sentence)`.
pub fn retrieve_memory_captions(ent: &Entities, captions: &[String], lx: &Lexicon, syn: &SynonymTable) -> Memory {
    let mut triples = Vec::new();
    for (i, sentence) in captions.iter().enumerate() {
        let lemmas = sentence_lemmas(sentence, lx);
        for e in &ent.lemmas {
            if find_entity(&lemmas, e, syn).is_some() {
                triples.push(Triple {
                    head: e.clone(),
                    relation: prompt::MENTIONED_IN.to_string(),
                    tail: sentence.clone(),
                    kind: TripleKind::Mention,
                    provenance: Provenance { source: SourceTag::Caption, id: format!("caption{i}") },
                });
            }
        }
    }
    Memory { triples }
}

fn sentence_lemmas(s: &str, lx: &Lexicon) -> Vec<String> {
    text::tokenize(s).iter().map(|t| lx.lemmatize(t)).collect()
}

/// Token index where `e` (possibly multiword) ends in `lemmas`.
fn find_entity(lemmas: &[String], e: &str, syn: &SynonymTable) -> Option<usize> {
    let words: Vec<&str> = e.split(' ').collect();
    let n = words.len();
    (n..=lemmas.len()).find(|&end| {
        let span = &lemmas[end - n..end];
        let head_ok = syn.nouns_match(words[n - 1], &span[n - 1]);
        head_ok && span[..n - 1].iter().zip(&words[..n - 1]).all(|(a, b)| a == b)
    })
    .map(|end| end - 1)
}

struct Outcome {
    predicted: String,
    verdict: Verdict,
    error: Option<(ErrorType, String)>,
}

impl Outcome {
    fn correct(predicted: impl Into<String>) -> Self {
        Self { predicted: predicted.into(), verdict: Verdict::Correct, error: None }
    }

    fn wrong(predicted: impl Into<String>, verdict: Verdict, kind: ErrorType, target: String) -> Self {
        Self { predicted: predicted.into(), verdict, error: Some((kind, target)) }
    }

    fn into_result(self, q: &Question, mem: &Memory) -> QAResult {
        let (error_type, target) = match self.error {
            Some((k, t)) => (Some(k), Some(t)),
            None => (None, None),
        };
        QAResult {
            question_id: q.question_id.clone(),
            predicted: self.predicted,
            verdict: self.verdict,
            error_type,
            target,
            memory_size: mem.len(),
            client_failed: false,
        }
    }
}

fn attribute_target(e: &str, q: &Question) -> String {
    match q.attribute_kind() {
        Some(AttributeKind::Other) | None => format!("{e}.{}", other_value(q)),
        Some(k) => format!("{e}.{}", k.as_str()),
    }
}

/// Attribute value behind a yes/no attribute question.
fn other_value(q: &Question) -> String {
    match &q.source_triple {
        Some(t) => t.tail.clone(),
        None => q.text.trim_end_matches('?').rsplit(' ').next().unwrap_or("").to_lowercase(),
    }
}

/// The error an unanswered or wrong question implies, given which
/// endpoints the memory shows. A missing endpoint makes it an omission.
fn classify(q: &Question, mem: &Memory, syn: &SynonymTable) -> (ErrorType, String) {
    let refs = &q.entity_refs;
    if let Some(missing) = refs.iter().find(|e| !mem.has_object(e, syn)) {
        return (ErrorType::Omission, missing.clone());
    }
    match q.kind {
        QuestionKind::Existence => (ErrorType::Omission, refs[0].clone()),
        QuestionKind::Attribute => (ErrorType::Attribute, attribute_target(&refs[0], q)),
        QuestionKind::Relation => (ErrorType::Relation, format!("{}/{}", refs[0], refs[1])),
    }
}

/// Fill in entity refs for externally authored questions; unchanged when
/// refs are present or nothing can be extracted.
pub fn with_extracted_refs(q: &Question, lx: &Lexicon) -> Question {
    if q.entity_refs.is_empty() {
        if let Ok(ent) = extract_entities(q, lx) {
            let mut q = q.clone();
            q.entity_refs = ent.lemmas;
            return q;
        }
    }
    q.clone()
}

fn well_formed(q: &Question) -> bool {
    match q.kind {
        QuestionKind::Relation => q.entity_refs.len() >= 2,
        _ => !q.entity_refs.is_empty(),
    }
}

/// Deterministic decoder over graph triples.
pub fn decode_answer(mem: &Memory, q: &Question, syn: &SynonymTable) -> QAResult {
    decode_with(mem, q, syn, |q, mem| decode_graph(q, mem, syn))
}

fn decode_with(mem: &Memory, q: &Question, syn: &SynonymTable, f: impl Fn(&Question, &Memory) -> Outcome) -> QAResult {
    if !well_formed(q) {
        return Outcome { predicted: "unknown".into(), verdict: Verdict::Unanswerable, error: None }.into_result(q, mem);
    }
    if mem.is_empty() {
        let (k, t) = classify(q, mem, syn);
        let predicted = if q.kind == QuestionKind::Existence { "no" } else { "unknown" };
        return Outcome::wrong(predicted, Verdict::Unanswerable, k, t).into_result(q, mem);
    }
    f(q, mem).into_result(q, mem)
}

fn decode_graph(q: &Question, mem: &Memory, syn: &SynonymTable) -> Outcome {
    let e = &q.entity_refs[0];
    match q.kind {
        QuestionKind::Existence => {
            if mem.has_object(e, syn) {
                Outcome::correct("yes")
            } else {
                let (k, t) = classify(q, mem, syn);
                Outcome::wrong("no", Verdict::Incorrect, k, t)
            }
        }
        QuestionKind::Attribute => {
            if !mem.has_object(e, syn) {
                let (k, t) = classify(q, mem, syn);
                return Outcome::wrong("unknown", Verdict::Unanswerable, k, t);
            }
            let kind = q.attribute_kind();
            let values: Vec<&str> = mem
                .triples
                .iter()
                .filter(|t| t.kind == TripleKind::AttributeBinding && syn.nouns_match(e, &t.head))
                .filter(|t| match kind {
                    Some(AttributeKind::Other) | None => true,
                    Some(k) => t.attribute_kind() == Some(k),
                })
                .map(|t| t.tail.as_str())
                .collect();
            grade_attribute(q, &values, syn, mem)
        }
        QuestionKind::Relation => {
            let (h, t) = (&q.entity_refs[0], &q.entity_refs[1]);
            if !mem.has_object(h, syn) || !mem.has_object(t, syn) {
                let (k, tg) = classify(q, mem, syn);
                return Outcome::wrong("unknown", Verdict::Unanswerable, k, tg);
            }
            let gold = &q.gold.value;
            let mut first = None;
            for tr in mem.triples.iter().filter(|tr| tr.is_relation()) {
                let fwd = syn.nouns_match(h, &tr.head) && syn.nouns_match(t, &tr.tail);
                let rev = syn.nouns_match(t, &tr.head) && syn.nouns_match(h, &tr.tail);
                if fwd && syn.relations_match(&tr.relation, gold) {
                    return Outcome::correct(tr.relation.clone());
                }
                if rev && inverse_matches(&tr.relation, gold, syn) {
                    return Outcome::correct(gold.clone());
                }
                if (fwd || rev) && first.is_none() {
                    first = Some(tr.relation.clone());
                }
            }
            let (k, tg) = classify(q, mem, syn);
            match first {
                Some(p) => Outcome::wrong(p, Verdict::Incorrect, k, tg),
                None => Outcome::wrong("unknown", Verdict::Unanswerable, k, tg),
            }
        }
    }
}

fn grade_attribute(q: &Question, values: &[&str], syn: &SynonymTable, mem: &Memory) -> Outcome {
    let (k, t) = classify(q, mem, syn);
    if q.is_yes_no() {
        let v = other_value(q);
        return if values.iter().any(|x| syn.attributes_match(x, &v)) {
            Outcome::correct("yes")
        } else {
            Outcome::wrong("no", Verdict::Incorrect, k, t)
        };
    }
    if let Some(hit) = values.iter().find(|x| syn.attributes_match(x, &q.gold.value)) {
        return Outcome::correct(*hit);
    }
    match values.first() {
        Some(v) => Outcome::wrong(*v, Verdict::Incorrect, k, t),
        None => Outcome::wrong("unknown", Verdict::Unanswerable, k, t),
    }
}

/// `label` read from the other direction means `gold`.
fn inverse_matches(label: &str, gold: &str, syn: &SynonymTable) -> bool {
    let c = syn.relation_class(label);
    syn.inverse_class(&c).is_some_and(|inv| inv == syn.relation_class(gold))
}

/// Memory as the context lines given to the chat model.
pub fn memory_context(mem: &Memory) -> String {
    mem.triples.iter().map(|t| format!("{t}\n")).collect()
}

/// Grade a free-text reply with the deterministic matching rules.
pub fn grade_reply(reply: &str, mem: &Memory, q: &Question, syn: &SynonymTable) -> QAResult {
    decode_with(mem, q, syn, |q, mem| grade_text(reply, q, mem, syn))
}

fn grade_text(reply: &str, q: &Question, mem: &Memory, syn: &SynonymTable) -> Outcome {
    let norm = text::normalize_phrase(reply);
    let toks: Vec<String> = norm.split(' ').map(str::to_string).collect();
    let unknown = norm.is_empty() || norm.starts_with("unknown") || norm.contains("not sure");
    let (k, t) = classify(q, mem, syn);
    if unknown {
        let p = if q.kind == QuestionKind::Existence { "no" } else { "unknown" };
        return Outcome::wrong(p, Verdict::Unanswerable, k, t);
    }
    if q.is_yes_no() {
        return if toks.first().is_some_and(|w| w == "yes") {
            Outcome::correct("yes")
        } else {
            Outcome::wrong(norm, Verdict::Incorrect, k, t)
        };
    }
    match q.kind {
        QuestionKind::Relation => {
            let gold = &q.gold.value;
            let (h, tl) = (&q.entity_refs[0], &q.entity_refs[1]);
            let core = graph_phrase(&norm, h, tl);
            let mut ok = core.as_deref().is_some_and(|c| syn.relations_match(c, gold));
            if !ok {
                ok = syn
                    .relation_phrases()
                    .iter()
                    .any(|p| text::contains_phrase(&toks, p) && syn.relations_match(p, gold));
            }
            if ok {
                Outcome::correct(norm)
            } else {
                Outcome::wrong(norm, Verdict::Incorrect, k, t)
            }
        }
        _ => {
            let gold = &q.gold.value;
            if syn.attributes_match(&norm, gold) || toks.iter().any(|w| syn.attributes_match(w, gold)) {
                Outcome::correct(norm)
            } else {
                Outcome::wrong(norm, Verdict::Incorrect, k, t)
            }
        }
    }
}

/// Reply with entity names and fillers removed: "the cat is above the sofa" -> "above".
fn graph_phrase(reply: &str, h: &str, t: &str) -> Option<String> {
    let names: Vec<&str> = h.split(' ').chain(t.split(' ')).collect();
    let is_name = |w: &str| names.iter().any(|n| w == *n || w.strip_suffix('s') == Some(n));
    let words: Vec<&str> = reply
        .split(' ')
        .filter(|w| !is_name(w) && !matches!(*w, "a" | "an" | "is" | "are" | "it" | "they"))
        .collect();
    let mut words = words.as_slice();
    while let [first, rest @ ..] = words {
        if *first != "the" {
            break;
        }
        words = rest;
    }
    while let [rest @ .., last] = words {
        if *last != "the" {
            break;
        }
        words = rest;
    }
    (!words.is_empty()).then(|| words.join(" "))
}

/// Decoder backed by the chat service. The reply is graded like the
/// deterministic decoder; a failed call is unanswerable with `client_failed`.
pub fn decode_answer_chat(
    mem: &Memory,
    q: &Question,
    chat: &dyn ChatClient,
    instruction: &str,
    syn: &SynonymTable,
) -> QAResult {
    let user = format!("Triples:\n{}Question: {}", memory_context(mem), q.text);
    match chat.chat(&ChatRequest::single(instruction, user)) {
        Ok(r) => grade_reply(&r.text, mem, q, syn),
        Err(e) => {
            log::warn!("{}: chat decoder failed: {e}", q.question_id);
            let (k, t) = classify(q, mem, syn);
            let mut r = Outcome::wrong("unknown", Verdict::Unanswerable, k, t).into_result(q, mem);
            r.client_failed = true;
            r
        }
    }
}

/// Decoder over caption pseudo-triples: looks for attribute words right
/// before the entity and relation phrases between two entities.
pub fn decode_answer_captions(mem: &Memory, q: &Question, lx: &Lexicon, syn: &SynonymTable) -> QAResult {
    decode_with(mem, q, syn, |q, mem| decode_caption(q, mem, lx, syn))
}

fn decode_caption(q: &Question, mem: &Memory, lx: &Lexicon, syn: &SynonymTable) -> Outcome {
    let e = &q.entity_refs[0];
    let (k, t) = classify(q, mem, syn);
    let sentences: Vec<&str> = {
        let mut v: Vec<&str> = mem.triples.iter().map(|t| t.tail.as_str()).collect();
        v.dedup();
        v
    };
    match q.kind {
        QuestionKind::Existence => {
            if mem.has_object(e, syn) {
                Outcome::correct("yes")
            } else {
                Outcome::wrong("no", Verdict::Incorrect, k, t)
            }
        }
        QuestionKind::Attribute => {
            if !mem.has_object(e, syn) {
                return Outcome::wrong("unknown", Verdict::Unanswerable, k, t);
            }
            let kind = q.attribute_kind();
            let mut values = Vec::new();
            for s in &sentences {
                let toks = text::tokenize(s);
                let lemmas: Vec<String> = toks.iter().map(|w| lx.lemmatize(w)).collect();
                let Some(end) = find_entity(&lemmas, e, syn) else { continue };
                let start = end + 1 - e.split(' ').count();
                for w in toks[..start].iter().rev().take(4) {
                    if w == "," || w == "and" || lx.is_stopword(w) {
                        break;
                    }
                    let keep = match kind {
                        Some(AttributeKind::Other) | None => true,
                        Some(k) => lx.is_attribute_of(w, k),
                    };
                    if keep {
                        values.push(w.clone());
                    }
                }
            }
            let refs: Vec<&str> = values.iter().map(String::as_str).collect();
            grade_attribute(q, &refs, syn, mem)
        }
        QuestionKind::Relation => {
            let (h, tl) = (&q.entity_refs[0], &q.entity_refs[1]);
            if !mem.has_object(h, syn) || !mem.has_object(tl, syn) {
                return Outcome::wrong("unknown", Verdict::Unanswerable, k, t);
            }
            let gold = &q.gold.value;
            let mut first = None;
            for s in &sentences {
                let toks = text::tokenize(s);
                let lemmas: Vec<String> = toks.iter().map(|w| lx.lemmatize(w)).collect();
                let (Some(hi), Some(ti)) = (find_entity(&lemmas, h, syn), find_entity(&lemmas, tl, syn)) else {
                    continue;
                };
                let (lo, hi_, reversed) = if hi < ti {
                    (hi + 1, ti + 1 - tl.split(' ').count(), false)
                } else {
                    (ti + 1, hi + 1 - h.split(' ').count(), true)
                };
                if lo >= hi_ {
                    continue;
                }
                let span = &toks[lo..hi_];
                let mut cands: Vec<String> = syn
                    .relation_phrases()
                    .into_iter()
                    .filter(|p| text::contains_phrase(span, p))
                    .map(str::to_string)
                    .collect();
                let words: Vec<&str> = span
                    .iter()
                    .map(String::as_str)
                    .filter(|w| !lx.is_stopword(w) && lx.attribute_kind(w) == AttributeKind::Other)
                    .collect();
                if !words.is_empty() {
                    cands.push(words.join(" "));
                }
                for c in cands {
                    let hit = if reversed { inverse_matches(&c, gold, syn) } else { syn.relations_match(&c, gold) };
                    if hit {
                        return Outcome::correct(c);
                    }
                    first.get_or_insert(c);
                }
            }
            match first {
                Some(p) => Outcome::wrong(p, Verdict::Incorrect, k, t),
                None => Outcome::wrong("unknown", Verdict::Unanswerable, k, t),
            }
        }
    }
}

/// Detected object groups whose label matches no prompt object. Duplicate
/// detections of one type (same group) count once.
pub fn detect_extraneous(g: &SceneGraph, spec: &PromptSpec, syn: &SynonymTable) -> Vec<Finding> {
    let mut seen_groups = Vec::new();
    let mut out: Vec<Finding> = Vec::new();
    let mut objs: Vec<_> = g.objects().collect();
    objs.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    for n in objs {
        let group = n.same_group.clone().unwrap_or_else(|| n.node_id.clone());
        if seen_groups.contains(&group) {
            continue;
        }
        seen_groups.push(group);
        if spec.objects.iter().any(|o| syn.nouns_match(&o.lemma, &n.label)) {
            continue;
        }
        if out.iter().any(|f| f.target == n.label) {
            continue;
        }
        out.push(Finding {
            error_type: ErrorType::Extraneous,
            target: n.label.clone(),
            question_id: None,
            detail: format!("{} detected but not mentioned", n.node_id),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{BoundingBox, Edge, EdgeKind, Node};
    use crate::lexicon::Resources;
    use crate::questions::generate_questions;
    use crate::prompt::{parse_prompt, triples_of};

    fn res() -> Resources {
        Resources::bundled()
    }

    fn img(id: &str) -> Provenance {
        Provenance { source: SourceTag::Image, id: id.into() }
    }

    fn kg() -> Vec<Triple> {
        vec![
            Triple::existence("cat", img("i")),
            Triple::existence("sofa", img("i")),
            Triple::existence("table", img("i")),
            Triple {
                head: "cat".into(),
                relation: "on the top of".into(),
                tail: "sofa".into(),
                kind: TripleKind::Spatial,
                provenance: img("i"),
            },
            Triple::binding("cat", AttributeKind::Color, "black", img("i")),
            Triple::binding("table", AttributeKind::Texture, "wooden", img("i")),
        ]
    }

    fn questions(text: &str) -> Vec<Question> {
        generate_questions(&triples_of(&parse_prompt("p", text, &res().lexicon).unwrap()))
    }

    #[test]
    fn retrieval_by_incidence_and_synonyms() {
        let syn = res().synonyms;
        let m = retrieve_from(&Entities { lemmas: vec!["cat".into()] }, &kg(), &syn);
        assert_eq!(m.len(), 3);
        assert!(m.triples.iter().all(|t| t.head == "cat"));
        assert!(retrieve_from(&Entities { lemmas: vec!["dog".into()] }, &kg(), &syn).is_empty());
        let cars = vec![Triple::existence("car", img("i"))];
        assert_eq!(retrieve_from(&Entities { lemmas: vec!["sedan".into()] }, &cars, &syn).len(), 1);
    }

    #[test]
    fn extraction_fallback() {
        let lx = res().lexicon;
        let mut q = questions("a cat")[0].clone();
        assert_eq!(extract_entities(&q, &lx).unwrap().lemmas, ["cat"]);
        q.entity_refs.clear();
        assert_eq!(extract_entities(&q, &lx).unwrap().lemmas, ["cat"]);
        q.text = "Is there?".into();
        assert!(extract_entities(&q, &lx).is_err());
    }

    #[test]
    fn decoder_rules() {
        let syn = res().synonyms;
        let mem = Memory { triples: vec![Triple::binding("cat", AttributeKind::Color, "black", img("i")), Triple::existence("cat", img("i"))] };
        let q = questions("a red cat").into_iter().nth(1).unwrap();
        let r = decode_answer(&mem, &q, &syn);
        assert_eq!((r.verdict, r.error_type, r.predicted.as_str()), (Verdict::Incorrect, Some(ErrorType::Attribute), "black"));

        let dog = questions("a dog").remove(0);
        let r = decode_answer(&Memory::default(), &dog, &syn);
        assert_eq!((r.predicted.as_str(), r.error_type), ("no", Some(ErrorType::Omission)));
        assert_eq!(r.verdict, Verdict::Unanswerable);

        let rel = questions("Cat on the top of Sofa").remove(2);
        let mem = retrieve_from(&Entities { lemmas: rel.entity_refs.clone() }, &kg(), &syn);
        assert_eq!(decode_answer(&mem, &rel, &syn).verdict, Verdict::Correct);
    }

    #[test]
    fn relation_synonyms_and_inverses() {
        let syn = res().synonyms;
        let q = questions("a cat next to a dog").remove(2);
        let kb = |h: &str, r: &str, t: &str| Memory {
            triples: vec![
                Triple::existence("cat", img("i")),
                Triple::existence("dog", img("i")),
                Triple { head: h.into(), relation: r.into(), tail: t.into(), kind: TripleKind::Spatial, provenance: img("i") },
            ],
        };
        assert_eq!(decode_answer(&kb("cat", "near", "dog"), &q, &syn).verdict, Verdict::Correct);
        assert_eq!(decode_answer(&kb("dog", "next to", "cat"), &q, &syn).verdict, Verdict::Correct);
        let r = decode_answer(&kb("cat", "to the left of", "dog"), &q, &syn);
        assert_eq!((r.verdict, r.error_type), (Verdict::Incorrect, Some(ErrorType::Relation)));
        let q = questions("a cat to the left of a dog").remove(2);
        assert_eq!(decode_answer(&kb("dog", "to the right of", "cat"), &q, &syn).verdict, Verdict::Correct);
    }

    #[test]
    fn missing_endpoint_is_omission() {
        let syn = res().synonyms;
        let q = questions("Cat on the top of Sofa").remove(2);
        let mem = Memory { triples: vec![Triple::existence("cat", img("i"))] };
        let r = decode_answer(&mem, &q, &syn);
        assert_eq!((r.error_type, r.target.as_deref()), (Some(ErrorType::Omission), Some("sofa")));
    }

    #[test]
    fn chat_grading() {
        let syn = res().synonyms;
        let q = questions("Cat on the top of Sofa").remove(2);
        let mem = retrieve_from(&Entities { lemmas: q.entity_refs.clone() }, &kg(), &syn);
        assert_eq!(grade_reply("the cat is above the sofa", &mem, &q, &syn).verdict, Verdict::Correct);
        assert_eq!(grade_reply("The cat is to the left of the sofa.", &mem, &q, &syn).verdict, Verdict::Incorrect);

        struct Down;
        impl ChatClient for Down {
            fn chat(&self, _: &ChatRequest) -> Result<crate::clients::ChatResponse, crate::clients::ClientError> {
                Err(crate::clients::ClientError::Timeout)
            }
        }
        let r = decode_answer_chat(&mem, &q, &Down, "inst", &syn);
        assert!(r.client_failed);
        assert_eq!(r.verdict, Verdict::Unanswerable);
    }

    #[test]
    fn caption_memory_and_decoding() {
        let r = res();
        let caps = vec!["a black cat sits on a sofa".to_string()];
        let m = retrieve_memory_captions(&Entities { lemmas: vec!["cat".into()] }, &caps, &r.lexicon, &r.synonyms);
        assert_eq!(m.len(), 1);
        assert!(retrieve_memory_captions(&Entities { lemmas: vec!["cat".into()] }, &[], &r.lexicon, &r.synonyms).is_empty());

        let qs = questions("a black cat on the top of a green sofa");
        let decode = |q: &Question| {
            let m = retrieve_memory_captions(&Entities { lemmas: q.entity_refs.clone() }, &caps, &r.lexicon, &r.synonyms);
            decode_answer_captions(&m, q, &r.lexicon, &r.synonyms)
        };
        let by_kind = |k: QuestionKind| qs.iter().filter(move |q| q.kind == k);
        for q in by_kind(QuestionKind::Existence) {
            assert_eq!(decode(q).verdict, Verdict::Correct);
        }
        let attrs: Vec<_> = by_kind(QuestionKind::Attribute).map(decode).collect();
        assert_eq!(attrs[0].verdict, Verdict::Correct);
        assert_eq!(attrs[1].error_type, Some(ErrorType::Attribute));
        let rel = decode(by_kind(QuestionKind::Relation).next().unwrap());
        assert_eq!(rel.verdict, Verdict::Correct, "{rel:?}");
    }

    fn node(id: &str, label: &str) -> Node {
        Node::object(id, label, BoundingBox { x: 0.0, y: 0.0, w: 1.0, h: 1.0, image_w: 10.0, image_h: 10.0 }, 1.0)
    }

    #[test]
    fn extraneous_objects() {
        let r = res();
        let spec = parse_prompt("p", "a table", &r.lexicon).unwrap();
        let mut g = SceneGraph::empty("i");
        g.nodes = vec![node("o000", "table"), node("o001", "chair")];
        let f = detect_extraneous(&g, &spec, &r.synonyms);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].target, "chair");

        let spec = parse_prompt("p", "a cat", &r.lexicon).unwrap();
        g.nodes = vec![node("o000", "cat"), node("o001", "cat")];
        g.edges = vec![Edge { src: "o000".into(), dst: "o001".into(), label: "near".into(), kind: EdgeKind::Spatial }];
        assert!(detect_extraneous(&g, &spec, &r.synonyms).is_empty());
        assert!(detect_extraneous(&SceneGraph::empty("e"), &spec, &r.synonyms).is_empty());
    }
}
