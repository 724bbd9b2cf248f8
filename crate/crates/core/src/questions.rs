//! Templated question/gold-answer pairs from prompt triples.

use serde::{Deserialize, Serialize};

use crate::clients::{ChatClient, ChatRequest, ClientError};
use crate::lexicon::AttributeKind;
use crate::par;
use crate::prompt::{Triple, TripleKind};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Existence,
    Attribute,
    Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldKind {
    YesNo,
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub kind: GoldKind,
    pub value: String,
}

impl GoldAnswer {
    fn yes() -> Self {
        Self { kind: GoldKind::YesNo, value: "yes".into() }
    }

    fn value(v: &str) -> Self {
        Self { kind: GoldKind::Value, value: v.to_string() }
    }
}

/// Where the question text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextOrigin {
    #[default]
    Template,
    Llm,
    /// The chat service replied with nothing usable; template text kept.
    Fallback,
    /// The chat call failed; template text kept.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub kind: QuestionKind,
    pub text: String,
    pub gold: GoldAnswer,
    /// Absent only for questions authored outside this crate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_triple: Option<Triple>,
    #[serde(default)]
    pub entity_refs: Vec<String>,
    #[serde(default)]
    pub text_origin: TextOrigin,
}

impl Question {
    /// Attribute kind asked about, for attribute questions.
    pub fn attribute_kind(&self) -> Option<AttributeKind> {
        self.source_triple.as_ref().and_then(Triple::attribute_kind)
    }

    pub fn is_yes_no(&self) -> bool {
        self.gold.kind == GoldKind::YesNo
    }
}

pub fn question_id(prompt_id: &str, ordinal: usize) -> String {
    format!("{prompt_id}:q{ordinal:03}")
}

fn template(t: &Triple) -> (QuestionKind, String, GoldAnswer, Vec<String>) {
    match t.kind {
        TripleKind::Existence | TripleKind::Mention => (
            QuestionKind::Existence,
            format!("Is there {} {} in the image?", text::article(&t.head), t.head),
            GoldAnswer::yes(),
            vec![t.head.clone()],
        ),
        TripleKind::AttributeBinding => match t.attribute_kind() {
            Some(AttributeKind::Other) | None => (
                QuestionKind::Attribute,
                format!("Is the {} {}?", t.head, t.tail),
                GoldAnswer::yes(),
                vec![t.head.clone()],
            ),
            Some(k) => (
                QuestionKind::Attribute,
                format!("What is the {} of the {}?", k.as_str(), t.head),
                GoldAnswer::value(&t.tail),
                vec![t.head.clone()],
            ),
        },
        TripleKind::Spatial | TripleKind::Nonspatial => (
            QuestionKind::Relation,
            format!("What is the relationship between the {} and the {}?", t.head, t.tail),
            GoldAnswer::value(&t.relation),
            vec![t.head.clone(), t.tail.clone()],
        ),
    }
}

/// One question per triple, in triple order. Ids are `{prompt_id}:qNNN`
/// with the ordinal counted per prompt.
pub fn generate_questions(triples: &[Triple]) -> Vec<Question> {
    let mut counters: std::collections::HashMap<&str, usize> = Default::default();
    triples
        .iter()
        .map(|t| {
            let n = counters.entry(t.provenance.id.as_str()).or_insert(0);
            *n += 1;
            let (kind, text, gold, entity_refs) = template(t);
            Question {
                question_id: question_id(&t.provenance.id, *n),
                kind,
                text,
                gold,
                source_triple: Some(t.clone()),
                entity_refs,
                text_origin: TextOrigin::Template,
            }
        })
        .collect()
}

/// The user message sent for one triple, in the demonstration format.
pub fn demo_query(t: &Triple) -> String {
    format!(
        "Triple: Subject: {} -- Relation: {} -- Object: {}\nQuestion:",
        t.head, t.relation, t.tail
    )
}

/// Same questions as [`generate_questions`], with text written by the chat
/// service from `demos`. Gold answers and entity refs stay template-derived.
/// Failed calls leave the question `Pending` with template text and are
/// returned alongside.
pub fn generate_questions_llm(
    triples: &[Triple],
    chat: &dyn ChatClient,
    demos: &str,
    workers: usize,
) -> (Vec<Question>, Vec<(String, ClientError)>) {
    let base = generate_questions(triples);
    let replies = par::map(&base, workers, |q| {
        let t = q.source_triple.as_ref().expect("generated questions carry their triple");
        chat.chat(&ChatRequest::single(demos, demo_query(t)))
    });
    let mut failures = Vec::new();
    let mut out = Vec::with_capacity(base.len());
    for (mut q, reply) in base.into_iter().zip(replies) {
        match reply {
            Ok(r) => {
                let line = r.text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
                let line = line.strip_prefix("Question:").unwrap_or(line).trim();
                if line.is_empty() {
                    q.text_origin = TextOrigin::Fallback;
                } else {
                    q.text = line.to_string();
                    q.text_origin = TextOrigin::Llm;
                }
            }
            Err(e) => {
                q.text_origin = TextOrigin::Pending;
                failures.push((q.question_id.clone(), e));
            }
        }
        out.push(q);
    }
    out.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    (out, failures)
}
