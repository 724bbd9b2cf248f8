//! Prompt parsing: composite prompts become object mentions with bound
//! attributes and head–relation–tail links, then flat triples.
//!
//! Two front ends share the same output: [`parse_prompt`] runs a small
//! deterministic grammar over raw text, [`load_parsed`] accepts a
//! pre-parsed dependency listing (token, lemma, POS, head, label).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{AttributeKind, Lexicon, RelationKind, VerbRole};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("prompt {prompt_id:?}: no object found")]
    NoObjectFound { prompt_id: String },
    #[error("prompt text is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMention {
    pub kind: AttributeKind,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectMention {
    #[serde(rename = "ref")]
    pub index: usize,
    pub lemma: String,
    pub attributes: Vec<AttributeMention>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationMention {
    pub subject_ref: usize,
    pub phrase: String,
    pub kind: RelationKind,
    pub object_ref: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub raw_text: String,
    pub objects: Vec<ObjectMention>,
    pub relations: Vec<RelationMention>,
    /// Attachment choices the grammar made that another reading could
    /// dispute ("a red book and vase").
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ambiguities: Vec<String>,
}

impl PromptSpec {
    pub fn object_lemma(&self, r: usize) -> &str {
        &self.objects[r].lemma
    }

    /// Distinct object lemmas, in mention order.
    pub fn distinct_lemmas(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for o in &self.objects {
            if !seen.contains(&o.lemma.as_str()) {
                seen.push(o.lemma.as_str());
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleKind {
    Existence,
    AttributeBinding,
    Spatial,
    Nonspatial,
    /// Caption sentence recast as (entity, mentioned_in, sentence).
    Mention,
}

impl From<RelationKind> for TripleKind {
    fn from(k: RelationKind) -> Self {
        match k {
            RelationKind::Spatial => Self::Spatial,
            RelationKind::Nonspatial => Self::Nonspatial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Prompt,
    Image,
    Caption,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source: SourceTag,
    pub id: String,
}

pub const EXISTS: &str = "exists";
pub const TRUE: &str = "true";
pub const MENTIONED_IN: &str = "mentioned_in";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub kind: TripleKind,
    pub provenance: Provenance,
}

impl Triple {
    pub fn existence(lemma: &str, provenance: Provenance) -> Self {
        Self {
            head: lemma.to_string(),
            relation: EXISTS.to_string(),
            tail: TRUE.to_string(),
            kind: TripleKind::Existence,
            provenance,
        }
    }

    pub fn binding(lemma: &str, kind: AttributeKind, value: &str, provenance: Provenance) -> Self {
        Self {
            head: lemma.to_string(),
            relation: kind.relation(),
            tail: value.to_string(),
            kind: TripleKind::AttributeBinding,
            provenance,
        }
    }

    pub fn attribute_kind(&self) -> Option<AttributeKind> {
        match self.kind {
            TripleKind::AttributeBinding => AttributeKind::from_relation(&self.relation),
            _ => None,
        }
    }

    pub fn is_relation(&self) -> bool {
        matches!(self.kind, TripleKind::Spatial | TripleKind::Nonspatial)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {}", self.head, self.relation, self.tail)
    }
}

/// One input prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub text: String,
}

/// The bundled evaluation corpus.
pub fn bundled_corpus() -> Vec<PromptRecord> {
    load_prompts(include_str!("../data/corpus/prompts.jsonl")).expect("bundled corpus is well-formed")
}

/// Read a prompts file: JSONL records `{"id", "text"}`, or plain text with
/// one prompt per line (ids `p001`, `p002`, ... by line number).
pub fn load_prompts(contents: &str) -> Result<Vec<PromptRecord>, FormatError> {
    let jsonl = contents
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    let mut out = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if jsonl {
            let rec: PromptRecord =
                serde_json::from_str(line).map_err(|e| FormatError::at(i + 1, e.to_string()))?;
            out.push(rec);
        } else {
            out.push(PromptRecord {
                id: format!("p{:03}", i + 1),
                text: line.to_string(),
            });
        }
    }
    Ok(out)
}

/// Parse a composite prompt with the built-in grammar.
///
/// Noun phrases are `determiner* adjective* noun`, coordinated by "and" or
/// commas and bridged by prepositions (matched longest-first) or verbs. The
/// last content word of each phrase is its head noun.
pub fn parse_prompt(prompt_id: &str, raw_text: &str, lx: &Lexicon) -> Result<PromptSpec, ParseError> {
    if raw_text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let tokens = text::tokenize(raw_text);

    let mut nps: Vec<Vec<String>> = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    let mut cur_det = false;
    let mut pending: Option<(usize, String, RelationKind)> = None;
    let mut rels: Vec<(usize, String, RelationKind, usize)> = Vec::new();
    let mut after_and = false;
    let mut ambiguities = Vec::new();

    let mut close = |cur: &mut Vec<String>,
                     cur_det: &mut bool,
                     nps: &mut Vec<Vec<String>>,
                     pending: &mut Option<(usize, String, RelationKind)>,
                     after_and: &mut bool| {
        if cur.is_empty() {
            return;
        }
        let idx = nps.len();
        if *after_and && !*cur_det && cur.len() == 1 {
            if let Some(prev) = nps.last() {
                if prev.len() > 1 {
                    ambiguities.push(format!(
                        "modifiers of {:?} may also apply to {:?}; attached to the nearest following noun",
                        prev.last().unwrap(),
                        cur[0]
                    ));
                }
            }
        }
        nps.push(std::mem::take(cur));
        *cur_det = false;
        *after_and = false;
        if let Some((s, phrase, kind)) = pending.take() {
            if s != idx {
                rels.push((s, phrase, kind, idx));
            }
        }
    };

    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i].as_str();
        if t == "," || t == "and" {
            close(&mut cur, &mut cur_det, &mut nps, &mut pending, &mut after_and);
            after_and = true;
            i += 1;
            continue;
        }
        let have_subject = !cur.is_empty() || !nps.is_empty();
        if let Some((n, kind)) = lx.match_preposition(&tokens, i) {
            if have_subject {
                close(&mut cur, &mut cur_det, &mut nps, &mut pending, &mut after_and);
                let phrase = tokens[i..i + n].join(" ");
                pending = nps.len().checked_sub(1).map(|s| (s, phrase, kind));
            }
            i += n;
            continue;
        }
        if let Some(role) = lx.verb_role(t) {
            if have_subject {
                close(&mut cur, &mut cur_det, &mut nps, &mut pending, &mut after_and);
                let (phrase, kind, next) = match lx.match_preposition(&tokens, i + 1) {
                    Some((n, kind)) if role == VerbRole::Posture => {
                        (tokens[i + 1..i + 1 + n].join(" "), kind, i + 1 + n)
                    }
                    Some((n, _)) => (
                        format!("{t} {}", tokens[i + 1..i + 1 + n].join(" ")),
                        RelationKind::Nonspatial,
                        i + 1 + n,
                    ),
                    None => (t.to_string(), RelationKind::Nonspatial, i + 1),
                };
                pending = nps.len().checked_sub(1).map(|s| (s, phrase, kind));
                i = next;
            } else {
                i += 1;
            }
            continue;
        }
        if lx.is_stopword(t) {
            close(&mut cur, &mut cur_det, &mut nps, &mut pending, &mut after_and);
            cur_det = true;
            i += 1;
            continue;
        }
        if let Some(n) = lx.match_compound(&tokens, i) {
            cur.push(tokens[i..i + n].join(" "));
            i += n;
        } else {
            cur.push(t.to_string());
            i += 1;
        }
    }
    close(&mut cur, &mut cur_det, &mut nps, &mut pending, &mut after_and);

    if nps.is_empty() {
        return Err(ParseError::NoObjectFound {
            prompt_id: prompt_id.to_string(),
        });
    }

    let objects = nps
        .iter()
        .enumerate()
        .map(|(index, np)| {
            let (head, mods) = np.split_last().expect("noun phrases are non-empty");
            ObjectMention {
                index,
                lemma: lx.lemmatize(head),
                attributes: mods
                    .iter()
                    .map(|m| AttributeMention {
                        kind: lx.attribute_kind(m),
                        value: m.clone(),
                    })
                    .collect(),
            }
        })
        .collect();
    let relations = rels
        .into_iter()
        .map(|(s, phrase, kind, o)| RelationMention {
            subject_ref: s,
            phrase,
            kind,
            object_ref: o,
        })
        .collect();

    Ok(PromptSpec {
        prompt_id: prompt_id.to_string(),
        raw_text: raw_text.to_string(),
        objects,
        relations,
        ambiguities,
    })
}

#[derive(Debug, Clone)]
struct Token {
    form: String,
    lemma: String,
    pos: String,
    /// 0 is the root; otherwise a 1-based token index.
    head: usize,
    dep: String,
}

const RELATIONAL_NOUNS: [&str; 9] = [
    "top", "left", "right", "front", "side", "middle", "bottom", "back", "edge",
];

/// Build a [`PromptSpec`] from a tab-separated dependency listing, one
/// token per line: `form<TAB>lemma<TAB>POS<TAB>head<TAB>label` with 1-based
/// heads (0 = root). Lines starting with `#` are comments.
pub fn load_parsed(prompt_id: &str, listing: &str, lx: &Lexicon) -> Result<PromptSpec, FormatError> {
    let mut toks = Vec::new();
    let mut line_of = Vec::new();
    for (i, line) in listing.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(FormatError::at(n, format!("expected 5 tab-separated fields, found {}", f.len())));
        }
        let head: usize = f[3]
            .trim()
            .parse()
            .map_err(|_| FormatError::at(n, format!("head {:?} is not an index", f[3])))?;
        toks.push(Token {
            form: f[0].trim().to_lowercase(),
            lemma: f[1].trim().to_lowercase(),
            pos: f[2].trim().to_uppercase(),
            head,
            dep: f[4].trim().to_lowercase(),
        });
        line_of.push(n);
    }
    if toks.is_empty() {
        return Err(FormatError::at(0, "no tokens"));
    }
    for (k, t) in toks.iter().enumerate() {
        if t.head > toks.len() || t.head == k + 1 {
            return Err(FormatError::at(line_of[k], format!("head {} out of range", t.head)));
        }
    }

    let parent = |k: usize| toks[k].head.checked_sub(1);
    let children = |k: usize| -> Vec<usize> {
        (0..toks.len()).filter(|&c| toks[c].head == k + 1).collect()
    };
    let is_noun = |k: usize| matches!(toks[k].pos.as_str(), "NOUN" | "PROPN");
    let child_with = |k: usize, deps: &[&str]| children(k).into_iter().find(|&c| deps.contains(&toks[c].dep.as_str()));
    let of_child = |k: usize| {
        children(k)
            .into_iter()
            .find(|&c| toks[c].dep == "prep" && toks[c].form == "of")
    };
    let relational = |k: usize| {
        is_noun(k)
            && RELATIONAL_NOUNS.contains(&toks[k].lemma.as_str())
            && parent(k).is_some_and(|p| toks[p].pos == "ADP")
            && of_child(k).is_some()
    };

    let is_object = |k: usize| is_noun(k) && toks[k].dep != "compound" && !relational(k);
    let object_tokens: Vec<usize> = (0..toks.len()).filter(|&k| is_object(k)).collect();
    let obj_ref: BTreeMap<usize, usize> = object_tokens.iter().enumerate().map(|(i, &k)| (k, i)).collect();

    let objects: Vec<ObjectMention> = object_tokens
        .iter()
        .enumerate()
        .map(|(index, &k)| {
            let mut parts: Vec<&str> = children(k)
                .into_iter()
                .filter(|&c| toks[c].dep == "compound")
                .map(|c| toks[c].lemma.as_str())
                .collect();
            parts.push(&toks[k].lemma);
            let attributes = children(k)
                .into_iter()
                .filter(|&c| toks[c].dep == "amod" || (toks[c].pos == "ADJ" && toks[c].dep != "conj"))
                .map(|c| AttributeMention {
                    kind: lx.attribute_kind(&toks[c].lemma),
                    value: toks[c].lemma.clone(),
                })
                .collect();
            ObjectMention {
                index,
                lemma: lx.lemmatize(&parts.join(" ")),
                attributes,
            }
        })
        .collect();

    let phrase_of = |k: usize| -> String {
        let mut idx = vec![k];
        idx.extend(children(k).into_iter().filter(|&c| toks[c].dep == "fixed"));
        idx.sort_unstable();
        idx.iter().map(|&c| toks[c].form.as_str()).collect::<Vec<_>>().join(" ")
    };
    // Subject noun for a verb: the noun it modifies (acl) or its nsubj.
    let verb_subject = |v: usize| -> Option<usize> {
        parent(v)
            .filter(|&p| obj_ref.contains_key(&p))
            .or_else(|| child_with(v, &["nsubj", "nsubjpass"]).filter(|c| obj_ref.contains_key(c)))
    };

    let mut relations = Vec::new();
    for k in 0..toks.len() {
        let t = &toks[k];
        if t.pos == "ADP" && t.dep == "prep" {
            let Some(h) = parent(k) else { continue };
            if relational(h) {
                continue;
            }
            let (subject, prefix) = if obj_ref.contains_key(&h) {
                (Some(h), String::new())
            } else if toks[h].pos == "VERB" || toks[h].pos == "AUX" {
                let prefix = match lx.verb_role(&toks[h].form) {
                    Some(VerbRole::Posture) => String::new(),
                    _ if toks[h].pos == "AUX" => String::new(),
                    _ => format!("{} ", toks[h].form),
                };
                (verb_subject(h), prefix)
            } else {
                (None, String::new())
            };
            let Some(p) = child_with(k, &["pobj", "obj", "nmod"]) else { continue };
            let (phrase, object) = if relational(p) {
                let of = of_child(p).expect("relational nouns carry an of-child");
                let words: Vec<&str> = (k..=of).map(|c| toks[c].form.as_str()).collect();
                (words.join(" "), child_with(of, &["pobj", "obj", "nmod"]))
            } else {
                (phrase_of(k), Some(p))
            };
            let (Some(s), Some(o)) = (subject, object) else { continue };
            let (Some(&sr), Some(&or)) = (obj_ref.get(&s), obj_ref.get(&o)) else { continue };
            if sr == or {
                continue;
            }
            let kind = if prefix.is_empty() {
                lx.preposition_kind(&phrase).unwrap_or(RelationKind::Nonspatial)
            } else {
                RelationKind::Nonspatial
            };
            relations.push((k, RelationMention {
                subject_ref: sr,
                phrase: format!("{prefix}{phrase}"),
                kind,
                object_ref: or,
            }));
        } else if t.pos == "VERB" {
            let Some(o) = child_with(k, &["dobj", "obj"]) else { continue };
            let (Some(s), Some(&or)) = (verb_subject(k), obj_ref.get(&o)) else { continue };
            let sr = obj_ref[&s];
            if sr == or {
                continue;
            }
            relations.push((k, RelationMention {
                subject_ref: sr,
                phrase: phrase_of(k),
                kind: RelationKind::Nonspatial,
                object_ref: or,
            }));
        }
    }
    relations.sort_by_key(|(k, _)| *k);

    if objects.is_empty() {
        return Err(FormatError::at(0, "no noun tokens"));
    }
    Ok(PromptSpec {
        prompt_id: prompt_id.to_string(),
        raw_text: toks.iter().map(|t| t.form.as_str()).collect::<Vec<_>>().join(" "),
        objects,
        relations: relations.into_iter().map(|(_, r)| r).collect(),
        ambiguities: Vec::new(),
    })
}

/// Render a spec as a dependency listing that [`load_parsed`] reads back
/// to the same triples. Objects targeted by several relations keep only
/// the first as their syntactic head.
pub fn to_listing(spec: &PromptSpec, lx: &Lexicon) -> String {
    struct Row {
        form: String,
        pos: &'static str,
        head: usize,
        dep: &'static str,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut noun_row = Vec::with_capacity(spec.objects.len());
    for o in &spec.objects {
        let words: Vec<&str> = o.lemma.split(' ').collect();
        let det = rows.len();
        rows.push(Row { form: text::article(&o.lemma).into(), pos: "DET", head: 0, dep: "det" });
        let mut mods = Vec::new();
        for a in &o.attributes {
            mods.push(rows.len());
            rows.push(Row { form: a.value.clone(), pos: "ADJ", head: 0, dep: "amod" });
        }
        let mut compounds = Vec::new();
        for w in &words[..words.len() - 1] {
            compounds.push(rows.len());
            rows.push(Row { form: (*w).to_string(), pos: "NOUN", head: 0, dep: "compound" });
        }
        let noun = rows.len();
        rows.push(Row { form: words[words.len() - 1].to_string(), pos: "NOUN", head: 0, dep: "conj" });
        for k in std::iter::once(det).chain(mods).chain(compounds) {
            rows[k].head = noun + 1;
        }
        noun_row.push(noun);
    }
    let mut targeted = vec![false; spec.objects.len()];
    for r in &spec.relations {
        let first = rows.len();
        let words: Vec<&str> = r.phrase.split_whitespace().collect();
        let prepositional = lx.preposition_kind(&r.phrase).is_some()
            || (r.kind == RelationKind::Spatial && lx.verb_role(words[0]).is_none());
        let (pos, dep, obj_dep) = if prepositional {
            ("ADP", "prep", "pobj")
        } else {
            ("VERB", "acl", "dobj")
        };
        rows.push(Row { form: words[0].to_string(), pos, head: noun_row[r.subject_ref] + 1, dep });
        for w in &words[1..] {
            rows.push(Row { form: (*w).to_string(), pos, head: first + 1, dep: "fixed" });
        }
        if !targeted[r.object_ref] {
            targeted[r.object_ref] = true;
            let n = noun_row[r.object_ref];
            rows[n].head = first + 1;
            rows[n].dep = obj_dep;
        }
    }
    let root = (0..spec.objects.len()).find(|&i| !targeted[i]);
    for (i, &n) in noun_row.iter().enumerate() {
        if targeted[i] {
            continue;
        }
        if Some(i) == root {
            rows[n].head = 0;
            rows[n].dep = "root";
        } else {
            rows[n].head = noun_row[root.unwrap()] + 1;
        }
    }
    rows.iter()
        .map(|r| format!("{}\t{}\t{}\t{}\t{}\n", r.form, r.form, r.pos, r.head, r.dep))
        .collect()
}

/// Flatten a spec into triples: per object its existence triple followed by
/// its attribute bindings, then one triple per relation.
pub fn triples_of(spec: &PromptSpec) -> Vec<Triple> {
    let prov = Provenance {
        source: SourceTag::Prompt,
        id: spec.prompt_id.clone(),
    };
    let mut out = Vec::new();
    for o in &spec.objects {
        out.push(Triple::existence(&o.lemma, prov.clone()));
        for a in &o.attributes {
            out.push(Triple::binding(&o.lemma, a.kind, &a.value, prov.clone()));
        }
    }
    for r in &spec.relations {
        out.push(Triple {
            head: spec.object_lemma(r.subject_ref).to_string(),
            relation: r.phrase.clone(),
            tail: spec.object_lemma(r.object_ref).to_string(),
            kind: r.kind.into(),
            provenance: prov.clone(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Resources;

    fn lx() -> Lexicon {
        Resources::bundled().lexicon
    }

    fn lemmas(s: &PromptSpec) -> Vec<&str> {
        s.objects.iter().map(|o| o.lemma.as_str()).collect()
    }

    #[test]
    fn cat_on_the_top_of_sofa() {
        let s = parse_prompt("p1", "Cat on the top of Sofa", &lx()).unwrap();
        assert_eq!(lemmas(&s), ["cat", "sofa"]);
        assert_eq!(
            s.relations,
            vec![RelationMention {
                subject_ref: 0,
                phrase: "on the top of".into(),
                kind: RelationKind::Spatial,
                object_ref: 1
            }]
        );
    }

    #[test]
    fn cucumber_and_green_banana() {
        let s = parse_prompt("p2", "a cucumber and a green banana", &lx()).unwrap();
        assert_eq!(lemmas(&s), ["cucumber", "banana"]);
        assert!(s.objects[0].attributes.is_empty());
        assert_eq!(
            s.objects[1].attributes,
            vec![AttributeMention { kind: AttributeKind::Color, value: "green".into() }]
        );
        assert!(s.relations.is_empty());
    }

    #[test]
    fn lone_determiner_has_no_object() {
        assert_eq!(
            parse_prompt("p3", "a", &lx()),
            Err(ParseError::NoObjectFound { prompt_id: "p3".into() })
        );
        assert_eq!(parse_prompt("p3", "  ", &lx()), Err(ParseError::Empty));
    }

    #[test]
    fn verbs_and_postures() {
        let s = parse_prompt("p", "a brown dog chasing a white cat", &lx()).unwrap();
        assert_eq!(s.relations[0].phrase, "chasing");
        assert_eq!(s.relations[0].kind, RelationKind::Nonspatial);
        let s = parse_prompt("p", "a small bird sitting on a wooden branch", &lx()).unwrap();
        assert_eq!(lemmas(&s), ["bird", "branch"]);
        assert_eq!(s.relations[0].phrase, "on");
        assert_eq!(s.relations[0].kind, RelationKind::Spatial);
        assert_eq!(s.objects[1].attributes[0].kind, AttributeKind::Texture);
        let s = parse_prompt("p", "a child playing with a red ball", &lx()).unwrap();
        assert_eq!(s.relations[0].phrase, "playing with");
    }

    #[test]
    fn plurals_and_compounds() {
        let s = parse_prompt("p", "two red apples next to a teddy bear", &lx()).unwrap();
        assert_eq!(lemmas(&s), ["apple", "teddy bear"]);
        assert_eq!(s.relations[0].phrase, "next to");
    }

    #[test]
    fn shared_adjective_is_flagged() {
        let s = parse_prompt("p", "a red book and vase", &lx()).unwrap();
        assert_eq!(lemmas(&s), ["book", "vase"]);
        assert_eq!(s.objects[0].attributes.len(), 1);
        assert!(s.objects[1].attributes.is_empty());
        assert_eq!(s.ambiguities.len(), 1);
    }

    #[test]
    fn triples_in_mention_order() {
        let s = parse_prompt("p1", "Cat on the top of Sofa", &lx()).unwrap();
        let t: Vec<(String, String, String)> = triples_of(&s)
            .into_iter()
            .map(|t| (t.head, t.relation, t.tail))
            .collect();
        let e = |a: &str, b: &str, c: &str| (a.to_string(), b.to_string(), c.to_string());
        assert_eq!(
            t,
            vec![e("cat", "exists", "true"), e("sofa", "exists", "true"), e("cat", "on the top of", "sofa")]
        );
        let s = parse_prompt("p2", "a green banana", &lx()).unwrap();
        let t: Vec<_> = triples_of(&s).into_iter().map(|t| (t.head, t.relation, t.tail)).collect();
        assert_eq!(t, vec![e("banana", "exists", "true"), e("banana", "has_color", "green")]);
        let s = parse_prompt("p3", "a lamp", &lx()).unwrap();
        assert_eq!(triples_of(&s).len(), 1);
    }

    #[test]
    fn listing_red_book() {
        let listing = "a\ta\tDET\t3\tdet\nred\tred\tADJ\t3\tamod\nbook\tbook\tNOUN\t0\tROOT\n.\t.\tPUNCT\t3\tpunct\n";
        let s = load_parsed("p", listing, &lx()).unwrap();
        assert_eq!(lemmas(&s), ["book"]);
        assert_eq!(
            s.objects[0].attributes,
            vec![AttributeMention { kind: AttributeKind::Color, value: "red".into() }]
        );
    }

    #[test]
    fn listing_errors() {
        assert_eq!(load_parsed("p", "", &lx()).unwrap_err().line, 0);
        let bad = "a\ta\tDET\t2\tdet\ncat\tcat\tNOUN\t99\tROOT\n";
        assert_eq!(load_parsed("p", bad, &lx()).unwrap_err().line, 2);
        let short = "a\ta\tDET\t2\n";
        assert_eq!(load_parsed("p", short, &lx()).unwrap_err().line, 1);
    }

    #[test]
    fn listing_complex_preposition_spacy_style() {
        // spaCy attaches "on the top of" as prep → pobj(top) → prep(of) → pobj.
        let listing = "\
cat\tcat\tNOUN\t0\tROOT
on\ton\tADP\t1\tprep
the\tthe\tDET\t4\tdet
top\ttop\tNOUN\t2\tpobj
of\tof\tADP\t4\tprep
sofa\tsofa\tNOUN\t5\tpobj
";
        let s = load_parsed("p", listing, &lx()).unwrap();
        assert_eq!(lemmas(&s), ["cat", "sofa"]);
        assert_eq!(s.relations[0].phrase, "on the top of");
        assert_eq!(s.relations[0].kind, RelationKind::Spatial);
    }

    #[test]
    fn listing_round_trip_of_parsed_prompt() {
        let l = lx();
        for p in [
            "Cat on the top of Sofa",
            "a brown dog chasing a white cat",
            "a child playing with a red ball",
            "a red round clock above a wooden table and a blue vase",
        ] {
            let s = parse_prompt("p", p, &l).unwrap();
            let back = load_parsed("p", &to_listing(&s, &l), &l).unwrap();
            assert_eq!(triples_of(&back), triples_of(&s), "{p}");
        }
    }

    #[test]
    fn prompts_file_formats() {
        let plain = load_prompts("a cat\n\na dog\n").unwrap();
        assert_eq!(plain[1], PromptRecord { id: "p003".into(), text: "a dog".into() });
        let jsonl = load_prompts("{\"id\":\"x\",\"text\":\"a cat\"}\n").unwrap();
        assert_eq!(jsonl[0].id, "x");
        assert_eq!(load_prompts("{\"id\":1}\n").unwrap_err().line, 1);
    }
}
