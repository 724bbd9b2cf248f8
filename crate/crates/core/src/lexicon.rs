//! Bundled word tables: attribute lexicon, preposition and verb tables,
//! plural exceptions, and the noun / attribute / relation synonym tables.
//!
//! Every table ships inside the binary and can be overridden file-by-file
//! from a directory (see [`Resources::load_overrides`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

const COLORS: &str = include_str!("../data/colors.txt");
const SHAPES: &str = include_str!("../data/shapes.txt");
const TEXTURES: &str = include_str!("../data/textures.txt");
const PREPOSITIONS: &str = include_str!("../data/prepositions.tsv");
const VERBS: &str = include_str!("../data/verbs.tsv");
const STOPWORDS: &str = include_str!("../data/stopwords.txt");
const COMPOUNDS: &str = include_str!("../data/compounds.txt");
const PLURALS: &str = include_str!("../data/plural_exceptions.tsv");
const NOUN_SYNONYMS: &str = include_str!("../data/noun_synonyms.txt");
const ATTRIBUTE_SYNONYMS: &str = include_str!("../data/attribute_synonyms.txt");
const RELATION_SYNONYMS: &str = include_str!("../data/relation_synonyms.tsv");
const OPEN_VOCABULARY: &str = include_str!("../data/open_vocabulary.txt");
const QUESTION_DEMOS: &str = include_str!("../data/question_demos.txt");
const QA_INSTRUCTION: &str = include_str!("../data/qa_instruction.txt");

/// Default fuzzy threshold for entity-to-node matching.
pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.85;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{file}:{line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Attribute class of an adjective or attribute node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Color,
    Shape,
    Texture,
    Other,
}

impl AttributeKind {
    /// The three classes queried against image crops.
    pub const QUERIED: [AttributeKind; 3] = [Self::Color, Self::Shape, Self::Texture];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Color => "color",
            Self::Shape => "shape",
            Self::Texture => "texture",
            Self::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "color" => Some(Self::Color),
            "shape" => Some(Self::Shape),
            "texture" => Some(Self::Texture),
            "other" => Some(Self::Other),
            _ => None,
        }
    }

    /// Relation label used in triples, e.g. `has_color`.
    pub fn relation(self) -> String {
        format!("has_{}", self.as_str())
    }

    pub fn from_relation(rel: &str) -> Option<Self> {
        rel.strip_prefix("has_").and_then(Self::parse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Spatial,
    Nonspatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbRole {
    /// Dropped when directly followed by a preposition ("sitting on").
    Posture,
    Action,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    attributes: BTreeMap<String, AttributeKind>,
    /// Token sequences, longest first.
    prepositions: Vec<(Vec<String>, RelationKind)>,
    verbs: BTreeMap<String, VerbRole>,
    stopwords: BTreeSet<String>,
    compounds: Vec<Vec<String>>,
    plurals: BTreeMap<String, String>,
    open_vocabulary: Vec<String>,
}

impl Lexicon {
    pub fn attribute_kind(&self, word: &str) -> AttributeKind {
        self.attributes
            .get(word)
            .copied()
            .unwrap_or(AttributeKind::Other)
    }

    pub fn is_attribute_of(&self, word: &str, kind: AttributeKind) -> bool {
        self.attributes.get(word) == Some(&kind)
    }

    pub fn attribute_words(&self, kind: AttributeKind) -> impl Iterator<Item = &str> {
        self.attributes
            .iter()
            .filter(move |(_, k)| **k == kind)
            .map(|(w, _)| w.as_str())
    }

    /// Longest preposition starting at `tokens[at]`, as (token count, kind).
    pub fn match_preposition(&self, tokens: &[String], at: usize) -> Option<(usize, RelationKind)> {
        self.prepositions.iter().find_map(|(seq, kind)| {
            let end = at + seq.len();
            (end <= tokens.len() && tokens[at..end] == seq[..]).then_some((seq.len(), *kind))
        })
    }

    pub fn preposition_kind(&self, phrase: &str) -> Option<RelationKind> {
        let toks: Vec<String> = phrase.split_whitespace().map(str::to_string).collect();
        self.prepositions
            .iter()
            .find(|(seq, _)| *seq == toks)
            .map(|(_, k)| *k)
    }

    pub fn verb_role(&self, word: &str) -> Option<VerbRole> {
        self.verbs.get(word).copied()
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Longest compound noun starting at `tokens[at]`, as a token count.
    pub fn match_compound(&self, tokens: &[String], at: usize) -> Option<usize> {
        self.compounds.iter().find_map(|seq| {
            let end = at + seq.len();
            (end <= tokens.len() && tokens[at..end] == seq[..]).then_some(seq.len())
        })
    }

    pub fn open_vocabulary(&self) -> &[String] {
        &self.open_vocabulary
    }

    /// Reduce a lowercase noun to its singular lemma. Multiword nouns are
    /// lemmatized on their last word.
    pub fn lemmatize(&self, word: &str) -> String {
        let word = word.trim().to_lowercase();
        if let Some((head, last)) = word.rsplit_once(' ') {
            return format!("{head} {}", self.lemmatize(last));
        }
        if let Some(s) = self.plurals.get(&word) {
            return s.clone();
        }
        singularize(&word)
    }
}

fn singularize(w: &str) -> String {
    let n = w.chars().count();
    if n <= 3 || w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") {
        return w.to_string();
    }
    if let Some(stem) = w.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suf in ["ches", "shes", "sses", "xes", "zes", "oes"] {
        if w.ends_with(suf) {
            return w[..w.len() - 2].to_string();
        }
    }
    match w.strip_suffix('s') {
        Some(stem) => stem.to_string(),
        None => w.to_string(),
    }
}

/// Synonym classes for nouns, attribute values and relation phrases.
#[derive(Debug, Clone)]
pub struct SynonymTable {
    nouns: BTreeMap<String, String>,
    attributes: BTreeMap<String, String>,
    relations: BTreeMap<String, String>,
    inverses: BTreeMap<String, String>,
    fuzzy_threshold: f64,
}

impl SynonymTable {
    pub fn with_fuzzy_threshold(mut self, t: f64) -> Self {
        self.fuzzy_threshold = t;
        self
    }

    pub fn fuzzy_threshold(&self) -> f64 {
        self.fuzzy_threshold
    }

    pub fn canonical_noun<'a>(&'a self, lemma: &'a str) -> &'a str {
        self.nouns.get(lemma).map(String::as_str).unwrap_or(lemma)
    }

    pub fn canonical_attribute<'a>(&'a self, value: &'a str) -> &'a str {
        self.attributes.get(value).map(String::as_str).unwrap_or(value)
    }

    /// Entity-to-label match: exact lemma, then synonym group, then
    /// normalized Levenshtein similarity at or above the fuzzy threshold.
    pub fn nouns_match(&self, a: &str, b: &str) -> bool {
        a == b
            || self.canonical_noun(a) == self.canonical_noun(b)
            || text::similarity(a, b) >= self.fuzzy_threshold
    }

    pub fn attributes_match(&self, a: &str, b: &str) -> bool {
        a == b || self.canonical_attribute(a) == self.canonical_attribute(b)
    }

    /// Relation class of a phrase. Phrases outside the table form their
    /// own class, keyed by a crude verb stem so "chases" ≡ "chasing".
    pub fn relation_class(&self, phrase: &str) -> String {
        let phrase = text::normalize_phrase(phrase);
        if let Some(c) = self.relations.get(&phrase) {
            return c.clone();
        }
        phrase
            .split_whitespace()
            .map(text::verb_stem)
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn inverse_class(&self, class: &str) -> Option<&str> {
        self.inverses.get(class).map(String::as_str)
    }

    pub fn relations_match(&self, a: &str, b: &str) -> bool {
        self.relation_class(a) == self.relation_class(b)
    }

    /// Table phrases, longest first, for scanning free text.
    pub fn relation_phrases(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.relations.keys().map(String::as_str).collect();
        v.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        v
    }
}

/// All bundled data in one place.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicon: Lexicon,
    pub synonyms: SynonymTable,
    pub question_demos: String,
    pub qa_instruction: String,
}

impl Resources {
    pub fn bundled() -> Self {
        Self::from_sources(&Sources::default()).expect("bundled data tables are well-formed")
    }

    /// Bundled tables with any same-named file in `dir` taking precedence.
    pub fn load_overrides(dir: &Path) -> Result<Self, LexiconError> {
        let mut src = Sources::default();
        for (name, slot) in src.slots() {
            let p = dir.join(name);
            if p.is_file() {
                *slot = fs::read_to_string(&p).map_err(|source| LexiconError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
            }
        }
        Self::from_sources(&src)
    }

    fn from_sources(src: &Sources) -> Result<Self, LexiconError> {
        let mut attributes = BTreeMap::new();
        for (text, kind) in [
            (&src.colors, AttributeKind::Color),
            (&src.shapes, AttributeKind::Shape),
            (&src.textures, AttributeKind::Texture),
        ] {
            for (_, l) in lines(text) {
                attributes.entry(l.to_lowercase()).or_insert(kind);
            }
        }

        let mut prepositions = Vec::new();
        for (n, l) in lines(&src.prepositions) {
            let (phrase, kind) = split_tab(l, "prepositions.tsv", n)?;
            let kind = match kind {
                "spatial" => RelationKind::Spatial,
                "nonspatial" => RelationKind::Nonspatial,
                other => return Err(malformed("prepositions.tsv", n, format!("unknown kind {other:?}"))),
            };
            prepositions.push((tokens_of(phrase), kind));
        }
        prepositions.sort_by_key(|p| std::cmp::Reverse(p.0.len()));

        let mut verbs = BTreeMap::new();
        for (n, l) in lines(&src.verbs) {
            let (form, role) = split_tab(l, "verbs.tsv", n)?;
            let role = match role {
                "posture" => VerbRole::Posture,
                "action" => VerbRole::Action,
                other => return Err(malformed("verbs.tsv", n, format!("unknown role {other:?}"))),
            };
            verbs.insert(form.to_lowercase(), role);
        }

        let stopwords = lines(&src.stopwords).map(|(_, l)| l.to_lowercase()).collect();
        let mut compounds: Vec<Vec<String>> = lines(&src.compounds).map(|(_, l)| tokens_of(l)).collect();
        compounds.sort_by_key(|c| std::cmp::Reverse(c.len()));

        let mut plurals = BTreeMap::new();
        for (n, l) in lines(&src.plurals) {
            let (p, s) = split_tab(l, "plural_exceptions.tsv", n)?;
            plurals.insert(p.to_lowercase(), s.to_lowercase());
        }
        let open_vocabulary = lines(&src.open_vocabulary).map(|(_, l)| l.to_lowercase()).collect();

        let lexicon = Lexicon {
            attributes,
            prepositions,
            verbs,
            stopwords,
            compounds,
            plurals,
            open_vocabulary,
        };

        let nouns = synonym_groups(&src.noun_synonyms);
        let attrs = synonym_groups(&src.attribute_synonyms);
        let mut relations = BTreeMap::new();
        let mut inverses = BTreeMap::new();
        for (n, l) in lines(&src.relation_synonyms) {
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 3 {
                return Err(malformed("relation_synonyms.tsv", n, "expected 3 tab-separated columns".into()));
            }
            let class = cols[0].trim().to_string();
            if cols[1].trim() != "-" {
                inverses.insert(class.clone(), cols[1].trim().to_string());
            }
            for phrase in cols[2].split(',') {
                relations.insert(text::normalize_phrase(phrase), class.clone());
            }
        }

        Ok(Self {
            lexicon,
            synonyms: SynonymTable {
                nouns,
                attributes: attrs,
                relations,
                inverses,
                fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            },
            question_demos: src.question_demos.clone(),
            qa_instruction: src.qa_instruction.clone(),
        })
    }
}

impl Default for Resources {
    fn default() -> Self {
        Self::bundled()
    }
}

struct Sources {
    colors: String,
    shapes: String,
    textures: String,
    prepositions: String,
    verbs: String,
    stopwords: String,
    compounds: String,
    plurals: String,
    noun_synonyms: String,
    attribute_synonyms: String,
    relation_synonyms: String,
    open_vocabulary: String,
    question_demos: String,
    qa_instruction: String,
}

impl Default for Sources {
    fn default() -> Self {
        Self {
            colors: COLORS.into(),
            shapes: SHAPES.into(),
            textures: TEXTURES.into(),
            prepositions: PREPOSITIONS.into(),
            verbs: VERBS.into(),
            stopwords: STOPWORDS.into(),
            compounds: COMPOUNDS.into(),
            plurals: PLURALS.into(),
            noun_synonyms: NOUN_SYNONYMS.into(),
            attribute_synonyms: ATTRIBUTE_SYNONYMS.into(),
            relation_synonyms: RELATION_SYNONYMS.into(),
            open_vocabulary: OPEN_VOCABULARY.into(),
            question_demos: QUESTION_DEMOS.into(),
            qa_instruction: QA_INSTRUCTION.into(),
        }
    }
}

impl Sources {
    fn slots(&mut self) -> Vec<(&'static str, &mut String)> {
        vec![
            ("colors.txt", &mut self.colors),
            ("shapes.txt", &mut self.shapes),
            ("textures.txt", &mut self.textures),
            ("prepositions.tsv", &mut self.prepositions),
            ("verbs.tsv", &mut self.verbs),
            ("stopwords.txt", &mut self.stopwords),
            ("compounds.txt", &mut self.compounds),
            ("plural_exceptions.tsv", &mut self.plurals),
            ("noun_synonyms.txt", &mut self.noun_synonyms),
            ("attribute_synonyms.txt", &mut self.attribute_synonyms),
            ("relation_synonyms.tsv", &mut self.relation_synonyms),
            ("open_vocabulary.txt", &mut self.open_vocabulary),
            ("question_demos.txt", &mut self.question_demos),
            ("qa_instruction.txt", &mut self.qa_instruction),
        ]
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn split_tab<'a>(l: &'a str, file: &str, n: usize) -> Result<(&'a str, &'a str), LexiconError> {
    l.split_once('\t')
        .map(|(a, b)| (a.trim(), b.trim()))
        .ok_or_else(|| malformed(file, n, "expected a tab-separated pair".into()))
}

fn malformed(file: &str, line: usize, message: String) -> LexiconError {
    LexiconError::Malformed {
        file: file.to_string(),
        line,
        message,
    }
}

fn tokens_of(s: &str) -> Vec<String> {
    s.split_whitespace().map(|t| t.to_lowercase()).collect()
}

fn synonym_groups(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (_, l) in lines(text) {
        let words: Vec<String> = l.split(',').map(|w| w.trim().to_lowercase()).filter(|w| !w.is_empty()).collect();
        if let Some(canon) = words.first() {
            for w in &words {
                out.insert(w.clone(), canon.clone());
            }
        }
    }
    out
}
