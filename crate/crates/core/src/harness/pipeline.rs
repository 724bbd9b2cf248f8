//! Prompts and images in; per-image reports, a summary CSV and run
//! statistics out.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, Decoder, Knowledge, QuestionText, RunConfig};
use super::report;
use crate::clients::{CaptionClient, CaptionRequest, FixtureStore, ImageRef, Mode, ModelClients, Service, ServiceClient, Transport};
use crate::graph::{self, SceneGraph};
use crate::lexicon::Resources;
use crate::prompt::{self, parse_prompt, triples_of, PromptRecord, PromptSpec};
use crate::qa::{self, QAResult};
use crate::questions::{generate_questions, generate_questions_llm, Question};
use crate::scoring::{self, ImageReport};
use crate::stats::{self, EvalRun, HumanScoreRecord, LabeledFinding};
use crate::{jsonl, par};

pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn invalid(path: &Path, message: impl std::fmt::Display) -> HarnessError {
    ConfigError::Read { path: path.to_path_buf(), message: message.to_string() }.into()
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub prompt_id: String,
    pub model_name: String,
    pub path: PathBuf,
}

/// Parse a JSONL manifest; relative paths resolve against `base`.
pub fn read_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>, prompt::FormatError> {
    let mut v: Vec<ManifestEntry> = jsonl::from_str(text)?;
    for e in &mut v {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(v)
}

/// `{dir}/{model}/{prompt_id}[__suffix].{png,jpg,jpeg,json}`; the image id
/// is the file stem.
pub fn scan_images(dir: &Path) -> std::io::Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for model in fs::read_dir(dir)? {
        let model = model?;
        if !model.file_type()?.is_dir() {
            continue;
        }
        let model_name = model.file_name().to_string_lossy().into_owned();
        for f in fs::read_dir(model.path())? {
            let path = f?.path();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
            if !matches!(ext.as_str(), "png" | "jpg" | "jpeg" | "json") {
                continue;
            }
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let prompt_id = stem.split("__").next().unwrap_or(&stem).to_string();
            out.push(ManifestEntry { image_id: stem, prompt_id, model_name: model_name.clone(), path });
        }
    }
    out.sort_by(|a, b| (&a.model_name, &a.image_id).cmp(&(&b.model_name, &b.image_id)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    /// An image file, or a scene-graph JSON file.
    Path(PathBuf),
    Graph(SceneGraph),
}

impl Input {
    fn needs_services(&self) -> bool {
        match self {
            Input::Path(p) => !is_graph_file(p),
            Input::Graph(_) => false,
        }
    }
}

fn is_graph_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub image_id: String,
    pub prompt_id: String,
    pub model_name: String,
    pub input: Input,
}

impl From<ManifestEntry> for Unit {
    fn from(e: ManifestEntry) -> Self {
        Self { image_id: e.image_id, prompt_id: e.prompt_id, model_name: e.model_name, input: Input::Path(e.path) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Failure {
    pub model_name: String,
    pub image_id: String,
    pub prompt_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitOutput {
    pub report: ImageReport,
    pub graph: Option<SceneGraph>,
    pub captions: Option<Vec<String>>,
    pub results: Vec<QAResult>,
}

/// Parsed prompts, their questions and connected clients.
pub struct Evaluator {
    pub cfg: RunConfig,
    pub res: Resources,
    clients: ModelClients,
    specs: BTreeMap<String, Result<PromptSpec, String>>,
    questions: BTreeMap<String, Vec<Question>>,
    pub warnings: Vec<String>,
}

impl Evaluator {
    /// Parse prompts, connect the services the units need, and write
    /// question text (calling the chat service when configured).
    pub fn new(
        cfg: RunConfig,
        prompts: &[PromptRecord],
        units: &[Unit],
        transport: Arc<dyn Transport>,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let res = match &cfg.paths.data {
            Some(dir) => Resources::load_overrides(dir).map_err(|e| invalid(dir, e))?,
            None => Resources::bundled(),
        };
        let res = Resources { synonyms: res.synonyms.with_fuzzy_threshold(cfg.graph_qa.fuzzy_threshold), ..res };

        let mut wanted = BTreeSet::new();
        let images = units.iter().any(|u| u.input.needs_services());
        match cfg.graph_qa.knowledge {
            Knowledge::Graph if images => {
                wanted.extend([Service::Detect, Service::Vqa]);
            }
            Knowledge::Captions if !units.is_empty() => {
                wanted.insert(Service::Caption);
            }
            _ => {}
        }
        if cfg.graph_qa.decoder == Decoder::Chat || cfg.graph_qa.questions == QuestionText::Llm {
            wanted.insert(Service::Chat);
        }
        let store = match (&cfg.paths.fixtures, cfg.clients.mode) {
            (_, Mode::Live) => None,
            (Some(dir), Mode::Replay) if !wanted.is_empty() && !dir.is_dir() => {
                return Err(invalid(dir, "fixtures directory does not exist (replay mode)"));
            }
            (Some(dir), _) => Some(Arc::new(FixtureStore::new(dir))),
            (None, _) => None,
        };
        let mut clients = ModelClients::default();
        for s in wanted {
            let c = ServiceClient::connect(s, &cfg.clients.settings(s), env, transport.clone(), store.clone())
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            match s {
                Service::Detect => clients.detect = Some(c),
                Service::Vqa => clients.vqa = Some(c),
                Service::Chat => clients.chat = Some(c),
                Service::Caption => clients.caption = Some(c),
            }
        }

        let mut warnings = Vec::new();
        let mut specs = BTreeMap::new();
        let mut questions = BTreeMap::new();
        for p in prompts {
            if specs.contains_key(&p.id) {
                return Err(ConfigError::Invalid(format!("duplicate prompt id {:?}", p.id)).into());
            }
            let spec = match parse_prompt(&p.id, &p.text, &res.lexicon) {
                Ok(s) => s,
                Err(e) => {
                    specs.insert(p.id.clone(), Err(e.to_string()));
                    continue;
                }
            };
            let triples = triples_of(&spec);
            let qs = match cfg.graph_qa.questions {
                QuestionText::Template => generate_questions(&triples),
                QuestionText::Llm => {
                    let (qs, failed) = generate_questions_llm(&triples, &clients, &res.question_demos, cfg.pipeline.workers);
                    for (qid, e) in failed {
                        warnings.push(format!("{qid}: question text fell back to the template ({e})"));
                    }
                    qs
                }
            };
            questions.insert(p.id.clone(), qs);
            specs.insert(p.id.clone(), Ok(spec));
        }
        Ok(Self { cfg, res, clients, specs, questions, warnings })
    }

    pub fn spec(&self, prompt_id: &str) -> Option<&PromptSpec> {
        self.specs.get(prompt_id).and_then(|s| s.as_ref().ok())
    }

    pub fn questions(&self) -> impl Iterator<Item = &Question> {
        self.questions.values().flatten()
    }

    /// Evaluate one image. Any client, decode or schema error fails just
    /// this image.
    pub fn evaluate(&self, unit: &Unit) -> Result<UnitOutput, Failure> {
        let fail = |stage: &str, message: String| Failure {
            model_name: unit.model_name.clone(),
            image_id: unit.image_id.clone(),
            prompt_id: unit.prompt_id.clone(),
            stage: stage.to_string(),
            message,
        };
        let spec = match self.specs.get(&unit.prompt_id) {
            Some(Ok(s)) => s,
            Some(Err(e)) => return Err(fail("parse", e.clone())),
            None => return Err(fail("parse", format!("unknown prompt id {:?}", unit.prompt_id))),
        };
        let (lx, syn) = (&self.res.lexicon, &self.res.synonyms);
        let workers = self.cfg.pipeline.workers;
        let read = |p: &Path| fs::read(p).map_err(|e| fail("read", format!("{}: {e}", p.display())));
        let questions: Vec<Question> = self.questions[&unit.prompt_id].iter().map(|q| qa::with_extracted_refs(q, lx)).collect();

        let mut graph_out = None;
        let mut captions_out = None;
        let (results, extraneous) = match self.cfg.graph_qa.knowledge {
            Knowledge::Graph => {
                let g = match &unit.input {
                    Input::Graph(g) => g.clone(),
                    Input::Path(p) if is_graph_file(p) => {
                        graph::load_graph(&read(p)?).map_err(|e| fail("load_graph", format!("{}: {e}", p.display())))?
                    }
                    Input::Path(p) => {
                        let mut vocab: Vec<String> = spec.distinct_lemmas().into_iter().map(str::to_string).collect();
                        vocab.extend(lx.open_vocabulary().iter().cloned());
                        vocab.sort();
                        vocab.dedup();
                        graph::build_graph(
                            &unit.image_id,
                            &read(p)?,
                            &vocab,
                            &self.clients,
                            &self.clients,
                            &self.cfg.scene_graph,
                            lx,
                            workers,
                        )
                        .map_err(|e| fail("scene_graph", e.to_string()))?
                    }
                };
                let kb = graph::triples_of_graph(&g);
                let results = par::map(&questions, workers, |q| {
                    let ent = qa::extract_entities(q, lx).map_err(|e| e.to_string())?;
                    let mem = qa::retrieve_from(&ent, &kb, syn);
                    Ok::<_, String>(self.decode(&mem, q, |m, q| qa::decode_answer(m, q, syn)))
                });
                let extraneous = qa::detect_extraneous(&g, spec, syn);
                graph_out = Some(g);
                (results, extraneous)
            }
            Knowledge::Captions => {
                let bytes = match &unit.input {
                    Input::Path(p) if !is_graph_file(p) => read(p)?,
                    _ => return Err(fail("caption", "caption mode needs an image file".into())),
                };
                let caption = self
                    .clients
                    .caption(&CaptionRequest { image: ImageRef::inline(&bytes) })
                    .map_err(|e| fail("caption", e.to_string()))?
                    .caption;
                let sentences = split_sentences(&caption);
                let results = par::map(&questions, workers, |q| {
                    let ent = qa::extract_entities(q, lx).map_err(|e| e.to_string())?;
                    let mem = qa::retrieve_memory_captions(&ent, &sentences, lx, syn);
                    Ok::<_, String>(self.decode(&mem, q, |m, q| qa::decode_answer_captions(m, q, lx, syn)))
                });
                captions_out = Some(sentences);
                (results, Vec::new())
            }
        };
        let results = results.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| fail("qa", e))?;
        if let Some(r) = results.iter().find(|r| r.client_failed) {
            return Err(fail("qa", format!("{}: chat decoder call failed", r.question_id)));
        }
        let ids: Vec<String> = questions.iter().map(|q| q.question_id.clone()).collect();
        let report =
            scoring::build_report(&unit.image_id, &ids, &results, &extraneous).map_err(|e| fail("score", e.to_string()))?;
        let score = scoring::score(&report, spec);
        Ok(UnitOutput {
            report: ImageReport::new(report, score, &unit.prompt_id, &unit.model_name),
            graph: graph_out,
            captions: captions_out,
            results,
        })
    }

    fn decode(&self, mem: &qa::Memory, q: &Question, deterministic: impl Fn(&qa::Memory, &Question) -> QAResult) -> QAResult {
        match self.cfg.graph_qa.decoder {
            Decoder::Deterministic => deterministic(mem, q),
            Decoder::Chat => qa::decode_answer_chat(mem, q, &self.clients, &self.res.qa_instruction, &self.res.synonyms),
        }
    }

    /// Evaluate all units on the configured worker pool. Outputs come back
    /// sorted by (model, image id) whatever the completion order.
    pub fn run(&self, units: &[Unit]) -> RunOutcome {
        let results = par::with_pool(self.cfg.pipeline.workers, || par::map(units, self.cfg.pipeline.workers, |u| self.evaluate(u)));
        let mut outcome = RunOutcome::default();
        for r in results {
            match r {
                Ok(o) => outcome.outputs.push(o),
                Err(f) => outcome.failures.push(f),
            }
        }
        outcome.outputs.sort_by(|a, b| {
            (&a.report.model_name, &a.report.image_id).cmp(&(&b.report.model_name, &b.report.image_id))
        });
        outcome.failures.sort();
        outcome
    }
}

fn split_sentences(caption: &str) -> Vec<String> {
    caption
        .split(['.', ';', '!', '?', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutcome {
    pub outputs: Vec<UnitOutput>,
    pub failures: Vec<Failure>,
}

impl RunOutcome {
    pub fn reports(&self) -> Vec<ImageReport> {
        self.outputs.iter().map(|o| o.report.clone()).collect()
    }
}

/// What `run.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub knowledge: Knowledge,
    pub decoder: Decoder,
    pub questions: QuestionText,
    pub images_scored: usize,
    pub images_failed: usize,
    pub models: Vec<EvalRun>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.failures.is_empty())
    }
}

/// Per-model statistics. Missing human scores are reported as a run
/// failure and the model's correlations are left empty.
pub fn summarize(
    ev: &Evaluator,
    outcome: &RunOutcome,
    human: Option<&[HumanScoreRecord]>,
    gold: Option<&[LabeledFinding]>,
) -> RunSummary {
    let mut by_model: BTreeMap<&str, Vec<ImageReport>> = BTreeMap::new();
    for o in &outcome.outputs {
        by_model.entry(&o.report.model_name).or_default().push(o.report.clone());
    }
    let mut failures = outcome.failures.clone();
    let mut models = Vec::new();
    let grouping = ev.cfg.pipeline.grouping;
    for (model, reports) in by_model {
        let run = match stats::aggregate_run(model, &reports, human, gold, grouping, &ev.res.synonyms) {
            Ok(r) => r,
            Err(e) => {
                failures.push(Failure {
                    model_name: model.to_string(),
                    image_id: String::new(),
                    prompt_id: String::new(),
                    stage: "stats".into(),
                    message: e.to_string(),
                });
                stats::aggregate_run(model, &reports, None, gold, grouping, &ev.res.synonyms)
                    .expect("aggregation without human scores cannot fail")
            }
        };
        models.push(run);
    }
    failures.sort();
    let mut warnings = ev.warnings.clone();
    for o in &outcome.outputs {
        if o.graph.as_ref().is_some_and(|g| !g.nodes.iter().any(|n| n.is_object())) {
            warnings.push(format!("{}/{}: no objects detected", o.report.model_name, o.report.image_id));
        }
    }
    RunSummary {
        schema_version: RUN_SCHEMA_VERSION,
        knowledge: ev.cfg.graph_qa.knowledge,
        decoder: ev.cfg.graph_qa.decoder,
        questions: ev.cfg.graph_qa.questions,
        images_scored: outcome.outputs.len(),
        images_failed: outcome.failures.len(),
        models,
        failures,
        warnings,
    }
}

/// Make an id safe as a single path component.
pub fn file_component(id: &str) -> String {
    id.chars().map(|c| if matches!(c, '/' | '\\' | ':' | '\0') { '_' } else { c }).collect()
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output types serialize");
    s.push('\n');
    s
}

/// Write every output file. Only this function touches the output
/// directory, after all work is done, so file contents do not depend on
/// scheduling.
pub fn write_outputs(out: &Path, ev: &Evaluator, outcome: &RunOutcome, summary: &RunSummary) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    for o in &outcome.outputs {
        let dir = out.join(file_component(&o.report.model_name));
        let stem = file_component(&o.report.image_id);
        write(&dir.join(format!("{stem}.report.json")), pretty(&o.report))?;
        if ev.cfg.pipeline.write_details {
            if let Some(g) = &o.graph {
                write(&dir.join(format!("{stem}.graph.json")), graph::save_graph(g))?;
            }
            if let Some(c) = &o.captions {
                write(&dir.join(format!("{stem}.captions.json")), pretty(c))?;
            }
            write(&dir.join(format!("{stem}.qa.jsonl")), jsonl::to_string(&o.results))?;
        }
    }
    let questions: Vec<&Question> = ev.questions().collect();
    write(&out.join("questions.jsonl"), jsonl::to_string(&questions))?;
    write(&out.join("summary.csv"), summary_csv(&outcome.reports()))?;
    write(&out.join("run.json"), pretty(summary))?;
    for (name, body) in report::render_tables(&summary.models) {
        write(&out.join(name), body)?;
    }
    Ok(())
}

pub fn summary_csv(reports: &[ImageReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model_name", "image_id", "prompt_id", "attribute", "relation", "omission", "extraneous", "points", "normalized",
    ])
    .expect("in-memory csv");
    let mut sorted: Vec<&ImageReport> = reports.iter().collect();
    sorted.sort_by(|a, b| (&a.model_name, &a.image_id).cmp(&(&b.model_name, &b.image_id)));
    for r in sorted {
        let c = r.counts;
        w.write_record([
            r.model_name.clone(),
            r.image_id.clone(),
            r.prompt_id.clone(),
            c.attribute.to_string(),
            c.relation.to_string(),
            c.omission.to_string(),
            c.extraneous.to_string(),
            r.points.to_string(),
            format!("{:.6}", r.normalized),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Everything `run` reads, resolved from the config.
pub struct Inputs {
    pub prompts: Vec<PromptRecord>,
    pub units: Vec<Unit>,
    pub human: Option<Vec<HumanScoreRecord>>,
    pub gold: Option<Vec<LabeledFinding>>,
}

/// Read prompts, manifest (or image directory), human scores and gold
/// labels. Missing or malformed inputs are configuration errors.
pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, HarnessError> {
    let p = &cfg.paths;
    let need = |o: &Option<PathBuf>, what: &str| {
        o.clone().ok_or_else(|| HarnessError::from(ConfigError::Invalid(format!("paths.{what} is not set"))))
    };
    let read = |path: &Path| fs::read_to_string(path).map_err(|e| invalid(path, e));
    let prompts_path = need(&p.prompts, "prompts")?;
    let prompts = prompt::load_prompts(&read(&prompts_path)?).map_err(|e| invalid(&prompts_path, e))?;
    let entries = match (&p.manifest, &p.images) {
        (Some(m), _) => {
            read_manifest(&read(m)?, m.parent().unwrap_or(Path::new("."))).map_err(|e| invalid(m, e))?
        }
        (None, Some(dir)) => scan_images(dir).map_err(|e| invalid(dir, e))?,
        (None, None) => return Err(ConfigError::Invalid("set paths.manifest or paths.images".into()).into()),
    };
    let mut seen = BTreeSet::new();
    for e in &entries {
        if !seen.insert((&e.model_name, &e.image_id)) {
            return Err(ConfigError::Invalid(format!("duplicate image {} for model {}", e.image_id, e.model_name)).into());
        }
    }
    let human = match &p.human_scores {
        Some(path) => {
            let f = fs::File::open(path).map_err(|e| invalid(path, e))?;
            Some(stats::read_human_scores(f, &path.display().to_string()).map_err(|e| invalid(path, e))?)
        }
        None => None,
    };
    let gold = match &p.gold_labels {
        Some(path) => {
            let f = fs::File::open(path).map_err(|e| invalid(path, e))?;
            Some(stats::read_gold_labels(f, &path.display().to_string()).map_err(|e| invalid(path, e))?)
        }
        None => None,
    };
    Ok(Inputs { prompts, units: entries.into_iter().map(Unit::from).collect(), human, gold })
}

/// The `run` verb: load, evaluate, write. Returns the summary; the caller
/// turns failures into the exit status.
pub fn run_pipeline(
    cfg: &RunConfig,
    transport: Arc<dyn Transport>,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<RunSummary, HarnessError> {
    let inputs = load_inputs(cfg)?;
    let ev = Evaluator::new(cfg.clone(), &inputs.prompts, &inputs.units, transport, env)?;
    let outcome = ev.run(&inputs.units);
    let summary = summarize(&ev, &outcome, inputs.human.as_deref(), inputs.gold.as_deref());
    write_outputs(&cfg.paths.output, &ev, &outcome, &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::OfflineTransport;
    use crate::harness::simulate::ideal_graph_of;

    fn offline() -> Arc<dyn Transport> {
        Arc::new(OfflineTransport)
    }

    fn no_env(_: &str) -> Option<String> {
        None
    }

    fn prompts(texts: &[(&str, &str)]) -> Vec<PromptRecord> {
        texts.iter().map(|(id, t)| PromptRecord { id: id.to_string(), text: t.to_string() }).collect()
    }

    #[test]
    fn graph_units_need_no_services() {
        let ps = prompts(&[("p1", "a red car to the left of a wooden table"), ("p2", "")]);
        let ev0 = Evaluator::new(RunConfig::default(), &ps, &[], offline(), &no_env).unwrap();
        let g = ideal_graph_of(ev0.spec("p1").unwrap(), &ev0.res.synonyms).unwrap();
        let units = vec![
            Unit { image_id: "a".into(), prompt_id: "p1".into(), model_name: "m".into(), input: Input::Graph(g) },
            Unit { image_id: "b".into(), prompt_id: "p2".into(), model_name: "m".into(), input: Input::Graph(SceneGraph::empty("b")) },
            Unit { image_id: "c".into(), prompt_id: "p9".into(), model_name: "m".into(), input: Input::Graph(SceneGraph::empty("c")) },
        ];
        let ev = Evaluator::new(RunConfig::default(), &ps, &units, offline(), &no_env).unwrap();
        let out = ev.run(&units);
        assert_eq!(out.outputs.len(), 1);
        assert_eq!(out.outputs[0].report.points, 7);
        assert_eq!(out.failures.iter().map(|f| f.image_id.as_str()).collect::<Vec<_>>(), ["b", "c"]);
        let s = summarize(&ev, &out, None, None);
        assert_eq!(s.exit_code(), 1);
        assert_eq!(s.models[0].mean_normalized, 1.0);
    }

    #[test]
    fn image_units_in_replay_need_fixtures() {
        let mut cfg = RunConfig::default();
        cfg.paths.fixtures = Some(PathBuf::from("/nonexistent/fixtures"));
        let units = vec![Unit { image_id: "a".into(), prompt_id: "p1".into(), model_name: "m".into(), input: Input::Path("x.png".into()) }];
        let err = Evaluator::new(cfg.clone(), &prompts(&[("p1", "a cat")]), &units, offline(), &no_env).err().unwrap();
        assert!(matches!(err, HarnessError::Config(_)));
        cfg.clients.mode = Mode::Live;
        let err = Evaluator::new(cfg, &prompts(&[("p1", "a cat")]), &units, offline(), &no_env).err().unwrap();
        assert!(err.to_string().contains("HALLU_DETECT_URL"));
    }

    #[test]
    fn summary_csv_is_sorted() {
        let r = |m: &str, i: &str| ImageReport {
            image_id: i.into(),
            prompt_id: "p".into(),
            model_name: m.into(),
            counts: Default::default(),
            findings: vec![],
            points: 7,
            normalized: 1.0,
        };
        let csv = summary_csv(&[r("b", "1"), r("a", "2"), r("a", "1")]);
        let rows: Vec<&str> = csv.lines().skip(1).map(|l| &l[..3]).collect();
        assert_eq!(rows, ["a,1", "a,2", "b,1"]);
        assert_eq!(file_component("x/y:z"), "x_y_z");
        assert_eq!(split_sentences("A cat. A dog; "), ["A cat", "A dog"]);
    }

    #[test]
    fn manifest_paths_resolve() {
        let m = read_manifest(
            "{\"image_id\":\"i\",\"prompt_id\":\"p\",\"model_name\":\"m\",\"path\":\"img/i.png\"}\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(m[0].path, Path::new("/data/img/i.png"));
        assert!(read_manifest("{}\n", Path::new(".")).is_err());
    }
}
