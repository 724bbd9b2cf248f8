use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hallucheck::clients::{Transport, UreqTransport};
use hallucheck::graph::save_graph;
use hallucheck::harness::pipeline::{self, Evaluator, HarnessError, Input, Unit};
use hallucheck::harness::{report, simulate, ConfigError, RunConfig};
use hallucheck::prompt::{self, load_prompts, PromptRecord};
use hallucheck::scoring::{score_counts, Counts, ImageReport};
use hallucheck::stats::{self, Grouping};
use hallucheck::{jsonl, parse_prompt, triples_of};

#[derive(Parser)]
#[command(name = "hallucheck", version, about = "Score generated images against their prompts by scene-graph question answering")]
struct Cli {
    /// TOML run configuration. Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse prompts into objects, attributes and relations.
    Parse {
        /// Prompts file (JSONL or one per line), or `-` for stdin.
        #[arg(required_unless_present = "text")]
        prompts: Option<PathBuf>,
        /// Parse this text instead of a file.
        #[arg(long, conflicts_with = "prompts")]
        text: Option<String>,
        /// Print triples instead of the parsed structure.
        #[arg(long)]
        triples: bool,
    },
    /// Generate verification questions as JSONL.
    Questions {
        #[arg(required_unless_present = "text")]
        prompts: Option<PathBuf>,
        #[arg(long, conflicts_with = "prompts")]
        text: Option<String>,
    },
    /// Build the scene graph of one image.
    Graph {
        #[arg(long)]
        image: PathBuf,
        /// Prompt text; its objects seed the detector vocabulary.
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        image_id: Option<String>,
        /// Write here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Answer a prompt's questions against a graph file (or an image).
    Qa {
        /// Scene-graph JSON, or an image file.
        input: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        image_id: Option<String>,
    },
    /// Rubric score from a report file or from error counts.
    Score {
        /// Per-image report JSON.
        #[arg(long, required_unless_present = "counts", conflicts_with = "counts")]
        report: Option<PathBuf>,
        /// Prompt the report was scored against.
        #[arg(long, requires = "report")]
        prompt: Option<String>,
        /// `attribute,relation,omission,extraneous`.
        #[arg(long, value_delimiter = ',', requires = "objects")]
        counts: Option<Vec<u32>>,
        /// Distinct object types in the prompt.
        #[arg(long)]
        objects: Option<usize>,
    },
    /// Correlate an output directory's scores with human ratings.
    Stats {
        /// A `run` output directory.
        out: PathBuf,
        #[arg(long)]
        human: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GroupingArg::Pooled)]
        grouping: GroupingArg,
    },
    /// Evaluate every image in the manifest and write reports.
    Run {
        /// Override `paths.output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score identity, single-corruption and random-corruption graphs.
    Simulate {
        /// Defaults to `paths.prompts`, then the bundled corpus.
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Configuration commands.
    Config {
        #[command(subcommand)]
        cmd: ConfigCmd,
    },
}

#[derive(Subcommand)]
enum ConfigCmd {
    /// Print the effective configuration.
    Show,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Pooled,
    PerPrompt,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::Pooled => Grouping::Pooled,
            GroupingArg::PerPrompt => Grouping::PerPrompt,
        }
    }
}

/// Marks errors that should exit with status 2.
#[derive(Debug)]
struct BadConfig(String);

impl std::fmt::Display for BadConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadConfig {}

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    BadConfig(e.to_string()).into()
}

fn harness_err(e: HarnessError) -> anyhow::Error {
    match e {
        HarnessError::Config(c) => config_err(c),
        other => other.into(),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).map_err(config_err),
        None => Ok(RunConfig::default()),
    }
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn prompt_records(path: Option<&Path>, text: Option<&str>) -> Result<Vec<PromptRecord>> {
    match (path, text) {
        (_, Some(t)) => Ok(vec![PromptRecord { id: "p001".into(), text: t.to_string() }]),
        (Some(p), None) => load_prompts(&read_input(p)?).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        (None, None) => bail!("no prompts given"),
    }
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn transport() -> Arc<dyn Transport> {
    Arc::new(UreqTransport)
}

fn print_json(v: serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &v)?;
    writeln!(out)?;
    Ok(())
}

/// Evaluate a single input against a single prompt.
fn evaluate_one(cfg: RunConfig, prompt: &str, input: Input, image_id: &str) -> Result<pipeline::UnitOutput> {
    let records = [PromptRecord { id: "p001".into(), text: prompt.to_string() }];
    let unit = Unit { image_id: image_id.into(), prompt_id: "p001".into(), model_name: "cli".into(), input };
    let ev = Evaluator::new(cfg, &records, std::slice::from_ref(&unit), transport(), &env).map_err(harness_err)?;
    ev.evaluate(&unit).map_err(|f| anyhow::anyhow!("{} failed at {}: {}", f.image_id, f.stage, f.message))
}

fn stem_of(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn read_reports(out: &Path) -> Result<Vec<ImageReport>> {
    let mut reports = Vec::new();
    for model in fs::read_dir(out).with_context(|| format!("reading {}", out.display()))? {
        let model = model?.path();
        if !model.is_dir() {
            continue;
        }
        for f in fs::read_dir(&model)? {
            let p = f?.path();
            if p.to_string_lossy().ends_with(".report.json") {
                let r: ImageReport = serde_json::from_slice(&fs::read(&p)?).with_context(|| format!("parsing {}", p.display()))?;
                reports.push(r);
            }
        }
    }
    reports.sort_by(|a, b| (&a.model_name, &a.image_id).cmp(&(&b.model_name, &b.image_id)));
    Ok(reports)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = || load_config(cli.config.as_deref());
    match cli.cmd {
        Cmd::Parse { ref prompts, ref text, triples } => {
            let lx = hallucheck::Resources::bundled().lexicon;
            let mut failed = false;
            for p in prompt_records(prompts.as_deref(), text.as_deref())? {
                match parse_prompt(&p.id, &p.text, &lx) {
                    Ok(spec) if triples => {
                        for t in triples_of(&spec) {
                            println!("{}\t{t}", p.id);
                        }
                    }
                    Ok(spec) => println!("{}", serde_json::to_string(&spec)?),
                    Err(e) => {
                        eprintln!("{}: {e}", p.id);
                        failed = true;
                    }
                }
            }
            return Ok(ExitCode::from(u8::from(failed)));
        }
        Cmd::Questions { ref prompts, ref text } => {
            let records = prompt_records(prompts.as_deref(), text.as_deref())?;
            let ev = Evaluator::new(cfg()?, &records, &[], transport(), &env).map_err(harness_err)?;
            let qs: Vec<_> = ev.questions().collect();
            print!("{}", jsonl::to_string(&qs));
            for w in &ev.warnings {
                log::warn!("{w}");
            }
            let unparsed: Vec<&str> = records.iter().filter(|r| ev.spec(&r.id).is_none()).map(|r| r.id.as_str()).collect();
            if !unparsed.is_empty() {
                eprintln!("no objects found in: {}", unparsed.join(", "));
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Graph { ref image, ref prompt, ref image_id, ref output } => {
            let mut c = cfg()?;
            c.graph_qa.knowledge = hallucheck::harness::config::Knowledge::Graph;
            let id = image_id.clone().unwrap_or_else(|| stem_of(image));
            let out = evaluate_one(c, prompt, Input::Path(image.clone()), &id)?;
            let bytes = save_graph(out.graph.as_ref().expect("graph mode yields a graph"));
            match output {
                Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
                None => io::stdout().write_all(&bytes)?,
            }
        }
        Cmd::Qa { ref input, ref prompt, ref image_id } => {
            let id = image_id.clone().unwrap_or_else(|| stem_of(input));
            let out = evaluate_one(cfg()?, prompt, Input::Path(input.clone()), &id)?;
            print_json(serde_json::json!({ "results": out.results, "report": out.report }))?;
        }
        Cmd::Score { ref report, ref prompt, ref counts, objects } => {
            let s = match (report, counts) {
                (Some(path), _) => {
                    let r: ImageReport = serde_json::from_str(&read_input(path)?).with_context(|| format!("parsing {}", path.display()))?;
                    let n = match (prompt, objects) {
                        (Some(t), _) => {
                            let lx = hallucheck::Resources::bundled().lexicon;
                            parse_prompt(&r.prompt_id, t, &lx)?.distinct_lemmas().len()
                        }
                        (None, Some(n)) => n,
                        (None, None) => bail!("--report needs --prompt or --objects"),
                    };
                    score_counts(&r.counts, n)
                }
                (None, Some(c)) => {
                    if c.len() != 4 {
                        return Err(config_err("--counts takes four comma-separated values"));
                    }
                    let counts = Counts { attribute: c[0], relation: c[1], omission: c[2], extraneous: c[3] };
                    score_counts(&counts, objects.expect("clap requires --objects"))
                }
                (None, None) => unreachable!("clap requires one of --report, --counts"),
            };
            print_json(serde_json::to_value(s)?)?;
        }
        Cmd::Stats { ref out, ref human, ref gold, grouping } => {
            let reports = read_reports(out)?;
            let open = |p: &Path| fs::File::open(p).map_err(|e| config_err(format!("{}: {e}", p.display())));
            let human = match human {
                Some(p) => Some(stats::read_human_scores(open(p)?, &p.display().to_string()).map_err(config_err)?),
                None => None,
            };
            let gold = match gold {
                Some(p) => Some(stats::read_gold_labels(open(p)?, &p.display().to_string()).map_err(config_err)?),
                None => None,
            };
            let syn = hallucheck::Resources::bundled().synonyms;
            let mut by_model: BTreeMap<&str, Vec<ImageReport>> = BTreeMap::new();
            for r in &reports {
                by_model.entry(&r.model_name).or_default().push(r.clone());
            }
            let mut runs = Vec::new();
            for (m, rs) in by_model {
                runs.push(stats::aggregate_run(m, &rs, human.as_deref(), gold.as_deref(), grouping.into(), &syn)?);
            }
            for (name, body) in report::render_tables(&runs) {
                if name.ends_with(".txt") {
                    println!("{body}");
                }
            }
        }
        Cmd::Run { ref out } => {
            let mut c = cfg()?;
            if let Some(o) = out {
                c.paths.output = o.clone();
            }
            let summary = pipeline::run_pipeline(&c, transport(), &env).map_err(harness_err)?;
            for w in &summary.warnings {
                log::warn!("{w}");
            }
            for f in &summary.failures {
                eprintln!("{} {} [{}]: {}", f.model_name, f.image_id, f.stage, f.message);
            }
            eprintln!(
                "{} images scored, {} failed; reports in {}",
                summary.images_scored,
                summary.images_failed,
                c.paths.output.display()
            );
            return Ok(ExitCode::from(summary.exit_code() as u8));
        }
        Cmd::Simulate { ref prompts, ref out } => {
            let mut c = cfg()?;
            let records = match prompts.as_ref().or(c.paths.prompts.as_ref()) {
                Some(p) => prompt_records(Some(p), None)?,
                None => prompt::bundled_corpus(),
            };
            if let Some(o) = out {
                c.paths.output = o.clone();
            }
            let sim = simulate::run_simulation(&c, &records, transport(), &env).map_err(harness_err)?;
            simulate::write_simulation(&c.paths.output, &sim).map_err(harness_err)?;
            print_json(serde_json::to_value(&sim.summary)?)?;
            return Ok(ExitCode::from(u8::from(!sim.summary.failures.is_empty())));
        }
        Cmd::Config { cmd: ConfigCmd::Show } => {
            print!("{}", cfg()?.to_toml());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<BadConfig>().is_some() || e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
