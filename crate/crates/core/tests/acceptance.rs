//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always print; exits non-zero if any check fails.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hallucheck::clients::{InstrumentedTransport, OfflineTransport, Transport};
use hallucheck::harness::pipeline::{run_pipeline, Evaluator, Input, Unit};
use hallucheck::harness::simulate::{self, ideal_graph_of};
use hallucheck::harness::RunConfig;
use hallucheck::prompt::bundled_corpus;
use hallucheck::scoring::{score_counts, Counts, ErrorType};
use hallucheck::stats::{kendall_tau, normalize_target, pearson, spearman_rho};
use hallucheck::{parse_prompt, triples_of, Resources};

type Check = Result<String, String>;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn demo_dir() -> PathBuf {
    crate_dir().join("../../fixtures/demo")
}

fn offline() -> Arc<dyn Transport> {
    Arc::new(OfflineTransport)
}

fn no_env(_: &str) -> Option<String> {
    None
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rubric_table() -> Check {
    let text = fs::read_to_string(crate_dir().join("tests/data/rubric_oracle_3obj.csv")).map_err(|e| e.to_string())?;
    let mut cells = 0;
    let mut diffs = Vec::new();
    for line in text.lines().skip(1) {
        let v: Vec<u32> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let c = Counts { attribute: v[0], relation: v[1], omission: v[2], extraneous: v[3] };
        let got = score_counts(&c, 3);
        if u32::from(got.points) != v[4] || (got.normalized - (f64::from(v[4]) - 1.0) / 6.0).abs() > 1e-12 {
            diffs.push(line.to_string());
        }
        cells += 1;
    }
    ensure(cells == 6 * 6 * 6 * 6, format!("table has {cells} cells"))?;
    ensure(diffs.is_empty(), format!("{} diffs, first {:?}", diffs.len(), diffs.first()))?;
    Ok(format!("{cells} cells, 0 diffs"))
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in 0..i {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1.0,
                (false, true) => ty += 1.0,
                _ if dx * dy > 0.0 => c += 1.0,
                _ => d += 1.0,
            }
        }
    }
    (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
}

/// Average rank by counting smaller and equal values.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn correlations() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..10)
                .map(|_| if trial % 2 == 0 { rng.gen_range(-5.0..5.0) } else { f64::from(rng.gen_range(0..4)) })
                .collect()
        };
        let (x, y) = loop {
            let (x, y) = (draw(&mut rng), draw(&mut rng));
            let varied = |v: &[f64]| v.iter().any(|a| *a != v[0]);
            if varied(&x) && varied(&y) {
                break (x, y);
            }
        };
        let p = pearson(&x, &y).map_err(|e| e.to_string())?;
        let t = kendall_tau(&x, &y).map_err(|e| e.to_string())?;
        let s = spearman_rho(&x, &y).map_err(|e| e.to_string())?;
        let pairs = [
            (p, brute_pearson(&x, &y)),
            (t, brute_tau_b(&x, &y)),
            (s, brute_pearson(&brute_ranks(&x), &brute_ranks(&y))),
        ];
        for (got, want) in pairs {
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= 1e-9, format!("trial {trial}: {got} vs {want}"))?;
            ensure((-1.0 - 1e-12..=1.0 + 1e-12).contains(&got), format!("trial {trial}: {got} out of range"))?;
        }
        let swapped = [pearson(&y, &x), kendall_tau(&y, &x), spearman_rho(&y, &x)];
        for (a, b) in [p, t, s].iter().zip(swapped) {
            ensure((a - b.unwrap()).abs() <= 1e-12, format!("trial {trial}: asymmetric"))?;
        }
        let mono: Vec<f64> = x.iter().map(|v| (v * 0.7).exp()).collect();
        ensure((kendall_tau(&mono, &y).unwrap() - t).abs() <= 1e-12, format!("trial {trial}: tau not rank-invariant"))?;
        ensure((spearman_rho(&mono, &y).unwrap() - s).abs() <= 1e-12, format!("trial {trial}: rho not rank-invariant"))?;
        let affine: Vec<f64> = x.iter().map(|v| 3.0 * v + 2.0).collect();
        ensure((pearson(&affine, &y).unwrap() - p).abs() <= 1e-9, format!("trial {trial}: pearson not affine-invariant"))?;
    }
    Ok(format!("20 trials, max deviation {worst:.1e}"))
}

fn identity() -> Check {
    let corpus = bundled_corpus();
    let start = Instant::now();
    let ev = Evaluator::new(RunConfig::default(), &corpus, &[], offline(), &no_env).map_err(|e| e.to_string())?;
    let mut units = Vec::new();
    for p in &corpus {
        let spec = ev.spec(&p.id).ok_or_else(|| format!("{} does not parse", p.id))?;
        let g = ideal_graph_of(spec, &ev.res.synonyms).map_err(|e| e.to_string())?;
        units.push(Unit { image_id: p.id.clone(), prompt_id: p.id.clone(), model_name: "identity".into(), input: Input::Graph(g) });
    }
    let out = ev.run(&units);
    let took = start.elapsed();
    ensure(out.failures.is_empty(), format!("failures: {:?}", out.failures))?;
    let imperfect: Vec<&str> = out.outputs.iter().filter(|o| o.report.points != 7).map(|o| o.report.image_id.as_str()).collect();
    ensure(imperfect.is_empty(), format!("not 7: {imperfect:?}"))?;
    ensure(out.outputs.len() == corpus.len(), "missing outputs")?;
    ensure(took < Duration::from_secs(10), format!("took {took:?}"))?;
    Ok(format!("{}/{} prompts score 7 in {:.0?}", out.outputs.len(), corpus.len(), took))
}

fn simulation() -> Result<simulate::Simulation, String> {
    simulate::run_simulation(&RunConfig::default(), &bundled_corpus(), offline(), &no_env).map_err(|e| e.to_string())
}

fn injection(sim: &simulate::Simulation) -> Check {
    let syn = &sim.evaluator.res.synonyms;
    ensure(sim.summary.failures.is_empty(), format!("failures: {:?}", sim.summary.failures))?;
    let key = |image: &str, t: ErrorType, target: &str| (image.to_string(), t, normalize_target(target, syn));
    let mut summary = Vec::new();
    for t in ErrorType::ALL {
        let predicted: BTreeSet<_> = sim
            .outcome
            .outputs
            .iter()
            .filter(|o| o.report.model_name == simulate::INJECTED_MODEL)
            .flat_map(|o| o.report.findings.iter().filter(|f| f.error_type == t).map(|f| key(&o.report.image_id, t, &f.target)))
            .collect();
        let expected: BTreeSet<_> = sim
            .injection_log
            .iter()
            .filter(|g| g.error_type == t)
            .map(|g| key(&g.image_id, t, &g.target))
            .collect();
        ensure(!expected.is_empty(), format!("{t}: no applicable injections"))?;
        let tp = predicted.intersection(&expected).count();
        ensure(predicted == expected, format!("{t}: {} predicted, {} injected, {tp} agree", predicted.len(), expected.len()))?;
        let f1 = sim.summary.injection_f1.get(&t).map(|s| s.f1);
        ensure(f1 == Some(1.0), format!("{t}: reported F1 {f1:?}"))?;
        summary.push(format!("{t} {tp}/{}", expected.len()));
    }
    Ok(format!("F1 = 1.0 for all types ({})", summary.join(", ")))
}

fn ranking(sim: &simulate::Simulation) -> Check {
    let s = &sim.summary;
    let means: Vec<f64> = s.sweep.iter().map(|m| m.mean_normalized).collect();
    let images: usize = s.sweep.iter().map(|m| m.images).sum();
    let rates: Vec<f64> = s.sweep.iter().map(|m| m.rate).collect();
    ensure(rates == [0.0, 0.1, 0.3], format!("rates {rates:?}"))?;
    ensure(means.windows(2).all(|w| w[0] > w[1]), format!("means not strictly decreasing: {means:?}"))?;
    ensure(images >= 150, format!("only {images} images"))?;
    let rho = s.sweep_spearman.ok_or("spearman undefined")?;
    ensure(rho <= -0.9, format!("rho = {rho:.4}"))?;
    Ok(format!("means {:.3} > {:.3} > {:.3}, rho = {rho:.4} over {images} images", means[0], means[1], means[2]))
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn replay() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let net = Arc::new(InstrumentedTransport::new(offline()));
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = RunConfig::load(&demo_dir().join("config.toml")).map_err(|e| e.to_string())?;
        cfg.paths.output = tmp.path().join(run);
        let s = run_pipeline(&cfg, net.clone(), &no_env).map_err(|e| e.to_string())?;
        ensure(s.failures.is_empty(), format!("failures: {:?}", s.failures))?;
        trees.push(tree_bytes(&cfg.paths.output));
    }
    ensure(net.calls() == 0, format!("{} transport calls", net.calls()))?;
    ensure(trees[0] == trees[1], "output directories differ")?;
    Ok(format!("{} files identical, 0 transport calls", trees[0].len()))
}

fn goldens() -> Check {
    let lx = Resources::bundled().lexicon;
    let corpus = bundled_corpus();
    for must in ["Cat on the top of Sofa", "a cucumber and a green banana"] {
        ensure(corpus.iter().any(|p| p.text == must), format!("corpus lacks {must:?}"))?;
    }
    let mut diffs = Vec::new();
    for p in &corpus {
        let spec = parse_prompt(&p.id, &p.text, &lx).map_err(|e| e.to_string())?;
        let mut got = format!("# {}\n", p.text);
        for t in triples_of(&spec) {
            got.push_str(&format!("{:?}\t{}\n", t.kind, t).to_lowercase());
        }
        let want = fs::read_to_string(crate_dir().join(format!("tests/golden/{}.triples", p.id))).unwrap_or_default();
        if got != want {
            diffs.push(p.id.clone());
        }
    }
    ensure(diffs.is_empty(), format!("diffs in {diffs:?}"))?;
    Ok(format!("{} prompts, 0 diffs", corpus.len()))
}

fn ablation() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut means = Vec::new();
    for name in ["config.toml", "config_captions.toml"] {
        let mut cfg = RunConfig::load(&demo_dir().join(name)).map_err(|e| e.to_string())?;
        cfg.paths.output = tmp.path().join(name);
        let s = run_pipeline(&cfg, offline(), &no_env).map_err(|e| e.to_string())?;
        ensure(s.failures.is_empty(), format!("{name}: {:?}", s.failures))?;
        let (sum, n) = s.models.iter().fold((0.0, 0), |(a, n), m| (a + m.mean_normalized * m.images as f64, n + m.images));
        means.push(sum / n as f64);
    }
    ensure(means[0] > means[1], format!("graph {:.4} vs captions {:.4}", means[0], means[1]))?;
    Ok(format!("graph {:.4} > captions {:.4}", means[0], means[1]))
}

fn main() {
    let sim = std::cell::OnceCell::new();
    let sim = || sim.get_or_init(simulation).as_ref().map_err(Clone::clone);
    let checks: [(&str, &dyn Fn() -> Check); 8] = [
        ("rubric exhaustiveness", &rubric_table),
        ("correlation correctness", &correlations),
        ("identity soundness", &identity),
        ("injection completeness", &|| injection(sim()?)),
        ("ranking sanity", &|| ranking(sim()?)),
        ("replay determinism", &replay),
        ("parser goldens", &goldens),
        ("ablation direction", &ablation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match r {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
