//! Regenerate `fixtures/demo`: scenes, rendered images, manifest, human
//! scores, gold errors, and service transcripts recorded against the
//! simulated services in both graph and caption mode.
//!
//! cargo run -p hallucheck --example build_demo_fixtures [-- OUT_DIR]

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use hallucheck::clients::sim::{Scene, SceneObject, SceneRelation, SimulatedServices};
use hallucheck::clients::{Mode, OfflineTransport};
use hallucheck::harness::pipeline::{run_pipeline, ManifestEntry};
use hallucheck::harness::RunConfig;
use hallucheck::jsonl;
use hallucheck::prompt::PromptRecord;

const PROMPTS: [(&str, &str); 5] = [
    ("d1", "a red car to the left of a wooden table"),
    ("d2", "a black dog chasing a white cat"),
    ("d3", "a yellow bird above a green tree"),
    ("d4", "a blue cup on a square plate"),
    ("d5", "a cucumber and a green banana"),
];

const CONFIG: &str = r#"[paths]
prompts = "prompts.jsonl"
manifest = "manifest.jsonl"
human_scores = "human_scores.csv"
gold_labels = "gold_errors.csv"
fixtures = "fixtures"
output = "out"

[clients]
mode = "replay"
"#;

fn obj(label: &str, bbox: [f64; 4], rgb: [u8; 3], color: Option<&str>, shape: Option<&str>, texture: Option<&str>) -> SceneObject {
    SceneObject {
        label: label.into(),
        confidence: 0.9,
        bbox,
        rgb,
        color: color.map(Into::into),
        shape: shape.map(Into::into),
        texture: texture.map(Into::into),
    }
}

fn scene(model: &str, prompt: &str, objects: Vec<SceneObject>, relations: &[(usize, usize, &str)], caption: &str) -> Scene {
    Scene {
        image_id: format!("{model}-{prompt}"),
        width: 320,
        height: 240,
        objects,
        relations: relations.iter().map(|&(a, b, r)| SceneRelation { a, b, answer: r.into() }).collect(),
        caption: caption.into(),
    }
}

const RED: [u8; 3] = [200, 30, 30];
const BROWN: [u8; 3] = [120, 80, 40];
const BLACK: [u8; 3] = [20, 20, 20];
const WHITE: [u8; 3] = [250, 250, 250];
const GREEN: [u8; 3] = [40, 160, 40];
const YELLOW: [u8; 3] = [230, 210, 40];
const BLUE: [u8; 3] = [40, 60, 200];
const GRAY: [u8; 3] = [128, 128, 128];

fn car(color: &str, rgb: [u8; 3]) -> SceneObject {
    obj("car", [30.0, 110.0, 120.0, 80.0], rgb, Some(color), None, Some("metallic"))
}
fn table() -> SceneObject {
    obj("table", [160.0, 110.0, 100.0, 80.0], BROWN, Some("brown"), Some("rectangular"), Some("wooden"))
}
fn dog(color: &str, rgb: [u8; 3]) -> SceneObject {
    obj("dog", [40.0, 120.0, 90.0, 60.0], rgb, Some(color), None, Some("furry"))
}
fn cat(color: &str, rgb: [u8; 3]) -> SceneObject {
    obj("cat", [140.0, 130.0, 70.0, 50.0], rgb, Some(color), None, Some("furry"))
}
fn tree(y: f64) -> SceneObject {
    obj("tree", [110.0, y, 100.0, 130.0], GREEN, Some("green"), Some("tall"), None)
}
fn bird(y: f64) -> SceneObject {
    obj("bird", [130.0, y, 60.0, 30.0], YELLOW, Some("yellow"), None, None)
}
fn cup(x: f64, y: f64) -> SceneObject {
    obj("cup", [x, y, 60.0, 50.0], BLUE, Some("blue"), Some("cylindrical"), Some("ceramic"))
}
fn plate() -> SceneObject {
    obj("plate", [100.0, 150.0, 140.0, 50.0], WHITE, Some("white"), Some("square"), Some("ceramic"))
}
fn cucumber() -> SceneObject {
    obj("cucumber", [40.0, 100.0, 110.0, 40.0], GREEN, Some("green"), Some("long"), None)
}
fn banana(color: &str, rgb: [u8; 3]) -> SceneObject {
    obj("banana", [190.0, 100.0, 100.0, 40.0], rgb, Some(color), Some("curved"), None)
}

/// Every caption leaves out one prompt attribute that the scene has.
fn scenes() -> Vec<Scene> {
    let chase = [(0, 1, "chasing")];
    vec![
        scene("faithful", "d1", vec![car("red", RED), table()], &[], "A car parked to the left of a wooden table."),
        scene("faithful", "d2", vec![dog("black", BLACK), cat("white", WHITE)], &chase, "A black dog chasing a cat."),
        scene("faithful", "d3", vec![tree(90.0), bird(20.0)], &[], "A bird above a green tree."),
        scene("faithful", "d4", vec![cup(140.0, 100.0), plate()], &[], "A blue cup on a plate."),
        scene("faithful", "d5", vec![cucumber(), banana("green", GREEN)], &[], "A cucumber and a banana."),
        scene("drifty", "d1", vec![car("blue", BLUE), table()], &[], "A car to the left of a wooden table."),
        scene("drifty", "d2", vec![dog("black", BLACK)], &[], "A dog running."),
        scene("drifty", "d3", vec![tree(40.0), bird(200.0)], &[], "A bird below a green tree."),
        scene(
            "drifty",
            "d4",
            vec![cup(140.0, 100.0), plate(), obj("spoon", [260.0, 150.0, 40.0, 15.0], GRAY, Some("silver"), None, Some("metallic"))],
            &[],
            "A blue cup on a plate next to a spoon.",
        ),
        scene("drifty", "d5", vec![cucumber(), banana("yellow", YELLOW)], &[], "A cucumber and a banana."),
        scene(
            "sketchy",
            "d1",
            vec![car("red", RED), obj("chair", [200.0, 110.0, 80.0, 90.0], BROWN, Some("brown"), None, Some("wooden"))],
            &[],
            "A car next to a chair.",
        ),
        scene("sketchy", "d2", vec![dog("brown", BROWN), cat("gray", GRAY)], &chase, "A brown dog chasing a cat."),
        scene("sketchy", "d3", vec![tree(90.0), bird(20.0)], &[], "A yellow bird above a tree."),
        scene("sketchy", "d4", vec![cup(250.0, 150.0), plate()], &[], "A cup to the right of a square plate."),
        scene("sketchy", "d5", vec![banana("green", GREEN)], &[], "A banana."),
    ]
}

const HUMAN: &str = "image_id,prompt_id,points,annotator_id
faithful-d1,d1,7,a1
faithful-d1,d1,7,a2
faithful-d2,d2,7,a1
faithful-d2,d2,6,a2
faithful-d3,d3,7,a1
faithful-d3,d3,7,a2
faithful-d4,d4,7,a1
faithful-d4,d4,7,a2
faithful-d5,d5,7,a1
faithful-d5,d5,7,a2
drifty-d1,d1,5,a1
drifty-d1,d1,5,a2
drifty-d2,d2,3,a1
drifty-d2,d2,2,a2
drifty-d3,d3,3,a1
drifty-d3,d3,3,a2
drifty-d4,d4,6,a1
drifty-d4,d4,6,a2
drifty-d5,d5,5,a1
drifty-d5,d5,4,a2
sketchy-d1,d1,3,a1
sketchy-d1,d1,2,a2
sketchy-d2,d2,5,a1
sketchy-d2,d2,5,a2
sketchy-d3,d3,7,a1
sketchy-d3,d3,6,a2
sketchy-d4,d4,3,a1
sketchy-d4,d4,3,a2
sketchy-d5,d5,3,a1
sketchy-d5,d5,3,a2
";

const GOLD: &str = "image_id,error_type,target
drifty-d1,attribute,car.color
drifty-d2,omission,cat
drifty-d3,relation,bird/tree
drifty-d4,extraneous,spoon
drifty-d5,attribute,banana.color
sketchy-d1,omission,table
sketchy-d1,extraneous,chair
sketchy-d2,attribute,dog.color
sketchy-d2,attribute,cat.color
sketchy-d4,relation,cup/plate
sketchy-d5,omission,cucumber
";

fn main() -> anyhow::Result<()> {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo")
    });
    let _ = fs::remove_dir_all(root.join("fixtures"));
    let _ = fs::remove_dir_all(root.join("images"));
    fs::create_dir_all(&root)?;

    let prompts: Vec<PromptRecord> = PROMPTS.iter().map(|(id, t)| PromptRecord { id: (*id).into(), text: (*t).into() }).collect();
    fs::write(root.join("prompts.jsonl"), jsonl::to_string(&prompts))?;
    let scenes = scenes();
    fs::write(root.join("scenes.json"), serde_json::to_string_pretty(&scenes)? + "\n")?;
    let mut manifest = Vec::new();
    for s in &scenes {
        let (model, prompt_id) = s.image_id.split_once('-').expect("ids are model-prompt");
        let rel = PathBuf::from("images").join(model).join(format!("{}.png", s.image_id));
        fs::create_dir_all(root.join(&rel).parent().expect("has parent"))?;
        fs::write(root.join(&rel), s.render_png())?;
        manifest.push(ManifestEntry { image_id: s.image_id.clone(), prompt_id: prompt_id.into(), model_name: model.into(), path: rel });
    }
    fs::write(root.join("manifest.jsonl"), jsonl::to_string(&manifest))?;
    fs::write(root.join("human_scores.csv"), HUMAN)?;
    fs::write(root.join("gold_errors.csv"), GOLD)?;
    fs::write(root.join("config.toml"), CONFIG)?;
    let captions = CONFIG.replace("output = \"out\"", "output = \"out_captions\"") + "\n[graph_qa]\nknowledge = \"captions\"\n";
    fs::write(root.join("config_captions.toml"), captions)?;

    let services = Arc::new(SimulatedServices::new(scenes));
    let env = |k: &str| {
        let service = k.strip_prefix("HALLU_")?.split('_').next()?.to_lowercase();
        Some(if k.ends_with("_URL") { format!("sim://demo/{service}") } else { "demo".into() })
    };
    let scratch = tempfile::tempdir()?;
    for name in ["config.toml", "config_captions.toml"] {
        let mut cfg = RunConfig::load(&root.join(name))?;
        cfg.clients.mode = Mode::Record;
        cfg.paths.output = scratch.path().join(name);
        let s = run_pipeline(&cfg, services.clone(), &env)?;
        anyhow::ensure!(s.failures.is_empty(), "{name}: {:?}", s.failures);
        cfg.clients.mode = Mode::Replay;
        let s = run_pipeline(&cfg, Arc::new(OfflineTransport), &|_| None)?;
        anyhow::ensure!(s.failures.is_empty(), "{name} replay: {:?}", s.failures);
        for m in &s.models {
            println!("{name}: {} mean {:.4} pearson {:?}", m.model_name, m.mean_normalized, m.pearson);
        }
    }
    println!("wrote {}", root.display());
    Ok(())
}
