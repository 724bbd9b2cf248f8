//! Corpus prompts against checked-in triple listings.
//! `UPDATE_GOLDEN=1 cargo test -p hallucheck --test parser_golden` rewrites them.

use std::path::PathBuf;

use hallucheck::prompt::bundled_corpus;
use hallucheck::{parse_prompt, triples_of, Resources};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn listing(id: &str, text: &str, lx: &hallucheck::Lexicon) -> String {
    let spec = parse_prompt(id, text, lx).unwrap();
    let mut out = format!("# {text}\n");
    for t in triples_of(&spec) {
        out.push_str(&format!("{:?}\t{}\n", t.kind, t).to_lowercase());
    }
    out
}

#[test]
fn corpus_matches_goldens() {
    let lx = Resources::bundled().lexicon;
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut diffs = Vec::new();
    for p in bundled_corpus() {
        let got = listing(&p.id, &p.text, &lx);
        let path = golden_dir().join(format!("{}.triples", p.id));
        if update {
            std::fs::write(&path, &got).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_default();
        if got != want {
            diffs.push(format!("{}:\n--- golden\n{want}+++ parsed\n{got}", p.id));
        }
    }
    assert!(diffs.is_empty(), "{} prompt(s) differ:\n{}", diffs.len(), diffs.join("\n"));
}

#[test]
fn worked_examples() {
    let lx = Resources::bundled().lexicon;
    assert_eq!(
        listing("x", "Cat on the top of Sofa", &lx),
        "# Cat on the top of Sofa\nexistence\tcat | exists | true\nexistence\tsofa | exists | true\nspatial\tcat | on the top of | sofa\n"
    );
    let l = listing("y", "a cucumber and a green banana", &lx);
    assert!(l.contains("attributebinding\tbanana | has_color | green"), "{l}");
    assert!(!l.contains("cucumber | has_color"), "{l}");
}
