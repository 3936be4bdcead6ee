//! Golden-file tests pinning every prompt template. Template text is part of
//! the harness contract: any change must be deliberate, show up in review as
//! a golden diff, and bump PROMPT_VERSION.
//!
//! Regenerate after an intentional change with:
//!   cargo test -p hydrofield --test golden_prompts -- --ignored regen

use std::path::PathBuf;

use hydrofield::corpus::{chunk_document, ChunkingConfig, DocumentChunk, SourceDocument};
use hydrofield::prompt::{
    bronze_judge_prompt, categorical_prompts, chain_of_thought_prompt, single_step_prompt,
    two_step_extract_prompt, two_step_presence_prompt, validation_prompt, Conservatism,
    Strictness,
};
use hydrofield::schema::builtin_schema;

const FIXTURE_TEXT: &str = "The Petenwell Hydroelectric Project is located on the Wisconsin \
River in Juneau County, Wisconsin. The project operates with an installed capacity of 15 MW \
and maintains a minimum flow of 250 cfs below the dam.";

fn fixture_chunk() -> DocumentChunk {
    let doc = SourceDocument::new("fixture", FIXTURE_TEXT);
    chunk_document(&doc, &ChunkingConfig::default()).unwrap().remove(0)
}

fn rendered(name: &str) -> (String, String) {
    let schema = builtin_schema();
    let chunk = fixture_chunk();
    let text = match name {
        "single_step" => single_step_prompt(&chunk, &schema).render(),
        "two_step_presence" => two_step_presence_prompt(&chunk, &schema).render(),
        "two_step_extract_basic" => {
            two_step_extract_prompt(&chunk, &schema, &["Dam_Name", "County", "Power_Capacity"])
                .unwrap()
                .render()
        }
        "categorical" => categorical_prompts(&chunk, &schema)
            .iter()
            .map(|b| b.render())
            .collect::<Vec<_>>()
            .join("\n"),
        "chain_of_thought" => chain_of_thought_prompt(&chunk, &schema).render(),
        "validate_lenient" => {
            validation_prompt(&chunk, schema.field("Minimum_Flow").unwrap(), "250 cfs", Strictness::Lenient)
                .render()
        }
        "validate_moderate" => {
            validation_prompt(&chunk, schema.field("Minimum_Flow").unwrap(), "250 cfs", Strictness::Moderate)
                .render()
        }
        "validate_stringent" => {
            validation_prompt(&chunk, schema.field("Minimum_Flow").unwrap(), "250 cfs", Strictness::Stringent)
                .render()
        }
        "bronze_judge_strict" => {
            bronze_judge_prompt(&chunk, schema.field("Power_Capacity").unwrap(), Conservatism::Strict)
                .render()
        }
        "bronze_judge_balanced" => {
            bronze_judge_prompt(&chunk, schema.field("Power_Capacity").unwrap(), Conservatism::Balanced)
                .render()
        }
        other => panic!("unknown golden {other}"),
    };
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/{name}.txt"));
    (text, path.display().to_string())
}

const GOLDEN_NAMES: [&str; 10] = [
    "single_step",
    "two_step_presence",
    "two_step_extract_basic",
    "categorical",
    "chain_of_thought",
    "validate_lenient",
    "validate_moderate",
    "validate_stringent",
    "bronze_judge_strict",
    "bronze_judge_balanced",
];

#[test]
fn golden_prompts_match() {
    for name in GOLDEN_NAMES {
        let (text, path) = rendered(name);
        let want = std::fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("missing golden file {path}; run the regen test"));
        assert_eq!(text, want, "template drift for {name}; regen if intentional");
    }
}

#[test]
#[ignore = "writes golden files; run only after an intentional template change"]
fn regen() {
    std::fs::create_dir_all(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden"),
    )
    .unwrap();
    for name in GOLDEN_NAMES {
        let (text, path) = rendered(name);
        std::fs::write(&path, text).unwrap();
        println!("wrote {path}");
    }
}
