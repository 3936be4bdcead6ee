//! End-to-end CLI tests: the four-stage flow on a scripted config, prompt
//! dumps against the library renderers, and the documented exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use hydrofield::corpus::CorpusManifest;
use hydrofield::prompt::{chain_of_thought_prompt, single_step_prompt, validation_prompt, Strictness};
use hydrofield::schema::builtin_schema;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hydrofield"))
}

fn write_scripted_config(root: &Path) -> PathBuf {
    let corpus = root.join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    std::fs::write(
        corpus.join("doc.txt"),
        "The Riverbend Dam is located in Mason County. The installed capacity is 18 MW. \
         A minimum flow of 180 cfs shall be maintained.",
    )
    .unwrap();
    let config = serde_json::json!({
        "corpus_dir": corpus,
        "out_dir": root.join("out"),
        "cache_dir": root.join("cache"),
        "methods": ["single_step", "reflective_stringent"],
        "models": [
            {"name": "mock", "backend": {"kind": "scripted", "default": "all_null", "rules": [
                {"pattern": "single_step", "response": "{\"Dam_Name\": \"Riverbend Dam\"}"},
                {"pattern": "validate_", "response": "ACCEPT"}
            ]}},
            {"name": "traditional", "backend": {"kind": "baseline"}}
        ],
        "judge": {"name": "judge", "backend": {"kind": "scripted", "default": "all_null", "rules": [
            {"pattern": "one key, \"Dam_Name\"", "response": "{\"Dam_Name\": \"Riverbend Dam\"}"}
        ]}}
    });
    let path = root.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn full_flow_through_the_binary() {
    let root = tempfile::tempdir().unwrap();
    let config = write_scripted_config(root.path());

    for subcommand in ["chunk", "bronze", "run-matrix", "evaluate"] {
        let output = bin().arg("--config").arg(&config).arg(subcommand).output().unwrap();
        assert!(
            output.status.success(),
            "{subcommand} failed:\n{}\n{}",
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr)
        );
    }
    let out = root.path().join("out");
    for file in [
        "corpus.json",
        "bronze.json",
        "results_mock_single_step.json",
        "results_mock_reflective_stringent.json",
        "results_traditional_single_step.json",
        "run_manifest.json",
        "eval_report.json",
        "eval_report.csv",
        "tables.txt",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    // Baseline participates in the single-step column only.
    assert!(!out.join("results_traditional_reflective_stringent.json").exists());

    let tables = std::fs::read_to_string(out.join("tables.txt")).unwrap();
    assert!(tables.contains("F1 Score Results"));
    assert!(tables.contains("Validation Rejection Rates"));
}

#[test]
fn dump_prompt_matches_library_rendering() {
    let root = tempfile::tempdir().unwrap();
    let config = write_scripted_config(root.path());
    let status = bin().arg("--config").arg(&config).arg("chunk").status().unwrap();
    assert!(status.success());

    let manifest = CorpusManifest::load(&root.path().join("out/corpus.json")).unwrap();
    let chunk = manifest.chunk("doc#0000").unwrap();
    let schema = builtin_schema();

    let dump = |args: &[&str]| {
        let output = bin()
            .arg("--config")
            .arg(&config)
            .arg("dump-prompt")
            .args(args)
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        String::from_utf8(output.stdout).unwrap()
    };

    assert_eq!(
        dump(&["--method", "single_step", "--chunk-id", "doc#0000"]),
        single_step_prompt(chunk, &schema).render()
    );
    assert_eq!(
        dump(&["--method", "chain_of_thought", "--chunk-id", "doc#0000"]),
        chain_of_thought_prompt(chunk, &schema).render()
    );
    assert_eq!(
        dump(&[
            "--method",
            "validate_stringent",
            "--chunk-id",
            "doc#0000",
            "--field",
            "Minimum_Flow",
            "--value",
            "180 cfs"
        ]),
        validation_prompt(chunk, schema.field("Minimum_Flow").unwrap(), "180 cfs", Strictness::Stringent)
            .render()
    );
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();

    // 2: config file missing.
    let status = bin()
        .arg("--config")
        .arg(root.path().join("nope.json"))
        .arg("chunk")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // 2: running the matrix before chunking.
    let config = write_scripted_config(root.path());
    let status = bin().arg("--config").arg(&config).arg("run-matrix").status().unwrap();
    assert_eq!(status.code(), Some(2));

    // 2: invalid config contents.
    let bad = root.path().join("bad.json");
    std::fs::write(&bad, r#"{"corpus_paths": [], "models": [], "methods": [], "out_dir": "o"}"#)
        .unwrap();
    let status = bin().arg("--config").arg(&bad).arg("chunk").status().unwrap();
    assert_eq!(status.code(), Some(2));

    // 1: a pair fails (strict scripted backend with no matching rules).
    let corpus = root.path().join("corpus");
    let failing = serde_json::json!({
        "corpus_dir": corpus,
        "out_dir": root.path().join("out-failing"),
        "methods": ["single_step"],
        "models": [
            {"name": "empty", "backend": {"kind": "scripted", "default": "error"}}
        ]
    });
    let failing_path = root.path().join("failing.json");
    std::fs::write(&failing_path, serde_json::to_string(&failing).unwrap()).unwrap();
    let status = bin().arg("--config").arg(&failing_path).arg("chunk").status().unwrap();
    assert!(status.success());
    let status = bin().arg("--config").arg(&failing_path).arg("run-matrix").status().unwrap();
    assert_eq!(status.code(), Some(1));

    // 0: warnings only (empty document) still succeed.
    std::fs::write(corpus.join("empty.txt"), "").unwrap();
    let status = bin().arg("--config").arg(&config).arg("chunk").status().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn cli_overrides_take_effect() {
    let root = tempfile::tempdir().unwrap();
    let config = write_scripted_config(root.path());
    let alt_out = root.path().join("alt-out");
    let status = bin()
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&alt_out)
        .arg("chunk")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(alt_out.join("corpus.json").exists());
}
