//! End-to-end checks of the command layer, run in-process through
//! `execute` so exit codes, streams and environment handling are covered
//! without spawning the binary.

use std::path::PathBuf;

use jsonschema::JSONSchema;
use serde_json::Value;

use super::{execute, Invocation};
use crate::commands::Env;

fn run_env(line: &str, env: &Env) -> Invocation {
    execute(std::iter::once("vitas-kit").chain(line.split_whitespace()), env)
}

fn run(line: &str) -> Invocation {
    run_env(line, &Env::default())
}

fn json_ok(line: &str) -> Value {
    let out = run(line);
    assert_eq!(out.code, 0, "{line}: {}", out.stderr);
    serde_json::from_str(&out.stdout).unwrap()
}

fn assert_valid(schema_name: &str, value: &Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas").join(schema_name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let schema = JSONSchema::compile(&serde_json::from_str(&text).unwrap()).unwrap();
    let msgs: Vec<String> = match schema.validate(value) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{e} at {}", e.instance_path)).collect(),
    };
    panic!("{schema_name}: {msgs:?}");
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vitas-kit-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn assert_fails(line: &str, code: u8) {
    let out = run(line);
    assert_eq!(out.code, code, "{line}: {}", out.stderr);
    assert!(out.stdout.is_empty(), "{line}");
    assert!(!out.stderr.is_empty(), "{line}");
}

#[test]
fn cyclic_build_reports_gap() {
    let v = json_ok("mapping build --kind cyclic --l 10 --json");
    assert!(v["influence_gap"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["l"], 10);
    assert_valid("mapping.schema.json", &v);
}

#[test]
fn canonical_count_matches_library() {
    let out = run("space count --space deit-small --canonical");
    assert_eq!(out.code, 0);
    let spec = vitas_core::space::load_space("deit-small").unwrap();
    let expected = vitas_core::space::count_space(&spec, true).total;
    assert_eq!(out.stdout.trim(), expected.to_string());
    let parsed: num_bigint::BigUint = out.stdout.trim().parse().unwrap();
    assert_eq!(parsed, expected);
}

#[test]
fn usage_errors_exit_1() {
    assert_fails("frobnicate", 1);
    assert_fails("mapping build --kind zigzag --l 4", 1);
    assert_fails("mapping build --kind cyclic", 1);
    assert_fails("cost --reference deit-tiny --space deit-tiny", 1);
}

#[test]
fn help_and_version_succeed() {
    for line in ["--help", "--version", "search --help", "mapping refine --help", "help space"] {
        let out = run(line);
        assert_eq!(out.code, 0, "{line}");
        assert!(!out.stdout.is_empty(), "{line}");
    }
    assert!(run("--version").stdout.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn validation_errors_exit_2() {
    assert_fails("mapping enumerate --l 9", 2);
    assert_fails("mapping build --kind cyclic --l 0", 2);
    assert_fails("space count --space no-such-space", 2);
    assert_fails("cost --space deit-tiny --encoding 1,2,3", 2);
    assert_fails("search --space deit-tiny --budget-gflops 1 --parents 99", 2);
    assert_fails("search --space deit-tiny --budget-gflops 1 --evaluator oracle", 2);
    assert_fails("search --space deit-tiny --budget-gflops 1 --evaluator cmd:", 2);
    assert_fails("simulate --kind cyclic --l 0 --steps 10", 2);

    let bad = scratch("bad.space");
    std::fs::write(&bad, "name = x\nfamily = twins\n").unwrap();
    assert_fails(&format!("space count --space {}", bad.display()), 2);
}

#[test]
fn runtime_failures_exit_3() {
    // no architecture fits in a 1 MFLOP budget
    assert_fails("search --space deit-tiny --budget-gflops 0.001 --population 4 --generations 1 --parents 2", 3);
    assert_fails(
        "search --space deit-tiny --budget-gflops 2 --population 4 --generations 1 --parents 2 \
         --evaluator cmd:/nonexistent/scorer",
        3,
    );
}

#[test]
fn outputs_validate_against_schemas() {
    assert_valid("mapping.schema.json", &json_ok("mapping refine --l 7 --iters 2000 --seed 3 --json"));
    let v = json_ok("mapping build --kind bilateral --l 5 --json");
    assert_eq!(v["matrix"].as_array().unwrap().len(), 2);
    assert_eq!(v["cost_factor"], 2);
    assert_valid("mapping.schema.json", &v);
    assert_valid("mapping.schema.json", &json_ok("mapping enumerate --l 4 --json"));

    assert_valid("space-count.schema.json", &json_ok("space count --space twins-base --json"));
    let v = json_ok("space sample --space twins-tiny --count 3 --seed 5 --json");
    assert_eq!(v["encodings"].as_array().unwrap().len(), 3);
    assert_valid("space-sample.schema.json", &v);
    let enc = v["encodings"][0].as_str().unwrap();
    assert_valid(
        "space-canonicalize.schema.json",
        &json_ok(&format!("space canonicalize --space twins-tiny --encoding {enc} --json")),
    );

    assert_valid("cost.schema.json", &json_ok("cost --reference deit-small --json"));
    assert_valid("cost.schema.json", &json_ok("cost --space twins-small --encoding min --json"));

    let csv = scratch("paths.csv");
    let mut text = String::from("flops,score\n");
    for i in 0..40 {
        let f = 0.5 + i as f64 * 0.05;
        text.push_str(&format!("{f},{}\n", 70.0 + 3.0 * f + ((i * 7) % 5) as f64 * 0.1));
    }
    std::fs::write(&csv, text).unwrap();
    let v = json_ok(&format!("rank --input {} --groups 4 --json", csv.display()));
    assert_eq!(v["paths"], 40);
    assert_valid("rank.schema.json", &v);

    let v = json_ok(
        "search --space deit-tiny --budget-gflops 1.5 --population 12 --generations 3 --parents 6 --seed 2 --json",
    );
    assert_eq!(v["evaluations"], 36);
    assert_valid("search.schema.json", &v);
    for ind in v["front"].as_array().unwrap() {
        assert!(ind["flops_g"].as_f64().unwrap() <= 1.5);
    }
}

#[test]
fn rank_rejects_bad_input() {
    let csv = scratch("bad.csv");
    std::fs::write(&csv, "flops,score\n1.0,abc\n").unwrap();
    assert_fails(&format!("rank --input {}", csv.display()), 2);
    assert_fails(&format!("rank --input {}", scratch("missing.csv").display()), 2);
    let empty = scratch("empty.csv");
    std::fs::write(&empty, "flops,score\n").unwrap();
    assert_fails(&format!("rank --input {}", empty.display()), 2);
}

#[test]
fn canonicalize_moves_identities_last() {
    let spec = vitas_core::space::load_space("deit-tiny").unwrap();
    let mut arch = vitas_core::space::ArchEncoding::maximal(&spec);
    arch.stages[0].layers[0] = vitas_core::space::LayerChoice::Identity;
    let text = vitas_core::space::encode(&arch);
    let out = run(&format!("space canonicalize --space deit-tiny --encoding {text}"));
    assert_eq!(out.code, 0, "{}", out.stderr);
    let canon = vitas_core::space::decode(&spec, out.stdout.trim()).unwrap();
    assert!(canon.stages[0].layers.last().unwrap().is_identity());
    assert_eq!(canon, vitas_core::space::canonicalize(&arch));
}

#[test]
fn mapping_round_trips_through_file() {
    let path = scratch("cyclic6.txt");
    let built = json_ok(&format!("mapping build --kind cyclic --l 6 --mapping-out {} --json", path.display()));
    // zero iterations keep the mapping
    let again = json_ok(&format!("mapping refine --input {} --iters 0 --json", path.display()));
    assert_eq!(built["matrix"], again["matrix"]);
    assert_eq!(built["influence_gap"], again["influence_gap"]);
}

#[test]
fn simulate_emits_csv() {
    let out = run("simulate --kind ordinal --l 4 --steps 100 --every 50 --seed 1");
    assert_eq!(out.code, 0);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines[0], "step,group,count,influence");
    assert_eq!(lines.len(), 1 + 2 * 4);
    // every width uses group 1 under the ordinal pattern
    let g1: Vec<&str> = lines[5].split(',').collect();
    assert_eq!(g1[..3], ["100", "1", "100"]);

    let out = run("simulate --kind cyclic --l 3 --steps 0");
    assert_eq!(out.stdout.lines().count(), 1 + 3);
}

#[test]
fn seed_from_environment() {
    let line = "space sample --space deit-tiny --count 4";
    let env = Env { seed: Some("11".into()) };
    let from_env = run_env(line, &env);
    let from_flag = run(&format!("{line} --seed 11"));
    assert_eq!(from_env.stdout, from_flag.stdout);
    assert_ne!(from_env.stdout, run(line).stdout);
    // the flag wins over the environment
    assert_eq!(run_env(&format!("{line} --seed 3"), &env).stdout, run(&format!("{line} --seed 3")).stdout);

    let out = run_env(line, &Env { seed: Some("eleven".into()) });
    assert_eq!(out.code, 2);
    assert!(out.stdout.is_empty());
    // commands without randomness ignore it
    assert_eq!(run_env("cost --reference deit-tiny", &Env { seed: Some("eleven".into()) }).code, 0);
}

#[test]
fn seeded_commands_are_byte_identical() {
    for line in [
        "mapping refine --l 9 --iters 5000 --seed 4 --json",
        "space sample --space twins-large --count 5 --seed 9",
        "space sample --space deit-small --raw --count 5 --seed 9 --json",
        "simulate --kind cyclic --l 8 --steps 2000 --every 500 --seed 6",
        "search --space twins-tiny --budget-gflops 7.0 --population 10 --generations 3 --parents 4 --seed 8 --json",
    ] {
        let (a, b) = (run(line), run(line));
        assert_eq!(a.code, 0, "{line}: {}", a.stderr);
        assert_eq!(a.stdout, b.stdout, "{line}");
    }
}
