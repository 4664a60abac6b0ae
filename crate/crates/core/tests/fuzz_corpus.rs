use std::fs;
use std::path::Path;

use tcsde::cli_io::{emit_config, parse_config};
use tcsde::model::parse_expression;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn config_seeds_are_valid_and_round_trip() {
    for (name, text) in seeds("parse_config") {
        let c = parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_config(&emit_config(&c)).unwrap(), c, "{name}");
    }
}

#[test]
fn expression_seeds_parse_and_reprint() {
    for (name, src) in seeds("parse_expression") {
        let e = parse_expression(&src).unwrap_or_else(|err| panic!("{name}: {err}"));
        assert_eq!(parse_expression(&e.to_string()).unwrap(), e, "{name}");
    }
}
