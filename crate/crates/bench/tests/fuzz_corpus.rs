//! The checked-in fuzz seeds must stay valid inputs for their decoders.

use std::fs;
use std::path::PathBuf;

use raresim_bench::ExperimentConfig;
use raresim_core::expr::Expr;
use raresim_core::gp::GpModel;

fn corpus(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files
}

#[test]
fn config_seeds_parse() {
    for (path, text) in corpus("config") {
        text.parse::<ExperimentConfig>().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn expression_seeds_round_trip() {
    for (path, text) in corpus("expression") {
        let e = Expr::parse(&text).unwrap_or_else(|err| panic!("{}: {err}", path.display()));
        let printed = e.to_string();
        assert_eq!(Expr::parse(&printed).unwrap().to_string(), printed);
    }
}

#[test]
fn gp_json_seeds_decode() {
    for (path, text) in corpus("gp_json") {
        let model = GpModel::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let back = GpModel::from_json(&model.to_json()).unwrap();
        let x = model.designs().row(0).to_vec();
        assert_eq!(model.predict(&x).unwrap(), back.predict(&x).unwrap());
    }
}
