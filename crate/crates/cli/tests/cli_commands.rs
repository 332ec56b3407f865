use std::path::PathBuf;
use std::process::Command;

use pbrlab_cli::{run, OUT_DIR_ENV};
use pbrlab_core::feasibility::{build_pbr_system, DEFAULT_OVERLAP_LABEL};
use pbrlab_core::hilbert::StateVector;
use pbrlab_core::ontmodel::{
    delta_model, OnticSpace, OntologicalModel, PreparationProcedure, Weight,
};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pbrlab-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn pbrlab(args: &[&str]) -> pbrlab_cli::Outcome {
    run(std::iter::once("pbrlab").chain(args.iter().copied()))
}

#[test]
fn pbr_verify_exit_codes() {
    let all = pbrlab(&["pbr", "verify"]);
    assert_eq!(all.code, 0, "{}", all.stderr);
    assert!(
        all.stdout.contains("INFEASIBLE") && all.stdout.contains("certificate (5 constraints)")
    );

    let no_pi = pbrlab(&[
        "pbr",
        "verify",
        "--no-preparation-independence",
        "--json",
        "-",
    ]);
    assert_eq!(no_pi.code, 0);
    let json: serde_json::Value = serde_json::from_str(&no_pi.stdout).unwrap();
    assert_eq!(json["runs"][0]["verdict"]["status"], "FEASIBLE");
    assert!(json["runs"][0]["witness"].is_object());

    assert_eq!(pbrlab(&["pbr", "verify", "--no-overlap"]).code, 0);
    assert_eq!(pbrlab(&["pbr", "verify", "--tol", "1e-30"]).code, 2);
    assert_eq!(pbrlab(&["pbr", "verify", "--tol", "-1"]).code, 64);
    assert_eq!(pbrlab(&["pbr", "verify", "--bogus"]).code, 64);
}

#[test]
fn rqm_run_exit_codes() {
    assert_eq!(pbrlab(&["rqm", "run", "third-person"]).code, 0);
    assert_eq!(pbrlab(&["rqm", "run", "relational-pbr-single"]).code, 0);
    assert_eq!(pbrlab(&["rqm", "run", "relational-pbr-alice-bob"]).code, 0);
    assert_eq!(
        pbrlab(&["rqm", "run", "relational-pbr-single", "--collapse-indices"]).code,
        1
    );
    assert_eq!(
        pbrlab(&[
            "rqm",
            "run",
            "relational-pbr-alice-bob",
            "--collapse-indices"
        ])
        .code,
        1
    );
    assert_eq!(pbrlab(&["rqm", "run", "no-such"]).code, 64);
    assert_eq!(
        pbrlab(&["rqm", "run", "third-person", "--seed", "3"]).code,
        0
    );
}

#[test]
fn rqm_config_errors_are_data_errors() {
    let dir = scratch("config");
    let bad_norm = dir.join("bad_norm.json");
    std::fs::write(&bad_norm, r#"{"c1": [1.0, 0.0], "c2": [1.0, 0.0]}"#).unwrap();
    let unknown = dir.join("unknown.json");
    std::fs::write(&unknown, r#"{"colour": "red"}"#).unwrap();
    let good = dir.join("good.json");
    std::fs::write(
        &good,
        r#"{"settings": ["plus", "plus"], "s_star_mode": "entangled"}"#,
    )
    .unwrap();
    for (path, code) in [(&bad_norm, 65), (&unknown, 65), (&good, 0)] {
        let out = pbrlab(&[
            "rqm",
            "run",
            "relational-pbr-alice-bob",
            "--config",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.code, code, "{}: {}", path.display(), out.stderr);
    }
    assert_eq!(
        pbrlab(&[
            "rqm",
            "run",
            "third-person",
            "--config",
            "/nonexistent/cfg.json"
        ])
        .code,
        65
    );
}

#[test]
fn model_check_reports() {
    let dir = scratch("model");
    let states = [
        StateVector::up(),
        StateVector::plus(),
        StateVector::minus(),
        StateVector::down(),
    ];
    let delta = delta_model(
        &states,
        &[pbrlab_core::hilbert::Measurement::computational(2)],
    )
    .unwrap();
    let delta_path = dir.join("delta.json");
    let text = serde_json::to_string_pretty(&delta).unwrap();
    std::fs::write(&delta_path, &text).unwrap();
    let out = pbrlab(&["model", "check", delta_path.to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(
        out.stdout.starts_with("psi_ontic, psi_complete, Born OK"),
        "{}",
        out.stdout
    );

    let half = Weight::ratio(1, 2);
    let overlap = OntologicalModel::new(
        OnticSpace::new(["a", "b", "c"]).unwrap(),
        vec![
            PreparationProcedure {
                id: "Pup".into(),
                quantum_state: StateVector::up(),
                distribution: [
                    ("a".to_string(), half.clone()),
                    ("b".to_string(), half.clone()),
                ]
                .into(),
            },
            PreparationProcedure {
                id: "Pplus".into(),
                quantum_state: StateVector::plus(),
                distribution: [("b".to_string(), half.clone()), ("c".to_string(), half)].into(),
            },
        ],
        vec![],
    )
    .unwrap();
    let overlap_path = dir.join("overlap.json");
    std::fs::write(&overlap_path, serde_json::to_string(&overlap).unwrap()).unwrap();
    let out = pbrlab(&["model", "check", overlap_path.to_str().unwrap()]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("psi_epistemic"), "{}", out.stdout);

    let truncated = dir.join("truncated.json");
    std::fs::write(&truncated, &text[..text.len() / 3]).unwrap();
    assert_eq!(
        pbrlab(&["model", "check", truncated.to_str().unwrap()]).code,
        65
    );
}

#[test]
fn pbr_feasibility_reads_systems() {
    let dir = scratch("system");
    let path = dir.join("pbr.json");
    std::fs::write(
        &path,
        build_pbr_system(DEFAULT_OVERLAP_LABEL, true)
            .unwrap()
            .to_canonical_json(),
    )
    .unwrap();
    let out = pbrlab(&["pbr", "feasibility", path.to_str().unwrap(), "--json", "-"]);
    assert_eq!(out.code, 0);
    let json: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(json["verdict"]["status"], "INFEASIBLE");
    assert_eq!(json["verdict"]["certificate"].as_array().unwrap().len(), 5);

    let broken = dir.join("broken.json");
    std::fs::write(&broken, r#"{"variables": [], "constraints": [{"id": "c", "terms": {"x": "1"}, "relation": "=", "rhs": "1"}]}"#)
        .unwrap();
    assert_eq!(
        pbrlab(&["pbr", "feasibility", broken.to_str().unwrap()]).code,
        65
    );
}

#[test]
fn output_directory_from_environment() {
    let dir = scratch("outdir");
    let status = Command::new(env!("CARGO_BIN_EXE_pbrlab"))
        .args(["rqm", "run", "third-person"])
        .env(OUT_DIR_ENV, &dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("rqm-third-person.json")).unwrap())
            .unwrap();
    assert_eq!(report["verdict"], "PASS");

    let status = Command::new(env!("CARGO_BIN_EXE_pbrlab"))
        .args(["pbr", "verify", "--json", "named.json"])
        .env(OUT_DIR_ENV, &dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.join("named.json").exists());
}
