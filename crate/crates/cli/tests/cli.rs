use ergolab_cli::catalog::EXAMPLES;
use ergolab_cli::config::{Command, ExperimentConfig};
use ergolab_cli::{run, CliError, EXIT_BUDGET, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_PASS};
use std::fs;
use std::process::Command as Proc;

fn ergolab() -> Proc {
    let mut p = Proc::new(env!("CARGO_BIN_EXE_ergolab"));
    p.env_remove("ERGOLAB_BUDGET");
    p
}

fn example(name: &str) -> ExperimentConfig {
    EXAMPLES.iter().find(|e| e.name == name).unwrap().config().unwrap()
}

#[test]
fn catalog_has_valid_entries() {
    assert!(EXAMPLES.len() >= 6);
    for e in EXAMPLES {
        let cfg = e.config().unwrap_or_else(|err| panic!("{}: {err}", e.name));
        assert!(cfg.command.is_some(), "{}", e.name);
        assert!(!e.provenance().is_empty());
    }
    let out = ergolab().arg("examples").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), EXAMPLES.len());
}

#[test]
fn golden_pressure_report() {
    let (env, tables) = run(&example("golden-sft-pressure"), None).unwrap();
    let v = env.body.results["estimate"]["value"].as_f64().unwrap();
    assert!((v - 0.4812118).abs() < 1e-6);
    assert!(env.body.verdict.passed());
    assert_eq!(tables[0].rows.len(), 24);
}

#[test]
fn trivial_certificate_passes() {
    let (env, _) = run(&example("full-shift-certify"), Some(Command::Certify)).unwrap();
    assert!(env.body.verdict.passed(), "{}", env.body_json());
}

#[test]
fn missing_roof_is_a_config_error() {
    let text = EXAMPLES.iter().find(|e| e.name == "roof-one-two-flow").unwrap().text.replace("roof = [1, 2]\n", "");
    let err = ExperimentConfig::from_str(&text).unwrap_err();
    assert!(matches!(err, CliError::Config { .. }));
    assert!(err.to_string().contains("flow"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.toml");
    fs::write(&path, text).unwrap();
    let out = ergolab().arg("flow-pressure").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("roof"));
}

#[test]
fn ladder_must_separate_scales() {
    let mut cfg = example("golden-beta-certify");
    cfg.ladder.as_mut().unwrap().m_delta = 6;
    let err = run(&cfg, None).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
    let out = ergolab().args(["certify", "--example", "golden-beta-certify", "--delta", "2^-5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn hash_ignores_layout_and_notation() {
    let a = "version = 1\ncommand = \"pressure\"\n[system]\nkind = \"full\"\nalphabet = 2\n[pressure]\ndelta = \"2^-2\"\n";
    let b = "# same experiment\nversion = 1\ncommand = \"pressure\"\ndescription = \"x\"\n[pressure]\ndelta = \"1/4\"\n\n[system]\nalphabet = 2\nkind = \"full\"\n";
    let (ca, cb) = (ExperimentConfig::from_str(a).unwrap(), ExperimentConfig::from_str(b).unwrap());
    assert_eq!(ca.hash(), cb.hash());
    let c = ExperimentConfig::from_str(&a.replace("2^-2", "2^-3")).unwrap();
    assert_ne!(ca.hash(), c.hash());
}

#[test]
fn unknown_fields_report_their_path() {
    let err = ExperimentConfig::from_str("version = 1\n[system]\nkind = \"full\"\nalphabet = 2\ncolour = 3\n").unwrap_err();
    assert!(err.to_string().contains("system"), "{err}");
    let err = ExperimentConfig::from_str("version = 2\n").unwrap_err();
    assert!(err.to_string().contains("version"));
}

#[test]
fn budget_exhaustion_has_its_own_exit_code() {
    let out = ergolab().args(["run", "--example", "full-shift-pressure", "--budget", "64"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_BUDGET));
    let out = ergolab().args(["run", "--example", "full-shift-pressure"]).env("ERGOLAB_BUDGET", "64").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_BUDGET));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.toml");
    let text = EXAMPLES.iter().find(|e| e.name == "golden-sft-pressure").unwrap().text;
    fs::write(&path, text.replace("tolerance = 1e-6", "tolerance = 1e-15").replace("n_max = 24", "n_max = 8")).unwrap();
    let out = ergolab().arg("pressure").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CHECK_FAILED));
}

#[test]
fn outputs_and_lock() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let out = ergolab().args(["pressure", "--example", "full-shift-pressure", "--nmax", "8", "--out"]).arg(&json).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["body"]["config_hash"].as_str().unwrap().len(), 64);
    assert!(report["meta"]["started"].is_string());
    let csv = fs::read_to_string(dir.path().join("report.partition_sums.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(!dir.path().join(".ergolab.lock").exists());

    let gibbs = dir.path().join("gibbs.csv");
    let out = ergolab().args(["gibbs", "--example", "parry-gibbs", "--out"]).arg(&gibbs).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    assert!(fs::read_to_string(&gibbs).unwrap().starts_with("n,lower_min"));
    assert!(dir.path().join("gibbs.json").exists());

    fs::write(dir.path().join(".ergolab.lock"), "").unwrap();
    let out = ergolab().args(["pressure", "--example", "full-shift-pressure", "--out"]).arg(&json).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn section_files_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.toml");
    fs::write(&sys, "[system]\nkind = \"sft\"\nmatrix = [[1, 1], [1, 0]]\n").unwrap();
    let pot = dir.path().join("pot.toml");
    fs::write(&pot, "kind = \"zero\"\n").unwrap();
    let out = ergolab()
        .args(["pressure", "--example", "full-shift-pressure", "--nmax", "20", "--delta", "1/2", "--system"])
        .arg(&sys)
        .arg("--potential")
        .arg(&pot)
        .output()
        .unwrap();
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let v = report["body"]["results"]["oracle"]["value"]["lower"].as_f64().unwrap();
    assert!((v - 0.4812118).abs() < 1e-6);
}

#[test]
fn explicit_glue_and_decompose() {
    let (env, tables) = run(&example("golden-glue"), None).unwrap();
    assert!(env.body.verdict.passed());
    assert_eq!(tables[0].rows.len(), 3);
    let (env, tables) = run(&example("golden-beta-decompose"), None).unwrap();
    assert!(env.body.verdict.passed());
    // 1010 is itself a prefix of d* = (10)^∞
    assert_eq!(tables[0].rows[1], vec!["1010", "0", "0", "4", "true"]);
}
