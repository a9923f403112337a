use std::fs;
use std::process::{Command, Output};

use tetd_harness::config::ExperimentConfig;

fn tetd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tetd")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn print_defaults_emits_valid_configs() {
    for preset in [None, Some("baird-control"), Some("cartpole")] {
        let mut args = vec!["run"];
        let flag;
        match preset {
            Some(p) => {
                flag = format!("--print-defaults={p}");
                args.push(&flag);
            }
            None => args.push("--print-defaults"),
        }
        let out = tetd(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let config = ExperimentConfig::from_json_str(&stdout(&out)).unwrap();
        config.validate().unwrap();
    }
}

#[test]
fn run_table_and_smooth_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = format!(
        r#"{{"environment":"baird","setting":"prediction",
            "algorithms":[{{"kind":"truncated_etd","n":[4]}},{{"kind":"etd_beta","beta":[0.8]}}],
            "learning_rates":[0.0015625,0.000390625],"targets":[0.1],"seeds":2,"steps":3000,
            "output_dir":{:?}}}"#,
        out_dir.to_str().unwrap()
    );
    let path = dir.path().join("config.json");
    fs::write(&path, config).unwrap();
    let out = tetd(&["run", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("8 runs (8 executed, 0 reused)"));
    let again = tetd(&["run", path.to_str().unwrap()]);
    assert!(stdout(&again).contains("8 runs (0 executed, 8 reused)"));
    let hash = |o: &Output| stdout(o).lines().last().unwrap().to_string();
    assert_eq!(hash(&out), hash(&again));

    let manifest = out_dir.join("manifest.json");
    let table = tetd(&["table", manifest.to_str().unwrap()]);
    assert!(table.status.success(), "{}", String::from_utf8_lossy(&table.stderr));
    let text = stdout(&table);
    assert!(text.contains("n=4") && text.contains("beta=0.8"), "{text}");
    // An impossible threshold dashes every cell.
    let strict = tetd(&["table", out_dir.to_str().unwrap(), "--threshold", "0"]);
    let row = stdout(&strict).lines().nth(1).unwrap().to_string();
    assert_eq!(row.matches('-').count(), 2, "{row}");

    let curve = fs::read_dir(out_dir.join("aggregates")).unwrap().next().unwrap().unwrap().path();
    let smoothed = tetd(&["smooth", curve.to_str().unwrap(), "--window", "1", "--column", "mean"]);
    assert!(smoothed.status.success(), "{}", String::from_utf8_lossy(&smoothed.stderr));
    assert_eq!(stdout(&smoothed), fs::read_to_string(&curve).unwrap());
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"environment":"baird","setting":"prediction","algorithms":[{"kind":"off_policy_td"}],
            "learning_rates":[0.01],"targets":[0.1],"seeds":0,"steps":10,"output_dir":"x"}"#,
    )
    .unwrap();
    let out = tetd(&["run", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`seeds`"));
}

#[test]
fn toml_configs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let out_dir = dir.path().join("out");
    fs::write(
        &path,
        format!(
            "environment = \"baird\"\nsetting = \"prediction\"\nlearning_rates = [0.01]\ntargets = [0.1]\nseeds = 1\nsteps = 100\neval_points = 3\noutput_dir = {:?}\n\n[[algorithms]]\nkind = \"truncated_etd\"\nn = [2]\n",
            out_dir.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = tetd(&["run", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn analyze_prints_a_report() {
    let out = tetd(&["analyze", "baird", "--target", "0.1", "--n", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n"], 4);
    assert!(report["min_n_nd"].as_u64().unwrap() > 350);

    let dir = tempfile::tempdir().unwrap();
    let mdp = tetd_core::envs::baird::baird_mdp();
    let mdp_path = dir.path().join("mdp.json");
    fs::write(&mdp_path, mdp.to_json_string().unwrap()).unwrap();
    let out = tetd(&["analyze", mdp_path.to_str().unwrap(), "--target", "uniform", "--n", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["min_n_nd_actual"], 0);

    let bad = tetd(&["analyze", "baird", "--target", "half", "--n", "4"]);
    assert!(!bad.status.success());
}
