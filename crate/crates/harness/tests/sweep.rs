use std::fs;
use std::path::Path;

use tetd_harness::config::{AlgorithmGrid, EnvironmentName, ExperimentConfig, Preset, Setting};
use tetd_harness::sweep::{file_hash, load_run, read_points, run_point, run_sweep, Manifest, MANIFEST_FILE};

fn small_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        environment: EnvironmentName::Baird,
        setting: Setting::Prediction,
        algorithms: vec![AlgorithmGrid::TruncatedEtd { n: vec![2, 4] }, AlgorithmGrid::OffPolicyTd],
        learning_rates: vec![0.01, 0.001],
        targets: vec![0.1],
        seeds: 2,
        steps: 2_000,
        eval_points: 100,
        evaluation_episodes: 10,
        output_dir: dir.to_path_buf(),
    }
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.push((MANIFEST_FILE.into(), fs::read(dir.join(MANIFEST_FILE)).unwrap()));
    out.sort();
    out
}

#[test]
fn one_point_one_seed_gives_one_csv_with_100_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path());
    config.algorithms = vec![AlgorithmGrid::TruncatedEtd { n: vec![4] }];
    config.learning_rates = vec![0.005];
    config.seeds = 1;
    let summary = run_sweep(&config).unwrap();
    let csvs: Vec<_> = fs::read_dir(dir.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    assert_eq!(csvs.len(), 1);
    let text = fs::read_to_string(&csvs[0]).unwrap();
    assert_eq!(text.lines().next(), Some("step,value"));
    assert_eq!(text.lines().count(), 101);
    assert_eq!(read_points(&csvs[0]).unwrap().len(), 100);
    assert_eq!(summary.manifest.entries.len(), 1);
    assert_eq!(summary.executed, 1);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run_sweep(&small_config(a.path())).unwrap();
    let sb = run_sweep(&small_config(b.path())).unwrap();
    assert_eq!(sa.manifest_hash, sb.manifest_hash);
    assert_eq!(files_under(a.path()), files_under(b.path()));
    assert_eq!(file_hash(&a.path().join(MANIFEST_FILE)).unwrap(), sa.manifest_hash);
    // Fresh rerun in place after deleting everything gives the same bytes.
    let before = files_under(a.path());
    fs::remove_dir_all(a.path().join("runs")).unwrap();
    let again = run_sweep(&small_config(a.path())).unwrap();
    assert_eq!(again.executed, 12);
    assert_eq!(files_under(a.path()), before);
}

#[test]
fn partial_sweeps_resume() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let first = run_sweep(&config).unwrap();
    assert_eq!((first.executed, first.reused), (12, 0));
    // Drop two runs: one loses its sidecar, one its CSV.
    let entries = &first.manifest.entries;
    fs::remove_file(dir.path().join(&entries[0].metadata)).unwrap();
    fs::remove_file(dir.path().join(&entries[5].csv)).unwrap();
    let second = run_sweep(&config).unwrap();
    assert_eq!((second.executed, second.reused), (2, 10));
    assert_eq!(second.manifest_hash, first.manifest_hash);
    // More seeds keep the fingerprints, so only the new seeds run.
    let third = run_sweep(&ExperimentConfig { seeds: 3, ..config }).unwrap();
    assert_eq!((third.executed, third.reused), (6, 12));
}

#[test]
fn manifest_indexes_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let summary = run_sweep(&config).unwrap();
    let manifest = Manifest::load(dir.path()).unwrap();
    assert_eq!(manifest, summary.manifest);
    assert_eq!(manifest.entries.len(), config.run_count());
    for entry in &manifest.entries {
        let record = load_run(dir.path(), entry).unwrap();
        assert_eq!(record.fingerprint, entry.fingerprint);
        assert_eq!(record.fingerprint, config.fingerprint(&entry.point));
        assert_eq!(record.seed, entry.seed);
        assert_eq!(record.points.len(), 100);
        assert_eq!(record, run_point(&config, &entry.point, entry.seed).unwrap());
        assert!(record.diverged || record.points.iter().all(|p| p.1.is_finite()));
    }
}

#[test]
fn invalid_configs_do_not_write_anything() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut config = small_config(&out);
    config.learning_rates.clear();
    assert!(run_sweep(&config).is_err());
    assert!(!out.exists());
}

#[test]
fn control_settings_record_their_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut baird = ExperimentConfig::preset(Preset::BairdControl);
    baird.learning_rates = vec![0.01];
    baird.targets = vec![0.1];
    baird.seeds = 1;
    baird.steps = 500;
    baird.eval_points = 5;
    baird.output_dir = dir.path().join("baird");
    let s = run_sweep(&baird).unwrap();
    assert_eq!(s.manifest.metric, "weight_norm");
    assert_eq!(s.manifest.entries.len(), 6);
    let first = load_run(&baird.output_dir, &s.manifest.entries[0]).unwrap();
    let w0 = tetd_core::envs::baird::baird_control_initial_weights();
    let norm0 = w0.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((first.points[0].1 - norm0).abs() < 1e-12);

    let mut cart = ExperimentConfig::preset(Preset::Cartpole);
    cart.learning_rates = vec![0.001];
    cart.seeds = 1;
    cart.steps = 300;
    cart.eval_points = 3;
    cart.evaluation_episodes = 2;
    cart.output_dir = dir.path().join("cart");
    let s = run_sweep(&cart).unwrap();
    assert!(s.manifest.maximize);
    for e in &s.manifest.entries {
        let r = load_run(&cart.output_dir, e).unwrap();
        assert!(r.points.iter().all(|p| p.1 >= 1.0 && p.1 <= 1000.0));
    }
}
