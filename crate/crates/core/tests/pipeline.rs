use std::sync::OnceLock;

use tea_core::agents::DqnConfig;
use tea_core::cartpole::{Action, CartState, EnvRole};
use tea_core::dataset::Variant;
use tea_core::encoder::{encode_new_environment, load_encodings, AeConfig};
use tea_core::experiment::{
    artifact_checksums, evaluate_on_env, parse_csv, run_collection, run_experiment, train_variant, write_report,
    Artifacts, ExperimentConfig, Layout, SeedRange, AVERAGE_LABEL,
};

struct Fixture {
    _dir: tempfile::TempDir,
    cfg: ExperimentConfig,
    layout: Layout,
}

/// One reduced collection phase shared by every test in this file.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            seeds: SeedRange { start: 0, end: 2 },
            variants: Variant::ALL.to_vec(),
            bcq_timesteps: 200,
            budget_per_env: 1_500,
            eval_episodes_per_seed: 2,
            out_dir: dir.path().to_path_buf(),
            dqn: DqnConfig { budget: 20_000, ..DqnConfig::default() },
            ae: AeConfig { epochs: 30, ..AeConfig::default() },
            ..ExperimentConfig::default()
        };
        let layout = Layout::new(dir.path());
        run_collection(&cfg, &layout).unwrap();
        Fixture { _dir: dir, cfg, layout }
    })
}

#[test]
fn experiment_phase_leaves_collection_artifacts_untouched() {
    let f = fixture();
    let before = artifact_checksums(&f.layout).unwrap();
    assert_eq!(before.len(), f.layout.collection_artifacts().len());
    let report = run_experiment(&f.cfg, &f.layout, &|_, _, runs| assert_eq!(runs.len(), 10)).unwrap();
    assert_eq!(artifact_checksums(&f.layout).unwrap(), before);

    assert_eq!(report.runs.len(), 3 * 2 * 10);
    assert_eq!(report.cells.len(), 3 * 10);
    for v in Variant::ALL {
        let avg = report.average_for(v).unwrap();
        assert_eq!((avg.env_label.as_str(), avg.n_seeds), (AVERAGE_LABEL, 2));
        assert!(avg.sem.is_some());
    }
    let written = write_report(&report, &f.layout).unwrap();
    assert!(written.iter().all(|p| p.exists()));
    let cells = parse_csv(&std::fs::read_to_string(f.layout.results_csv()).unwrap()).unwrap();
    assert_eq!(cells, report.all_cells().cloned().collect::<Vec<_>>());
}

#[test]
fn rollout_encoding_of_a_source_env_lands_near_its_buffer_encoding() {
    let f = fixture();
    let arts = Artifacts::load(&f.layout, &[Variant::Baseline]).unwrap();
    let encodings = load_encodings(&f.layout.encodings()).unwrap();
    let mut pairwise: Vec<f64> = Vec::new();
    for a in encodings.values() {
        for b in encodings.values().filter(|b| b.env_id > a.env_id) {
            pairwise.push(a.distance(b));
        }
    }
    pairwise.sort_by(f64::total_cmp);
    let median = (pairwise[pairwise.len() / 2] + pairwise[(pairwise.len() - 1) / 2]) / 2.0;
    for entry in arts.manifest.environments.iter().filter(|e| e.role == EnvRole::Source) {
        let policy = |s: &CartState| arts.dqn.greedy(s).unwrap_or(Action::Left);
        let fresh = encode_new_environment(&arts.ae, &entry.params(), policy, 99, 5).unwrap();
        let d = fresh.encoding.distance(&encodings[&entry.env_id]);
        assert!(d < median, "{}: distance {d} vs median pairwise {median}", entry.label);
    }
}

#[test]
fn evaluation_rejects_agents_of_another_variant() {
    let f = fixture();
    let arts = Artifacts::load(&f.layout, &[Variant::Baseline, Variant::AugTrue]).unwrap();
    let baseline_agent = train_variant(&f.cfg, &arts, Variant::Baseline, 0).unwrap();
    let env = arts.manifest.new_entries()[0];
    assert!(evaluate_on_env(&f.cfg, &arts, &baseline_agent, Variant::AugTrue, 0, env).is_err());
    let true_agent = train_variant(&f.cfg, &arts, Variant::AugTrue, 0).unwrap();
    let (ret, steps) = evaluate_on_env(&f.cfg, &arts, &true_agent, Variant::AugTrue, 0, env).unwrap();
    assert!((1.0..=500.0).contains(&ret));
    assert_eq!(steps, 0);
}
