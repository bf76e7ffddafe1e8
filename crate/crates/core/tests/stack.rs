use pluralism_core::fusion::FusionConfig;
use pluralism_core::learners::{BoostParams, ForestParams, LearnerParams, LinearParams};
use pluralism_core::pipeline::{train_and_evaluate, TrainOutcome};
use pluralism_core::stack::{artifact_payload, load_stack, predict_case, save_stack, StackConfig, META_WIDTH};
use pluralism_core::synth::{generate, SynthConfig};
use pluralism_core::Error;
use serde_json::Value;

fn small_config() -> StackConfig {
    let mut cfg = StackConfig {
        folds: 3,
        learners: LearnerParams {
            forest: ForestParams { n_trees: 20, ..Default::default() },
            boost: BoostParams { n_rounds: 10, ..Default::default() },
            linear: LinearParams { epochs: 5, ..Default::default() },
        },
        ..Default::default()
    };
    cfg.meta.n_rounds = 10;
    cfg.with_seed(7)
}

fn run() -> (Vec<pluralism_core::case::Case>, pluralism_core::semantic::EmbeddingTable, TrainOutcome) {
    let synth = SynthConfig { cases_per_subtheory: 10, ..Default::default() };
    let (cases, table) = generate(&synth).unwrap();
    let out = train_and_evaluate(&cases, Some(&table), FusionConfig::full(), &small_config()).unwrap();
    (cases, table, out)
}

#[test]
fn fit_is_leak_free_deterministic_and_round_trips() {
    let (cases, table, out) = run();
    assert!(out.log.is_leak_free());
    assert_eq!(out.log.folds.len(), 3);
    assert!(out.meta_features.iter().all(|r| r.len() == META_WIDTH));
    assert_eq!(out.train_ids.len() + out.test_ids.len(), cases.len());

    let (_, _, again) = run();
    assert_eq!(artifact_payload(&out.model).unwrap(), artifact_payload(&again.model).unwrap());
    assert_eq!(out.report, again.report);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_stack(&out.model, &path).unwrap();
    let loaded = load_stack(&path).unwrap();
    for case in cases.iter().take(10) {
        let a = predict_case(&out.model, case, Some(&table)).unwrap();
        let b = predict_case(&loaded, case, Some(&table)).unwrap();
        for (x, y) in a.calibrated.as_slice().iter().zip(b.calibrated.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    // Tampering with the payload breaks the checksum.
    let mut envelope: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    envelope["payload"]["temperature"] = Value::from(0.7);
    std::fs::write(&path, envelope.to_string()).unwrap();
    assert!(matches!(load_stack(&path), Err(Error::Checksum(_))));

    envelope["version"] = Value::from(99);
    std::fs::write(&path, envelope.to_string()).unwrap();
    assert!(matches!(load_stack(&path), Err(Error::Version { found: 99, .. })));

    std::fs::write(&path, "{\"format\": \"ethics-stack\", \"versi").unwrap();
    assert!(matches!(load_stack(&path), Err(Error::Checksum(_))));
}
