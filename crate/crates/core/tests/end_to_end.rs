use std::sync::Arc;

use discotag::datagen::{gen_catalog, gen_sessions, GenConfig};
use discotag::encoders::{train_prod2vec, FeatureEncoder, SkipGramConfig, DEFAULT_QUERY_DIM};
use discotag::policies::{MabConfig, McmConfig, PolicyConfig};
use discotag::replay::{run_replay, PolicySpec, ReplayData, ReplaySettings};

#[test]
fn small_replay_ranks_policies() {
    let cfg = GenConfig {
        seed: 5,
        n_train_sessions: 6000,
        n_test_sessions: 1500,
        catalog_size: 400,
        ..Default::default()
    };
    let catalog = gen_catalog(&cfg).unwrap();
    let sessions = gen_sessions(&cfg, &catalog).unwrap();
    let vocabulary = catalog.derive_schema().unwrap().vocabulary("sport").unwrap().clone();
    let embeddings = train_prod2vec(
        &sessions.train,
        &SkipGramConfig {
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap();
    let encoder = FeatureEncoder::new(Arc::new(embeddings.table), DEFAULT_QUERY_DIM, 5);
    let mcm = McmConfig {
        input_dim: encoder.input_dim(),
        retrain_interval: 100,
        seed: 5,
        ..Default::default()
    };
    let specs = vec![
        PolicySpec::new("pop", PolicyConfig::Pop),
        PolicySpec::new("mab", PolicyConfig::Mab(MabConfig::default())),
        PolicySpec::new("mcm", PolicyConfig::Mcm(mcm)).with_encoder(encoder),
    ];
    let data = ReplayData {
        train: &sessions.train,
        test: &sessions.test,
        catalog: &catalog,
        vocabulary: &vocabulary,
    };
    let settings = ReplaySettings {
        n_rounds: 20,
        seed: 5,
        ..Default::default()
    };
    let outcome = run_replay(data, &specs, &settings).unwrap();
    let report = &outcome.report;
    assert_eq!(report.rows().len(), 60);
    let chance = 1.0 / vocabulary.len() as f64;
    let (pop, mab, mcm) = (
        report.final_f1("pop").unwrap(),
        report.final_f1("mab").unwrap(),
        report.final_f1("mcm").unwrap(),
    );
    assert!(mcm > mab && mcm > pop, "mcm {mcm} mab {mab} pop {pop}");
    assert!(mab > chance, "mab {mab}");
    for (label, policy) in &outcome.policies {
        assert_eq!(policy.feedback_count(), sessions.train.len() as u64, "{label}");
    }
}
