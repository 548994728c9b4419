//! CSV fixtures through schema fitting, training, checkpointing and scoring.

use std::path::PathBuf;

use flowtx_core::dataio::{load_checkpoint, load_csv, save_checkpoint, Checkpoint, Profile, ProfileName};
use flowtx_core::model::ModelKind;
use flowtx_core::sentencing::fit_schema;
use flowtx_core::training::{train, TrainConfig};
use flowtx_core::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn unsw_fixture_loads_the_thirteen_profile_columns() {
    let (data, summary) = load_csv(fixture("unsw_small.csv"), &Profile::unsw()).unwrap();
    assert_eq!(data.len(), 24);
    assert_eq!(summary.rejected_count(), 0);
    assert_eq!(data.profile.name, ProfileName::Unsw);
    assert_eq!(data.labels().iter().filter(|&&y| y == 1).count(), 8);
    let schema = fit_schema(data.records(), &data.profile).unwrap();
    assert_eq!(schema.len(), 13);
    for row in schema.encode_all(data.records()).unwrap() {
        assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn ton_fixture_loads_eleven_features() {
    let (data, summary) = load_csv(fixture("ton_small.csv"), &Profile::ton()).unwrap();
    assert_eq!((data.len(), summary.rejected_count()), (20, 0));
    let schema = fit_schema(data.records(), &data.profile).unwrap();
    assert_eq!(schema.len(), 11);
    let rows = schema.encode_all(data.records()).unwrap();
    // boolean columns encode to exactly 0 or 1
    assert!(rows.iter().all(|r| r[3] == 0.0 || r[3] == 1.0));
}

#[test]
fn wrong_profile_names_the_missing_column() {
    match load_csv(fixture("ton_small.csv"), &Profile::unsw()) {
        Err(Error::Schema(msg)) => assert!(msg.contains("srcip"), "{msg}"),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn checkpoint_round_trip_scores_bit_identically() {
    let (data, _) = load_csv(fixture("unsw_small.csv"), &Profile::unsw()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::Pllm, ModelKind::Fnn] {
        let config = TrainConfig { epochs: 3, split: vec![0.5, 0.5], ..TrainConfig::defaults_for(kind) };
        let out = train(&data, &config).unwrap();
        let before = out.model.score(data.records()).unwrap();

        let path = dir.path().join(format!("{kind}.ckpt"));
        let ck = Checkpoint { model: out.model, config: Some(config), metrics: out.validation };
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let after = back.model.score(data.records()).unwrap();
        assert_eq!(
            before.iter().map(|s| s.to_bits()).collect::<Vec<_>>(),
            after.iter().map(|s| s.to_bits()).collect::<Vec<_>>()
        );
    }
}
