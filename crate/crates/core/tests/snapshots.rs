use discotag::domain::{TagType, TagVocabulary};
use discotag::policies::{MabConfig, McmConfig, Observation, Policy, PolicyConfig, SelectionStrategy};
use discotag::tenancy::{decode_snapshot, encode_snapshot, snapshot_load, snapshot_save, PolicyHandle, TenantId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ARMS: usize = 5;
const DIM: usize = 3;
const QUERIES: [&str; 3] = ["shoes", "Running  SHOES", "bag"];

fn vocabulary() -> TagVocabulary {
    let values = (0..ARMS).map(|i| format!("v{i}")).collect();
    TagVocabulary::new(TagType::new("sport").unwrap(), values).unwrap()
}

fn config(kind: u8, seed: u64) -> PolicyConfig {
    match kind {
        0 => PolicyConfig::Pop,
        1 => PolicyConfig::Mab(MabConfig {
            gamma: 0.8,
            ..Default::default()
        }),
        _ => PolicyConfig::Mcm(McmConfig {
            input_dim: DIM,
            hidden_layers: vec![6],
            retrain_interval: 4,
            epochs_per_retrain: 1,
            buffer_capacity: 10,
            seed,
            ..Default::default()
        }),
    }
}

fn observation(q: usize, x: f64) -> Observation {
    Observation::new(QUERIES[q % QUERIES.len()], Some(vec![x, -x, 0.5]))
}

type Event = (usize, f64, usize, u8, usize);

fn event() -> impl Strategy<Value = Event> {
    (0..QUERIES.len(), -1.0..1.0f64, 0..ARMS, 0..=1u8, 0..ARMS)
}

fn decisions(policy: &Policy, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100)
        .map(|i| {
            let obs = observation(i, (i as f64 * 0.37).sin());
            policy.select(&obs, SelectionStrategy::Sample, &mut rng).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_preserves_state_and_decisions(
        kind in 0..3u8,
        seed in any::<u64>(),
        events in prop::collection::vec(event(), 0..40),
    ) {
        let mut policy = Policy::new(vocabulary(), config(kind, seed)).unwrap();
        for (q, x, played, reward, clicked) in events {
            policy.learn(&observation(q, x), played, reward, clicked).unwrap();
        }
        let tenant = TenantId::new("shop-1").unwrap();
        let (bytes, info) = encode_snapshot(&tenant, &policy, 1_700_000_000_000);
        let (back_info, back) = decode_snapshot(&bytes).unwrap();
        prop_assert_eq!(&back_info, &info);
        prop_assert_eq!(back.state_bytes(), policy.state_bytes());
        prop_assert_eq!(&back, &policy);
        prop_assert_eq!(decisions(&back, seed), decisions(&policy, seed));
    }

    #[test]
    fn any_single_byte_change_is_rejected(
        kind in 0..3u8,
        events in prop::collection::vec(event(), 0..10),
        pos in any::<prop::sample::Index>(),
        flip in 1..=255u8,
    ) {
        let mut policy = Policy::new(vocabulary(), config(kind, 1)).unwrap();
        for (q, x, played, reward, clicked) in events {
            policy.learn(&observation(q, x), played, reward, clicked).unwrap();
        }
        let (mut bytes, _) = encode_snapshot(&TenantId::new("t").unwrap(), &policy, 0);
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(decode_snapshot(&bytes).is_err());
        bytes[i] ^= flip;
        prop_assert!(decode_snapshot(&bytes[..i]).is_err());
    }
}

#[test]
fn file_round_trip_continues_identically() {
    let dir = tempfile::tempdir().unwrap();
    for kind in 0..3u8 {
        let mut policy = Policy::new(vocabulary(), config(kind, 5)).unwrap();
        for i in 0..30 {
            policy
                .learn(
                    &observation(i, i as f64 / 30.0),
                    i % ARMS,
                    (i % 3 == 0) as u8,
                    (i * 2) % ARMS,
                )
                .unwrap();
        }
        let handle = PolicyHandle::new(TenantId::new("acme").unwrap(), policy);
        let path = dir.path().join(format!("{kind}.dsnap"));
        let saved = snapshot_save(&handle, &path).unwrap();
        let (info, restored) = snapshot_load(&path).unwrap();
        assert_eq!(info, saved);
        assert_eq!(restored.tenant().as_str(), "acme");

        // further learning keeps both copies in lockstep
        for i in 0..12 {
            let obs = observation(i, 0.1 * i as f64);
            handle.write().learn(&obs, i % ARMS, 1, 0).unwrap();
            restored.write().learn(&obs, i % ARMS, 1, 0).unwrap();
        }
        assert_eq!(decisions(&handle.read(), 3), decisions(&restored.read(), 3));
    }
}
