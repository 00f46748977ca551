//! Per-shop policy registry and checksummed snapshot files.
//!
//! Snapshot layout: `DSNAP`, format version (u32 LE), metadata length (u32
//! LE) and JSON metadata, payload length (u64 LE) and payload, then a CRC32C
//! (u32 LE) of every preceding byte.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::codec::{ByteReader, ByteWriter};
use crate::domain::{TagType, TagVocabulary};
use crate::error::{Error, Result};
use crate::policies::{Policy, PolicyConfig, PolicyKind};

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"DSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TenantId(String);

impl TenantId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() || id.chars().any(char::is_control) {
            return Err(Error::InvalidArgument(format!("invalid tenant id {id:?}")));
        }
        Ok(TenantId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TenantId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        TenantId::new(s)
    }
}

impl From<TenantId> for String {
    fn from(t: TenantId) -> String {
        t.0
    }
}

impl fmt::Display for TenantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Shared access to one tenant's policy. Clones point at the same state.
#[derive(Debug, Clone)]
pub struct PolicyHandle {
    tenant: TenantId,
    policy: Arc<RwLock<Policy>>,
}

impl PolicyHandle {
    pub fn new(tenant: TenantId, policy: Policy) -> Self {
        PolicyHandle {
            tenant,
            policy: Arc::new(RwLock::new(policy)),
        }
    }

    pub fn tenant(&self) -> &TenantId {
        &self.tenant
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Policy> {
        self.policy.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Policy> {
        self.policy.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Whether both handles refer to the same policy instance.
    pub fn same_as(&self, other: &PolicyHandle) -> bool {
        Arc::ptr_eq(&self.policy, &other.policy)
    }
}

type PolicyKey = (PolicyKind, TagType);

/// In-memory map of tenants to their policies. Lookups across tenants share
/// a read lock; creation within a tenant is serialized by that tenant's own
/// lock.
type TenantPolicies = Arc<Mutex<HashMap<PolicyKey, PolicyHandle>>>;

#[derive(Debug, Default)]
pub struct Registry {
    tenants: RwLock<HashMap<TenantId, TenantPolicies>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    fn tenant_slot(&self, tenant: &TenantId) -> Arc<Mutex<HashMap<PolicyKey, PolicyHandle>>> {
        if let Some(slot) = self.tenants.read().unwrap_or_else(|e| e.into_inner()).get(tenant) {
            return slot.clone();
        }
        self.tenants
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .entry(tenant.clone())
            .or_default()
            .clone()
    }

    /// Returns the tenant's policy of this kind for the vocabulary's tag type,
    /// creating it from `config` if absent. An existing policy keeps its own
    /// hyperparameters; a different vocabulary for the same tag type is a
    /// conflict.
    pub fn get_or_create(
        &self,
        tenant: &TenantId,
        vocabulary: &TagVocabulary,
        config: &PolicyConfig,
    ) -> Result<PolicyHandle> {
        let slot = self.tenant_slot(tenant);
        let mut policies = slot.lock().unwrap_or_else(|e| e.into_inner());
        let key = (config.kind(), vocabulary.tag_type().clone());
        if let Some(h) = policies.get(&key) {
            check_vocabulary(h, vocabulary)?;
            return Ok(h.clone());
        }
        let handle = PolicyHandle::new(tenant.clone(), Policy::new(vocabulary.clone(), config.clone())?);
        policies.insert(key, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, tenant: &TenantId, kind: PolicyKind, tag_type: &TagType) -> Option<PolicyHandle> {
        let tenants = self.tenants.read().unwrap_or_else(|e| e.into_inner());
        let slot = tenants.get(tenant)?;
        let policies = slot.lock().unwrap_or_else(|e| e.into_inner());
        policies.get(&(kind, tag_type.clone())).cloned()
    }

    /// Registers a restored policy under its tenant, replacing any policy of
    /// the same kind and tag type.
    pub fn insert(&self, handle: PolicyHandle) -> PolicyHandle {
        let key = {
            let p = handle.read();
            (p.kind(), p.vocabulary().tag_type().clone())
        };
        let slot = self.tenant_slot(handle.tenant());
        slot.lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, handle.clone());
        handle
    }

    pub fn tenants(&self) -> Vec<TenantId> {
        let mut ids: Vec<TenantId> = self
            .tenants
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }
}

fn check_vocabulary(handle: &PolicyHandle, vocabulary: &TagVocabulary) -> Result<()> {
    let existing = handle.read();
    if existing.vocabulary() != vocabulary {
        return Err(Error::VocabularyConflict(format!(
            "tenant `{}` already has a {} policy for `{}` with {} values, got {}",
            handle.tenant(),
            existing.kind(),
            vocabulary.tag_type(),
            existing.vocabulary().len(),
            vocabulary.len()
        )));
    }
    Ok(())
}

/// Self-description stored alongside the state payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub format_version: u32,
    pub tenant: TenantId,
    pub policy_kind: PolicyKind,
    pub tag_type: TagType,
    pub vocabulary: Vec<String>,
    pub hyperparameters: PolicyConfig,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotInfo {
    pub meta: SnapshotMeta,
    pub checksum: u32,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Serializes a policy into snapshot bytes.
pub fn encode_snapshot(tenant: &TenantId, policy: &Policy, created_at: u64) -> (Vec<u8>, SnapshotInfo) {
    let meta = SnapshotMeta {
        format_version: SNAPSHOT_VERSION,
        tenant: tenant.clone(),
        policy_kind: policy.kind(),
        tag_type: policy.vocabulary().tag_type().clone(),
        vocabulary: policy.vocabulary().values().to_vec(),
        hyperparameters: policy.config().clone(),
        created_at,
    };
    let meta_json = serde_json::to_string(&meta).expect("metadata serializes");
    let payload = policy.state_bytes();

    let mut w = ByteWriter::new();
    w.raw(SNAPSHOT_MAGIC);
    w.u32(SNAPSHOT_VERSION);
    w.u32(u32::try_from(meta_json.len()).expect("metadata under 4 GiB"));
    w.raw(meta_json.as_bytes());
    w.u64(payload.len() as u64);
    w.raw(&payload);
    let mut bytes = w.into_bytes();
    let checksum = crc32c::crc32c(&bytes);
    bytes.extend_from_slice(&checksum.to_le_bytes());
    (bytes, SnapshotInfo { meta, checksum })
}

/// Parses and verifies snapshot bytes.
pub fn decode_snapshot(bytes: &[u8]) -> Result<(SnapshotInfo, Policy)> {
    if bytes.len() < SNAPSHOT_MAGIC.len() + 4 || &bytes[..SNAPSHOT_MAGIC.len()] != SNAPSHOT_MAGIC {
        return Err(Error::CorruptSnapshot("missing DSNAP header".into()));
    }
    let mut r = ByteReader::new(&bytes[SNAPSHOT_MAGIC.len()..]);
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::UnsupportedSnapshotVersion(version));
    }
    if bytes.len() < SNAPSHOT_MAGIC.len() + 8 {
        return Err(Error::CorruptSnapshot("file truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let checksum = crc32c::crc32c(body);
    if stored != checksum {
        return Err(Error::CorruptSnapshot("checksum mismatch".into()));
    }

    let mut r = ByteReader::new(&body[SNAPSHOT_MAGIC.len() + 4..]);
    let meta_len = r.u32()? as usize;
    let meta_bytes = r.raw(meta_len)?;
    let meta: SnapshotMeta =
        serde_json::from_slice(meta_bytes).map_err(|e| Error::CorruptSnapshot(format!("bad metadata: {e}")))?;
    let payload_len = r.usize()?;
    let payload = r.raw(payload_len)?;
    r.finish()?;

    if meta.format_version != version {
        return Err(Error::CorruptSnapshot("metadata version disagrees with header".into()));
    }
    let vocabulary = TagVocabulary::new(meta.tag_type.clone(), meta.vocabulary.clone())
        .map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
    let policy = Policy::decode_state(vocabulary, meta.policy_kind, payload)?;
    if policy.config() != &meta.hyperparameters {
        return Err(Error::CorruptSnapshot("hyperparameters disagree with state".into()));
    }
    Ok((SnapshotInfo { meta, checksum }, policy))
}

/// Writes the handle's current policy to `path`, replacing it atomically.
pub fn snapshot_save(handle: &PolicyHandle, path: &Path) -> Result<SnapshotInfo> {
    let (bytes, info) = encode_snapshot(handle.tenant(), &handle.read(), now_ms());
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(info)
}

pub fn snapshot_load(path: &Path) -> Result<(SnapshotInfo, PolicyHandle)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (info, policy) = decode_snapshot(&bytes)?;
    let handle = PolicyHandle::new(info.meta.tenant.clone(), policy);
    Ok((info, handle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::FeatureEncoder;
    use crate::policies::{MabConfig, McmConfig, Observation, SelectionStrategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(k: usize) -> TagVocabulary {
        TagVocabulary::new(
            TagType::new("sport").unwrap(),
            (0..k).map(|i| format!("v{i}")).collect(),
        )
        .unwrap()
    }

    fn tenant(id: &str) -> TenantId {
        TenantId::new(id).unwrap()
    }

    fn mab() -> PolicyConfig {
        PolicyConfig::Mab(MabConfig::default())
    }

    #[test]
    fn same_tenant_same_handle() {
        let reg = Registry::new();
        let a = reg.get_or_create(&tenant("shop-a"), &vocab(8), &mab()).unwrap();
        let b = reg.get_or_create(&tenant("shop-a"), &vocab(8), &mab()).unwrap();
        assert!(a.same_as(&b));
        a.write().learn(&Observation::new("shoes", None), 1, 1, 1).unwrap();
        assert_eq!(b.read().feedback_count(), 1);
    }

    #[test]
    fn tenants_are_isolated() {
        let reg = Registry::new();
        let a = reg.get_or_create(&tenant("a"), &vocab(8), &mab()).unwrap();
        let b = reg.get_or_create(&tenant("b"), &vocab(8), &mab()).unwrap();
        assert!(!a.same_as(&b));
        let before = b.read().state_bytes();
        for i in 0..20 {
            a.write().learn(&Observation::new("shoes", None), i % 8, 1, 0).unwrap();
        }
        assert_eq!(b.read().state_bytes(), before);
        assert_eq!(reg.tenants(), vec![tenant("a"), tenant("b")]);
    }

    #[test]
    fn vocabulary_conflict() {
        let reg = Registry::new();
        reg.get_or_create(&tenant("a"), &vocab(8), &mab()).unwrap();
        let err = reg.get_or_create(&tenant("a"), &vocab(9), &mab());
        assert!(matches!(err, Err(Error::VocabularyConflict(_))));
        // other kinds and other tenants are unaffected
        reg.get_or_create(&tenant("a"), &vocab(9), &PolicyConfig::Pop).unwrap();
        reg.get_or_create(&tenant("b"), &vocab(9), &mab()).unwrap();
    }

    #[test]
    fn invalid_tenant_ids() {
        assert!(TenantId::new("").is_err());
        assert!(TenantId::new("  ").is_err());
        assert!(TenantId::new("a\nb").is_err());
    }

    fn trained(config: PolicyConfig) -> (Policy, Option<FeatureEncoder>) {
        let enc = FeatureEncoder::hashed(3);
        let mut p = Policy::new(vocab(5), config).unwrap();
        let with_features = matches!(p.config(), PolicyConfig::Mcm(_));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..40 {
            let ctx = vec![format!("p{}", i % 7)];
            let q = ["shoes", "bag"][i % 2];
            let f = with_features.then(|| enc.encode(&ctx, q).unwrap().into_inner());
            let obs = Observation::new(q, f);
            let arm = p.select(&obs, SelectionStrategy::Sample, &mut rng).unwrap();
            p.learn(&obs, arm, u8::from(arm == i % 5), i % 5).unwrap();
        }
        (p, with_features.then_some(enc))
    }

    fn all_kinds() -> Vec<PolicyConfig> {
        vec![
            PolicyConfig::Pop,
            mab(),
            PolicyConfig::Mcm(McmConfig {
                input_dim: 64,
                hidden_layers: vec![6],
                retrain_interval: 10,
                ..Default::default()
            }),
        ]
    }

    #[test]
    fn round_trip_reproduces_state() {
        for config in all_kinds() {
            let (p, _) = trained(config);
            let (bytes, info) = encode_snapshot(&tenant("shop"), &p, 42);
            let (back_info, back) = decode_snapshot(&bytes).unwrap();
            assert_eq!(back_info, info);
            assert_eq!(back, p);
            assert_eq!(back.state_bytes(), p.state_bytes());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mab.dsnap");
        let (p, _) = trained(mab());
        let handle = PolicyHandle::new(tenant("shop"), p);
        let info = snapshot_save(&handle, &path).unwrap();
        assert!(info.meta.created_at > 0);
        let (loaded_info, loaded) = snapshot_load(&path).unwrap();
        assert_eq!(loaded_info, info);
        assert_eq!(loaded.tenant(), &tenant("shop"));
        assert_eq!(*loaded.read(), *handle.read());
        let reg = Registry::new();
        let h = reg.insert(loaded);
        assert!(reg
            .get(&tenant("shop"), PolicyKind::Mab, &TagType::new("sport").unwrap())
            .unwrap()
            .same_as(&h));
    }

    #[test]
    fn corruption_is_detected() {
        let (p, _) = trained(PolicyConfig::Pop);
        let (bytes, _) = encode_snapshot(&tenant("shop"), &p, 1);
        for cut in [0, 3, 9, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode_snapshot(&bytes[..cut]), Err(Error::CorruptSnapshot(_))),
                "cut {cut}"
            );
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 10;
        flipped[mid] ^= 0x40;
        let err = decode_snapshot(&flipped).unwrap_err();
        assert!(err.to_string().starts_with("corrupt snapshot"));
    }

    #[test]
    fn future_version_rejected() {
        let (p, _) = trained(mab());
        let (mut bytes, _) = encode_snapshot(&tenant("shop"), &p, 1);
        bytes[5..9].copy_from_slice(&99u32.to_le_bytes());
        let n = bytes.len() - 4;
        let crc = crc32c::crc32c(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        let err = decode_snapshot(&bytes).unwrap_err();
        assert!(matches!(err, Error::UnsupportedSnapshotVersion(99)));
        assert_eq!(err.to_string(), "unsupported snapshot version 99");
    }

    #[test]
    fn restored_policy_decides_identically() {
        for config in all_kinds() {
            let (p, enc) = trained(config);
            let (bytes, _) = encode_snapshot(&tenant("shop"), &p, 1);
            let (_, q) = decode_snapshot(&bytes).unwrap();
            let run = |policy: &Policy| {
                let mut rng = ChaCha8Rng::seed_from_u64(77);
                (0..100)
                    .map(|i| {
                        let ctx = vec![format!("p{}", i % 11)];
                        let f = enc.as_ref().map(|e| e.encode(&ctx, "shoes").unwrap().into_inner());
                        policy
                            .select(&Observation::new("shoes", f), SelectionStrategy::Sample, &mut rng)
                            .unwrap()
                    })
                    .collect::<Vec<_>>()
            };
            assert_eq!(run(&p), run(&q));
        }
    }
}
