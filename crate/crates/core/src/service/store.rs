//! Key Store and Policy Store, each an append-only log of text records that
//! is replayed on open.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::codec::{
    parse_records, read_digest, CodecError, Fields, RawRecord, RecordWriter, TextRecord,
};
use crate::crypto::{ServerCiphertext, ServerKey, SystemParams};
use crate::policy::ConditionNode;

use super::ServiceError;

/// Decimal policy identifier, increasing with deployment order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicyId(pub u64);

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A deployed policy as the provider sees it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyRecord {
    pub policy_id: PolicyId,
    pub admin_id: String,
    pub sat: [ServerCiphertext; 3],
    pub condition: ConditionNode<ServerCiphertext>,
}

/// Layout: id (decimal), admin id, then `c1`/`c2` for S, A and T, then the
/// condition tree in pre-order, one node per line as `gate K C` or
/// `leaf C1 C2`.
impl TextRecord for PolicyRecord {
    const TAG: &'static str = "policy-record";

    fn write_fields(&self, params: &SystemParams, w: &mut RecordWriter) {
        w.raw(self.policy_id.to_string()).text(&self.admin_id);
        for ct in &self.sat {
            w.element(params, &ct.c1).bytes(&ct.c2);
        }
        write_tree(params, &self.condition, w);
    }

    fn read_fields(params: &SystemParams, f: &mut Fields<'_>) -> Result<Self, CodecError> {
        let id_line = f.line();
        let policy_id = f
            .next_raw()?
            .parse()
            .map(PolicyId)
            .map_err(|_| CodecError::Malformed {
                line: id_line,
                msg: "policy id must be a decimal integer".into(),
            })?;
        let admin_id = f.next_text()?;
        let read_ct = |f: &mut Fields<'_>| -> Result<ServerCiphertext, CodecError> {
            Ok(ServerCiphertext {
                c1: f.next_element(params)?,
                c2: read_digest(params, f)?,
            })
        };
        let sat = [read_ct(f)?, read_ct(f)?, read_ct(f)?];
        let condition = read_tree(params, f)?;
        Ok(PolicyRecord {
            policy_id,
            admin_id,
            sat,
            condition,
        })
    }
}

fn write_tree(params: &SystemParams, node: &ConditionNode<ServerCiphertext>, w: &mut RecordWriter) {
    match node {
        ConditionNode::Leaf(ct) => {
            let c1 = crate::codec::encode_hex(&params.encode_element(&ct.c1));
            w.raw(format!("leaf {c1} {}", crate::codec::encode_hex(&ct.c2)));
        }
        ConditionNode::Gate {
            threshold,
            children,
        } => {
            w.raw(format!("gate {threshold} {}", children.len()));
            children.iter().for_each(|c| write_tree(params, c, w));
        }
    }
}

fn read_tree(
    params: &SystemParams,
    f: &mut Fields<'_>,
) -> Result<ConditionNode<ServerCiphertext>, CodecError> {
    let line = f.line();
    let bad = |msg: &str| CodecError::Malformed {
        line,
        msg: msg.to_string(),
    };
    let raw = f.next_raw()?;
    let parts: Vec<&str> = raw.split(' ').collect();
    match parts.as_slice() {
        ["gate", k, c] => {
            let k: usize = k.parse().map_err(|_| bad("bad threshold"))?;
            let c: usize = c.parse().map_err(|_| bad("bad child count"))?;
            let children = (0..c)
                .map(|_| read_tree(params, f))
                .collect::<Result<Vec<_>, _>>()?;
            ConditionNode::gate(k, children).map_err(|e| bad(&e.to_string()))
        }
        ["leaf", c1, c2] => {
            let fields = [c1.to_string(), c2.to_string()];
            let raw = RawRecord {
                tag: String::new(),
                fields: fields.to_vec(),
                line: line - 1,
            };
            let mut leaf = raw.fields();
            let c1 = leaf.next_element(params)?;
            let c2 = read_digest(params, &mut leaf)?;
            Ok(ConditionNode::Leaf(ServerCiphertext { c1, c2 }))
        }
        _ => Err(bad("expected `gate K C` or `leaf C1 C2`")),
    }
}

fn append(path: &Path, record: &str) -> io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    // Blank line first so a record never runs into a previous one.
    file.write_all(b"\n")?;
    file.write_all(record.as_bytes())?;
    file.sync_data()
}

fn read_log(path: &Path) -> Result<Vec<RawRecord>, ServiceError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(parse_records(&text)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            File::create(path)?;
            Ok(Vec::new())
        }
        Err(e) => Err(e.into()),
    }
}

const REVOKE_TAG: &str = "revoke";

/// Server key shares by user id. Revoked ids are remembered so that a
/// rejection can say why.
#[derive(Debug, Default)]
pub struct KeyStore {
    keys: BTreeMap<String, ServerKey>,
    revoked: BTreeSet<String>,
    log: Option<PathBuf>,
}

impl KeyStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Replays the log at `path`, creating an empty one if absent.
    pub fn open(params: &SystemParams, path: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let path = path.into();
        let mut store = KeyStore::in_memory();
        for rec in read_log(&path)? {
            if rec.tag == REVOKE_TAG {
                let mut f = rec.fields();
                let id = f.next_text()?;
                f.finish()?;
                store.apply_revoke(&id);
            } else {
                let key = ServerKey::from_raw(params, &rec)?;
                store.revoked.remove(key.user_id());
                store.keys.insert(key.user_id().to_string(), key);
            }
        }
        store.log = Some(path);
        Ok(store)
    }

    pub fn get(&self, user_id: &str) -> Option<&ServerKey> {
        self.keys.get(user_id)
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.keys.contains_key(user_id)
    }

    pub fn is_revoked(&self, user_id: &str) -> bool {
        self.revoked.contains(user_id)
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.keys.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn insert(&mut self, params: &SystemParams, key: ServerKey) -> Result<(), ServiceError> {
        if self.keys.contains_key(key.user_id()) {
            return Err(ServiceError::DuplicateKey(key.user_id().to_string()));
        }
        if let Some(path) = &self.log {
            append(path, &key.to_record(params))?;
        }
        self.revoked.remove(key.user_id());
        self.keys.insert(key.user_id().to_string(), key);
        Ok(())
    }

    /// Returns false if there was no key to remove.
    pub fn remove(&mut self, user_id: &str) -> Result<bool, ServiceError> {
        if !self.keys.contains_key(user_id) {
            return Ok(false);
        }
        if let Some(path) = &self.log {
            let mut w = RecordWriter::new(REVOKE_TAG);
            w.text(user_id);
            append(path, &w.finish())?;
        }
        self.apply_revoke(user_id);
        Ok(true)
    }

    fn apply_revoke(&mut self, user_id: &str) {
        self.keys.remove(user_id);
        self.revoked.insert(user_id.to_string());
    }
}

/// Deployed policies in deployment order.
#[derive(Debug, Default)]
pub struct PolicyStore {
    records: Vec<PolicyRecord>,
    next_id: u64,
    log: Option<PathBuf>,
}

impl PolicyStore {
    pub fn in_memory() -> Self {
        PolicyStore {
            records: Vec::new(),
            next_id: 1,
            log: None,
        }
    }

    pub fn open(params: &SystemParams, path: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let path = path.into();
        let mut store = PolicyStore::in_memory();
        for rec in read_log(&path)? {
            let record = PolicyRecord::from_raw(params, &rec)?;
            if record.policy_id.0 < store.next_id {
                return Err(CodecError::Malformed {
                    line: rec.line,
                    msg: format!("policy id {} is not increasing", record.policy_id),
                }
                .into());
            }
            store.next_id = record.policy_id.0 + 1;
            store.records.push(record);
        }
        store.log = Some(path);
        Ok(store)
    }

    pub fn records(&self) -> &[PolicyRecord] {
        &self.records
    }

    pub fn get(&self, id: PolicyId) -> Option<&PolicyRecord> {
        self.records.iter().find(|r| r.policy_id == id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Assigns the next id and persists the record.
    pub(crate) fn append(
        &mut self,
        params: &SystemParams,
        admin_id: String,
        sat: [ServerCiphertext; 3],
        condition: ConditionNode<ServerCiphertext>,
    ) -> Result<PolicyId, ServiceError> {
        let record = PolicyRecord {
            policy_id: PolicyId(self.next_id),
            admin_id,
            sat,
            condition,
        };
        if let Some(path) = &self.log {
            append(path, &record.to_record(params))?;
        }
        self.next_id += 1;
        let id = record.policy_id;
        self.records.push(record);
        Ok(id)
    }
}
