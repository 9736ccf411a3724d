//! The outsourced provider: Administration Point, PDP and PEP over the Key
//! Store and Policy Store.
//!
//! Nothing here ever sees a user key share, the master secret or a
//! plaintext token. Evaluation takes `&self` and can run from many threads;
//! deployment and revocation take `&mut self`, so wrap the provider in an
//! `RwLock` to share it.

mod store;

use std::fmt;
use std::io;
use std::path::Path;

use crate::clients::{EncryptedAttributes, EncryptedPolicyBundle, EncryptedRequest};
use crate::codec::CodecError;
use crate::crypto::{
    combine, match_test, server_reencrypt, CombinedTrapdoor, ServerCiphertext, ServerKey,
    SystemParams,
};
use crate::policy::ConditionNode;

pub use store::{KeyStore, PolicyId, PolicyRecord, PolicyStore};

pub const KEY_STORE_FILE: &str = "keys.log";
pub const POLICY_STORE_FILE: &str = "policies.log";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    Rejected(Rejection),
    #[error("a server key for `{0}` is already stored")]
    DuplicateKey(String),
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
    #[error("store format: {0}")]
    Codec(#[from] CodecError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    Revoked,
    Unknown,
}

/// A principal with no usable server key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub principal: String,
    pub reason: RejectReason,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let why = match self.reason {
            RejectReason::Revoked => "revoked",
            RejectReason::Unknown => "unknown",
        };
        write!(f, "principal `{}` is {why}", self.principal)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Permit(PolicyId),
    Deny,
    Rejected(Rejection),
}

impl Decision {
    pub fn is_permit(&self) -> bool {
        matches!(self, Decision::Permit(_))
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Permit(id) => write!(f, "PERMIT policy={id}"),
            Decision::Deny => f.write_str("DENY"),
            Decision::Rejected(r) => write!(f, "REJECTED {r}"),
        }
    }
}

pub struct ServiceProvider {
    params: SystemParams,
    keys: KeyStore,
    policies: PolicyStore,
}

impl ServiceProvider {
    pub fn in_memory(params: SystemParams) -> Self {
        ServiceProvider {
            params,
            keys: KeyStore::in_memory(),
            policies: PolicyStore::in_memory(),
        }
    }

    /// Opens (or creates) both store logs under `dir`.
    pub fn open(params: SystemParams, dir: &Path) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(dir)?;
        let keys = KeyStore::open(&params, dir.join(KEY_STORE_FILE))?;
        let policies = PolicyStore::open(&params, dir.join(POLICY_STORE_FILE))?;
        Ok(ServiceProvider {
            params,
            keys,
            policies,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn key_store(&self) -> &KeyStore {
        &self.keys
    }

    pub fn policy_store(&self) -> &PolicyStore {
        &self.policies
    }

    /// Receives a server share from the KMA.
    pub fn register_server_key(&mut self, key: ServerKey) -> Result<(), ServiceError> {
        self.keys.insert(&self.params, key)
    }

    fn server_key(&self, user_id: &str) -> Result<&ServerKey, Rejection> {
        self.keys.get(user_id).ok_or_else(|| Rejection {
            principal: user_id.to_string(),
            reason: if self.keys.is_revoked(user_id) {
                RejectReason::Revoked
            } else {
                RejectReason::Unknown
            },
        })
    }

    /// Re-encrypts the SAT tuple and every leaf with the admin's server share
    /// and stores the result.
    pub fn ap_deploy(&mut self, bundle: &EncryptedPolicyBundle) -> Result<PolicyId, ServiceError> {
        let key = self
            .server_key(&bundle.admin_id)
            .map_err(ServiceError::Rejected)?;
        let p = &self.params;
        let sat = [0, 1, 2].map(|i| server_reencrypt(p, key, &bundle.sat[i]));
        let condition = bundle
            .condition
            .map_leaves(&mut |ct| server_reencrypt(p, key, ct));
        self.policies
            .append(&self.params, bundle.admin_id.clone(), sat, condition)
    }

    /// Stores an already re-encrypted record. Lets the bench populate large
    /// stores without paying for re-encryption each time.
    pub(crate) fn push_record(&mut self, rec: &PolicyRecord) -> Result<PolicyId, ServiceError> {
        self.policies.append(
            &self.params,
            rec.admin_id.clone(),
            rec.sat.clone(),
            rec.condition.clone(),
        )
    }

    /// Drops the user's server share. Deployed policies stay as they are.
    /// Returns false when there was nothing to revoke.
    pub fn ap_revoke(&mut self, user_id: &str) -> Result<bool, ServiceError> {
        self.keys.remove(user_id)
    }

    /// Records whose S, A and T all match the request, in storage order.
    pub fn pdp_sat_search(&self, request: &EncryptedRequest) -> Result<Vec<&PolicyRecord>, Rejection> {
        let key = self.server_key(&request.requester_id)?;
        let combined = request.sat.each_ref().map(|td| combine(&self.params, key, td));
        Ok(self
            .policies
            .records()
            .iter()
            .filter(|rec| {
                rec.sat
                    .iter()
                    .zip(&combined)
                    .all(|(ct, t)| match_test(&self.params, ct, t))
            })
            .collect())
    }

    /// Combines each attribute trapdoor once, for reuse across records.
    pub fn combine_attributes(
        &self,
        attrs: &EncryptedAttributes,
    ) -> Result<Vec<CombinedTrapdoor>, Rejection> {
        let key = self.server_key(&attrs.pip_id)?;
        Ok(attrs
            .trapdoors
            .iter()
            .map(|td| combine(&self.params, key, td))
            .collect())
    }

    pub fn pdp_condition_eval(
        &self,
        attrs: &EncryptedAttributes,
        record: &PolicyRecord,
    ) -> Result<Decision, Rejection> {
        let combined = self.combine_attributes(attrs)?;
        Ok(if evaluate_condition(&self.params, &record.condition, &combined) {
            Decision::Permit(record.policy_id)
        } else {
            Decision::Deny
        })
    }

    /// Checks both principals, searches, then evaluates matched records in
    /// deployment order. The first satisfied condition wins.
    pub fn pep_handle(&self, request: &EncryptedRequest, attrs: &EncryptedAttributes) -> Decision {
        let matched = match self.pdp_sat_search(request) {
            Ok(m) => m,
            Err(r) => return Decision::Rejected(r),
        };
        let combined = match self.combine_attributes(attrs) {
            Ok(c) => c,
            Err(r) => return Decision::Rejected(r),
        };
        matched
            .into_iter()
            .find(|rec| evaluate_condition(&self.params, &rec.condition, &combined))
            .map_or(Decision::Deny, |rec| Decision::Permit(rec.policy_id))
    }
}

/// A leaf holds if any combined trapdoor matches it.
pub fn evaluate_condition(
    params: &SystemParams,
    condition: &ConditionNode<ServerCiphertext>,
    combined: &[CombinedTrapdoor],
) -> bool {
    condition.evaluate(&mut |ct| combined.iter().any(|t| match_test(params, ct, t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{encrypt_policy, pe_attributes_enc, pe_sat_enc, Kma, Role};
    use crate::crypto::{init, SecurityProfile, UserKey};
    use crate::lang::{parse_attributes, parse_policy, tuple};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const WARD_POLICY: &str =
        "IF Location=HR-WARD AND AT>9#5 AND AT<17#5 THEN CAN <doctor, read, record-42>";

    struct World {
        sp: ServiceProvider,
        admin: UserKey,
        req: UserKey,
        pip: UserKey,
        rng: ChaCha20Rng,
    }

    fn world(sp: impl FnOnce(SystemParams) -> ServiceProvider) -> World {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (params, msk) = init(SecurityProfile::Production, &mut rng).unwrap();
        let mut kma = Kma::new(params.clone(), msk);
        let mut sp = sp(params);
        let mut issue = |id, role| {
            let reg = kma.register(id, role, &mut rng).unwrap();
            sp.register_server_key(reg.server_key).unwrap();
            reg.user_key
        };
        let admin = issue("A", Role::Admin);
        let req = issue("R", Role::Requester);
        let pip = issue("P", Role::Pip);
        World {
            sp,
            admin,
            req,
            pip,
            rng,
        }
    }

    impl World {
        fn deploy(&mut self, policy: &str) -> PolicyId {
            let ast = parse_policy(policy).unwrap();
            let tree = ast.compile().unwrap();
            let b = encrypt_policy(self.sp.params(), &ast.sat, &tree, &self.admin, &mut self.rng);
            self.sp.ap_deploy(&b).unwrap()
        }

        fn ask(&mut self, sat: (&str, &str, &str), attrs: &str) -> Decision {
            let p = self.sp.params().clone();
            let r = pe_sat_enc(&p, &tuple(sat.0, sat.1, sat.2), &self.req, &mut self.rng);
            let a = parse_attributes(attrs).unwrap();
            let a = pe_attributes_enc(&p, &a, &self.pip, &mut self.rng).unwrap();
            self.sp.pep_handle(&r, &a)
        }
    }

    const DR: (&str, &str, &str) = ("doctor", "read", "record-42");

    #[test]
    fn hospital_scenario() {
        let mut w = world(ServiceProvider::in_memory);
        let id = w.deploy(WARD_POLICY);
        assert_eq!(id, PolicyId(1));
        assert_eq!(w.ask(DR, "Location=HR-WARD\nAT:=10#5"), Decision::Permit(id));
        assert_eq!(w.ask(DR, "Location=HR-WARD\nAT:=8#5"), Decision::Deny);
        assert_eq!(w.ask(DR, "Location=ICU\nAT:=10#5"), Decision::Deny);
        assert_eq!(w.ask(("doctor", "write", "record-42"), "Location=HR-WARD\nAT:=10#5"), Decision::Deny);
    }

    #[test]
    fn first_permit_wins() {
        let mut w = world(ServiceProvider::in_memory);
        w.deploy("IF Location=ICU THEN CAN <doctor, read, record-42>");
        let second = w.deploy("IF Location=HR-WARD THEN CAN <doctor, read, record-42>");
        w.deploy("IF Location=HR-WARD THEN CAN <doctor, read, record-42>");
        assert_eq!(w.ask(DR, "Location=HR-WARD"), Decision::Permit(second));
    }

    #[test]
    fn sat_search_is_all_or_nothing() {
        let mut w = world(ServiceProvider::in_memory);
        let p = w.sp.params().clone();
        let empty = pe_sat_enc(&p, &tuple("a", "b", "c"), &w.req, &mut w.rng);
        assert!(w.sp.pdp_sat_search(&empty).unwrap().is_empty());
        w.deploy(WARD_POLICY);
        for (s, a, t) in [DR, ("nurse", "read", "record-42"), ("doctor", "read", "record-43")] {
            let r = pe_sat_enc(&p, &tuple(s, a, t), &w.req, &mut w.rng);
            let hits = w.sp.pdp_sat_search(&r).unwrap().len();
            assert_eq!(hits, usize::from((s, a, t) == DR));
        }
    }

    #[test]
    fn revocation() {
        let mut w = world(ServiceProvider::in_memory);
        w.deploy(WARD_POLICY);
        assert!(w.sp.ap_revoke("A").unwrap());
        // Policies of a revoked admin still apply to everyone else.
        assert!(w.ask(DR, "Location=HR-WARD\nAT:=10#5").is_permit());
        let p = w.sp.params().clone();
        let ast = parse_policy(WARD_POLICY).unwrap();
        let b = encrypt_policy(&p, &ast.sat, &ast.compile().unwrap(), &w.admin, &mut w.rng);
        assert!(matches!(
            w.sp.ap_deploy(&b),
            Err(ServiceError::Rejected(Rejection { reason: RejectReason::Revoked, .. }))
        ));
        assert_eq!(w.sp.policy_store().len(), 1);

        w.sp.ap_revoke("R").unwrap();
        assert_eq!(
            w.ask(DR, "Location=HR-WARD\nAT:=10#5"),
            Decision::Rejected(Rejection { principal: "R".into(), reason: RejectReason::Revoked })
        );
        assert!(!w.sp.ap_revoke("nobody").unwrap());
        assert!(!w.sp.key_store().is_revoked("nobody"));
    }

    #[test]
    fn unknown_principal_rejected() {
        let mut w = world(ServiceProvider::in_memory);
        w.deploy(WARD_POLICY);
        let p = w.sp.params().clone();
        let mut r = pe_sat_enc(&p, &tuple(DR.0, DR.1, DR.2), &w.req, &mut w.rng);
        r.requester_id = "ghost".into();
        let a = EncryptedAttributes { pip_id: "P".into(), trapdoors: Vec::new() };
        assert!(matches!(
            w.sp.pep_handle(&r, &a),
            Decision::Rejected(Rejection { reason: RejectReason::Unknown, .. })
        ));
    }

    #[test]
    fn stores_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        let mut w = world(|p| ServiceProvider::open(p, &path).unwrap());
        w.deploy(WARD_POLICY);
        w.deploy("IF 1 OF (Location=ICU, AT>=30#5) THEN CAN <nurse, write, chart>");
        w.sp.ap_revoke("A").unwrap();
        let before = w.ask(DR, "Location=HR-WARD\nAT:=10#5");

        let params = w.sp.params().clone();
        let reopened = ServiceProvider::open(params, &path).unwrap();
        assert_eq!(reopened.policy_store().records(), w.sp.policy_store().records());
        assert!(reopened.key_store().is_revoked("A"));
        w.sp = reopened;
        assert_eq!(w.ask(DR, "Location=HR-WARD\nAT:=10#5"), before);
    }
}
