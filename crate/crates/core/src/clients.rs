//! Trusted-domain actors: the key management authority and the client-side
//! encryption run by Admin Users, Requesters and PIPs.
//!
//! None of these operations touch a server key share once it has been
//! issued; the KMA hands it over and keeps only the master secret and the
//! list of identities it has registered.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};

use crate::codec::{parse_records, CodecError, RecordWriter, TextRecord};
use crate::crypto::{
    client_encrypt, gen_trapdoor, keygen, ClientCiphertext, MasterSecret, ServerKey,
    SystemParams, Trapdoor, UserKey,
};
use crate::policy::{
    expand_attributes, AttributeAssignment, ConditionNode, ConditionTree, PolicyError, SatTuple,
};

/// What a registered identity is used for. Roles share one key type and
/// differ only in which operations they invoke.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Admin,
    Requester,
    Pip,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Requester => "requester",
            Role::Pip => "pip",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "admin" => Ok(Role::Admin),
            "requester" => Ok(Role::Requester),
            "pip" => Ok(Role::Pip),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KmaError {
    #[error("user `{0}` is already registered")]
    Duplicate(String),
    #[error("user id must be a non-empty printable token")]
    InvalidId,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Key material produced by one registration: the user share goes to the
/// user, the server share to the Administration Point.
#[derive(Debug)]
pub struct Registration {
    pub user_key: UserKey,
    pub server_key: ServerKey,
}

/// The trusted key management authority.
#[derive(Debug)]
pub struct Kma {
    params: SystemParams,
    msk: MasterSecret,
    issued: BTreeMap<String, Role>,
}

const ISSUED_TAG: &str = "issued";

impl Kma {
    pub fn new(params: SystemParams, msk: MasterSecret) -> Self {
        Kma {
            params,
            msk,
            issued: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn issued(&self) -> impl Iterator<Item = (&str, Role)> {
        self.issued.iter().map(|(id, r)| (id.as_str(), *r))
    }

    /// Issues a split key pair for a fresh identity.
    pub fn register<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        user_id: &str,
        role: Role,
        rng: &mut R,
    ) -> Result<Registration, KmaError> {
        if !is_valid_id(user_id) {
            return Err(KmaError::InvalidId);
        }
        if self.issued.contains_key(user_id) {
            return Err(KmaError::Duplicate(user_id.to_string()));
        }
        let (user_key, server_key) = keygen(&self.params, &self.msk, user_id, rng);
        self.issued.insert(user_id.to_string(), role);
        Ok(Registration {
            user_key,
            server_key,
        })
    }

    /// Master secret record followed by one `issued` record per identity.
    pub fn state_to_text(&self) -> String {
        let mut out = self.msk.to_record(&self.params);
        for (id, role) in &self.issued {
            let mut w = RecordWriter::new(ISSUED_TAG);
            w.text(id).text(role.as_str());
            out.push('\n');
            out.push_str(&w.finish());
        }
        out
    }

    pub fn state_from_text(params: SystemParams, text: &str) -> Result<Self, KmaError> {
        let recs = parse_records(text);
        let first = recs.first().ok_or(CodecError::Malformed {
            line: 1,
            msg: "missing master secret".into(),
        })?;
        let msk = MasterSecret::from_raw(&params, first)?;
        let mut issued = BTreeMap::new();
        for rec in &recs[1..] {
            rec.expect_tag(ISSUED_TAG)?;
            let mut f = rec.fields();
            let id = f.next_text()?;
            let role = f.next_text()?.parse().map_err(|e: String| f.malformed(e))?;
            f.finish()?;
            issued.insert(id, role);
        }
        Ok(Kma {
            params,
            msk,
            issued,
        })
    }
}

/// Identities are printable tokens: non-empty, no whitespace or control
/// characters.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| !c.is_whitespace() && !c.is_control())
}

/// An encrypted policy as sent from an Admin User to the Administration
/// Point. The gate structure stays in the clear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedPolicyBundle {
    pub admin_id: String,
    pub sat: [ClientCiphertext; 3],
    pub condition: ConditionNode<ClientCiphertext>,
}

/// Trapdoors for the `<S, A, T>` tuple of an access request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedRequest {
    pub requester_id: String,
    pub sat: [Trapdoor; 3],
}

/// One trapdoor per expanded attribute token, produced by a PIP.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedAttributes {
    pub pip_id: String,
    pub trapdoors: Vec<Trapdoor>,
}

/// Encrypts every leaf independently with fresh randomness.
pub fn pd_condition_enc<R: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    condition: &ConditionTree,
    key: &UserKey,
    rng: &mut R,
) -> ConditionNode<ClientCiphertext> {
    condition.map_leaves(&mut |t| client_encrypt(params, key, t, rng))
}

pub fn pd_sat_enc<R: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    sat: &SatTuple,
    key: &UserKey,
    rng: &mut R,
) -> [ClientCiphertext; 3] {
    sat.items().map(|t| client_encrypt(params, key, t, rng))
}

/// Both halves of policy deployment on the Admin User side.
pub fn encrypt_policy<R: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    sat: &SatTuple,
    condition: &ConditionTree,
    key: &UserKey,
    rng: &mut R,
) -> EncryptedPolicyBundle {
    let sat = pd_sat_enc(params, sat, key, rng);
    let condition = pd_condition_enc(params, condition, key, rng);
    EncryptedPolicyBundle {
        admin_id: key.user_id().to_string(),
        sat,
        condition,
    }
}

pub fn pe_sat_enc<R: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    sat: &SatTuple,
    key: &UserKey,
    rng: &mut R,
) -> EncryptedRequest {
    EncryptedRequest {
        requester_id: key.user_id().to_string(),
        sat: sat.items().map(|t| gen_trapdoor(params, key, t, rng)),
    }
}

/// Expands the attributes into tokens and trapdoors each one.
pub fn pe_attributes_enc<R: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    assignment: &AttributeAssignment,
    key: &UserKey,
    rng: &mut R,
) -> Result<EncryptedAttributes, PolicyError> {
    let tokens = expand_attributes(assignment)?;
    Ok(EncryptedAttributes {
        pip_id: key.user_id().to_string(),
        trapdoors: tokens
            .iter()
            .map(|t| gen_trapdoor(params, key, t, rng))
            .collect(),
    })
}
