use std::fmt;

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use super::params::{check_exponent, MasterSecret, SystemParams};
use super::primitives::PrfKey;
use super::CryptoError;

/// Client-side key `K_u = (x1, s)` held by an Admin User, Requester or PIP.
#[derive(Clone, PartialEq, Eq)]
pub struct UserKey {
    user_id: String,
    x1: BigUint,
    prf_key: PrfKey,
}

impl UserKey {
    pub fn from_parts(
        params: &SystemParams,
        user_id: impl Into<String>,
        x1: BigUint,
        prf_key: PrfKey,
    ) -> Result<Self, CryptoError> {
        check_exponent(params, &x1)?;
        Ok(UserKey {
            user_id: user_id.into(),
            x1,
            prf_key,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn x1(&self) -> &BigUint {
        &self.x1
    }

    pub fn prf_key(&self) -> &PrfKey {
        &self.prf_key
    }
}

impl fmt::Debug for UserKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserKey")
            .field("user_id", &self.user_id)
            .finish_non_exhaustive()
    }
}

/// Provider-side key `K_s = (i, x2)` kept in the Key Store.
#[derive(Clone, PartialEq, Eq)]
pub struct ServerKey {
    user_id: String,
    x2: BigUint,
}

impl ServerKey {
    pub fn from_parts(
        params: &SystemParams,
        user_id: impl Into<String>,
        x2: BigUint,
    ) -> Result<Self, CryptoError> {
        if &x2 >= params.q() {
            return Err(CryptoError::InvalidKey("x2 outside [0, q-1]".into()));
        }
        Ok(ServerKey {
            user_id: user_id.into(),
            x2,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn x2(&self) -> &BigUint {
        &self.x2
    }
}

impl fmt::Debug for ServerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerKey")
            .field("user_id", &self.user_id)
            .finish_non_exhaustive()
    }
}

/// Splits the master exponent for `user_id`: draws `x1` uniformly from
/// `[1, q-1]` and sets `x2 = (x - x1) mod q`.
pub fn keygen<R: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    msk: &MasterSecret,
    user_id: &str,
    rng: &mut R,
) -> (UserKey, ServerKey) {
    let x1 = params.random_exponent(rng);
    keygen_with_share(params, msk, user_id, x1).expect("x1 drawn from [1, q-1]")
}

/// Deterministic split around a caller-chosen `x1`.
pub fn keygen_with_share(
    params: &SystemParams,
    msk: &MasterSecret,
    user_id: &str,
    x1: BigUint,
) -> Result<(UserKey, ServerKey), CryptoError> {
    check_exponent(params, &x1)?;
    let x2 = params.exp_sub(msk.x(), &x1);
    let user = UserKey {
        user_id: user_id.to_string(),
        x1,
        prf_key: msk.prf_key().clone(),
    };
    let server = ServerKey {
        user_id: user_id.to_string(),
        x2,
    };
    Ok((user, server))
}
