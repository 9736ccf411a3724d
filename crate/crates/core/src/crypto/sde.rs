//! The searchable-encryption operations: client encryption, server
//! re-encryption, trapdoors and the encrypted match test.
//!
//! With `x = x1 + x2 (mod q)` and `h = g^x`:
//!
//! ```text
//! client:   c1^ = g^(r+σ)   c2^ = c1^^x1   c3^ = H(h^r)
//! server:   c1 = c1^^x2 · c2^ = h^(r+σ)    c2 = c3^
//! trapdoor: t1 = g^(σ-r')    t2 = h^r' · g^(-x1 r') · g^(x1 σ)
//! combine:  T = t1^x2 · t2 = g^(xσ)
//! match:    c2 == H(c1 · T^-1)
//! ```

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use super::keys::{ServerKey, UserKey};
use super::params::SystemParams;
use super::primitives::PrfKey;
use crate::token::Token;

/// PRF image of a token, an exponent in `[1, q-1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sigma(BigUint);

impl Sigma {
    /// Wraps a raw exponent, reducing it mod q.
    pub fn from_exponent(params: &SystemParams, e: BigUint) -> Self {
        Sigma(params.exp(e))
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

/// `σ = (f_s(token) mod (q-1)) + 1`.
pub fn sigma(params: &SystemParams, prf_key: &PrfKey, token: &Token) -> Sigma {
    let out = params.prf_id().eval(prf_key, token.as_str().as_bytes());
    let q_minus_1 = params.q() - 1u32;
    Sigma(BigUint::from_bytes_be(&out) % q_minus_1 + 1u32)
}

/// Ciphertext produced by the trusted client, before re-encryption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientCiphertext {
    pub c1hat: BigUint,
    pub c2hat: BigUint,
    pub c3hat: Vec<u8>,
}

/// Re-encrypted ciphertext as stored by the provider.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerCiphertext {
    pub c1: BigUint,
    pub c2: Vec<u8>,
}

/// Randomised query form of a token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trapdoor {
    pub t1: BigUint,
    pub t2: BigUint,
}

/// `T = g^(x σ)` together with its inverse, ready for repeated matching.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombinedTrapdoor {
    value: BigUint,
    inverse: BigUint,
}

impl CombinedTrapdoor {
    pub fn new(params: &SystemParams, value: BigUint) -> Self {
        let inverse = value
            .modinv(params.p())
            .expect("subgroup element is invertible mod p");
        CombinedTrapdoor { value, inverse }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }
}

pub fn client_encrypt<R: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    key: &UserKey,
    token: &Token,
    rng: &mut R,
) -> ClientCiphertext {
    let s = sigma(params, key.prf_key(), token);
    let r = params.random_exponent(rng);
    client_encrypt_raw(params, key, &s, &r)
}

/// Deterministic encryption of a known σ under nonce `r`.
pub fn client_encrypt_raw(
    params: &SystemParams,
    key: &UserKey,
    sigma: &Sigma,
    r: &BigUint,
) -> ClientCiphertext {
    let c1hat = params.g_pow(&params.exp(r + sigma.value()));
    let c2hat = params.pow(&c1hat, key.x1());
    let c3hat = params.digest(&params.pow(params.h(), r));
    ClientCiphertext {
        c1hat,
        c2hat,
        c3hat,
    }
}

/// Completes a client ciphertext with the issuer's server share. A key that
/// does not belong to the issuer yields a ciphertext that never matches.
pub fn server_reencrypt(
    params: &SystemParams,
    key: &ServerKey,
    ct: &ClientCiphertext,
) -> ServerCiphertext {
    let c1 = params.mul(&params.pow(&ct.c1hat, key.x2()), &ct.c2hat);
    ServerCiphertext {
        c1,
        c2: ct.c3hat.clone(),
    }
}

pub fn gen_trapdoor<R: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    key: &UserKey,
    token: &Token,
    rng: &mut R,
) -> Trapdoor {
    let s = sigma(params, key.prf_key(), token);
    let r = params.random_exponent(rng);
    gen_trapdoor_raw(params, key, &s, &r)
}

/// Deterministic trapdoor for a known σ under nonce `r'`. Only `h` is used,
/// never the server share.
pub fn gen_trapdoor_raw(
    params: &SystemParams,
    key: &UserKey,
    sigma: &Sigma,
    r: &BigUint,
) -> Trapdoor {
    let s = sigma.value();
    let t1 = params.g_pow(&params.exp_sub(s, r));
    // g^(-x1 r') · g^(x1 σ) folded into one exponent x1 (σ - r') mod q
    let x1_shift = params.exp(key.x1() * params.exp_sub(s, r));
    let t2 = params.mul(&params.pow(params.h(), r), &params.g_pow(&x1_shift));
    Trapdoor { t1, t2 }
}

/// `T = t1^x2 · t2`.
pub fn combine(params: &SystemParams, key: &ServerKey, td: &Trapdoor) -> CombinedTrapdoor {
    let value = params.mul(&params.pow(&td.t1, key.x2()), &td.t2);
    CombinedTrapdoor::new(params, value)
}

/// True iff `c2 = H(c1 · T^-1)`.
pub fn match_test(params: &SystemParams, ct: &ServerCiphertext, t: &CombinedTrapdoor) -> bool {
    let blinded = params.mul(&ct.c1, &t.inverse);
    params.digest(&blinded) == ct.c2
}
