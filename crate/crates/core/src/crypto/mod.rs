//! Multi-user searchable encryption over a Schnorr group with split keys.

mod keys;
mod params;
mod primitives;
mod sde;

pub use keys::{keygen, keygen_with_share, ServerKey, UserKey};
pub use params::{
    init, is_probable_prime, setup_with_secret, GroupParams, MasterSecret, SecurityProfile,
    SystemParams,
};
pub use primitives::{HashId, PrfId, PrfKey};
pub use sde::{
    client_encrypt, client_encrypt_raw, combine, gen_trapdoor, gen_trapdoor_raw, match_test,
    server_reencrypt, sigma, ClientCiphertext, CombinedTrapdoor, ServerCiphertext, Sigma,
    Trapdoor,
};

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("unknown algorithm identifier `{0}`")]
    UnknownAlgorithm(String),
}
