//! Encrypted policy enforcement for outsourced environments.
//!
//! Policies are authored and encrypted in a trusted domain, re-encrypted and
//! stored by an honest-but-curious provider, and evaluated there against
//! encrypted requests and encrypted contextual attributes.

pub mod bench;
pub mod clients;
pub mod codec;
pub mod crypto;
pub mod lang;
pub mod policy;
pub mod service;
pub mod token;

pub use token::{normalize_token, Token};
