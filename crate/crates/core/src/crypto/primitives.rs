//! Pluggable hash `H` and PRF `f`, selected by identifier.

use std::fmt;
use std::str::FromStr;

use hmac::{Hmac, KeyInit, Mac};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::CryptoError;

/// Collision-resistant hash applied to encoded group elements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HashId {
    #[default]
    Sha256,
}

impl HashId {
    pub fn as_str(self) -> &'static str {
        match self {
            HashId::Sha256 => "sha256",
        }
    }

    pub fn output_len(self) -> usize {
        match self {
            HashId::Sha256 => 32,
        }
    }

    pub fn digest(self, input: &[u8]) -> Vec<u8> {
        match self {
            HashId::Sha256 => Sha256::digest(input).to_vec(),
        }
    }
}

impl FromStr for HashId {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sha256" => Ok(HashId::Sha256),
            other => Err(CryptoError::UnknownAlgorithm(other.to_string())),
        }
    }
}

impl fmt::Display for HashId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Keyed PRF mapping tokens to exponents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PrfId {
    #[default]
    HmacSha256,
}

impl PrfId {
    pub fn as_str(self) -> &'static str {
        match self {
            PrfId::HmacSha256 => "hmac-sha256",
        }
    }

    pub fn eval(self, key: &PrfKey, input: &[u8]) -> Vec<u8> {
        match self {
            PrfId::HmacSha256 => {
                let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key.as_bytes())
                    .expect("HMAC accepts any key length");
                mac.update(input);
                mac.finalize().into_bytes().to_vec()
            }
        }
    }
}

impl FromStr for PrfId {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hmac-sha256" => Ok(PrfId::HmacSha256),
            other => Err(CryptoError::UnknownAlgorithm(other.to_string())),
        }
    }
}

impl fmt::Display for PrfId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The PRF key `s` shared by the KMA and every user.
#[derive(Clone, PartialEq, Eq)]
pub struct PrfKey(Vec<u8>);

impl PrfKey {
    pub const LEN: usize = 32;

    pub fn new(bytes: Vec<u8>) -> Result<Self, CryptoError> {
        if bytes.is_empty() {
            return Err(CryptoError::InvalidKey("empty PRF key".into()));
        }
        Ok(PrfKey(bytes))
    }

    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = vec![0u8; Self::LEN];
        rng.fill_bytes(&mut bytes);
        PrfKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrfKey(..)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        let d = HashId::Sha256.digest(b"abc");
        assert_eq!(
            d[..8],
            [0xba, 0x78, 0x16, 0xbf, 0x8f, 0x01, 0xcf, 0xea]
        );
        assert_eq!(d.len(), HashId::Sha256.output_len());
    }

    #[test]
    fn hmac_rfc4231_case2() {
        let key = PrfKey::new(b"Jefe".to_vec()).unwrap();
        let out = PrfId::HmacSha256.eval(&key, b"what do ya want for nothing?");
        assert_eq!(
            out[..8],
            [0x5b, 0xdc, 0xc1, 0x46, 0xbf, 0x60, 0x75, 0x4e]
        );
    }

    #[test]
    fn ids_round_trip() {
        assert_eq!("sha256".parse::<HashId>().unwrap(), HashId::Sha256);
        assert_eq!("hmac-sha256".parse::<PrfId>().unwrap(), PrfId::HmacSha256);
        assert!("md5".parse::<HashId>().is_err());
    }
}
