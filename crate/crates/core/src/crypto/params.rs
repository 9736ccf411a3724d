//! Schnorr-group parameters and master-secret generation.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

use super::primitives::{HashId, PrfId, PrfKey};
use super::CryptoError;

/// Fixed 2048-bit modulus with a 256-bit prime-order subgroup.
///
/// q is the first prime of the form `SHA-256("espoon-q/<ctr>/<i>")` (top and
/// low bit forced), p the first prime `p = k q + 1` derived the same way from
/// the `espoon-p` label, and g = 2^((p-1)/q).
const PRODUCTION_P: &str = "81f5343a8c90eb6a13d6a3847906d8cc73eb32bec72639b981f9bbb80f2465a8647872250f8e6d2cb5f249b3accaab64d747ee755ad67736e0bf307deb662330f2292ffbde06f9139b4f642fc0da76aae420c4dc45799a94ccfcc5eba91e33f562a6c24bc6c16ff1d013879b4d422c5d5138cffa56fb927d628ab740bd368cc75392750bf9a209bba74da398d9bfd570383be84c6bea3c1ccccb3cc917ca0418b800cb31947f2430a7aeebbd1da894214834e8fb4207f92a8a0b2b972a684ea7d3ff1d99ea128a48ddaa2e5f5291d44085b1ec3f197b7816436c9b00d8b05be2ccb22da442d18daecb866e06e3e3a1673e97074b4b734bc1c4d112cc4e88ac6d";
const PRODUCTION_Q: &str = "c4fd30f5bb0ffb45c6cac539a2c38ffa51c8b48da2198ebf5dbfe22457599977";
const PRODUCTION_G: &str = "118c521bf755d94debefb8c84423f616b9244003cac76f2cc040853d0d48f21f705604f8d7522f0409d27c16567831771254f86e6f5d7bd7ace4d0573c74e909f6626367b5f2c2cd00998935e1ed37f6912dc3b14f77a29adba0b29f64a8ab25aba857292e8783cb97ed43efcf401e8dd4741d2396258b743c61cda17d248ee85af7e0e282b6045747263081c715fbb738b89612bede9e79675585a0b752cd475cc6bb39b4f87a796f2c6bc59245358b5c231a9bfe87cafea346b4158b2854b1cc1f0de62719d786fd546b28e1071e9c785cbe295fc9451924993ef80277e659fd59006fae442e1b631a311b7ff5ba683ed2b4a3d295b97c51e27be405820d5a";

const MILLER_RABIN_ROUNDS: usize = 40;

/// The group triple `(p, q, g)`: g generates the order-q subgroup of Z_p^*.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: BigUint,
}

impl GroupParams {
    /// Validates an externally supplied group.
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self, CryptoError> {
        if !is_probable_prime(&p) {
            return Err(CryptoError::InvalidParams("p is not prime".into()));
        }
        if !is_probable_prime(&q) {
            return Err(CryptoError::InvalidParams("q is not prime".into()));
        }
        if !(&p - 1u32).is_multiple_of(&q) {
            return Err(CryptoError::InvalidParams("q does not divide p - 1".into()));
        }
        Self::check_generator(&p, &q, &g)?;
        Ok(GroupParams { p, q, g })
    }

    fn check_generator(p: &BigUint, q: &BigUint, g: &BigUint) -> Result<(), CryptoError> {
        if g <= &BigUint::one() || g >= p {
            return Err(CryptoError::InvalidParams("g must lie in (1, p)".into()));
        }
        // q prime and g != 1, so g^q = 1 pins the order to exactly q.
        if !g.modpow(q, p).is_one() {
            return Err(CryptoError::InvalidParams("g does not have order q".into()));
        }
        Ok(())
    }

    /// The tiny group p = 23, q = 11, g = 2, small enough to enumerate.
    pub fn tiny() -> Self {
        GroupParams {
            p: BigUint::from(23u32),
            q: BigUint::from(11u32),
            g: BigUint::from(2u32),
        }
    }

    /// The built-in 2048/256-bit group.
    pub fn production() -> Self {
        let parse = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).expect("valid constant");
        GroupParams {
            p: parse(PRODUCTION_P),
            q: parse(PRODUCTION_Q),
            g: parse(PRODUCTION_G),
        }
    }

    /// Generates a fresh group with `|p| = p_bits` and `|q| = q_bits`.
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(
        p_bits: u64,
        q_bits: u64,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        if q_bits < 2 || p_bits <= q_bits {
            return Err(CryptoError::InvalidParams(format!(
                "bit lengths p={p_bits}, q={q_bits} are not usable"
            )));
        }
        let q = loop {
            let mut c = rng.gen_biguint(q_bits);
            c.set_bit(q_bits - 1, true);
            c.set_bit(0, true);
            if is_probable_prime(&c) {
                break c;
            }
        };
        let two_q = &q << 1;
        let p = loop {
            let mut x = rng.gen_biguint(p_bits);
            x.set_bit(p_bits - 1, true);
            let p: BigUint = &x - (&x % &two_q) + 1u32;
            if p.bits() == p_bits && is_probable_prime(&p) {
                break p;
            }
        };
        let cofactor = (&p - 1u32) / &q;
        let mut a = BigUint::from(2u32);
        let g = loop {
            let g = a.modpow(&cofactor, &p);
            if !g.is_one() {
                break g;
            }
            a += 1u32;
        };
        Ok(GroupParams { p, q, g })
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("p_bits", &self.p.bits())
            .field("q_bits", &self.q.bits())
            .finish()
    }
}

/// Which group `init` should use.
#[derive(Clone, Debug)]
pub enum SecurityProfile {
    /// The built-in 2048/256-bit group.
    Production,
    /// A freshly generated group of the given bit lengths.
    Generated { p_bits: u64, q_bits: u64 },
    /// An explicit group, validated before use.
    Injected {
        p: BigUint,
        q: BigUint,
        g: BigUint,
    },
}

impl SecurityProfile {
    /// Injected p = 23, q = 11, g = 2.
    pub fn test() -> Self {
        let t = GroupParams::tiny();
        SecurityProfile::Injected {
            p: t.p,
            q: t.q,
            g: t.g,
        }
    }

    fn resolve<R: RngCore + CryptoRng + ?Sized>(
        self,
        rng: &mut R,
    ) -> Result<GroupParams, CryptoError> {
        match self {
            SecurityProfile::Production => Ok(GroupParams::production()),
            SecurityProfile::Generated { p_bits, q_bits } => {
                GroupParams::generate(p_bits, q_bits, rng)
            }
            SecurityProfile::Injected { p, q, g } => GroupParams::new(p, q, g),
        }
    }
}

/// Public system parameters `(p, q, g, h, H, f)`.
#[derive(Clone, PartialEq, Eq)]
pub struct SystemParams {
    group: GroupParams,
    h: BigUint,
    hash: HashId,
    prf: PrfId,
}

impl SystemParams {
    /// Reassembles parameters read from storage, rechecking every invariant.
    pub fn from_parts(
        p: BigUint,
        q: BigUint,
        g: BigUint,
        h: BigUint,
        hash: HashId,
        prf: PrfId,
    ) -> Result<Self, CryptoError> {
        let group = GroupParams::new(p, q, g)?;
        let params = SystemParams {
            group,
            h,
            hash,
            prf,
        };
        if params.h.is_zero() || !params.in_subgroup(&params.h) {
            return Err(CryptoError::InvalidParams("h is not in the subgroup".into()));
        }
        Ok(params)
    }

    pub fn group(&self) -> &GroupParams {
        &self.group
    }

    pub fn p(&self) -> &BigUint {
        &self.group.p
    }

    pub fn q(&self) -> &BigUint {
        &self.group.q
    }

    pub fn g(&self) -> &BigUint {
        &self.group.g
    }

    pub fn h(&self) -> &BigUint {
        &self.h
    }

    pub fn hash_id(&self) -> HashId {
        self.hash
    }

    pub fn prf_id(&self) -> PrfId {
        self.prf
    }

    /// Byte width of the fixed-width element encoding.
    pub fn element_len(&self) -> usize {
        (self.group.p.bits() as usize).div_ceil(8)
    }

    /// Byte width of the fixed-width exponent encoding.
    pub fn exponent_len(&self) -> usize {
        (self.group.q.bits() as usize).div_ceil(8)
    }

    /// Big-endian, zero-padded to the byte length of p.
    pub fn encode_element(&self, e: &BigUint) -> Vec<u8> {
        left_pad(e.to_bytes_be(), self.element_len())
    }

    pub fn in_subgroup(&self, e: &BigUint) -> bool {
        !e.is_zero() && e < self.p() && e.modpow(self.q(), self.p()).is_one()
    }

    pub(crate) fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        base.modpow(exp, self.p())
    }

    pub(crate) fn g_pow(&self, exp: &BigUint) -> BigUint {
        self.pow(self.g(), exp)
    }

    pub(crate) fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % self.p()
    }

    /// Reduces an exponent mod q.
    pub(crate) fn exp(&self, e: BigUint) -> BigUint {
        e % self.q()
    }

    /// `(a - b) mod q` for exponents already reduced mod q.
    pub(crate) fn exp_sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        let q = self.q();
        ((a % q) + q - (b % q)) % q
    }

    /// Uniform exponent in `[1, q-1]`.
    pub fn random_exponent<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::one(), self.q())
    }

    pub(crate) fn digest(&self, e: &BigUint) -> Vec<u8> {
        self.hash.digest(&self.encode_element(e))
    }
}

impl fmt::Debug for SystemParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemParams")
            .field("group", &self.group)
            .field("hash", &self.hash)
            .field("prf", &self.prf)
            .finish_non_exhaustive()
    }
}

/// The KMA's master secret `(x, s)` with `h = g^x`.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterSecret {
    x: BigUint,
    prf_key: PrfKey,
}

impl MasterSecret {
    pub fn x(&self) -> &BigUint {
        &self.x
    }

    pub fn prf_key(&self) -> &PrfKey {
        &self.prf_key
    }

    /// Rebuilds a master secret read from storage and checks it against `params`.
    pub fn from_parts(
        params: &SystemParams,
        x: BigUint,
        prf_key: PrfKey,
    ) -> Result<Self, CryptoError> {
        check_exponent(params, &x)?;
        if params.g_pow(&x) != params.h {
            return Err(CryptoError::InvalidKey("h != g^x".into()));
        }
        Ok(MasterSecret { x, prf_key })
    }
}

impl fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterSecret(..)")
    }
}

/// Builds parameters and master secret around a chosen `x`.
pub fn setup_with_secret(
    group: GroupParams,
    x: BigUint,
    prf_key: PrfKey,
) -> Result<(SystemParams, MasterSecret), CryptoError> {
    let h = group.g.modpow(&x, &group.p);
    let params = SystemParams {
        group,
        h,
        hash: HashId::default(),
        prf: PrfId::default(),
    };
    let msk = MasterSecret::from_parts(&params, x, prf_key)?;
    Ok((params, msk))
}

/// Runs the KMA initialisation: resolves the group, draws x uniformly from
/// `[1, q-1]` and a fresh PRF key, and publishes `h = g^x`.
pub fn init<R: RngCore + CryptoRng + ?Sized>(
    profile: SecurityProfile,
    rng: &mut R,
) -> Result<(SystemParams, MasterSecret), CryptoError> {
    let group = profile.resolve(rng)?;
    let x = rng.gen_biguint_range(&BigUint::one(), &group.q);
    let prf_key = PrfKey::random(rng);
    setup_with_secret(group, x, prf_key)
}

pub(crate) fn check_exponent(params: &SystemParams, x: &BigUint) -> Result<(), CryptoError> {
    if x.is_zero() || x >= params.q() {
        return Err(CryptoError::InvalidKey("exponent outside [1, q-1]".into()));
    }
    Ok(())
}

pub(crate) fn left_pad(bytes: Vec<u8>, width: usize) -> Vec<u8> {
    if bytes.len() >= width {
        return bytes;
    }
    let mut out = vec![0u8; width - bytes.len()];
    out.extend_from_slice(&bytes);
    out
}

/// Miller-Rabin with deterministic bases; composites pass with probability
/// at most 4^-40.
pub fn is_probable_prime(n: &BigUint) -> bool {
    const SMALL: [u32; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];
    if n < &BigUint::from(2u32) {
        return false;
    }
    for &sp in &SMALL {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    // Bases derived from a counter keep the test reproducible.
    let two = BigUint::from(2u32);
    let span = n - 3u32;
    'witness: for i in 0..MILLER_RABIN_ROUNDS {
        let a = if i < SMALL.len() {
            BigUint::from(SMALL[i])
        } else {
            let seed = BigUint::from(0x9e37_79b9_7f4a_7c15u64) * BigUint::from(i as u64 + 1);
            &two + (seed.pow(3) % &span)
        };
        let a = a % n;
        if a.is_zero() || a == one {
            continue;
        }
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
