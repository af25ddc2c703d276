//! Cryptographic plumbing: digests, deterministic signatures, and the two
//! encryption primitives the trusted subsystem relies on (an ECIES-style
//! box for seed shares and an AEAD envelope for sealed state).
//!
//! Everything here is deterministic given injected entropy, which keeps
//! simulation runs reproducible bit for bit.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use ed25519_dalek::{Signer, Verifier};
use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};

/// 32-byte content digest used for vertex identities, seals and transcripts.
pub type Digest = [u8; 32];

pub fn sha256(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

// ---------------------------------------------------------------------------
// Signatures (Ed25519, deterministic per RFC 8032)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..6]))
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.0[..6]))
    }
}

/// Signing half of a key pair. Holds the secret; debug output is redacted.
#[derive(Clone)]
pub struct SigningKey(ed25519_dalek::SigningKey);

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningKey(REDACTED)")
    }
}

impl SigningKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        SigningKey(ed25519_dalek::SigningKey::generate(rng))
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.0.verifying_key().to_bytes())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.0.sign(msg).to_bytes())
    }
}

pub fn verify(public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    vk.verify(msg, &ed25519_dalek::Signature::from_bytes(&sig.0))
        .is_ok()
}

// ---------------------------------------------------------------------------
// Box encryption (X25519 + ChaCha20-Poly1305), used for seed shares
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoxPublicKey(pub [u8; 32]);

impl std::fmt::Debug for BoxPublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BoxPublicKey({})", hex::encode(&self.0[..6]))
    }
}

#[derive(Clone)]
pub struct BoxSecretKey(x25519_dalek::StaticSecret);

impl std::fmt::Debug for BoxSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BoxSecretKey(REDACTED)")
    }
}

impl BoxSecretKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        BoxSecretKey(x25519_dalek::StaticSecret::from(bytes))
    }

    pub fn public(&self) -> BoxPublicKey {
        BoxPublicKey(x25519_dalek::PublicKey::from(&self.0).to_bytes())
    }
}

fn box_key(shared: &[u8; 32], eph: &BoxPublicKey, recipient: &BoxPublicKey) -> [u8; 32] {
    sha256(&[b"nxbox-key", shared, &eph.0, &recipient.0])
}

/// Encrypts `plaintext` to `recipient` with a fresh ephemeral key.
/// Output layout: ephemeral public key (32) || AEAD ciphertext+tag.
pub fn box_encrypt<R: RngCore + CryptoRng>(
    rng: &mut R,
    recipient: &BoxPublicKey,
    plaintext: &[u8],
    context: &[u8],
) -> Vec<u8> {
    let mut eph_bytes = [0u8; 32];
    rng.fill_bytes(&mut eph_bytes);
    let eph_secret = x25519_dalek::EphemeralSecret::random_from_rng(FixedRng(eph_bytes, 0));
    let eph_public = BoxPublicKey(x25519_dalek::PublicKey::from(&eph_secret).to_bytes());
    let shared = eph_secret
        .diffie_hellman(&x25519_dalek::PublicKey::from(recipient.0))
        .to_bytes();
    let key = box_key(&shared, &eph_public, recipient);
    let cipher = ChaCha20Poly1305::new((&key).into());
    let ct = cipher
        .encrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload {
                msg: plaintext,
                aad: context,
            },
        )
        .expect("aead encrypt");
    let mut out = Vec::with_capacity(32 + ct.len());
    out.extend_from_slice(&eph_public.0);
    out.extend_from_slice(&ct);
    out
}

pub fn box_decrypt(
    secret: &BoxSecretKey,
    ciphertext: &[u8],
    context: &[u8],
) -> Option<Vec<u8>> {
    if ciphertext.len() < 32 + 16 {
        return None;
    }
    let mut eph = [0u8; 32];
    eph.copy_from_slice(&ciphertext[..32]);
    let eph_public = BoxPublicKey(eph);
    let shared = secret
        .0
        .diffie_hellman(&x25519_dalek::PublicKey::from(eph))
        .to_bytes();
    let key = box_key(&shared, &eph_public, &secret.public());
    let cipher = ChaCha20Poly1305::new((&key).into());
    cipher
        .decrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload {
                msg: &ciphertext[32..],
                aad: context,
            },
        )
        .ok()
}

/// Adapter feeding fixed bytes as an RNG; used to derive an ephemeral key
/// from already-drawn entropy so one `fill_bytes` call fully determines it.
struct FixedRng([u8; 32], usize);

impl RngCore for FixedRng {
    fn next_u32(&mut self) -> u32 {
        let mut b = [0u8; 4];
        self.fill_bytes(&mut b);
        u32::from_le_bytes(b)
    }
    fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.fill_bytes(&mut b);
        u64::from_le_bytes(b)
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for d in dest.iter_mut() {
            *d = self.0[self.1 % 32];
            self.1 += 1;
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

impl rand::CryptoRng for FixedRng {}

// ---------------------------------------------------------------------------
// Symmetric sealing (AEAD envelope under a platform-held key)
// ---------------------------------------------------------------------------

/// Encrypts with a random nonce drawn from `rng`. Layout: nonce (12) || ct+tag.
pub fn aead_seal<R: RngCore + CryptoRng>(
    rng: &mut R,
    key: &[u8; 32],
    plaintext: &[u8],
    context: &[u8],
) -> Vec<u8> {
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new(key.into());
    let ct = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: context,
            },
        )
        .expect("aead encrypt");
    let mut out = Vec::with_capacity(12 + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

pub fn aead_open(key: &[u8; 32], sealed: &[u8], context: &[u8]) -> Option<Vec<u8>> {
    if sealed.len() < 12 + 16 {
        return None;
    }
    let cipher = ChaCha20Poly1305::new(key.into());
    cipher
        .decrypt(
            Nonce::from_slice(&sealed[..12]),
            Payload {
                msg: &sealed[12..],
                aad: context,
            },
        )
        .ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let sk = SigningKey::generate(&mut rng);
        let sig = sk.sign(b"hello");
        assert!(verify(&sk.public(), b"hello", &sig));
        assert!(!verify(&sk.public(), b"hellO", &sig));
    }

    #[test]
    fn identical_entropy_identical_keys() {
        let a = SigningKey::generate(&mut ChaCha20Rng::seed_from_u64(7));
        let b = SigningKey::generate(&mut ChaCha20Rng::seed_from_u64(7));
        assert_eq!(a.public(), b.public());
    }

    #[test]
    fn box_round_trip_and_tamper() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let sk = BoxSecretKey::generate(&mut rng);
        let ct = box_encrypt(&mut rng, &sk.public(), b"share bytes", b"ctx");
        assert_eq!(
            box_decrypt(&sk, &ct, b"ctx").as_deref(),
            Some(&b"share bytes"[..])
        );
        assert!(box_decrypt(&sk, &ct, b"other").is_none());
        let mut bad = ct.clone();
        bad[40] ^= 1;
        assert!(box_decrypt(&sk, &bad, b"ctx").is_none());
    }

    #[test]
    fn seal_round_trip_and_tamper() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let key = [9u8; 32];
        let sealed = aead_seal(&mut rng, &key, b"state", b"seal-ctx");
        assert_eq!(
            aead_open(&key, &sealed, b"seal-ctx").as_deref(),
            Some(&b"state"[..])
        );
        let mut bad = sealed.clone();
        let last = bad.len() - 1;
        bad[last] ^= 0x80;
        assert!(aead_open(&key, &bad, b"seal-ctx").is_none());
    }
}
