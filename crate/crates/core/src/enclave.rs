//! Emulated trusted subsystem: counter-based signature service, PRNG common
//! coin, seed-share absorption, state sealing, and recovery-time peer-key
//! replacement. Everything outside this module is "untrusted" code.
//!
//! The boundary is enforced by privacy: the secret enclave key, the seed,
//! the PRNG state, and the counter are private fields reachable only
//! through the operations below. Debug output is redacted.
//!
//! Determinism contract: all randomness is drawn from an internal stream
//! seeded once from the injected platform entropy, so identical platform
//! entropy yields identical key pairs, seals and coin values.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{
    self, aead_open, aead_seal, box_decrypt, box_encrypt, sha256, BoxSecretKey, Digest, PublicKey,
    Signature, SigningKey,
};
use crate::types::{
    quorum, AttestationCertificate, CounterSignature, EnclavePublicKey, ReplicaId, Round, Vertex,
};

pub const SEAL_MAGIC: &[u8; 7] = b"NXSEAL1";
const SHARE_CONTEXT: &[u8] = b"nxbft-seed-share";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EnclaveError {
    #[error("operation not allowed in the current enclave phase")]
    WrongPhase,
    #[error("seed share rejected: {0}")]
    SetupAbort(&'static str),
    #[error("insufficient coin evidence: {got} distinct valid vertices, need {need}")]
    InsufficientEvidence { got: usize, need: usize },
    #[error("evidence round {got} does not match expected round {expected}")]
    WrongRound { got: Round, expected: Round },
    #[error("bad counter signature in coin evidence")]
    BadSignature,
    #[error("sealed blob failed authentication")]
    SealBroken,
    #[error("insufficient recovery commits: {got} of {need}")]
    InsufficientCommits { got: usize, need: usize },
    #[error("attestation certificate rejected")]
    BadAttestation,
    #[error("bad recovery commit signature")]
    BadCommitSignature,
}

/// What the hosting machine provides to the enclave: an entropy source and
/// a hardware sealing key that survives enclave restarts on this platform.
pub trait EnclavePlatform {
    fn fill_entropy(&mut self, buf: &mut [u8]);
    fn sealing_key(&self) -> [u8; 32];
}

/// Registry of long-living replica public keys, provisioned out of band.
#[derive(Debug, Clone)]
pub struct ReplicaKeyRegistry {
    pub keys: Vec<PublicKey>,
}

impl ReplicaKeyRegistry {
    pub fn key_of(&self, id: ReplicaId) -> Option<&PublicKey> {
        self.keys.get(id as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Setup,
    Operational,
    AwaitingFastForward,
}

/// The trusted state. Secrets are private; see module docs.
pub struct Enclave {
    own_id: ReplicaId,
    n: usize,
    sign_secret: SigningKey,
    box_secret: BoxSecretKey,
    counter: u64,
    /// The locally generated share, kept for distribution to peers.
    own_share: [u8; 32],
    /// XOR accumulator; starts as the own share (its first absorption).
    seed: [u8; 32],
    prng: Option<ChaCha20Rng>,
    revealed_tosses: u64,
    expected_round: Round,
    peer_keys: BTreeMap<ReplicaId, EnclavePublicKey>,
    code_measurement: Digest,
    entropy: ChaCha20Rng,
    phase: Phase,
    /// Hardware sealing key, cached from the platform at construction.
    sealing_key_cache: [u8; 32],
    /// After unsealing: the own public key of the pre-crash incarnation,
    /// needed by the untrusted side to validate proposed histories.
    pre_crash_own_key: Option<EnclavePublicKey>,
}

impl std::fmt::Debug for Enclave {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Enclave")
            .field("own_id", &self.own_id)
            .field("n", &self.n)
            .field("expected_round", &self.expected_round)
            .field("peer_keys", &self.peer_keys.len())
            .field("secrets", &"REDACTED")
            .finish()
    }
}

impl Enclave {
    /// Initializes a fresh enclave: new key pairs, counter 0, expected
    /// round 4, and a locally generated random seed share.
    pub fn init<P: EnclavePlatform>(
        own_id: ReplicaId,
        n: usize,
        build_id: &str,
        platform: &mut P,
    ) -> Self {
        assert!(n >= 3, "federation size must be at least 3");
        assert!((own_id as usize) < n, "own id out of range");
        let mut entropy_seed = [0u8; 32];
        platform.fill_entropy(&mut entropy_seed);
        let mut entropy = ChaCha20Rng::from_seed(entropy_seed);
        let sign_secret = SigningKey::generate(&mut entropy);
        let box_secret = BoxSecretKey::generate(&mut entropy);
        let mut own_share = [0u8; 32];
        entropy.fill_bytes(&mut own_share);
        Enclave {
            own_id,
            n,
            sign_secret,
            box_secret,
            counter: 0,
            own_share,
            seed: own_share,
            prng: None,
            revealed_tosses: 0,
            expected_round: 4,
            peer_keys: BTreeMap::new(),
            code_measurement: sha256(&[b"NXMEAS1", build_id.as_bytes()]),
            entropy,
            phase: Phase::Setup,
            sealing_key_cache: platform.sealing_key(),
            pre_crash_own_key: None,
        }
    }

    pub fn own_id(&self) -> ReplicaId {
        self.own_id
    }

    pub fn public_key(&self) -> EnclavePublicKey {
        EnclavePublicKey {
            sign: self.sign_secret.public(),
            encrypt: self.box_secret.public(),
        }
    }

    pub fn expected_round(&self) -> Round {
        self.expected_round
    }

    pub fn code_measurement(&self) -> Digest {
        self.code_measurement
    }

    /// Public enclave key of a peer as currently trusted by this enclave.
    pub fn peer_key(&self, id: ReplicaId) -> Option<&EnclavePublicKey> {
        self.peer_keys.get(&id)
    }

    /// Snapshot of all trusted peer keys (public material).
    pub fn peer_keys(&self) -> std::collections::BTreeMap<ReplicaId, EnclavePublicKey> {
        self.peer_keys.clone()
    }

    /// Pre-crash own public key, available after unsealing.
    pub fn pre_crash_own_key(&self) -> Option<&EnclavePublicKey> {
        self.pre_crash_own_key.as_ref()
    }

    /// Diagnostic one-way fingerprint of the coin seed; used by tests and
    /// the setup auditor to compare seeds without exposing them.
    pub fn seed_fingerprint(&self) -> Digest {
        sha256(&[b"NXSEEDFP", &self.seed])
    }

    // -- attestation ---------------------------------------------------------

    /// Certificate binding the enclave key to the replica's long-living key.
    pub fn make_attestation(&self, replica_key: &SigningKey) -> AttestationCertificate {
        let key = self.public_key();
        let digest =
            AttestationCertificate::signed_digest(self.own_id, &key, &self.code_measurement);
        AttestationCertificate {
            replica_id: self.own_id,
            public_enclave_key: key,
            code_measurement: self.code_measurement,
            replica_signature: replica_key.sign(&digest),
        }
    }

    /// Installs a peer's enclave key after verifying its attestation.
    /// Only valid during setup; recovery-time replacement goes through
    /// [`Enclave::replace_peer_key`].
    pub fn install_peer(
        &mut self,
        cert: &AttestationCertificate,
        registry: &ReplicaKeyRegistry,
    ) -> Result<(), EnclaveError> {
        if self.phase != Phase::Setup {
            return Err(EnclaveError::WrongPhase);
        }
        self.check_attestation(cert, registry)?;
        self.peer_keys.insert(cert.replica_id, cert.public_enclave_key);
        Ok(())
    }

    fn check_attestation(
        &self,
        cert: &AttestationCertificate,
        registry: &ReplicaKeyRegistry,
    ) -> Result<(), EnclaveError> {
        if cert.code_measurement != self.code_measurement {
            return Err(EnclaveError::BadAttestation);
        }
        let key = registry
            .key_of(cert.replica_id)
            .ok_or(EnclaveError::BadAttestation)?;
        if !cert.verify(key) {
            return Err(EnclaveError::BadAttestation);
        }
        Ok(())
    }

    // -- seed establishment --------------------------------------------------

    /// Encrypts the own seed share to a peer's public enclave key.
    pub fn export_share_for(&mut self, peer: ReplicaId) -> Result<Vec<u8>, EnclaveError> {
        if self.phase != Phase::Setup {
            return Err(EnclaveError::WrongPhase);
        }
        let key = self
            .peer_keys
            .get(&peer)
            .ok_or(EnclaveError::SetupAbort("unknown peer"))?;
        Ok(box_encrypt(
            &mut self.entropy,
            &key.encrypt,
            &self.own_share,
            SHARE_CONTEXT,
        ))
    }

    /// Decrypts a peer's seed share and folds it into the seed accumulator.
    pub fn absorb_seed_share(&mut self, ciphertext: &[u8]) -> Result<(), EnclaveError> {
        if self.phase != Phase::Setup {
            return Err(EnclaveError::WrongPhase);
        }
        let plain = box_decrypt(&self.box_secret, ciphertext, SHARE_CONTEXT)
            .ok_or(EnclaveError::SetupAbort("invalid share"))?;
        if plain.len() != 32 {
            return Err(EnclaveError::SetupAbort("invalid share"));
        }
        for (s, p) in self.seed.iter_mut().zip(plain.iter()) {
            *s ^= p;
        }
        Ok(())
    }

    /// Locks the seed and seeds the coin PRNG. Requires all n peer keys
    /// (including the own one) to have been installed.
    pub fn finalize_setup(&mut self) -> Result<(), EnclaveError> {
        if self.phase != Phase::Setup {
            return Err(EnclaveError::WrongPhase);
        }
        if self.peer_keys.len() != self.n {
            return Err(EnclaveError::SetupAbort("missing peer keys"));
        }
        self.prng = Some(ChaCha20Rng::from_seed(self.seed));
        self.phase = Phase::Operational;
        Ok(())
    }

    // -- signature service ---------------------------------------------------

    /// Signs (digest || counter) and increments the counter. Counter values
    /// are never reused.
    pub fn sign(&mut self, message_digest: &Digest) -> CounterSignature {
        let counter = self.counter;
        self.counter += 1;
        let mut msg = [0u8; 40];
        msg[..32].copy_from_slice(message_digest);
        msg[32..].copy_from_slice(&counter.to_le_bytes());
        CounterSignature {
            counter,
            signature: self.sign_secret.sign(&msg),
        }
    }

    // -- common coin ---------------------------------------------------------

    /// Tosses the next coin value if the evidence proves that the expected
    /// round was completed: at least floor(n/2)+1 vertices from distinct
    /// replicas, each of the expected round and each counter-signed under
    /// the stored peer key of its source.
    pub fn toss_coin(&mut self, evidence: &[&Vertex]) -> Result<u32, EnclaveError> {
        if self.phase != Phase::Operational {
            return Err(EnclaveError::WrongPhase);
        }
        let need = quorum(self.n);
        let mut seen = BTreeMap::new();
        for v in evidence {
            seen.entry(v.source).or_insert(*v);
        }
        if seen.len() < need {
            return Err(EnclaveError::InsufficientEvidence {
                got: seen.len(),
                need,
            });
        }
        for v in seen.values() {
            if v.round != self.expected_round {
                return Err(EnclaveError::WrongRound {
                    got: v.round,
                    expected: self.expected_round,
                });
            }
            let key = self.peer_keys.get(&v.source).ok_or(EnclaveError::BadSignature)?;
            if !verify_counter_signature(
                key,
                &v.digest(),
                v.counter_sig.counter,
                &v.counter_sig.signature,
            ) {
                return Err(EnclaveError::BadSignature);
            }
        }
        self.expected_round += 4;
        self.revealed_tosses += 1;
        Ok(self.draw_coin())
    }

    /// Rejection sampling over 64-bit draws to avoid modulo bias.
    fn draw_coin(&mut self) -> u32 {
        let n = self.n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        let prng = self.prng.as_mut().expect("prng seeded");
        loop {
            let x = prng.next_u64();
            if x < zone {
                return (x % n) as u32;
            }
        }
    }

    // -- sealing and recovery ------------------------------------------------

    /// Authenticated-encrypted export of seed, expected round, peer keys,
    /// own id and n — explicitly excluding the secret enclave key and the
    /// counter value.
    pub fn seal_state(&mut self) -> Result<Vec<u8>, EnclaveError> {
        if self.phase != Phase::Operational {
            return Err(EnclaveError::WrongPhase);
        }
        let mut plain = Vec::with_capacity(128 + self.peer_keys.len() * 68);
        plain.extend_from_slice(&self.own_id.to_le_bytes());
        plain.extend_from_slice(&(self.n as u32).to_le_bytes());
        plain.extend_from_slice(&self.seed);
        plain.extend_from_slice(&self.expected_round.to_le_bytes());
        plain.extend_from_slice(&self.code_measurement);
        plain.extend_from_slice(&(self.peer_keys.len() as u32).to_le_bytes());
        for (id, key) in &self.peer_keys {
            plain.extend_from_slice(&id.to_le_bytes());
            plain.extend_from_slice(&key.digest_bytes());
        }
        let sealing_key = self.sealing_key_cache;
        let ct = aead_seal(&mut self.entropy, &sealing_key, &plain, SEAL_MAGIC);
        let mut out = Vec::with_capacity(SEAL_MAGIC.len() + ct.len());
        out.extend_from_slice(SEAL_MAGIC);
        out.extend_from_slice(&ct);
        Ok(out)
    }

    /// Restores a sealed enclave with a fresh key pair and counter 0. The
    /// coin PRNG is re-seeded but not yet positioned; the caller must invoke
    /// [`Enclave::coin_fast_forward`] once the toss count is known.
    pub fn unseal<P: EnclavePlatform>(blob: &[u8], platform: &mut P) -> Result<Self, EnclaveError> {
        if blob.len() < SEAL_MAGIC.len() || &blob[..SEAL_MAGIC.len()] != SEAL_MAGIC {
            return Err(EnclaveError::SealBroken);
        }
        let plain = aead_open(
            &platform.sealing_key(),
            &blob[SEAL_MAGIC.len()..],
            SEAL_MAGIC,
        )
        .ok_or(EnclaveError::SealBroken)?;
        let rd = &mut SealReader { buf: &plain, pos: 0 };
        let own_id = rd.u32()?;
        let n = rd.u32()? as usize;
        let seed: [u8; 32] = rd.bytes(32)?.try_into().unwrap();
        let _sealed_expected_round = rd.u64()?;
        let code_measurement: Digest = rd.bytes(32)?.try_into().unwrap();
        let key_count = rd.u32()? as usize;
        let mut peer_keys = BTreeMap::new();
        for _ in 0..key_count {
            let id = rd.u32()?;
            let raw = rd.bytes(64)?;
            peer_keys.insert(
                id,
                EnclavePublicKey {
                    sign: PublicKey(raw[..32].try_into().unwrap()),
                    encrypt: crypto::BoxPublicKey(raw[32..].try_into().unwrap()),
                },
            );
        }
        rd.done()?;

        let mut entropy_seed = [0u8; 32];
        platform.fill_entropy(&mut entropy_seed);
        let mut entropy = ChaCha20Rng::from_seed(entropy_seed);
        let sign_secret = SigningKey::generate(&mut entropy);
        let box_secret = BoxSecretKey::generate(&mut entropy);
        let pre_crash_own_key = peer_keys.get(&own_id).copied();
        let mut enclave = Enclave {
            own_id,
            n,
            sign_secret,
            box_secret,
            counter: 0,
            own_share: [0u8; 32],
            seed,
            prng: Some(ChaCha20Rng::from_seed(seed)),
            revealed_tosses: 0,
            expected_round: 4,
            peer_keys,
            code_measurement,
            entropy,
            phase: Phase::AwaitingFastForward,
            sealing_key_cache: platform.sealing_key(),
            pre_crash_own_key,
        };
        let own_key = enclave.public_key();
        enclave.peer_keys.insert(own_id, own_key);
        Ok(enclave)
    }

    /// Advances the coin stream past the `toss_count` values the pre-crash
    /// incarnation already revealed and returns them; they were public
    /// before the crash and the replica needs them to re-derive historical
    /// commits. Afterwards the next toss continues the uninterrupted stream.
    pub fn coin_fast_forward(&mut self, toss_count: u64) -> Result<Vec<u32>, EnclaveError> {
        if self.phase != Phase::AwaitingFastForward {
            return Err(EnclaveError::WrongPhase);
        }
        let mut replayed = Vec::with_capacity(toss_count as usize);
        for _ in 0..toss_count {
            replayed.push(self.draw_coin());
        }
        self.revealed_tosses = toss_count;
        self.expected_round = 4 * (toss_count + 1);
        self.phase = Phase::Operational;
        Ok(replayed)
    }

    /// One-shot restore: unseal, then fast-forward the coin by `toss_count`.
    pub fn unseal_and_recover<P: EnclavePlatform>(
        blob: &[u8],
        toss_count: u64,
        platform: &mut P,
    ) -> Result<(Self, Vec<u32>), EnclaveError> {
        let mut enclave = Self::unseal(blob, platform)?;
        let replayed = enclave.coin_fast_forward(toss_count)?;
        Ok((enclave, replayed))
    }

    /// Replaces a recovering peer's enclave key after verifying a quorum of
    /// replica-key signatures over the recovery commit digest embedding the
    /// new certificate.
    pub fn replace_peer_key(
        &mut self,
        peer: ReplicaId,
        new_cert: &AttestationCertificate,
        chosen_history_digest: &Digest,
        commit_sigs: &[(ReplicaId, Signature)],
        registry: &ReplicaKeyRegistry,
    ) -> Result<(), EnclaveError> {
        if self.phase != Phase::Operational {
            return Err(EnclaveError::WrongPhase);
        }
        if new_cert.replica_id != peer {
            return Err(EnclaveError::BadAttestation);
        }
        self.check_attestation(new_cert, registry)?;
        let need = quorum(self.n);
        let mut distinct = BTreeMap::new();
        for (signer, sig) in commit_sigs {
            distinct.entry(*signer).or_insert(*sig);
        }
        if distinct.len() < need {
            return Err(EnclaveError::InsufficientCommits {
                got: distinct.len(),
                need,
            });
        }
        let digest =
            crate::types::recovery_commit_digest(peer, new_cert, chosen_history_digest);
        for (signer, sig) in &distinct {
            let key = registry
                .key_of(*signer)
                .ok_or(EnclaveError::BadCommitSignature)?;
            if !crypto::verify(key, &digest, sig) {
                return Err(EnclaveError::BadCommitSignature);
            }
        }
        self.peer_keys.insert(peer, new_cert.public_enclave_key);
        Ok(())
    }
}

/// Verifies a counter signature over (digest || counter). Pure; runs
/// outside the enclave boundary.
pub fn verify_counter_signature(
    key: &EnclavePublicKey,
    message_digest: &Digest,
    counter: u64,
    signature: &Signature,
) -> bool {
    let mut msg = [0u8; 40];
    msg[..32].copy_from_slice(message_digest);
    msg[32..].copy_from_slice(&counter.to_le_bytes());
    crypto::verify(&key.sign, &msg, signature)
}

struct SealReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> SealReader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], EnclaveError> {
        if self.pos + n > self.buf.len() {
            return Err(EnclaveError::SealBroken);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, EnclaveError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, EnclaveError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn done(&self) -> Result<(), EnclaveError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(EnclaveError::SealBroken)
        }
    }
}
