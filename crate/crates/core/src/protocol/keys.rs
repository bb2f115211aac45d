//! Actor identities and the keyed-digest signature scheme.
//!
//! The simulator does not model real public-key cryptography. Each enrolled
//! actor holds a secret key derived from the registry seed, and a signature
//! is the SHA-256 of that key followed by the message bytes. Verification
//! recomputes the digest, so forging a signature without the key means
//! finding a preimage, which is exactly the property the protocol logic
//! needs from a stand-in scheme.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::wire::Digest;

/// Name of a protocol participant: a VI, an endorsing peer, the controller
/// or the ordering service.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub String);

impl ActorId {
    pub fn new(id: impl Into<String>) -> Self {
        ActorId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActorId {
    fn from(s: &str) -> Self {
        ActorId(s.to_owned())
    }
}

/// A keyed digest standing in for a signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sig(pub Digest);

impl Sig {
    pub fn to_hex(self) -> String {
        crate::wire::hex(&self.0)
    }
}

/// Enrollment registry holding every actor's derived key.
///
/// Keys never leave the registry; signing and verification both go through
/// it, mirroring how the simulator owns all identities anyway.
#[derive(Debug, Clone)]
pub struct KeyRegistry {
    keys: BTreeMap<ActorId, Digest>,
    seed: u64,
}

impl KeyRegistry {
    pub fn new(seed: u64) -> Self {
        KeyRegistry {
            keys: BTreeMap::new(),
            seed,
        }
    }

    pub fn with_actors<'a>(seed: u64, actors: impl IntoIterator<Item = &'a ActorId>) -> Self {
        let mut registry = KeyRegistry::new(seed);
        for actor in actors {
            registry.enroll(actor);
        }
        registry
    }

    /// Derives and stores the actor's key: SHA-256 over a domain tag, the
    /// registry seed and the actor name.
    pub fn enroll(&mut self, actor: &ActorId) {
        let mut hasher = Sha256::new();
        hasher.update(b"flowchain/key/v1");
        hasher.update(self.seed.to_be_bytes());
        hasher.update(actor.as_str().as_bytes());
        self.keys.insert(actor.clone(), hasher.finalize().into());
    }

    pub fn is_enrolled(&self, actor: &ActorId) -> bool {
        self.keys.contains_key(actor)
    }

    fn keyed_digest(key: &Digest, msg: &[u8]) -> Digest {
        let mut hasher = Sha256::new();
        hasher.update(key);
        hasher.update(msg);
        hasher.finalize().into()
    }

    /// Signs on behalf of an enrolled actor; `None` for strangers.
    pub fn sign(&self, actor: &ActorId, msg: &[u8]) -> Option<Sig> {
        let key = self.keys.get(actor)?;
        Some(Sig(Self::keyed_digest(key, msg)))
    }

    /// True iff `sig` is the actor's keyed digest of `msg`.
    pub fn verify(&self, actor: &ActorId, msg: &[u8], sig: &Sig) -> bool {
        match self.keys.get(actor) {
            Some(key) => Self::keyed_digest(key, msg) == sig.0,
            None => false,
        }
    }
}
