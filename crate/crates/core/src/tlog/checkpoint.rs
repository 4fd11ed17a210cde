//! Signed tree heads in the C2SP tlog-checkpoint note format.
//!
//! ```text
//! <origin>
//! <tree size>
//! <base64 root hash>
//!
//! <U+2014 em dash> <signer name> <base64(key hint ∥ ed25519 signature)>
//! ```

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use ed25519_dalek::{Signature, Signer as _, SigningKey, Verifier as _, VerifyingKey};
use sha2::{Digest as _, Sha256};

use super::Digest;
use crate::error::KernelError;

const SIG_PREFIX: &str = "\u{2014} ";
const ALG_ED25519: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoteSignature {
    pub name: String,
    pub key_hint: [u8; 4],
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub origin: String,
    pub tree_size: u64,
    /// `None` only for the empty tree.
    pub root: Option<Digest>,
    pub signatures: Vec<NoteSignature>,
}

fn root_line(root: Option<Digest>) -> String {
    // The empty tree's head is SHA-256 of the empty string.
    let digest = root.unwrap_or_else(|| Digest::sha256(b""));
    B64.encode(digest.0)
}

impl Checkpoint {
    /// The signed portion: three lines, each newline-terminated.
    pub fn body(&self) -> String {
        format!("{}\n{}\n{}\n", self.origin, self.tree_size, root_line(self.root))
    }

    pub fn format(&self) -> String {
        let mut out = self.body();
        out.push('\n');
        for sig in &self.signatures {
            let mut blob = sig.key_hint.to_vec();
            blob.extend_from_slice(&sig.signature);
            out.push_str(SIG_PREFIX);
            out.push_str(&sig.name);
            out.push(' ');
            out.push_str(&B64.encode(blob));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Checkpoint, KernelError> {
        let bad = |why: &str| KernelError::Format(format!("checkpoint: {why}"));
        let (body, sigs) = text.split_once("\n\n").ok_or_else(|| bad("missing blank line"))?;
        let lines: Vec<&str> = body.split('\n').collect();
        let [origin, size, root] = lines[..] else {
            return Err(bad("expected exactly three body lines"));
        };
        if origin.is_empty() {
            return Err(bad("empty origin"));
        }
        let tree_size: u64 = size.parse().map_err(|_| bad("tree size is not a decimal integer"))?;
        if size != tree_size.to_string() {
            return Err(bad("tree size is not in canonical decimal form"));
        }
        let root_bytes = B64.decode(root).map_err(|_| bad("root is not base64"))?;
        let root_digest = Digest::from_slice(&root_bytes).ok_or_else(|| bad("root is not 32 bytes"))?;
        let root = if tree_size == 0 {
            if root_digest != Digest::sha256(b"") {
                return Err(bad("empty tree with non-empty root"));
            }
            None
        } else {
            Some(root_digest)
        };

        if !sigs.ends_with('\n') {
            return Err(bad("signature block not newline-terminated"));
        }
        let mut signatures = Vec::new();
        for line in sigs[..sigs.len() - 1].split('\n') {
            let rest = line.strip_prefix(SIG_PREFIX).ok_or_else(|| bad("signature line prefix"))?;
            let (name, blob) = rest.split_once(' ').ok_or_else(|| bad("signature line fields"))?;
            let blob = B64.decode(blob).map_err(|_| bad("signature is not base64"))?;
            if name.is_empty() || blob.len() < 5 {
                return Err(bad("signature line too short"));
            }
            signatures.push(NoteSignature {
                name: name.to_string(),
                key_hint: blob[..4].try_into().unwrap(),
                signature: blob[4..].to_vec(),
            });
        }
        if signatures.is_empty() {
            return Err(bad("unsigned"));
        }
        Ok(Checkpoint {
            origin: origin.to_string(),
            tree_size,
            root,
            signatures,
        })
    }

    /// True if some signature by `key` verifies over the body.
    pub fn verify(&self, key: &VerifierKey) -> bool {
        let body = self.body();
        self.signatures.iter().any(|s| {
            s.name == key.name
                && s.key_hint == key.hint()
                && Signature::from_slice(&s.signature)
                    .map(|sig| key.key.verify(body.as_bytes(), &sig).is_ok())
                    .unwrap_or(false)
        })
    }
}

fn key_hint(name: &str, key: &VerifyingKey) -> [u8; 4] {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update(b"\n");
    h.update([ALG_ED25519]);
    h.update(key.as_bytes());
    h.finalize()[..4].try_into().unwrap()
}

/// Public half of a checkpoint key, in the note verifier-key text form
/// `<name>+<hex hint>+<base64(0x01 ∥ public key)>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifierKey {
    pub name: String,
    pub key: VerifyingKey,
}

impl VerifierKey {
    pub fn hint(&self) -> [u8; 4] {
        key_hint(&self.name, &self.key)
    }
}

impl fmt::Display for VerifierKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut blob = vec![ALG_ED25519];
        blob.extend_from_slice(self.key.as_bytes());
        write!(f, "{}+{}+{}", self.name, hex::encode(self.hint()), B64.encode(blob))
    }
}

impl FromStr for VerifierKey {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| KernelError::Key(format!("verifier key: {why}"));
        // Names never contain '+'; base64 may.
        let mut parts = s.trim().splitn(3, '+');
        let (Some(name), Some(hint), Some(blob)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected name+hint+key"));
        };
        let blob = B64.decode(blob).map_err(|_| bad("key is not base64"))?;
        if blob.len() != 33 || blob[0] != ALG_ED25519 {
            return Err(bad("expected an ed25519 key"));
        }
        let key = VerifyingKey::from_bytes(blob[1..].try_into().unwrap())
            .map_err(|_| bad("invalid ed25519 point"))?;
        let vk = VerifierKey {
            name: name.to_string(),
            key,
        };
        if hex::encode(vk.hint()) != hint {
            return Err(bad("hint does not match key"));
        }
        Ok(vk)
    }
}

/// Ed25519 checkpoint signer.
pub struct CheckpointSigner {
    name: String,
    key: SigningKey,
}

impl CheckpointSigner {
    pub fn new(name: impl Into<String>, seed: [u8; 32]) -> Self {
        CheckpointSigner {
            name: name.into(),
            key: SigningKey::from_bytes(&seed),
        }
    }

    pub fn generate(name: impl Into<String>) -> Self {
        let mut seed = [0u8; 32];
        rand::RngCore::fill_bytes(&mut rand::rngs::OsRng, &mut seed);
        Self::new(name, seed)
    }

    pub fn seed(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn verifier_key(&self) -> VerifierKey {
        VerifierKey {
            name: self.name.clone(),
            key: self.key.verifying_key(),
        }
    }

    pub fn sign(&self, origin: &str, tree_size: u64, root: Option<Digest>) -> Checkpoint {
        let mut cp = Checkpoint {
            origin: origin.to_string(),
            tree_size,
            root,
            signatures: Vec::new(),
        };
        let sig = self.key.sign(cp.body().as_bytes());
        cp.signatures.push(NoteSignature {
            name: self.name.clone(),
            key_hint: key_hint(&self.name, &self.key.verifying_key()),
            signature: sig.to_bytes().to_vec(),
        });
        cp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signer() -> CheckpointSigner {
        CheckpointSigner::new("example.local/log", [7u8; 32])
    }

    #[test]
    fn layout_is_three_lines_blank_signature() {
        let root = Digest::sha256(b"root");
        let cp = signer().sign("example.local/log", 15, Some(root));
        let text = cp.format();
        let lines: Vec<&str> = text.split_terminator('\n').collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "example.local/log");
        assert_eq!(lines[1], "15");
        assert_eq!(lines[2], B64.encode(root.0));
        assert_eq!(lines[3], "");
        assert!(lines[4].starts_with("\u{2014} example.local/log "));
        assert!(text.ends_with('\n'));
        let blob = B64.decode(lines[4].rsplit(' ').next().unwrap()).unwrap();
        assert_eq!(blob.len(), 4 + 64);
    }

    #[test]
    fn verifier_key_text_round_trips_for_any_key() {
        // Many seeds so some keys carry '+' in their base64.
        for b in 0..64u8 {
            let vk = CheckpointSigner::new("log.example", [b; 32]).verifier_key();
            assert_eq!(vk.to_string().parse::<VerifierKey>().unwrap(), vk);
        }
    }

    #[test]
    fn round_trip_and_verify() {
        let s = signer();
        let cp = s.sign("example.local/log", 15, Some(Digest::sha256(b"r")));
        let parsed = Checkpoint::parse(&cp.format()).unwrap();
        assert_eq!(parsed, cp);
        assert!(parsed.verify(&s.verifier_key()));
        let other = CheckpointSigner::new("example.local/log", [8u8; 32]);
        assert!(!parsed.verify(&other.verifier_key()));
    }

    #[test]
    fn tampered_size_fails_verification() {
        let s = signer();
        let text = s.sign("example.local/log", 15, Some(Digest::sha256(b"r"))).format();
        let forged = text.replacen("\n15\n", "\n16\n", 1);
        let cp = Checkpoint::parse(&forged).unwrap();
        assert_eq!(cp.tree_size, 16);
        assert!(!cp.verify(&s.verifier_key()));
    }

    #[test]
    fn empty_tree_checkpoint() {
        let s = signer();
        let cp = s.sign("example.local/log", 0, None);
        let parsed = Checkpoint::parse(&cp.format()).unwrap();
        assert_eq!(parsed.root, None);
        assert!(parsed.verify(&s.verifier_key()));
    }

    #[test]
    fn malformed_notes_are_rejected() {
        let s = signer();
        let text = s.sign("o", 3, Some(Digest::ZERO)).format();
        let unsigned = format!("{}\n", s.sign("o", 3, Some(Digest::ZERO)).body());
        for bad in [
            "".to_string(),
            unsigned,
            text.replace("\u{2014}", "-"),
            text.replacen("\n3\n", "\n03\n", 1),
            text.trim_end().to_string(),
        ] {
            assert!(Checkpoint::parse(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn verifier_key_text_round_trip() {
        let vk = signer().verifier_key();
        let text = vk.to_string();
        assert!(text.starts_with("example.local/log+"));
        assert_eq!(text.parse::<VerifierKey>().unwrap(), vk);
        assert!("nope".parse::<VerifierKey>().is_err());
    }
}
