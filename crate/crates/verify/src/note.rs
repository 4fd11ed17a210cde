//! Checkpoint notes and verifier keys.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use ed25519_dalek::{Signature, Verifier as _, VerifyingKey};
use sha2::{Digest, Sha256};

use crate::merkle::Hash;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Note {
    pub origin: String,
    pub tree_size: u64,
    pub root: Hash,
    pub body: String,
    /// (name, key hint, signature bytes)
    pub sigs: Vec<(String, [u8; 4], Vec<u8>)>,
}

pub fn parse_note(text: &str) -> Result<Note, String> {
    let cut = text.find("\n\n").ok_or("no blank line after the body")?;
    let body = &text[..cut + 1];
    let sig_block = &text[cut + 2..];
    let lines: Vec<&str> = body.lines().collect();
    if lines.len() != 3 {
        return Err(format!("body has {} lines, expected 3", lines.len()));
    }
    let tree_size: u64 = lines[1].parse().map_err(|_| "tree size is not an integer")?;
    if lines[1] != tree_size.to_string() {
        return Err("tree size has a non-canonical form".into());
    }
    let root: Hash = B64
        .decode(lines[2])
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or("root line is not a base64 32-byte hash")?;
    if !sig_block.ends_with('\n') {
        return Err("signature lines must end with a newline".into());
    }
    let mut sigs = Vec::new();
    for line in sig_block.lines() {
        let rest = line.strip_prefix("\u{2014} ").ok_or("signature line must start with an em dash")?;
        let (name, b64) = rest.split_once(' ').ok_or("signature line needs a name and a value")?;
        let raw = B64.decode(b64).map_err(|_| "signature value is not base64")?;
        if raw.len() < 5 {
            return Err("signature value too short".into());
        }
        sigs.push((name.to_string(), raw[..4].try_into().unwrap(), raw[4..].to_vec()));
    }
    if sigs.is_empty() {
        return Err("note carries no signature".into());
    }
    Ok(Note {
        origin: lines[0].to_string(),
        tree_size,
        root,
        body: body.to_string(),
        sigs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustedKey {
    pub name: String,
    pub key: VerifyingKey,
    pub hint: [u8; 4],
}

/// Parses `<name>+<hex hint>+<base64(0x01 ∥ ed25519 public key)>`.
pub fn parse_key(text: &str) -> Result<TrustedKey, String> {
    // Names never contain '+'; base64 may.
    let mut it = text.trim().splitn(3, '+');
    let (Some(name), Some(hint_hex), Some(b64)) = (it.next(), it.next(), it.next()) else {
        return Err("key must look like name+hint+base64".into());
    };
    let raw = B64.decode(b64).map_err(|_| "key is not base64")?;
    if raw.len() != 33 || raw[0] != 1 {
        return Err("only ed25519 keys are supported".into());
    }
    let key = VerifyingKey::from_bytes(raw[1..].try_into().unwrap()).map_err(|_| "bad ed25519 key")?;
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update(b"\n");
    h.update(&raw);
    let hint: [u8; 4] = h.finalize()[..4].try_into().unwrap();
    if hex::encode(hint) != hint_hex {
        return Err("key hint does not match the key".into());
    }
    Ok(TrustedKey { name: name.to_string(), key, hint })
}

impl Note {
    pub fn signed_by(&self, k: &TrustedKey) -> bool {
        self.sigs.iter().any(|(name, hint, sig)| {
            name == &k.name
                && hint == &k.hint
                && Signature::from_slice(sig).is_ok_and(|s| k.key.verify(self.body.as_bytes(), &s).is_ok())
        })
    }

    /// Root as an optional hash: the empty tree has none.
    pub fn tree_root(&self) -> Option<Hash> {
        (self.tree_size > 0).then_some(self.root)
    }
}
