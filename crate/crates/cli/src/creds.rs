//! Static bearer tokens binding HTTP callers to actors, kept in
//! `credentials.json` inside the data directory.

use std::collections::BTreeMap;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sovereign_core::model::ActorId;

pub const CREDENTIALS_FILE: &str = "credentials.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    tokens: BTreeMap<String, ActorId>,
}

impl Credentials {
    /// Missing file means no tokens yet.
    pub fn load(dir: &Path) -> std::io::Result<Credentials> {
        match std::fs::read_to_string(dir.join(CREDENTIALS_FILE)) {
            Ok(text) => serde_json::from_str(&text).map_err(std::io::Error::other),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Credentials::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let path = dir.join(CREDENTIALS_FILE);
        let tmp = dir.join(format!("{CREDENTIALS_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        {
            let mut opts = std::fs::OpenOptions::new();
            opts.write(true).create(true).truncate(true);
            #[cfg(unix)]
            std::os::unix::fs::OpenOptionsExt::mode(&mut opts, 0o600);
            std::io::Write::write_all(&mut opts.open(&tmp)?, text.as_bytes())?;
        }
        std::fs::rename(tmp, path)
    }

    /// A fresh random token for `actor`.
    pub fn issue(&mut self, actor: &ActorId) -> String {
        let mut raw = [0u8; 24];
        rand::thread_rng().fill_bytes(&mut raw);
        let token = hex::encode(raw);
        self.tokens.insert(token.clone(), actor.clone());
        token
    }

    pub fn actor_for(&self, token: &str) -> Option<&ActorId> {
        self.tokens.get(token)
    }

    pub fn tokens_for<'a>(&'a self, actor: &'a ActorId) -> impl Iterator<Item = &'a str> + 'a {
        self.tokens.iter().filter(move |(_, a)| *a == actor).map(|(t, _)| t.as_str())
    }
}
