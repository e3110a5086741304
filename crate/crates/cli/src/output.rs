//! Output files: every file starts with a `# tclflex <cmd> config_hash=… seed=…` line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::Failure;

pub struct Emitter {
    command: &'static str,
    seed: u64,
    hash: String,
    out: PathBuf,
}

impl Emitter {
    /// `fingerprint` must cover everything that influences the results:
    /// resolved configuration, options and input checksums.
    pub fn new(command: &'static str, seed: u64, out: &Path, fingerprint: &str) -> Self {
        let digest = Sha256::digest(
            format!("tclflex {}\n{fingerprint}", env!("CARGO_PKG_VERSION")).as_bytes(),
        );
        Self {
            command,
            seed,
            hash: hex::encode(digest)[..16].to_string(),
            out: out.to_path_buf(),
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# tclflex {} config_hash={} seed={}",
            self.command, self.hash, self.seed
        )
    }

    /// Write `<out>/<name>` with the header line followed by `body`.
    pub fn emit<F>(&self, name: &str, body: F) -> Result<PathBuf, Failure>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let mut buf = Vec::new();
        writeln!(buf, "{}", self.header()).map_err(Failure::io)?;
        body(&mut buf).map_err(Failure::io)?;
        if let Some(token) = non_finite_token(&buf) {
            return Err(Failure::Numerical(format!(
                "{name}: non-finite value `{token}` in output"
            )));
        }
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(Failure::io)?;
        }
        fs::write(&path, buf).map_err(Failure::io)?;
        Ok(path)
    }
}

fn non_finite_token(buf: &[u8]) -> Option<String> {
    let text = String::from_utf8_lossy(buf);
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split([',', ' ', '\t', '=']))
        .map(str::trim)
        .find(|t| matches!(*t, "NaN" | "inf" | "-inf"))
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_carries_hash_and_seed() {
        let a = Emitter::new("capacity", 7, Path::new("x"), "cfg");
        let b = Emitter::new("capacity", 7, Path::new("y"), "cfg");
        let c = Emitter::new("capacity", 7, Path::new("x"), "other");
        assert_eq!(a.header(), b.header());
        assert_ne!(a.header(), c.header());
        assert!(a.header().starts_with("# tclflex capacity config_hash="));
        assert!(a.header().ends_with(" seed=7"));
    }

    #[test]
    fn non_finite_output_is_a_numerical_failure() {
        let dir = tempfile::tempdir().unwrap();
        let e = Emitter::new("track", 1, dir.path(), "");
        let err = e.emit("t.csv", |w| writeln!(w, "a,b\n1,NaN")).unwrap_err();
        assert_eq!(err.code(), 3);
        assert!(e
            .emit("ok.csv", |w| writeln!(w, "name\ninformation"))
            .is_ok());
    }
}
