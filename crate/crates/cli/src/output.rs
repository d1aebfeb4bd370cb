//! Write-once outputs and the provenance block attached to each of them.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: C,
    pub model_sha256: Option<String>,
}

impl<C: Serialize> Provenance<C> {
    pub fn new(command: &'static str, config: C, model_sha256: Option<String>) -> Self {
        Self { tool: "seqdetect", version: env!("CARGO_PKG_VERSION"), command, config, model_sha256 }
    }
}

/// A JSON object with `provenance` appended after the body's own fields.
#[derive(Serialize)]
pub struct Report<'a, B: Serialize, C: Serialize> {
    #[serde(flatten)]
    pub body: &'a B,
    pub provenance: &'a Provenance<C>,
}

pub fn to_json_line<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string(value).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Destinations an invocation will write, checked before any work starts.
#[derive(Debug, Default)]
pub struct OutputPlan {
    inputs: Vec<PathBuf>,
    force: bool,
}

impl OutputPlan {
    pub fn new(force: bool) -> Self {
        Self { inputs: Vec::new(), force }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn check(&self, output: &Path) -> Result<(), CliError> {
        for input in &self.inputs {
            if same_file(input, output) {
                return Err(CliError::Usage(format!("output {} would overwrite an input", output.display())));
            }
        }
        if !self.force && output.exists() {
            return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", output.display())));
        }
        Ok(())
    }

    pub fn write(&self, output: &Path, bytes: &[u8]) -> Result<(), CliError> {
        self.check(output)?;
        let mut opts = OpenOptions::new();
        opts.write(true);
        if self.force {
            opts.create(true).truncate(true);
        } else {
            opts.create_new(true);
        }
        let mut f = opts.open(output).map_err(|e| CliError::Io(output.to_path_buf(), e))?;
        f.write_all(bytes).map_err(|e| CliError::Io(output.to_path_buf(), e))?;
        Ok(())
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Writes to `path`, or to stdout when no path is configured.
pub fn emit(plan: &OutputPlan, path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => plan.write(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn refuses_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        let plan = OutputPlan::new(false);
        plan.write(&p, b"one").unwrap();
        assert!(plan.write(&p, b"two").is_err());
        OutputPlan::new(true).write(&p, b"three").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"three");
    }

    #[test]
    fn refuses_to_clobber_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.csv");
        std::fs::write(&p, "x").unwrap();
        let mut plan = OutputPlan::new(true);
        plan.input(&p);
        assert!(plan.write(&p, b"y").is_err());
        assert_eq!(std::fs::read(&p).unwrap(), b"x");
    }
}
