//! Upstream artifacts (cycle, jets) keyed by a SHA-256 of everything they
//! depend on. A stored file is reused only when its recorded key matches.

use std::path::{Path, PathBuf};

use isochron::io::{read_json, write_json, BuiltinSystem, CycleFile, JetsFile};
use isochron::phase_reduction::JetProfile;
use isochron::LimitCycle64;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub struct Cache {
    dir: Option<PathBuf>,
    cycle_key: String,
    jets_key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
    Disabled,
}

fn sha256_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Cache {
    pub fn new(config: &RunConfig) -> Self {
        let system = config.system.canonical_json();
        let cycle = serde_json::to_string(&config.cycle).unwrap_or_default();
        let jets = serde_json::to_string(&config.jets).unwrap_or_default();
        let cycle_key = sha256_hex(&["cycle", &system, &cycle]);
        let jets_key = sha256_hex(&["jets", &system, &cycle, &jets]);
        let dir = config.cache.enabled.then(|| config.cache_dir());
        Self { dir, cycle_key, jets_key }
    }

    pub fn cycle_key(&self) -> &str {
        &self.cycle_key
    }

    pub fn jets_key(&self) -> &str {
        &self.jets_key
    }

    fn path(dir: &Path, stem: &str, key: &str) -> PathBuf {
        dir.join(format!("{stem}-{}.json", &key[..16]))
    }

    pub fn load_cycle(&self, system: &BuiltinSystem) -> (Option<LimitCycle64>, Lookup) {
        let Some(dir) = &self.dir else { return (None, Lookup::Disabled) };
        let loaded = read_json::<CycleFile>(&Self::path(dir, "cycle", &self.cycle_key))
            .ok()
            .filter(|f| f.system_hash.as_deref() == Some(self.cycle_key.as_str()))
            .and_then(|f| f.into_cycle(system).ok());
        let status = if loaded.is_some() { Lookup::Hit } else { Lookup::Miss };
        (loaded, status)
    }

    pub fn store_cycle(&self, cycle: &LimitCycle64) -> isochron::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut file = CycleFile::new(cycle);
        file.system_hash = Some(self.cycle_key.clone());
        write_json(&Self::path(dir, "cycle", &self.cycle_key), &file)
    }

    pub fn load_jets(&self, system: &BuiltinSystem, cycle: &LimitCycle64) -> (Option<JetProfile<f64>>, Lookup) {
        let Some(dir) = &self.dir else { return (None, Lookup::Disabled) };
        let loaded = read_json::<JetsFile>(&Self::path(dir, "jets", &self.jets_key))
            .ok()
            .filter(|f| f.system_hash.as_deref() == Some(self.jets_key.as_str()))
            .and_then(|f| f.into_profile(system, cycle).ok());
        let status = if loaded.is_some() { Lookup::Hit } else { Lookup::Miss };
        (loaded, status)
    }

    pub fn store_jets(&self, jets: &JetProfile<f64>) -> isochron::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut file = JetsFile::new(jets);
        file.system_hash = Some(self.jets_key.clone());
        write_json(&Self::path(dir, "jets", &self.jets_key), &file)
    }
}
