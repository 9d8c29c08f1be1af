use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::params::ParameterStore;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GZLCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: NetworkConfig,
    seed: u64,
    param_count: usize,
}

/// Network parameters plus the configuration and seed that produced them.
///
/// On disk: 8-byte magic, `u32` version, `u32` manifest length, JSON
/// manifest, `u64` value count, then little-endian `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub seed: u64,
    pub params: ParameterStore<f32>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let manifest = serde_json::to_vec(&Manifest {
            config: self.config.clone(),
            seed: self.seed,
            param_count: self.params.len(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(manifest.len() as u32).to_le_bytes())?;
        w.write_all(&manifest)?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for v in self.params.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut manifest = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut manifest)?;
        let manifest: Manifest = serde_json::from_slice(&manifest)?;
        manifest.config.validate()?;
        let mut long = [0u8; 8];
        r.read_exact(&mut long)?;
        let count = u64::from_le_bytes(long) as usize;
        if count != manifest.param_count || count != manifest.config.param_count() {
            return Err(Error::Format(format!(
                "parameter count {count} does not match configuration ({})",
                manifest.config.param_count()
            )));
        }
        let mut raw = vec![0u8; count * 4];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let params = ParameterStore::from_values(&manifest.config, values)?;
        Ok(Self {
            config: manifest.config,
            seed: manifest.seed,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
