//! `MANIFEST`: JSON snapshot of the config and the live table layout,
//! replaced atomically through a rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TreeConfig;
use crate::error::{Error, Result};

pub const FILE_NAME: &str = "MANIFEST";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: TreeConfig,
    pub next_file_id: u64,
    pub next_seq: u64,
    /// Per level, runs newest first, each a list of file ids in key order.
    pub levels: Vec<Vec<Vec<u64>>>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(FILE_NAME);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let m: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::Corruption(format!("{}: {e}", path.display())))?;
        if m.version != VERSION {
            return Err(Error::Corruption(format!("unsupported manifest version {}", m.version)));
        }
        Ok(Some(m))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join("MANIFEST.tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&serde_json::to_vec_pretty(self).expect("manifest serializes"))?;
        fs::rename(tmp, dir.join(FILE_NAME))?;
        Ok(())
    }
}
