use std::collections::BTreeMap;
use std::io::{self, Write};

/// Provenance written into every output file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStamp {
    pub config_checksum: u64,
    pub seed: u64,
    /// Free-form metadata carried verbatim from the config.
    pub metadata: BTreeMap<String, String>,
}

impl RunStamp {
    pub fn new(config_checksum: u64, seed: u64) -> Self {
        Self {
            config_checksum,
            seed,
            metadata: BTreeMap::new(),
        }
    }

    pub fn checksum_hex(&self) -> String {
        format!("{:016x}", self.config_checksum)
    }

    /// `# key=value` lines for CSV headers.
    pub fn write_comments<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# config_checksum={}", self.checksum_hex())?;
        writeln!(w, "# seed={}", self.seed)?;
        for (k, v) in &self.metadata {
            writeln!(w, "# meta.{k}={}", v.replace('\n', " "))?;
        }
        Ok(())
    }
}
