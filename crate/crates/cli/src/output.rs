//! CSV emission with provenance headers.
//!
//! Every file starts with `#` comment lines carrying the tool version, the
//! subcommand, and the full resolved configuration, so a result file is
//! reproducible from its own header. Nothing time- or host-dependent is
//! written; identical invocations produce identical bytes.

use mppf::Result;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::Path;

pub struct Provenance {
    command: &'static str,
    entries: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            entries: BTreeMap::new(),
        }
    }

    pub fn set<V: Display>(&mut self, key: &str, value: V) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn set_opt<V: Display>(&mut self, key: &str, value: Option<V>) -> &mut Self {
        if let Some(v) = value {
            self.set(key, v);
        }
        self
    }

    fn write_header<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# mppf {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# command={}", self.command)?;
        for (k, v) in &self.entries {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(())
    }
}

/// Writes a CSV: provenance header, column names, then `rows` of cells.
/// Cells are preformatted strings so callers control the numeric format
/// (plain `Display`, which round-trips f64 exactly).
pub fn write_csv(
    path: &Path,
    prov: &Provenance,
    columns: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut buf = Vec::new();
    prov.write_header(&mut buf)?;
    writeln!(buf, "{}", columns.join(","))?;
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        writeln!(buf, "{}", row.join(","))?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn cell<V: Display>(v: V) -> String {
    v.to_string()
}
