//! Reference seed generators shipped with the crate, plus loading of user
//! seed directories.

use std::path::Path;

use crate::proposer::Metadata;

macro_rules! seeds {
    ($($name:literal),* $(,)?) => {
        /// `(name, source)` of every built-in seed.
        pub const BUILTIN: &[(&str, &str)] = &[$(($name, include_str!(concat!("../../seeds/", $name, ".mcq")))),*];
    };
}

seeds!(
    "bolt_circle_flange",
    "control_knob",
    "flanged_bushing",
    "grooved_pulley",
    "hex_nut",
    "l_bracket",
    "mounting_plate",
    "open_tray",
    "pipe_tee",
    "stepped_shaft",
);

/// Metadata from the leading `#` comment block; the first line is the
/// abstract and the whole block the detailed description.
pub fn metadata_for(name: &str, source: &str) -> Metadata {
    let lines: Vec<&str> = source
        .lines()
        .map_while(|l| l.trim_start().strip_prefix('#'))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let readable = name.replace('_', " ");
    let r#abstract = lines
        .first()
        .map_or_else(|| format!("A {readable}."), |l| l.to_string());
    let detailed = if lines.is_empty() {
        format!("A parametric {readable}.")
    } else {
        lines.join(" ")
    };
    Metadata {
        name: name.to_string(),
        r#abstract,
        detailed,
    }
}

pub fn builtin() -> Vec<(Metadata, String)> {
    BUILTIN
        .iter()
        .map(|(n, src)| (metadata_for(n, src), src.to_string()))
        .collect()
}

/// Every `*.mcq` in `dir`, sorted by file name; names come from file stems.
pub fn load_dir(dir: &Path) -> std::io::Result<Vec<(Metadata, String)>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mcq"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .to_lowercase()
                .replace(['-', ' '], "_");
            let src = std::fs::read_to_string(&p)?;
            Ok((metadata_for(&stem, &src), src))
        })
        .collect()
}
