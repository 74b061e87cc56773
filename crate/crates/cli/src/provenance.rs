//! Sidecar files recording how an output was produced.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::failure::{write, Outcome};

#[derive(Serialize)]
struct Provenance<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: Option<u64>,
    config: &'a C,
    outputs: Vec<String>,
}

/// `<output>.provenance.json` next to the primary output.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    output.with_file_name(name)
}

/// Writes the sidecar. It holds no timestamps so reruns are byte-identical.
pub fn record<C: Serialize>(
    primary: &Path,
    command: &'static str,
    seed: Option<u64>,
    config: &C,
    outputs: &[&Path],
) -> Outcome {
    let doc = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&doc).expect("provenance serializes");
    write(&sidecar_path(primary), text + "\n")
}
