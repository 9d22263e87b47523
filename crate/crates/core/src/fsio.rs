//! Small filesystem helpers shared by exporters and the CLI.

use std::fs;
use std::io;
use std::path::Path;

/// Write `bytes` to `path` atomically: write a sibling temp file, then rename.
///
/// Re-running a deterministic exporter therefore either leaves the previous
/// file in place or replaces it with identical bytes, never a torn write.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp = dir.join(file_name);
    tmp.set_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}
