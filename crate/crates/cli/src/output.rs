use std::fs;
use std::io::{self, Write};
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::CliError;

/// Appends `lines` to `path` all at once: the new file is assembled next to
/// the target and renamed over it, so readers never see a partial line.
pub fn append_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let existing = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(CliError::io(path, e)),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    let write = |tmp: &mut NamedTempFile| -> io::Result<()> {
        tmp.write_all(&existing)?;
        if existing.last().is_some_and(|&b| b != b'\n') {
            tmp.write_all(b"\n")?;
        }
        for line in lines {
            tmp.write_all(line.as_bytes())?;
        }
        tmp.as_file().sync_all()
    };
    write(&mut tmp).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn emit(out: Option<&Path>, lines: &[String]) -> Result<(), CliError> {
    match out {
        Some(path) => append_lines(path, lines),
        None => {
            let mut stdout = io::stdout().lock();
            lines
                .iter()
                .try_for_each(|l| stdout.write_all(l.as_bytes()))
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}
