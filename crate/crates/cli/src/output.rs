//! Self-describing CSV artifacts, written atomically.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CliError, Result};

/// A CSV document: one `#` line of `key=value` pairs, a column header, rows.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[(String, String)], columns: &[&str]) -> Self {
        let pairs: Vec<String> = header.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let mut text = format!("# {}\n", pairs.join(" "));
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        for (i, field) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(field.as_ref());
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

/// Writes through a sibling temporary file and renames it into place, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
