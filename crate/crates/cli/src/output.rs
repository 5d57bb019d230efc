//! CSV and JSON writers. Every CSV file starts with a comment line naming
//! its manifest; numbers carry 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// Full double precision in scientific notation.
pub fn number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `rows` under `header`, preceded by `# manifest=<manifest>`.
pub fn write_csv(path: &Path, manifest: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e| CliError::io(path, e);
    let mut buffer = format!("# manifest={manifest}\n").into_bytes();
    {
        let mut writer = csv::Writer::from_writer(&mut buffer);
        let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
        writer.write_record(header).map_err(csv_err)?;
        for row in rows {
            writer.write_record(row).map_err(csv_err)?;
        }
        writer.flush().map_err(io)?;
    }
    fs::write(path, buffer).map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    text.push('\n');
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            let s = number(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
    }

    #[test]
    fn csv_starts_with_the_manifest_reference() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, "manifest.json", &["a", "b"], &[vec![number(1.0), "x".into()]]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# manifest=manifest.json\na,b\n1.0000000000000000e0,x\n");
    }
}
