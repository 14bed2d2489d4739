//! Output conventions: scalar reports print with 9 significant digits;
//! operator-stack entries carry one extra digit because 9 digits round
//! off by up to 5e-9 relative, which would break the 1e-9 reparse
//! guarantee on those files. Every file lands atomically (temp sibling +
//! rename) so an interrupted run never leaves a partial file.

use std::fs;
use std::path::{Path, PathBuf};

use nsgc_core::error::{Error, Result};
use nsgc_core::mat::Mat;

/// 9 significant digits, exponent notation: `7.07106781e-1`.
pub fn sig9(x: f64) -> String {
    format!("{:.8e}", x)
}

/// 10 significant digits; reparses within `1e-9 * max(1, |x|)`.
pub fn sig10(x: f64) -> String {
    format!("{:.9e}", x)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes the full contents to a sibling temp file, then renames over the
/// target.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = temp_sibling(path);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 2);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// Rows of an operator-stack CSV: `i,row,col,value` per entry, stacks
/// flattened row-major in index order.
pub fn stack_rows(mats: &[Mat]) -> Vec<String> {
    let mut rows = Vec::new();
    for (i, m) in mats.iter().enumerate() {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                rows.push(format!("{i},{r},{c},{}", sig9(m[(r, c)])));
            }
        }
    }
    rows
}

/// Reparses a stack CSV written by [`stack_rows`] back into matrices.
pub fn parse_stack_csv(text: &str) -> Result<Vec<Mat>> {
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != "i,row,col,value" {
                return Err(Error::BadConfig(format!(
                    "unexpected stack CSV header '{line}'"
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::BadConfig(format!(
                "stack CSV line {} has {} fields",
                lineno + 1,
                parts.len()
            )));
        }
        let parse_idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::BadConfig(format!("bad index '{s}' on line {}", lineno + 1)))
        };
        let value = parts[3].parse::<f64>().map_err(|_| {
            Error::BadConfig(format!("bad value '{}' on line {}", parts[3], lineno + 1))
        })?;
        entries.push((parse_idx(parts[0])?, parse_idx(parts[1])?, parse_idx(parts[2])?, value));
    }
    if entries.is_empty() {
        return Err(Error::BadConfig("stack CSV holds no entries".into()));
    }
    let count = entries.iter().map(|e| e.0).max().unwrap() + 1;
    let n = entries.iter().map(|e| e.1.max(e.2)).max().unwrap() + 1;
    let mut mats = vec![Mat::zeros(n, n); count];
    for (i, r, c, v) in entries {
        mats[i][(r, c)] = v;
    }
    Ok(mats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_has_nine_significant_digits() {
        assert_eq!(sig9(0.7071067811865476), "7.07106781e-1");
        assert_eq!(sig9(-1234.56789), "-1.23456789e3");
        assert_eq!(sig9(0.0), "0.00000000e0");
    }

    #[test]
    fn stack_csv_roundtrip_within_tolerance() {
        let mats = vec![
            Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64 / 7.0),
            Mat::from_fn(3, 3, |i, j| ((i + 1) as f64).sqrt() * (j as f64 - 1.5)),
        ];
        let mut text = String::from("i,row,col,value\n");
        for row in stack_rows(&mats) {
            text.push_str(&row);
            text.push('\n');
        }
        let parsed = parse_stack_csv(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        for (a, b) in mats.iter().zip(&parsed) {
            // 9 significant digits keep every entry within 1e-9 relative.
            let scale = a.max_abs().max(1.0);
            assert!(a.max_abs_diff(b) <= 1e-9 * scale);
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_csv(&path, "a,b", &["1,2".into()]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n1,2\n");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(leftovers.len(), 1);
    }
}
