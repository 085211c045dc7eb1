//! Plain-text tables: comma-separated, header row first, numbers with 12
//! significant digits, files written atomically.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Significant digits in every numeric cell.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// C-style `%.12g`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let p = SIGNIFICANT_DIGITS;
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// In-memory table with a fixed header.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    body: String,
    rows: usize,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), body: String::new(), rows: 0 }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    /// Appends a row of preformatted cells.
    pub fn push_cells<S: AsRef<str>>(&mut self, cells: &[S]) {
        debug_assert_eq!(cells.len(), self.header.len());
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            self.body.push_str(c.as_ref());
        }
        self.body.push('\n');
        self.rows += 1;
    }

    /// Appends integer key columns followed by numeric columns.
    pub fn push_row(&mut self, keys: &[usize], values: &[f64]) {
        debug_assert_eq!(keys.len() + values.len(), self.header.len());
        let mut first = true;
        for k in keys {
            if !first {
                self.body.push(',');
            }
            first = false;
            let _ = write!(self.body, "{k}");
        }
        for &v in values {
            if !first {
                self.body.push(',');
            }
            first = false;
            self.body.push_str(&fmt_num(v));
        }
        self.body.push('\n');
        self.rows += 1;
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        out.push_str(&self.body);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

/// Writes to a sibling temporary file, syncs, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = dir.join(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format_matches_c() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(5.0 / 3.0), "1.66666666667");
        assert_eq!(fmt_num(4998.0), "4998");
        assert_eq!(fmt_num(1e-5), "1e-05");
        assert_eq!(fmt_num(0.0001), "0.0001");
        assert_eq!(fmt_num(123456789012.0), "123456789012");
        assert_eq!(fmt_num(1234567890123.0), "1.23456789012e+12");
        assert_eq!(fmt_num(-3.1033892), "-3.1033892");
        assert_eq!(fmt_num(999999999999.9), "1e+12");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn round_trips_to_twelve_digits() {
        for &x in &[std::f64::consts::PI, -1e-300, 6.02214076e23, 0.1 + 0.2] {
            let back: f64 = fmt_num(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-11);
        }
    }

    #[test]
    fn table_write_is_atomic_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("t.csv");
        let mut t = Table::new(&["k", "v"]);
        t.push_row(&[0], &[0.5]);
        t.push_row(&[1], &[2.0]);
        t.write(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "k,v\n0,0.5\n1,2\n");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
