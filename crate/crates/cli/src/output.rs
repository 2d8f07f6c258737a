//! CSV and JSON writers.

use serde::Serialize;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Decimal text with 9 significant digits; scientific outside 1e-5..1e15.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // round first so the exponent reflects the printed value
    let sci = format!("{x:.8e}");
    let (_, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-5..15).contains(&exp) {
        return sci;
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        let cells: Vec<String> = values.iter().map(|&v| sig9(v)).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> io::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_file(dir, name, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(0.123456789123), "0.123456789");
        assert_eq!(sig9(-1234.56789123), "-1234.56789");
        assert_eq!(sig9(2.0 / 3.0), "0.666666667");
        assert_eq!(sig9(9.999999999), "10");
        assert_eq!(sig9(1.5e-7), "1.50000000e-7");
        assert_eq!(sig9(0.00012345678912), "0.000123456789");
        assert_eq!(sig9(f64::NAN), "nan");
    }

    #[test]
    fn csv_has_header() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&[1.0, 0.5]);
        assert_eq!(csv.as_str(), "a,b\n1,0.5\n");
    }
}
