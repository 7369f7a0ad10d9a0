use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluate::RateRecord;

pub const RATE_HEADER: &str = "scheme,snr_db,B,M,N,K,trials,sum_rate_mean,sum_rate_stderr,seed";

/// Significant digits written for real-valued columns.
pub const SIG_DIGITS: usize = 12;

/// Plain decimal with `digits` significant digits and no exponent.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 {
            "0".to_string()
        } else {
            x.to_string()
        };
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn record_row(r: &RateRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.scheme,
        fmt_sig(r.snr_db, SIG_DIGITS),
        r.b,
        r.m,
        r.n,
        r.k,
        r.trials,
        fmt_sig(r.sum_rate_mean, SIG_DIGITS),
        fmt_sig(r.sum_rate_stderr, SIG_DIGITS),
        r.seed
    )
}

pub fn format_records(records: &[RateRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(RATE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&record_row(r));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_csv(records: &[RateRecord], path: &Path) -> Result<()> {
    write_text(path, &format_records(records))
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, line: usize) -> Result<T> {
    cols[i].parse().map_err(|_| {
        Error::validation(format!(
            "line {line}: cannot parse column {} '{}'",
            i + 1,
            cols[i]
        ))
    })
}

/// Inverse of [`format_records`].
pub fn parse_records(text: &str) -> Result<Vec<RateRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RATE_HEADER => {}
        _ => return Err(Error::validation("missing or unexpected CSV header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cols: Vec<&str> = l.trim().split(',').collect();
            if cols.len() != 10 {
                return Err(Error::validation(format!(
                    "line {}: expected 10 columns, got {}",
                    i + 1,
                    cols.len()
                )));
            }
            Ok(RateRecord {
                scheme: cols[0].to_string(),
                snr_db: field(&cols, 1, i + 1)?,
                b: field(&cols, 2, i + 1)?,
                m: field(&cols, 3, i + 1)?,
                n: field(&cols, 4, i + 1)?,
                k: field(&cols, 5, i + 1)?,
                trials: field(&cols, 6, i + 1)?,
                sum_rate_mean: field(&cols, 7, i + 1)?,
                sum_rate_stderr: field(&cols, 8, i + 1)?,
                seed: field(&cols, 9, i + 1)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0, 12), "0");
        assert_eq!(fmt_sig(30.0, 12), "30");
        assert_eq!(fmt_sig(-10.0, 12), "-10");
        assert_eq!(fmt_sig(12.3456789012345, 12), "12.3456789012");
        assert_eq!(fmt_sig(0.000123456789012345, 12), "0.000123456789012");
        assert_eq!(fmt_sig(123456789012345.0, 12), "123456789012345");
    }

    proptest! {
        #[test]
        fn relative_error_within_digits(x in prop_oneof![-1e6f64..1e6, 1e-9f64..1e-3]) {
            let back: f64 = fmt_sig(x, SIG_DIGITS).parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-11 * x.abs());
        }
    }
}
