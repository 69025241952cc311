//! Tab-separated file helpers shared by the candidate, feature, run and
//! qrels formats.

use crate::error::{Error, Result};

/// `%.9g`-style rendering: 9 significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e9)`.
pub fn format_g9(x: f64) -> String {
    format_significant(x, 9)
}

pub fn format_significant(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rejects strings that would break a TSV row.
pub fn field(s: &str) -> Result<&str> {
    if s.contains(['\t', '\n', '\r']) {
        Err(Error::Unwritable(s.to_string()))
    } else {
        Ok(s)
    }
}

/// Splits a row into exactly `n` fields.
pub fn split_row<'a>(line: &'a str, n: usize, source: &str, line_no: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != n {
        return Err(Error::parse(
            source,
            line_no,
            format!("expected {n} tab-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

pub fn parse_field<T>(s: &str, what: &str, source: &str, line_no: usize) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| Error::parse(source, line_no, format!("bad {what} `{s}`: {e}")))
}

/// Non-empty lines with their 1-based line numbers.
pub fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}
