//! Number formatting shared by the JSON and CSV writers.
//!
//! JSON documents carry floats as positional decimals with at least 15
//! significant digits so that models and configs round-trip losslessly.
//! Trace CSVs carry 9 significant digits.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Significant digits used for every float written into a JSON document.
pub const JSON_SIGNIFICANT_DIGITS: usize = 17;
/// Significant digits used for every float written into a trace CSV.
pub const CSV_SIGNIFICANT_DIGITS: usize = 9;

/// Formats `value` as a positional decimal carrying `sig` significant digits.
///
/// Non-finite values are written with Rust's default spelling.
pub fn decimal(value: f64, sig: usize) -> String {
    if !value.is_finite() {
        return format!("{value}");
    }
    let sig = sig.max(1) as i32;
    // -0.0 prints as 0
    let value = if value == 0.0 { 0.0 } else { value };
    let exponent = if value == 0.0 {
        0
    } else {
        value.abs().log10().floor() as i32
    };
    let precision = (sig - 1 - exponent).max(1) as usize;
    format!("{value:.precision$}")
}

/// `serde_json` formatter that pretty-prints and writes floats through
/// [`decimal`] with [`JSON_SIGNIFICANT_DIGITS`].
#[derive(Default)]
pub struct PreciseFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(decimal(value, JSON_SIGNIFICANT_DIGITS).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes `value` as pretty JSON with full-precision decimal floats.
/// Non-finite floats come out as `null`, as with plain `serde_json`.
pub fn to_precise_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    // the serializer only emits UTF-8
    Ok(String::from_utf8(buf).expect("serde_json produced invalid UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn significant_digits(s: &str) -> usize {
        s.trim_start_matches('-')
            .chars()
            .filter(|c| c.is_ascii_digit())
            .collect::<String>()
            .trim_start_matches('0')
            .len()
    }

    #[test]
    fn decimal_carries_requested_digits() {
        assert_eq!(decimal(25.0, 17), "25.000000000000000");
        assert_eq!(decimal(0.5, 9), "0.500000000");
        assert_eq!(decimal(-0.0, 9), "0.00000000");
        assert!(significant_digits(&decimal(1.234e-7, 17)) >= 17);
        assert!(significant_digits(&decimal(-98765.4321, 9)) >= 9);
    }

    #[test]
    fn decimal_round_trips_at_json_precision() {
        for &v in &[
            std::f64::consts::PI,
            1.0 / 3.0,
            -2.5e-12,
            6.02214076e23,
            1e-300,
        ] {
            let s = decimal(v, JSON_SIGNIFICANT_DIGITS);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn precise_json_nan_is_null() {
        assert_eq!(to_precise_json(&vec![f64::NAN]).unwrap(), "[\n  null\n]\n");
        let s = to_precise_json(&vec![0.1_f64]).unwrap();
        assert!(s.contains("0.10000000000000001"));
    }
}
