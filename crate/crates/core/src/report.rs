//! Deterministic report emission: JSON with stable key order and fixed
//! 17-significant-digit float formatting, plus matching CSV row formatting.
//!
//! Identical inputs must produce byte-identical artifacts so that reports
//! can be diffed across runs and machines. Struct fields serialize in
//! declaration order; every float is written as `d.16-digits e exponent`,
//! which round-trips `f64` exactly.

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use std::io::{self, Write};

/// Fixed-width scientific formatting with 17 significant digits; exact for
/// every finite `f64`.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

/// Pretty JSON formatter that pins the float representation.
struct StableFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl<'a> StableFormatter<'a> {
    fn new() -> Self {
        StableFormatter { inner: PrettyFormatter::new() }
    }
}

impl<'a> Formatter for StableFormatter<'a> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_float(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serialize to the canonical report representation (pretty-printed, pinned
/// floats, trailing newline).
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, StableFormatter::new());
    value.serialize(&mut ser).expect("report serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serializer emits UTF-8")
}

/// Write a canonical JSON report to `path`.
pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> io::Result<()> {
    std::fs::write(path, to_json_string(value))
}

/// Format one CSV row with the pinned float representation.
pub fn csv_row(values: &[f64]) -> String {
    values.iter().map(|&v| format_float(v)).collect::<Vec<_>>().join(",")
}

/// Write a CSV file with the given header columns and numeric rows.
pub fn write_csv(
    path: &std::path::Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&csv_row(&row));
        out.push('\n');
    }
    std::fs::write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Sample {
        beta: f64,
        alpha: f64,
        values: Vec<f64>,
    }

    #[test]
    fn float_formatting_round_trips() {
        for &v in &[
            0.0,
            1.0,
            -1.0 / 3.0,
            std::f64::consts::PI,
            6.62607015e-34,
            1.7976931348623157e308,
            5e-324,
        ] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "round-trip failed for {s}");
        }
    }

    #[test]
    fn key_order_follows_declaration() {
        let s = to_json_string(&Sample { beta: 2.0, alpha: 1.0, values: vec![0.5] });
        let beta_pos = s.find("\"beta\"").unwrap();
        let alpha_pos = s.find("\"alpha\"").unwrap();
        assert!(beta_pos < alpha_pos, "declaration order not preserved:\n{s}");
    }

    #[test]
    fn output_is_deterministic() {
        let a = to_json_string(&Sample { beta: 0.1, alpha: -0.2, values: vec![1.0, 2.0] });
        let b = to_json_string(&Sample { beta: 0.1, alpha: -0.2, values: vec![1.0, 2.0] });
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
    }

    #[test]
    fn csv_rows_use_pinned_floats() {
        let row = csv_row(&[1.0, -0.5]);
        assert_eq!(row, format!("{},{}", format_float(1.0), format_float(-0.5)));
    }
}
