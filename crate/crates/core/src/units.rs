//! Human-readable quantities in grid files and CLI flags: byte sizes
//! (`1.8MB`, `100KB`), bit rates (`12.5Gbps`) and durations (`50us`).
//! Decimal prefixes throughout; `KiB`/`MiB` are binary.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::sim::SimDuration;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("cannot parse {kind} from {input:?}")]
pub struct ParseError {
    kind: &'static str,
    input: String,
}

fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '_'))
        .unwrap_or(s.len());
    let (num, rest) = s.split_at(end);
    let num = num.replace('_', "");
    let value: f64 = num.parse().ok()?;
    Some((value, rest.trim()))
}

fn scaled(s: &str, kind: &'static str, table: &[(&str, f64)]) -> Result<f64, ParseError> {
    let err = || ParseError {
        kind,
        input: s.to_string(),
    };
    let (value, suffix) = split_number(s).ok_or_else(err)?;
    let factor = table
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(suffix))
        .map(|(_, f)| *f)
        .ok_or_else(err)?;
    let v = value * factor;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(err())
    }
}

pub fn parse_bytes(s: &str) -> Result<u64, ParseError> {
    const TABLE: &[(&str, f64)] = &[
        ("", 1.0),
        ("B", 1.0),
        ("KB", 1e3),
        ("MB", 1e6),
        ("GB", 1e9),
        ("KiB", 1024.0),
        ("MiB", 1024.0 * 1024.0),
    ];
    scaled(s, "byte size", TABLE).map(|v| v.round() as u64)
}

pub fn parse_rate(s: &str) -> Result<u64, ParseError> {
    const TABLE: &[(&str, f64)] = &[("", 1.0), ("bps", 1.0), ("Kbps", 1e3), ("Mbps", 1e6), ("Gbps", 1e9)];
    scaled(s, "bit rate", TABLE).map(|v| v.round() as u64)
}

pub fn parse_duration(s: &str) -> Result<SimDuration, ParseError> {
    const TABLE: &[(&str, f64)] = &[
        ("ns", 1.0),
        ("us", 1e3),
        ("µs", 1e3),
        ("ms", 1e6),
        ("s", 1e9),
        ("min", 60e9),
    ];
    scaled(s, "duration", TABLE).map(|v| SimDuration(v.round() as u64))
}

pub fn format_bytes(b: u64) -> String {
    if b >= 1_000_000 && b.is_multiple_of(100_000) {
        format!("{}MB", b as f64 / 1e6)
    } else if b >= 1_000 && b.is_multiple_of(1_000) {
        format!("{}KB", b / 1_000)
    } else {
        format!("{b}B")
    }
}

pub fn format_rate(r: u64) -> String {
    if r >= 1_000_000_000 && r.is_multiple_of(100_000_000) {
        format!("{}Gbps", r as f64 / 1e9)
    } else if r >= 1_000_000 && r.is_multiple_of(1_000_000) {
        format!("{}Mbps", r / 1_000_000)
    } else {
        format!("{r}bps")
    }
}

macro_rules! quantity {
    ($name:ident, $inner:ty, $parse:ident, $format:expr, $expect:literal) => {
        /// Accepts either a bare number or a string with a unit suffix.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub $inner);

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&$format(self.0))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        f.write_str($expect)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        $parse(v).map($name).map_err(E::custom)
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$name, E> {
                        $parse(&v.to_string()).map($name).map_err(E::custom)
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$name, E> {
                        $parse(&v.to_string()).map($name).map_err(E::custom)
                    }
                    fn visit_f64<E: de::Error>(self, v: f64) -> Result<$name, E> {
                        $parse(&v.to_string()).map($name).map_err(E::custom)
                    }
                }
                d.deserialize_any(V)
            }
        }

        impl std::str::FromStr for $name {
            type Err = ParseError;
            fn from_str(s: &str) -> Result<Self, ParseError> {
                $parse(s).map($name)
            }
        }
    };
}

quantity!(ByteSize, u64, parse_bytes, format_bytes, "a byte size such as 100KB");
quantity!(BitRate, u64, parse_rate, format_rate, "a bit rate such as 1Gbps");
quantity!(
    Span,
    SimDuration,
    parse_duration,
    |d: SimDuration| d.to_string(),
    "a duration such as 25ms"
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_sizes() {
        assert_eq!(parse_bytes("1.8MB"), Ok(1_800_000));
        assert_eq!(parse_bytes("100KB"), Ok(100_000));
        assert_eq!(parse_bytes("0KB"), Ok(0));
        assert_eq!(parse_bytes("1500"), Ok(1500));
        assert_eq!(parse_bytes("64 KiB"), Ok(65_536));
        assert!(parse_bytes("12 parsecs").is_err());
        assert!(parse_bytes("").is_err());
    }

    #[test]
    fn rates_and_durations() {
        assert_eq!(parse_rate("12.5Gbps"), Ok(12_500_000_000));
        assert_eq!(parse_rate("100Mbps"), Ok(100_000_000));
        assert_eq!(parse_duration("50us"), Ok(SimDuration::from_micros(50)));
        assert_eq!(parse_duration("25ms"), Ok(SimDuration::from_millis(25)));
        assert_eq!(parse_duration("2min"), Ok(SimDuration::from_secs(120)));
        assert!(parse_duration("10").is_err());
    }

    #[test]
    fn formatting_round_trips() {
        for b in [0, 1500, 20_000, 1_800_000, 123_456] {
            assert_eq!(parse_bytes(&format_bytes(b)), Ok(b));
        }
        for r in [100_000_000, 1_000_000_000, 12_500_000_000] {
            assert_eq!(parse_rate(&format_rate(r)), Ok(r));
        }
    }

    #[test]
    fn quantities_deserialize_from_numbers_or_strings() {
        #[derive(Deserialize)]
        struct T {
            a: ByteSize,
            b: ByteSize,
            r: BitRate,
            d: Span,
        }
        let t: T = toml::from_str("a = 1500\nb = \"1.8MB\"\nr = \"1Gbps\"\nd = \"200us\"").unwrap();
        assert_eq!(t.a, ByteSize(1500));
        assert_eq!(t.b, ByteSize(1_800_000));
        assert_eq!(t.r, BitRate(1_000_000_000));
        assert_eq!(t.d, Span(SimDuration::from_micros(200)));
    }
}
