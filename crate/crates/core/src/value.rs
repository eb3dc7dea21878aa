//! Cell values and the strict number grammar shared by ingestion, detection
//! and canonical export.

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// Label used for a null categorical value when it names a group.
pub const NULL_CATEGORY: &str = "⟨null⟩";

/// A single cell. `Number` is always finite and never negative zero.
///
/// Equality on numbers is bitwise, which for finite non-negative-zero values
/// coincides with `==`.
#[derive(Debug, Clone, Default)]
pub enum CellValue {
    #[default]
    Null,
    Number(f64),
    Text(String),
}

impl CellValue {
    /// Builds a number cell. Returns `None` for non-finite input.
    pub fn number(x: f64) -> Option<CellValue> {
        if x.is_finite() {
            // -0.0 + 0.0 == +0.0
            Some(CellValue::Number(x + 0.0))
        } else {
            None
        }
    }

    pub fn text(s: impl Into<String>) -> CellValue {
        CellValue::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, CellValue::Null)
    }

    pub fn is_text(&self) -> bool {
        matches!(self, CellValue::Text(_))
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            CellValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    /// Categorical label of this cell, as used in group keys.
    pub fn category_label(&self) -> String {
        match self {
            CellValue::Null => NULL_CATEGORY.to_string(),
            CellValue::Text(s) => s.clone(),
            CellValue::Number(x) => format_number(*x),
        }
    }

    /// Interprets a raw CSV field for a column of the given kind.
    pub fn from_field(field: &str, kind: ColumnKind) -> CellValue {
        if field.is_empty() {
            return CellValue::Null;
        }
        match kind {
            ColumnKind::Numeric => match parse_strict_number(field) {
                Some(x) => CellValue::Number(x),
                None => CellValue::Text(field.to_string()),
            },
            ColumnKind::Categorical => CellValue::Text(field.to_string()),
        }
    }
}

impl PartialEq for CellValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (CellValue::Null, CellValue::Null) => true,
            (CellValue::Number(a), CellValue::Number(b)) => a.to_bits() == b.to_bits(),
            (CellValue::Text(a), CellValue::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for CellValue {}

impl Hash for CellValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            CellValue::Null => 0u8.hash(state),
            CellValue::Number(x) => {
                1u8.hash(state);
                x.to_bits().hash(state);
            }
            CellValue::Text(s) => {
                2u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Null => f.write_str("null"),
            CellValue::Number(x) => f.write_str(&format_number(*x)),
            CellValue::Text(s) => write!(f, "{s:?}"),
        }
    }
}

impl Serialize for CellValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            CellValue::Null => serializer.serialize_none(),
            CellValue::Number(x) => serializer.serialize_f64(*x),
            CellValue::Text(s) => serializer.serialize_str(s),
        }
    }
}

impl<'de> Deserialize<'de> for CellValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct CellVisitor;

        impl Visitor<'_> for CellVisitor {
            type Value = CellValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("null, a finite number or a string")
            }

            fn visit_unit<E: de::Error>(self) -> Result<CellValue, E> {
                Ok(CellValue::Null)
            }

            fn visit_none<E: de::Error>(self) -> Result<CellValue, E> {
                Ok(CellValue::Null)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<CellValue, E> {
                CellValue::number(v).ok_or_else(|| E::custom("non-finite number"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<CellValue, E> {
                self.visit_f64(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<CellValue, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<CellValue, E> {
                Ok(CellValue::Text(v.to_string()))
            }

            fn visit_string<E: de::Error>(self, v: String) -> Result<CellValue, E> {
                Ok(CellValue::Text(v))
            }
        }

        deserializer.deserialize_any(CellVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Strict number grammar: optional surrounding whitespace, optional sign,
/// digits with an optional decimal point, optional exponent. Anything else
/// (currency symbols, suffixes, separators, `inf`, `nan`) is rejected, as is
/// any literal whose value overflows to infinity.
pub fn parse_strict_number(raw: &str) -> Option<f64> {
    let s = raw.trim();
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    let x: f64 = s.parse().ok()?;
    if x.is_finite() {
        Some(x + 0.0)
    } else {
        None
    }
}

/// Canonical text form of a number: shortest round-trip digits, plain
/// positional notation, no trailing `.0`.
pub fn format_number(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_parse_accepts_plain_forms() {
        assert_eq!(parse_strict_number("1200"), Some(1200.0));
        assert_eq!(parse_strict_number("  -3.5 "), Some(-3.5));
        assert_eq!(parse_strict_number("+.5"), Some(0.5));
        assert_eq!(parse_strict_number("5."), Some(5.0));
        assert_eq!(parse_strict_number("1e3"), Some(1000.0));
        assert_eq!(parse_strict_number("2.5E-2"), Some(0.025));
    }

    #[test]
    fn strict_parse_rejects_dirt() {
        for s in [
            "12k", "$100", "1,000", "", " ", ".", "-", "1e", "1e+", "inf", "NaN", "infinity",
            "0x10", "1 2", "1e400", "--1",
        ] {
            assert_eq!(parse_strict_number(s), None, "{s:?}");
        }
    }

    #[test]
    fn negative_zero_is_normalised() {
        let x = parse_strict_number("-0").unwrap();
        assert_eq!(x.to_bits(), 0.0f64.to_bits());
        assert_eq!(CellValue::number(-0.0), Some(CellValue::Number(0.0)));
        assert_eq!(format_number(x), "0");
    }

    #[test]
    fn canonical_number_format() {
        assert_eq!(format_number(1200.0), "1200");
        assert_eq!(format_number(0.1 + 0.2), "0.30000000000000004");
        assert_eq!(format_number(1e21), "1000000000000000000000");
        assert_eq!(format_number(1.5e-7), "0.00000015");
    }

    #[test]
    fn field_interpretation() {
        assert_eq!(CellValue::from_field("", ColumnKind::Numeric), CellValue::Null);
        assert_eq!(
            CellValue::from_field("12k", ColumnKind::Numeric),
            CellValue::text("12k")
        );
        assert_eq!(
            CellValue::from_field("7", ColumnKind::Categorical),
            CellValue::text("7")
        );
    }

    #[test]
    fn json_shape() {
        let cells = vec![CellValue::Null, CellValue::Number(600.0), CellValue::text("12k")];
        let json = serde_json::to_string(&cells).unwrap();
        assert_eq!(json, r#"[null,600.0,"12k"]"#);
        let back: Vec<CellValue> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cells);
    }
}
