//! Relation schemas, typed values and attribute encodings.

use std::collections::HashMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memsys::config::line_col;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalType {
    Integer,
    /// Fixed point with `scale` decimal digits, stored as a scaled integer.
    Decimal,
    /// Days since 1970-01-01.
    Date,
    /// A string from a fixed dictionary.
    Enum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Raw,
    Dictionary,
    LeadingZeroSuppressed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub logical_type: LogicalType,
    #[serde(default = "default_encoding")]
    pub encoding: Encoding,
    /// Stored width. Derived from `max` (leading-zero suppression) or the
    /// dictionary size when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub scale: u32,
    /// Generator domain, in stored (scaled, day-count) units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<u64>,
    /// Dictionary, in code order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
}

fn default_encoding() -> Encoding {
    Encoding::Raw
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSchema {
    pub name: String,
    /// Row count the generator produces.
    #[serde(default)]
    pub rows: usize,
    #[serde(rename = "attribute")]
    pub attributes: Vec<AttributeSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    #[serde(rename = "relation")]
    pub relations: Vec<RelationSchema>,
}

/// A decoded attribute value. Integers, decimals and dates are all carried
/// as their stored integer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(u64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

pub fn parse_date(s: &str) -> Result<u64> {
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| Error::Domain(format!("date {s:?}: {e}")))?;
    if d.year() < 1970 || s.len() != 10 {
        return Err(Error::Domain(format!(
            "date {s:?} must be YYYY-MM-DD on or after 1970-01-01"
        )));
    }
    Ok((d - epoch()).num_days() as u64)
}

pub fn format_date(days: u64) -> String {
    (epoch() + chrono::Days::new(days))
        .format("%Y-%m-%d")
        .to_string()
}

/// Parses a non-negative decimal literal into a scaled integer.
pub fn parse_decimal(s: &str, scale: u32) -> Result<u64> {
    let bad = || {
        Error::Domain(format!(
            "{s:?} is not a non-negative decimal with at most {scale} fraction digits"
        ))
    };
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    if frac.len() > scale as usize || (s.contains('.') && frac.is_empty()) {
        return Err(bad());
    }
    let mut v: u64 = int.parse().map_err(|_| bad())?;
    for _ in 0..scale {
        v = v.checked_mul(10).ok_or_else(bad)?;
    }
    let mut f: u64 = if frac.is_empty() {
        0
    } else {
        frac.parse().map_err(|_| bad())?
    };
    for _ in frac.len()..scale as usize {
        f *= 10;
    }
    v.checked_add(f).ok_or_else(bad)
}

pub fn format_decimal(v: u64, scale: u32) -> String {
    if scale == 0 {
        return v.to_string();
    }
    let p = 10u64.pow(scale);
    format!("{}.{:0width$}", v / p, v % p, width = scale as usize)
}

fn bits_for(max: u64) -> u32 {
    (64 - max.leading_zeros()).max(1)
}

impl AttributeSpec {
    /// Stored width in bits.
    pub fn bit_width(&self) -> u32 {
        if let Some(b) = self.bits {
            return b;
        }
        match self.encoding {
            Encoding::Dictionary => bits_for(self.values.len().saturating_sub(1) as u64),
            _ => self.max.map_or(32, bits_for),
        }
    }

    pub fn is_dictionary(&self) -> bool {
        self.encoding == Encoding::Dictionary
    }

    fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Schema(format!("attribute {}: {m}", self.name)));
        if !is_identifier(&self.name) {
            return err("name must be an identifier".into());
        }
        match (self.logical_type, self.encoding) {
            (LogicalType::Enum, Encoding::Dictionary) => {
                if self.values.is_empty() {
                    return err("dictionary needs values".into());
                }
                let mut seen = std::collections::HashSet::new();
                if !self.values.iter().all(|v| seen.insert(v)) {
                    return err("duplicate dictionary value".into());
                }
            }
            (LogicalType::Enum, _) | (_, Encoding::Dictionary) => {
                return err("enum attributes use dictionary encoding, and only they do".into())
            }
            (_, Encoding::LeadingZeroSuppressed) if self.max.is_none() && self.bits.is_none() => {
                return err("leading-zero suppression needs max or bits".into())
            }
            _ => {}
        }
        if self.scale != 0 && self.logical_type != LogicalType::Decimal {
            return err("only decimals have a scale".into());
        }
        if self.scale > 18 {
            return err("scale above 18".into());
        }
        let w = self.bit_width();
        if w == 0 || w > 64 {
            return err(format!("bit width {w} not in 1..=64"));
        }
        if self.is_dictionary() && (self.values.len() as u128) > 1u128 << w {
            return err(format!("{} values do not fit {w} bits", self.values.len()));
        }
        if let (Some(lo), Some(hi)) = (self.min, self.max) {
            if lo > hi {
                return err("min exceeds max".into());
            }
        }
        if let Some(hi) = self.max {
            if w < 64 && hi >> w != 0 {
                return err(format!("max {hi} does not fit {w} bits"));
            }
        }
        Ok(())
    }

    /// Stored code of a value.
    pub fn encode(&self, v: &Value) -> Result<u64> {
        let w = self.bit_width();
        let code = match (v, self.is_dictionary()) {
            (Value::Str(s), true) => {
                self.values.iter().position(|x| x == s).ok_or_else(|| {
                    Error::Domain(format!("{s:?} not in dictionary of {}", self.name))
                })? as u64
            }
            (Value::Int(i), false) => *i,
            _ => {
                return Err(Error::Type(format!(
                    "value {v} does not match attribute {}",
                    self.name
                )))
            }
        };
        if w < 64 && code >> w != 0 {
            return Err(Error::Domain(format!(
                "{v} does not fit the {w}-bit attribute {}",
                self.name
            )));
        }
        Ok(code)
    }

    pub fn decode(&self, code: u64) -> Result<Value> {
        if self.is_dictionary() {
            self.values
                .get(code as usize)
                .map(|s| Value::Str(s.clone()))
                .ok_or_else(|| {
                    Error::Domain(format!("code {code} outside dictionary of {}", self.name))
                })
        } else {
            Ok(Value::Int(code))
        }
    }

    /// Parses a data-file field.
    pub fn parse(&self, text: &str) -> Result<Value> {
        let t = text.trim();
        let v = match self.logical_type {
            LogicalType::Integer => Value::Int(t.parse().map_err(|_| {
                Error::Domain(format!(
                    "{t:?} is not a non-negative integer ({})",
                    self.name
                ))
            })?),
            LogicalType::Decimal => Value::Int(parse_decimal(t, self.scale)?),
            LogicalType::Date => Value::Int(parse_date(t)?),
            LogicalType::Enum => Value::Str(t.to_string()),
        };
        self.encode(&v)?;
        Ok(v)
    }

    /// Formats a value as a data-file field.
    pub fn format(&self, v: &Value) -> String {
        match (self.logical_type, v) {
            (LogicalType::Decimal, Value::Int(i)) => format_decimal(*i, self.scale),
            (LogicalType::Date, Value::Int(i)) => format_date(*i),
            _ => v.to_string(),
        }
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

impl RelationSchema {
    pub fn attribute(&self, name: &str) -> Option<(usize, &AttributeSpec)> {
        self.attributes
            .iter()
            .enumerate()
            .find(|(_, a)| a.name.eq_ignore_ascii_case(name))
    }

    /// Stored bits of one record, excluding the valid bit.
    pub fn data_bits(&self) -> usize {
        self.attributes.iter().map(|a| a.bit_width() as usize).sum()
    }
}

impl Schema {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Schema = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            Error::Parse {
                line,
                col,
                msg: e.message().to_string(),
            }
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashMap::new();
        for r in &self.relations {
            if !is_identifier(&r.name) {
                return Err(Error::Schema(format!(
                    "relation name {:?} is not an identifier",
                    r.name
                )));
            }
            if names.insert(r.name.to_ascii_lowercase(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate relation {}", r.name)));
            }
            if r.attributes.is_empty() {
                return Err(Error::Schema(format!(
                    "relation {} has no attributes",
                    r.name
                )));
            }
            let mut attrs = HashMap::new();
            for a in &r.attributes {
                a.validate()?;
                if attrs.insert(a.name.to_ascii_lowercase(), ()).is_some() {
                    return Err(Error::Schema(format!(
                        "duplicate attribute {}.{}",
                        r.name, a.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSchema> {
        self.relations
            .iter()
            .find(|r| r.name.eq_ignore_ascii_case(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(t: LogicalType, e: Encoding) -> AttributeSpec {
        AttributeSpec {
            name: "a".into(),
            logical_type: t,
            encoding: e,
            bits: None,
            scale: 0,
            min: None,
            max: None,
            values: vec![],
        }
    }

    #[test]
    fn dictionary_codes() {
        let mut a = attr(LogicalType::Enum, Encoding::Dictionary);
        a.values = vec!["AIR".into(), "RAIL".into(), "SHIP".into()];
        assert_eq!(a.bit_width(), 2);
        assert_eq!(a.encode(&Value::Str("RAIL".into())).unwrap(), 0b01);
        assert_eq!(a.decode(1).unwrap(), Value::Str("RAIL".into()));
        assert!(matches!(
            a.encode(&Value::Str("TRUCK".into())),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn leading_zero_suppression() {
        let mut a = attr(LogicalType::Integer, Encoding::LeadingZeroSuppressed);
        a.max = Some(300);
        assert_eq!(a.bit_width(), 9);
        assert_eq!(a.encode(&Value::Int(300)).unwrap(), 0b100101100);
        assert!(a.encode(&Value::Int(512)).is_err());
    }

    #[test]
    fn decimal_and_date_text() {
        assert_eq!(parse_decimal("12.3", 2).unwrap(), 1230);
        assert_eq!(parse_decimal("7", 2).unwrap(), 700);
        assert!(parse_decimal("1.234", 2).is_err());
        assert!(parse_decimal("-1", 2).is_err());
        assert_eq!(format_decimal(1230, 2), "12.30");
        assert_eq!(parse_date("1970-01-02").unwrap(), 1);
        assert_eq!(format_date(parse_date("1998-09-02").unwrap()), "1998-09-02");
        assert!(parse_date("1969-12-31").is_err());
    }

    #[test]
    fn schema_parse_errors_have_position() {
        let e = Schema::from_toml(
            "[[relation]]\nname = \"t\"\n[[relation.attribute]]\nname = \"x\"\ntype = \"float\"\n",
        )
        .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 5, .. }), "{e:?}");
    }
}
