//! Decimal-string encoding for reals in persisted documents.
//!
//! Session files store every real as a plain decimal string with 12
//! significant digits so that two runs produce byte-identical output and
//! other languages can read the values without float-formatting quirks.
//! Deserialization accepts either a string or a JSON number.

use serde::{de, Deserialize, Deserializer, Serializer};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` as a plain (non-exponent) decimal with 12 significant digits.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();

    let mut out = String::with_capacity(digits.len() + 8);
    if negative {
        out.push('-');
    }
    let lead = exp + 1;
    if lead <= 0 {
        out.push_str("0.");
        for _ in 0..(-lead) {
            out.push('0');
        }
        out.push_str(&digits);
    } else if lead as usize >= digits.len() {
        out.push_str(&digits);
        for _ in 0..(lead as usize - digits.len()) {
            out.push('0');
        }
    } else {
        let (int, frac) = digits.split_at(lead as usize);
        out.push_str(int);
        out.push('.');
        out.push_str(frac);
    }
    out
}

/// Rounds `x` to what survives a `format_real` / parse round trip.
pub fn normalize(x: f64) -> f64 {
    format_real(x).parse().unwrap_or(x)
}

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_real(*x))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Wire {
    Text(String),
    Number(f64),
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match Wire::deserialize(d)? {
        Wire::Number(x) => Ok(x),
        Wire::Text(s) => s
            .trim()
            .parse()
            .map_err(|_| de::Error::custom(format!("not a decimal real: {s:?}"))),
    }
}

/// Same encoding for optional reals.
pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_str(&format_real(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Helper(#[serde(with = "super")] f64);
        Ok(Option::<Helper>::deserialize(d)?.map(|h| h.0))
    }
}

/// Same encoding for maps of reals.
pub mod map {
    use super::*;
    use serde::ser::SerializeMap;
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut out = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            out.serialize_entry(k, &format_real(*v))?;
        }
        out.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        #[derive(Deserialize)]
        struct Helper(#[serde(with = "super")] f64);
        Ok(BTreeMap::<String, Helper>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| (k, v.0))
            .collect())
    }
}
