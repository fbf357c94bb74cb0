//! Config values like attack budgets are conventionally written as pixel
//! fractions ("4/255"). This helper lets TOML fields accept either that
//! string form or a plain number.

use serde::{Deserialize, Deserializer};

pub(crate) fn parse_ratio(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("invalid ratio numerator in {s:?}"))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| format!("invalid ratio denominator in {s:?}"))?;
        if d == 0.0 {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(n / d)
    } else {
        s.parse().map_err(|_| format!("invalid number {s:?}"))
    }
}

pub(crate) fn ratio_f64<'de, D>(deserializer: D) -> Result<f64, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(deserializer)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(s) => parse_ratio(&s).map_err(serde::de::Error::custom),
    }
}
