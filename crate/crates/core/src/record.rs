//! Canonical flat key/value records.
//!
//! Every persisted structure (memory entries, journal headers, snapshot
//! lines, replay events, config files) is written as a single line of the
//! form `key=value;key=value;...` with keys in ascending byte order and no
//! whitespace around separators. Reals are always rendered with exactly six
//! decimal digits, so a record is byte-identical across runs and platforms.
//!
//! Values are percent-escaped: `%`, `;`, `=`, `|`, CR and LF are written as
//! `%25`, `%3B`, `%3D`, `%7C`, `%0D` and `%0A`. Nothing else is escaped.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

/// Scale used for six-decimal fixed rendering.
const REAL_SCALE: f64 = 1_000_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("bad value for `{key}`: {value:?}")]
    BadValue { key: String, value: String },
}

/// Round to six decimals, normalizing negative zero.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let q = (x * REAL_SCALE).round() / REAL_SCALE;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

/// Render a real the canonical way (`inf`/`-inf` for infinities).
pub fn format_real(x: f64) -> String {
    if x == f64::INFINITY {
        return "inf".to_string();
    }
    if x == f64::NEG_INFINITY {
        return "-inf".to_string();
    }
    format!("{:.6}", quantize(x))
}

fn parse_real(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => {
            // canonical reals always carry exactly six decimals
            let (_, frac) = s.split_once('.')?;
            if frac.len() != 6 {
                return None;
            }
            s.parse::<f64>().ok().filter(|v| v.is_finite())
        }
    }
}

pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for ch in value.chars() {
        match ch {
            '%' => out.push_str("%25"),
            ';' => out.push_str("%3B"),
            '=' => out.push_str("%3D"),
            '|' => out.push_str("%7C"),
            '\r' => out.push_str("%0D"),
            '\n' => out.push_str("%0A"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(value: &str) -> Result<String, RecordError> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest
            .get(pos + 1..pos + 3)
            .ok_or_else(|| RecordError::Malformed(format!("truncated escape in {value:?}")))?;
        let ch = match code {
            "25" => '%',
            "3B" => ';',
            "3D" => '=',
            "7C" => '|',
            "0D" => '\r',
            "0A" => '\n',
            other => {
                return Err(RecordError::Malformed(format!("unknown escape %{other}")));
            }
        };
        out.push(ch);
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Ok(out)
}

/// An ordered set of string fields with typed accessors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Record {
    fields: BTreeMap<String, String>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }

    pub fn put_real(&mut self, key: &str, value: f64) -> &mut Self {
        self.put(key, format_real(value))
    }

    pub fn put_display(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.put(key, value.to_string())
    }

    /// Lossless real: shortest decimal that parses back to the same bits.
    /// Used for running statistics whose exact value must survive a restart.
    pub fn put_exact(&mut self, key: &str, value: f64) -> &mut Self {
        self.put(key, format!("{value}"))
    }

    pub fn put_bool(&mut self, key: &str, value: bool) -> &mut Self {
        self.put(key, if value { "true" } else { "false" })
    }

    /// Comma-separated integer list; empty list renders as the empty string.
    pub fn put_list<I, T>(&mut self, key: &str, items: I) -> &mut Self
    where
        I: IntoIterator<Item = T>,
        T: std::fmt::Display,
    {
        let mut s = String::new();
        for (i, item) in items.into_iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{item}");
        }
        self.put(key, s)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.fields.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.fields.keys().map(String::as_str)
    }

    pub fn get(&self, key: &str) -> Result<&str, RecordError> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| RecordError::MissingKey(key.to_string()))
    }

    pub fn opt(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    fn bad(key: &str, value: &str) -> RecordError {
        RecordError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        }
    }

    pub fn real(&self, key: &str) -> Result<f64, RecordError> {
        let v = self.get(key)?;
        parse_real(v).ok_or_else(|| Self::bad(key, v))
    }

    pub fn exact(&self, key: &str) -> Result<f64, RecordError> {
        let v = self.get(key)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Self::bad(key, v))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, RecordError> {
        let v = self.get(key)?;
        v.parse::<T>().map_err(|_| Self::bad(key, v))
    }

    pub fn opt_parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, RecordError> {
        match self.opt(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| Self::bad(key, v)),
        }
    }

    pub fn boolean(&self, key: &str) -> Result<bool, RecordError> {
        match self.get(key)? {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(Self::bad(key, v)),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, RecordError> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|item| item.parse::<T>().map_err(|_| Self::bad(key, v)))
            .collect()
    }

    pub fn encode(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            out.push_str(k);
            out.push('=');
            out.push_str(&escape(v));
        }
        out
    }

    /// Strict decoder: keys must be unique and in ascending order.
    pub fn decode(line: &str) -> Result<Self, RecordError> {
        let mut fields = BTreeMap::new();
        if line.is_empty() {
            return Ok(Self { fields });
        }
        let mut prev: Option<&str> = None;
        for part in line.split(';') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| RecordError::Malformed(format!("field without `=`: {part:?}")))?;
            if k.is_empty() {
                return Err(RecordError::Malformed("empty key".into()));
            }
            if let Some(p) = prev {
                if p >= k {
                    return Err(RecordError::Malformed(format!(
                        "keys out of order: `{p}` before `{k}`"
                    )));
                }
            }
            prev = Some(k);
            fields.insert(k.to_string(), unescape(v)?);
        }
        Ok(Self { fields })
    }
}
