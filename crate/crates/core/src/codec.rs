// SPDX-License-Identifier: Apache-2.0

//! Canonical JSON encoding.
//!
//! Every hash in the system is taken over these bytes, so two nodes that hold
//! the same document always agree on its digest. The rules:
//!
//! ```text
//! objects   keys sorted by UTF-8 byte order, no whitespace
//! strings   raw UTF-8; only `"`, `\` and control characters are escaped
//! numbers   base-10 integers only; floats are rejected
//! ```

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("non-integer number {0} cannot be canonically encoded")]
    NonInteger(String),
    #[error("value is not representable as JSON: {0}")]
    Unrepresentable(String),
}

/// Encodes a JSON document into its canonical byte form.
pub fn canonical_encode(value: &Value) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out)?;
    Ok(out)
}

/// Serializes any `Serialize` type through `serde_json::Value` and encodes it
/// canonically.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, EncodeError> {
    let value =
        serde_json::to_value(value).map_err(|e| EncodeError::Unrepresentable(e.to_string()))?;
    canonical_encode(&value)
}

/// Like [`to_canonical`] for types whose fields are all strings, integers,
/// lists and maps. Panics only if a float sneaks into such a type.
pub(crate) fn canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    to_canonical(value).expect("domain types contain no floats")
}

/// True when `bytes` is exactly the canonical encoding of some JSON document,
/// i.e. when parsing and re-encoding would reproduce them. Single pass, no
/// allocation unless an object key contains an escape.
pub fn is_canonical(bytes: &[u8]) -> bool {
    if std::str::from_utf8(bytes).is_err() {
        return false;
    }
    let mut scan = Scanner { bytes, pos: 0 };
    scan.value(0).is_some() && scan.pos == bytes.len()
}

/// Same nesting limit serde_json applies when parsing.
const MAX_DEPTH: usize = 128;

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        let hit = self.peek() == Some(b);
        self.pos += hit as usize;
        hit
    }

    fn literal(&mut self, lit: &[u8]) -> Option<()> {
        self.bytes[self.pos..].starts_with(lit).then(|| self.pos += lit.len())
    }

    fn value(&mut self, depth: usize) -> Option<()> {
        if depth >= MAX_DEPTH {
            return None;
        }
        match self.peek()? {
            b'{' => self.object(depth),
            b'[' => {
                self.pos += 1;
                if self.eat(b']') {
                    return Some(());
                }
                loop {
                    self.value(depth + 1)?;
                    if self.eat(b']') {
                        return Some(());
                    }
                    self.eat(b',').then_some(())?;
                }
            }
            b'"' => self.string().map(|_| ()),
            b't' => self.literal(b"true"),
            b'f' => self.literal(b"false"),
            b'n' => self.literal(b"null"),
            _ => self.number(),
        }
    }

    fn object(&mut self, depth: usize) -> Option<()> {
        self.pos += 1;
        if self.eat(b'}') {
            return Some(());
        }
        let mut prev: Option<std::borrow::Cow<'a, [u8]>> = None;
        loop {
            let key = self.string()?;
            if prev.as_deref().is_some_and(|p| p >= &*key) {
                return None;
            }
            prev = Some(key);
            self.eat(b':').then_some(())?;
            self.value(depth + 1)?;
            if self.eat(b'}') {
                return Some(());
            }
            self.eat(b',').then_some(())?;
        }
    }

    /// Returns the decoded string bytes.
    fn string(&mut self) -> Option<std::borrow::Cow<'a, [u8]>> {
        self.eat(b'"').then_some(())?;
        let start = self.pos;
        let mut decoded: Option<Vec<u8>> = None;
        loop {
            let rest = &self.bytes[self.pos..];
            let plain = rest.iter().position(|&c| c == b'"' || c == b'\\' || c < 0x20)?;
            if let Some(buf) = decoded.as_mut() {
                buf.extend_from_slice(&rest[..plain]);
            }
            self.pos += plain;
            match rest[plain] {
                b'"' => {
                    let raw = &self.bytes[start..self.pos];
                    self.pos += 1;
                    return Some(match decoded {
                        Some(d) => d.into(),
                        None => raw.into(),
                    });
                }
                b'\\' => {
                    let buf = decoded.get_or_insert_with(|| self.bytes[start..self.pos].to_vec());
                    let ch = match *self.bytes.get(self.pos + 1)? {
                        b'"' => b'"',
                        b'\\' => b'\\',
                        b'n' => b'\n',
                        b'r' => b'\r',
                        b't' => b'\t',
                        b'b' => 0x08,
                        b'f' => 0x0c,
                        b'u' => {
                            let hex = self.bytes.get(self.pos + 2..self.pos + 6)?;
                            if !hex.starts_with(b"00")
                                || !hex.iter().all(|h| matches!(h, b'0'..=b'9' | b'a'..=b'f'))
                            {
                                return None;
                            }
                            let c = u8::from_str_radix(std::str::from_utf8(&hex[2..]).ok()?, 16).ok()?;
                            if c >= 0x20 || matches!(c, 0x08 | 0x09 | 0x0a | 0x0c | 0x0d) {
                                return None;
                            }
                            buf.push(c);
                            self.pos += 6;
                            continue;
                        }
                        _ => return None,
                    };
                    buf.push(ch);
                    self.pos += 2;
                }
                _ => return None,
            }
        }
    }

    fn number(&mut self) -> Option<()> {
        let start = self.pos;
        self.eat(b'-');
        let digits = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).ok()?;
        let body = &self.bytes[digits..self.pos];
        let minimal = match body {
            [] => false,
            [b'0'] => start == digits,
            [b'0', ..] => false,
            _ => true,
        };
        (minimal && (text.parse::<i64>().is_ok() || text.parse::<u64>().is_ok())).then_some(())
    }
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                return Err(EncodeError::NonInteger(n.to_string()));
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(item, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    let bytes = s.as_bytes();
    let mut run = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let escaped: &[u8] = match b {
            b'"' => b"\\\"",
            b'\\' => b"\\\\",
            b'\n' => b"\\n",
            b'\r' => b"\\r",
            b'\t' => b"\\t",
            0x08 => b"\\b",
            0x0c => b"\\f",
            c if c < 0x20 => {
                out.extend_from_slice(&bytes[run..i]);
                out.extend_from_slice(format!("\\u{:04x}", c).as_bytes());
                run = i + 1;
                continue;
            }
            _ => continue,
        };
        out.extend_from_slice(&bytes[run..i]);
        out.extend_from_slice(escaped);
        run = i + 1;
    }
    out.extend_from_slice(&bytes[run..]);
    out.push(b'"');
}
