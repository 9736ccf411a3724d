//! Line-oriented text records.
//!
//! A record is a type-tag line followed by one field per line, each field
//! lowercase hexadecimal. Group elements are zero-padded to the byte length
//! of p and exponents to the byte length of q. Records in a multi-record file
//! are separated by a blank line.
//!
//! ```text
//! server-key
//! 52            <- user id "R", UTF-8 bytes
//! 03            <- x2
//! ```

use num_bigint::BigUint;

use crate::crypto::{
    ClientCiphertext, CryptoError, HashId, MasterSecret, PrfId, PrfKey, ServerCiphertext,
    ServerKey, SystemParams, Trapdoor, UserKey,
};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: expected `{expected}` record, found `{found}`")]
    WrongTag {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// One parsed block: its tag, raw field lines and the 1-based line of the tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub tag: String,
    pub fields: Vec<String>,
    pub line: usize,
}

impl RawRecord {
    pub fn fields(&self) -> Fields<'_> {
        Fields {
            fields: &self.fields,
            pos: 0,
            first_line: self.line + 1,
        }
    }

    pub fn expect_tag(&self, expected: &'static str) -> Result<(), CodecError> {
        if self.tag != expected {
            return Err(CodecError::WrongTag {
                line: self.line,
                expected,
                found: self.tag.clone(),
            });
        }
        Ok(())
    }
}

/// Splits text into blank-line separated records.
pub fn parse_records(text: &str) -> Vec<RawRecord> {
    let mut out = Vec::new();
    let mut current: Option<RawRecord> = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if let Some(rec) = current.take() {
                out.push(rec);
            }
            continue;
        }
        match current.as_mut() {
            None => {
                current = Some(RawRecord {
                    tag: line.to_string(),
                    fields: Vec::new(),
                    line: idx + 1,
                })
            }
            Some(rec) => rec.fields.push(line.to_string()),
        }
    }
    out.extend(current);
    out
}

/// Cursor over a record's field lines.
pub struct Fields<'a> {
    fields: &'a [String],
    pos: usize,
    first_line: usize,
}

impl<'a> Fields<'a> {
    pub fn line(&self) -> usize {
        self.first_line + self.pos
    }

    pub fn malformed(&self, msg: impl Into<String>) -> CodecError {
        CodecError::Malformed {
            line: self.line(),
            msg: msg.into(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.fields.len()
    }

    pub fn next_raw(&mut self) -> Result<&'a str, CodecError> {
        let f = self
            .fields
            .get(self.pos)
            .ok_or_else(|| self.malformed("missing field"))?;
        self.pos += 1;
        Ok(f)
    }

    pub fn next_bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let line = self.line();
        let raw = self.next_raw()?;
        decode_hex(raw).map_err(|msg| CodecError::Malformed { line, msg })
    }

    pub fn next_uint(&mut self) -> Result<BigUint, CodecError> {
        Ok(BigUint::from_bytes_be(&self.next_bytes()?))
    }

    pub fn next_element(&mut self, params: &SystemParams) -> Result<BigUint, CodecError> {
        let line = self.line();
        let bytes = self.next_bytes()?;
        if bytes.len() != params.element_len() {
            return Err(CodecError::Malformed {
                line,
                msg: format!("element must be {} bytes", params.element_len()),
            });
        }
        let e = BigUint::from_bytes_be(&bytes);
        if !params.in_subgroup(&e) {
            return Err(CodecError::Malformed {
                line,
                msg: "element is not in the subgroup".into(),
            });
        }
        Ok(e)
    }

    pub fn next_text(&mut self) -> Result<String, CodecError> {
        let line = self.line();
        String::from_utf8(self.next_bytes()?).map_err(|_| CodecError::Malformed {
            line,
            msg: "text field is not UTF-8".into(),
        })
    }

    pub fn finish(&self) -> Result<(), CodecError> {
        if !self.is_empty() {
            return Err(self.malformed("unexpected trailing field"));
        }
        Ok(())
    }
}

pub fn encode_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn decode_hex(s: &str) -> Result<Vec<u8>, String> {
    if s.len() % 2 != 0 {
        return Err("odd-length hex field".into());
    }
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err("hex must be lowercase".into());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| format!("bad hex `{s}`")))
        .collect()
}

/// Accumulates the field lines of one record.
pub struct RecordWriter {
    lines: Vec<String>,
}

impl RecordWriter {
    pub fn new(tag: &str) -> Self {
        RecordWriter {
            lines: vec![tag.to_string()],
        }
    }

    pub fn raw(&mut self, line: impl Into<String>) -> &mut Self {
        self.lines.push(line.into());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.raw(encode_hex(b))
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn element(&mut self, params: &SystemParams, e: &BigUint) -> &mut Self {
        self.bytes(&params.encode_element(e))
    }

    pub fn exponent(&mut self, params: &SystemParams, e: &BigUint) -> &mut Self {
        let width = params.exponent_len();
        let mut b = e.to_bytes_be();
        if b.len() < width {
            let mut padded = vec![0u8; width - b.len()];
            padded.append(&mut b);
            b = padded;
        }
        self.bytes(&b)
    }

    /// The record with a trailing newline and no separator.
    pub fn finish(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

/// A value serializable as one text record under fixed system parameters.
pub trait TextRecord: Sized {
    const TAG: &'static str;

    fn write_fields(&self, params: &SystemParams, w: &mut RecordWriter);

    fn read_fields(params: &SystemParams, f: &mut Fields<'_>) -> Result<Self, CodecError>;

    fn to_record(&self, params: &SystemParams) -> String {
        let mut w = RecordWriter::new(Self::TAG);
        self.write_fields(params, &mut w);
        w.finish()
    }

    fn from_raw(params: &SystemParams, raw: &RawRecord) -> Result<Self, CodecError> {
        raw.expect_tag(Self::TAG)?;
        let mut f = raw.fields();
        let v = Self::read_fields(params, &mut f)?;
        f.finish()?;
        Ok(v)
    }

    fn from_record(params: &SystemParams, text: &str) -> Result<Self, CodecError> {
        let recs = parse_records(text);
        match recs.as_slice() {
            [one] => Self::from_raw(params, one),
            [] => Err(CodecError::Malformed {
                line: 1,
                msg: "no record found".into(),
            }),
            [_, second, ..] => Err(CodecError::Malformed {
                line: second.line,
                msg: "expected a single record".into(),
            }),
        }
    }
}

pub const PARAMS_TAG: &str = "system-params";

pub fn params_to_record(params: &SystemParams) -> String {
    let mut w = RecordWriter::new(PARAMS_TAG);
    w.bytes(&params.p().to_bytes_be())
        .bytes(&params.q().to_bytes_be())
        .element(params, params.g())
        .element(params, params.h())
        .text(params.hash_id().as_str())
        .text(params.prf_id().as_str());
    w.finish()
}

pub fn params_from_record(text: &str) -> Result<SystemParams, CodecError> {
    let recs = parse_records(text);
    let raw = recs.first().ok_or(CodecError::Malformed {
        line: 1,
        msg: "no record found".into(),
    })?;
    raw.expect_tag(PARAMS_TAG)?;
    let mut f = raw.fields();
    let p = f.next_uint()?;
    let q = f.next_uint()?;
    let g = f.next_uint()?;
    let h = f.next_uint()?;
    let hash: HashId = f.next_text()?.parse()?;
    let prf: PrfId = f.next_text()?.parse()?;
    f.finish()?;
    Ok(SystemParams::from_parts(p, q, g, h, hash, prf)?)
}

impl TextRecord for MasterSecret {
    const TAG: &'static str = "master-secret";

    fn write_fields(&self, params: &SystemParams, w: &mut RecordWriter) {
        w.exponent(params, self.x()).bytes(self.prf_key().as_bytes());
    }

    fn read_fields(params: &SystemParams, f: &mut Fields<'_>) -> Result<Self, CodecError> {
        let x = f.next_uint()?;
        let key = PrfKey::new(f.next_bytes()?)?;
        Ok(MasterSecret::from_parts(params, x, key)?)
    }
}

impl TextRecord for UserKey {
    const TAG: &'static str = "user-key";

    fn write_fields(&self, params: &SystemParams, w: &mut RecordWriter) {
        w.text(self.user_id())
            .exponent(params, self.x1())
            .bytes(self.prf_key().as_bytes());
    }

    fn read_fields(params: &SystemParams, f: &mut Fields<'_>) -> Result<Self, CodecError> {
        let id = f.next_text()?;
        let x1 = f.next_uint()?;
        let key = PrfKey::new(f.next_bytes()?)?;
        Ok(UserKey::from_parts(params, id, x1, key)?)
    }
}

impl TextRecord for ServerKey {
    const TAG: &'static str = "server-key";

    fn write_fields(&self, params: &SystemParams, w: &mut RecordWriter) {
        w.text(self.user_id()).exponent(params, self.x2());
    }

    fn read_fields(params: &SystemParams, f: &mut Fields<'_>) -> Result<Self, CodecError> {
        let id = f.next_text()?;
        let x2 = f.next_uint()?;
        Ok(ServerKey::from_parts(params, id, x2)?)
    }
}

impl TextRecord for ClientCiphertext {
    const TAG: &'static str = "client-ciphertext";

    fn write_fields(&self, params: &SystemParams, w: &mut RecordWriter) {
        w.element(params, &self.c1hat)
            .element(params, &self.c2hat)
            .bytes(&self.c3hat);
    }

    fn read_fields(params: &SystemParams, f: &mut Fields<'_>) -> Result<Self, CodecError> {
        Ok(ClientCiphertext {
            c1hat: f.next_element(params)?,
            c2hat: f.next_element(params)?,
            c3hat: read_digest(params, f)?,
        })
    }
}

impl TextRecord for ServerCiphertext {
    const TAG: &'static str = "server-ciphertext";

    fn write_fields(&self, params: &SystemParams, w: &mut RecordWriter) {
        w.element(params, &self.c1).bytes(&self.c2);
    }

    fn read_fields(params: &SystemParams, f: &mut Fields<'_>) -> Result<Self, CodecError> {
        Ok(ServerCiphertext {
            c1: f.next_element(params)?,
            c2: read_digest(params, f)?,
        })
    }
}

impl TextRecord for Trapdoor {
    const TAG: &'static str = "trapdoor";

    fn write_fields(&self, params: &SystemParams, w: &mut RecordWriter) {
        w.element(params, &self.t1).element(params, &self.t2);
    }

    fn read_fields(params: &SystemParams, f: &mut Fields<'_>) -> Result<Self, CodecError> {
        Ok(Trapdoor {
            t1: f.next_element(params)?,
            t2: f.next_element(params)?,
        })
    }
}

pub(crate) fn read_digest(params: &SystemParams, f: &mut Fields<'_>) -> Result<Vec<u8>, CodecError> {
    let line = f.line();
    let d = f.next_bytes()?;
    if d.len() != params.hash_id().output_len() {
        return Err(CodecError::Malformed {
            line,
            msg: "digest has the wrong length".into(),
        });
    }
    Ok(d)
}
