//! Bus messages and their NDJSON wire encoding.
//!
//! Each message is one UTF-8 JSON object terminated by `\n`:
//!
//! ```text
//! {"subject":"ctrl.cell.4","tti":12,"payload":{...}}
//! ```
//!
//! The payload type follows from the subject class.

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::subject::Subject;
use crate::codebook::Rank;
use crate::csi::CsiReport;
use crate::error::{Error, Result};

/// Subbands a control assignment applies to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubbandScope {
    All,
    List(Vec<usize>),
}

impl SubbandScope {
    pub fn covers(&self, subband: usize) -> bool {
        match self {
            SubbandScope::All => true,
            SubbandScope::List(l) => l.contains(&subband),
        }
    }

    pub fn is_all(&self, num_subbands: usize) -> bool {
        match self {
            SubbandScope::All => true,
            SubbandScope::List(l) => (0..num_subbands).all(|s| l.contains(&s)),
        }
    }
}

impl Serialize for SubbandScope {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SubbandScope::All => s.serialize_str("all"),
            SubbandScope::List(l) => l.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for SubbandScope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Tag(String),
            List(Vec<usize>),
        }
        match Raw::deserialize(d)? {
            Raw::Tag(t) if t == "all" => Ok(SubbandScope::All),
            Raw::Tag(t) => Err(de::Error::custom(format!("unknown subband scope `{t}`"))),
            Raw::List(l) => Ok(SubbandScope::List(l)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub ue: usize,
    pub ri: Rank,
    pub pmi: usize,
    pub subbands: SubbandScope,
}

/// PMI control for the UEs of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDirective {
    pub pci: usize,
    pub tti: u64,
    pub agent: String,
    pub assignments: Vec<Assignment>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ControlDirective {
    pub fn new(
        pci: usize,
        tti: u64,
        agent: impl Into<String>,
        assignments: Vec<Assignment>,
    ) -> Self {
        Self {
            pci,
            tti,
            agent: agent.into(),
            assignments,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Csi(CsiReport),
    Control(ControlDirective),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusMessage {
    pub subject: String,
    pub tti: u64,
    pub payload: Payload,
}

impl BusMessage {
    pub fn csi(report: CsiReport) -> Self {
        Self {
            subject: Subject::Csi {
                pci: report.pci,
                ue: report.ue,
            }
            .to_string(),
            tti: report.tti,
            payload: Payload::Csi(report),
        }
    }

    pub fn control(directive: ControlDirective) -> Self {
        Self {
            subject: Subject::Ctrl { pci: directive.pci }.to_string(),
            tti: directive.tti,
            payload: Payload::Control(directive),
        }
    }

    /// Checks the subject and that the payload belongs to its class and
    /// addresses the same cell and UE.
    pub fn validate(&self) -> Result<Subject> {
        let subject = Subject::parse(&self.subject)?;
        match (&subject, &self.payload) {
            (Subject::Csi { pci, ue }, Payload::Csi(r)) => {
                if r.pci != *pci {
                    return Err(Error::validation("pci", "does not match subject"));
                }
                if r.ue != *ue {
                    return Err(Error::validation("ue", "does not match subject"));
                }
            }
            (Subject::Ctrl { pci }, Payload::Control(d)) => {
                if d.pci != *pci {
                    return Err(Error::validation("pci", "does not match subject"));
                }
            }
            _ => {
                return Err(Error::validation(
                    "payload",
                    "wrong payload class for subject",
                ))
            }
        }
        Ok(subject)
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a, P: Serialize> {
    subject: &'a str,
    tti: u64,
    payload: &'a P,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeIn {
    subject: String,
    tti: u64,
    payload: Value,
}

/// One wire line including the trailing newline.
pub fn encode(msg: &BusMessage) -> Vec<u8> {
    let mut line = match &msg.payload {
        Payload::Csi(r) => serde_json::to_vec(&EnvelopeOut {
            subject: &msg.subject,
            tti: msg.tti,
            payload: r,
        }),
        Payload::Control(d) => serde_json::to_vec(&EnvelopeOut {
            subject: &msg.subject,
            tti: msg.tti,
            payload: d,
        }),
    }
    .expect("bus messages always serialize");
    line.push(b'\n');
    line
}

/// Field name quoted in a serde error message, if any.
fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "payload".to_string())
}

/// Decodes one line (with or without its newline). `offset` is the stream
/// position of the line's first byte and is added to error positions.
pub fn decode_at(line: &[u8], offset: usize) -> Result<BusMessage> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let env: EnvelopeIn = serde_json::from_slice(line).map_err(|e| {
        let col = if e.column() > 0 {
            e.column() - 1
        } else {
            line.len()
        };
        Error::Decode {
            offset: offset + col,
            message: e.to_string(),
        }
    })?;
    let subject = Subject::parse(&env.subject)?;
    let payload = if subject.is_csi() {
        Payload::Csi(serde_json::from_value(env.payload).map_err(|e| {
            let m = e.to_string();
            Error::validation(field_of(&m), m)
        })?)
    } else {
        Payload::Control(serde_json::from_value(env.payload).map_err(|e| {
            let m = e.to_string();
            Error::validation(field_of(&m), m)
        })?)
    };
    let msg = BusMessage {
        subject: env.subject,
        tti: env.tti,
        payload,
    };
    msg.validate()?;
    Ok(msg)
}

pub fn decode(line: &[u8]) -> Result<BusMessage> {
    decode_at(line, 0)
}

/// Splits a byte stream into lines and decodes them.
///
/// A line that fails to decode yields one error and is discarded; decoding
/// resumes with the next line.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    /// Stream offset of `buf[0]`.
    offset: usize,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Result<BusMessage>> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut start = 0;
        while let Some(pos) = self.buf[start..].iter().position(|&b| b == b'\n') {
            let end = start + pos;
            let line = &self.buf[start..end];
            if !line.iter().all(u8::is_ascii_whitespace) {
                out.push(decode_at(line, self.offset + start));
            }
            start = end + 1;
        }
        self.buf.drain(..start);
        self.offset += start;
        out
    }

    /// Bytes buffered without a terminating newline.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Ends the stream; an unterminated final line is a decode error.
    pub fn finish(&mut self) -> Option<Result<BusMessage>> {
        if self.buf.iter().all(u8::is_ascii_whitespace) {
            self.buf.clear();
            return None;
        }
        let line = std::mem::take(&mut self.buf);
        let res = decode_at(&line, self.offset).and(Err(Error::Decode {
            offset: self.offset + line.len(),
            message: "unterminated line".into(),
        }));
        self.offset += line.len();
        Some(res)
    }
}
