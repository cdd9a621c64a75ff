//! Subject names and subscription patterns.
//!
//! Subjects are dot-separated tokens. Two classes exist:
//! `csi.cell.<pci>.ue.<ueid>` for indications and `ctrl.cell.<pci>` for
//! control. Patterns may use `*` for exactly one token and a trailing `>` for
//! one or more remaining tokens.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subject {
    Csi { pci: usize, ue: usize },
    Ctrl { pci: usize },
}

impl Subject {
    pub fn parse(s: &str) -> Result<Self> {
        let tokens: Vec<&str> = s.split('.').collect();
        let num = |t: &str| -> Result<usize> {
            if t.is_empty()
                || !t.bytes().all(|b| b.is_ascii_digit())
                || (t.len() > 1 && t.starts_with('0'))
            {
                return Err(malformed(s));
            }
            t.parse().map_err(|_| malformed(s))
        };
        match tokens.as_slice() {
            ["csi", "cell", pci, "ue", ue] => Ok(Subject::Csi {
                pci: num(pci)?,
                ue: num(ue)?,
            }),
            ["ctrl", "cell", pci] => Ok(Subject::Ctrl { pci: num(pci)? }),
            _ => Err(malformed(s)),
        }
    }

    pub fn is_csi(&self) -> bool {
        matches!(self, Subject::Csi { .. })
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Csi { pci, ue } => write!(f, "csi.cell.{pci}.ue.{ue}"),
            Subject::Ctrl { pci } => write!(f, "ctrl.cell.{pci}"),
        }
    }
}

fn malformed(s: &str) -> Error {
    Error::Bus(format!("malformed subject `{s}`"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Literal(String),
    Any,
    Tail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    source: String,
    tokens: Vec<Token>,
}

impl Pattern {
    pub fn parse(p: &str) -> Result<Self> {
        let parts: Vec<&str> = p.split('.').collect();
        let mut tokens = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let tok = match *part {
                "" => return Err(Error::Bus(format!("empty token in pattern `{p}`"))),
                "*" => Token::Any,
                ">" if i + 1 == parts.len() => Token::Tail,
                ">" => return Err(Error::Bus(format!("`>` must be the last token in `{p}`"))),
                lit if lit.contains(['*', '>']) => {
                    return Err(Error::Bus(format!(
                        "wildcards must be whole tokens in `{p}`"
                    )))
                }
                lit => Token::Literal(lit.to_string()),
            };
            tokens.push(tok);
        }
        Ok(Self {
            source: p.to_string(),
            tokens,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn matches(&self, subject: &str) -> bool {
        let parts: Vec<&str> = subject.split('.').collect();
        for (i, tok) in self.tokens.iter().enumerate() {
            match tok {
                Token::Tail => return parts.len() > i,
                Token::Any => {
                    if i >= parts.len() {
                        return false;
                    }
                }
                Token::Literal(l) => {
                    if parts.get(i) != Some(&l.as_str()) {
                        return false;
                    }
                }
            }
        }
        parts.len() == self.tokens.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subjects_parse_and_print() {
        let s = Subject::parse("csi.cell.3.ue.17").unwrap();
        assert_eq!(s, Subject::Csi { pci: 3, ue: 17 });
        assert_eq!(s.to_string(), "csi.cell.3.ue.17");
        assert_eq!(
            Subject::parse("ctrl.cell.0").unwrap(),
            Subject::Ctrl { pci: 0 }
        );
        for bad in [
            "",
            "csi.cell.3",
            "ctrl.cell.x",
            "ctrl.cell.-1",
            "ctrl.cell.01",
            "csi.cell.1.ue.2.x",
            "ctrl..1",
        ] {
            assert!(Subject::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn wildcards() {
        let p = Pattern::parse("csi.cell.*.ue.*").unwrap();
        assert!(p.matches("csi.cell.3.ue.17"));
        assert!(!p.matches("csi.cell.3.ue"));
        assert!(!p.matches("ctrl.cell.3"));
        let tail = Pattern::parse("ctrl.>").unwrap();
        assert!(tail.matches("ctrl.cell.5"));
        assert!(!tail.matches("ctrl"));
        assert!(!tail.matches("csi.cell.5.ue.1"));
        assert!(Pattern::parse(">").unwrap().matches("ctrl.cell.1"));
        assert!(Pattern::parse("ctrl.cell.2")
            .unwrap()
            .matches("ctrl.cell.2"));
        assert!(!Pattern::parse("ctrl.cell.2")
            .unwrap()
            .matches("ctrl.cell.20"));
    }

    #[test]
    fn bad_patterns() {
        for bad in ["", "a..b", "a.>.b", "a.b*", "c>"] {
            assert!(Pattern::parse(bad).is_err(), "{bad}");
        }
    }
}
