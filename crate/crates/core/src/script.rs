//! Quote-encoded teaser scripts.
//!
//! Two inline encodings are supported. The direct-quote encoding wraps
//! verbatim quoted speech in `<SOQ>` ... `<EOQ>`; the indirect encoding marks
//! where a clip should go with a bare `<QUOTE>` token and leaves the choice of
//! clip to retrieval.
//!
//! A marker only counts as a marker when its outer side touches whitespace,
//! the string boundary, or another marker. `<SOQ>` is checked on its left,
//! `<EOQ>` on its right and `<QUOTE>` on both, so `word<QUOTE>` stays plain
//! text while `<QUOTE><QUOTE>` is two placeholders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SOQ: &str = "<SOQ>";
pub const EOQ: &str = "<EOQ>";
pub const QUOTE: &str = "<QUOTE>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Encoding {
    /// `<SOQ>quoted words<EOQ>`
    Dq,
    /// `<QUOTE>`
    Idq,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Dq => "DQ",
            Encoding::Idq => "IDQ",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScriptElement {
    Narration(String),
    QuotePlaceholder,
    DirectQuote {
        text: String,
        resolved_clip_id: Option<String>,
    },
}

impl ScriptElement {
    pub fn narration(text: impl Into<String>) -> Self {
        ScriptElement::Narration(text.into())
    }

    pub fn quote(text: impl Into<String>) -> Self {
        ScriptElement::DirectQuote {
            text: text.into(),
            resolved_clip_id: None,
        }
    }

    pub fn is_quote(&self) -> bool {
        !matches!(self, ScriptElement::Narration(_))
    }

    pub fn narration_text(&self) -> Option<&str> {
        match self {
            ScriptElement::Narration(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub doc_id: String,
    pub elements: Vec<ScriptElement>,
    pub encoding: Encoding,
}

impl Script {
    /// Builds a script, merging adjacent narrations with a single space, and
    /// validates it.
    pub fn new(
        doc_id: impl Into<String>,
        elements: Vec<ScriptElement>,
        encoding: Encoding,
    ) -> Result<Self> {
        let mut merged: Vec<ScriptElement> = Vec::with_capacity(elements.len());
        for el in elements {
            match (merged.last_mut(), el) {
                (Some(ScriptElement::Narration(prev)), ScriptElement::Narration(next)) => {
                    prev.push(' ');
                    prev.push_str(&next);
                }
                (_, el) => merged.push(el),
            }
        }
        let script = Script {
            doc_id: doc_id.into(),
            elements: merged,
            encoding,
        };
        script.validate()?;
        Ok(script)
    }

    pub fn with_doc_id(mut self, doc_id: impl Into<String>) -> Self {
        self.doc_id = doc_id.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, el) in self.elements.iter().enumerate() {
            match el {
                ScriptElement::Narration(text) => {
                    check_element_text(text, i)?;
                    if i > 0 && matches!(self.elements[i - 1], ScriptElement::Narration(_)) {
                        return Err(Error::InvalidScript(format!(
                            "adjacent narrations at element {i}"
                        )));
                    }
                }
                ScriptElement::QuotePlaceholder => {
                    if self.encoding == Encoding::Dq {
                        return Err(Error::InvalidScript(format!(
                            "placeholder at element {i} in a direct-quote script"
                        )));
                    }
                }
                ScriptElement::DirectQuote {
                    text,
                    resolved_clip_id,
                } => {
                    check_element_text(text, i)?;
                    if self.encoding == Encoding::Idq && resolved_clip_id.is_none() {
                        return Err(Error::InvalidScript(format!(
                            "unresolved direct quote at element {i} in an indirect-quote script"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn placeholder_indices(&self) -> Vec<usize> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, ScriptElement::QuotePlaceholder))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_resolved(&self) -> bool {
        !self
            .elements
            .iter()
            .any(|e| matches!(e, ScriptElement::QuotePlaceholder))
    }
}

fn check_element_text(text: &str, index: usize) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::InvalidScript(format!(
            "empty text at element {index}"
        )));
    }
    if text.trim() != text {
        return Err(Error::InvalidScript(format!(
            "untrimmed text at element {index}"
        )));
    }
    if let Some(m) = scan_markers(text).first() {
        return Err(Error::InvalidScript(format!(
            "element {index} contains marker {} at byte {}",
            m.kind.token(),
            m.offset
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MarkerKind {
    Soq,
    Eoq,
    Quote,
}

impl MarkerKind {
    fn token(self) -> &'static str {
        match self {
            MarkerKind::Soq => SOQ,
            MarkerKind::Eoq => EOQ,
            MarkerKind::Quote => QUOTE,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Marker {
    kind: MarkerKind,
    offset: usize,
}

impl Marker {
    fn end(&self) -> usize {
        self.offset + self.kind.token().len()
    }
}

/// Finds every marker occurrence satisfying the boundary rule.
fn scan_markers(text: &str) -> Vec<Marker> {
    let mut candidates = Vec::new();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find('<') {
        let at = pos + rel;
        let rest = &text[at..];
        let kind = [MarkerKind::Soq, MarkerKind::Eoq, MarkerKind::Quote]
            .into_iter()
            .find(|k| rest.starts_with(k.token()));
        match kind {
            Some(kind) => {
                candidates.push(Marker { kind, offset: at });
                pos = at + kind.token().len();
            }
            None => pos = at + 1,
        }
    }

    // Adjacency to a marker counts as a boundary only if that marker is
    // itself valid, so iterate to the greatest consistent assignment.
    let mut valid = vec![true; candidates.len()];
    loop {
        let mut changed = false;
        for i in 0..candidates.len() {
            if !valid[i] {
                continue;
            }
            let m = candidates[i];
            let left_ok = m.offset == 0
                || text[..m.offset]
                    .chars()
                    .next_back()
                    .is_some_and(char::is_whitespace)
                || (i > 0 && valid[i - 1] && candidates[i - 1].end() == m.offset);
            let right_ok = m.end() == text.len()
                || text[m.end()..]
                    .chars()
                    .next()
                    .is_some_and(char::is_whitespace)
                || (i + 1 < candidates.len()
                    && valid[i + 1]
                    && candidates[i + 1].offset == m.end());
            let ok = match m.kind {
                MarkerKind::Soq => left_ok,
                MarkerKind::Eoq => right_ok,
                MarkerKind::Quote => left_ok && right_ok,
            };
            if !ok {
                valid[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    candidates
        .into_iter()
        .zip(valid)
        .filter_map(|(m, v)| v.then_some(m))
        .collect()
}

fn push_narration(elements: &mut Vec<ScriptElement>, raw: &str) {
    let t = raw.trim();
    if !t.is_empty() {
        elements.push(ScriptElement::Narration(t.to_string()));
    }
}

fn marker_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Marker {
        offset,
        message: message.into(),
    }
}

/// Parses a direct-quote script.
pub fn parse_dq(text: &str) -> Result<Script> {
    if text.trim().is_empty() {
        return Err(Error::EmptyScript);
    }
    let mut elements = Vec::new();
    let mut cursor = 0;
    let mut open: Option<Marker> = None;
    for m in scan_markers(text) {
        match (m.kind, open) {
            (MarkerKind::Quote, _) => {
                return Err(marker_error(
                    m.offset,
                    "placeholder token in a direct-quote script",
                ));
            }
            (MarkerKind::Soq, Some(_)) => return Err(marker_error(m.offset, "nested <SOQ>")),
            (MarkerKind::Soq, None) => {
                push_narration(&mut elements, &text[cursor..m.offset]);
                open = Some(m);
                cursor = m.end();
            }
            (MarkerKind::Eoq, None) => {
                return Err(marker_error(m.offset, "<EOQ> without matching <SOQ>"))
            }
            (MarkerKind::Eoq, Some(start)) => {
                let body = text[cursor..m.offset].trim();
                if body.is_empty() {
                    return Err(marker_error(start.offset, "empty quote body"));
                }
                elements.push(ScriptElement::quote(body));
                open = None;
                cursor = m.end();
            }
        }
    }
    if let Some(start) = open {
        return Err(marker_error(start.offset, "<SOQ> without matching <EOQ>"));
    }
    push_narration(&mut elements, &text[cursor..]);
    Script::new("", elements, Encoding::Dq)
}

/// Parses an indirect-quote script.
pub fn parse_idq(text: &str) -> Result<Script> {
    if text.trim().is_empty() {
        return Err(Error::EmptyScript);
    }
    let mut elements = Vec::new();
    let mut cursor = 0;
    for m in scan_markers(text) {
        if m.kind != MarkerKind::Quote {
            return Err(marker_error(
                m.offset,
                format!("{} in an indirect-quote script", m.kind.token()),
            ));
        }
        push_narration(&mut elements, &text[cursor..m.offset]);
        elements.push(ScriptElement::QuotePlaceholder);
        cursor = m.end();
    }
    push_narration(&mut elements, &text[cursor..]);
    Script::new("", elements, Encoding::Idq)
}

pub fn parse(text: &str, encoding: Encoding) -> Result<Script> {
    match encoding {
        Encoding::Dq => parse_dq(text),
        Encoding::Idq => parse_idq(text),
    }
}

/// Guesses the encoding from the markers present: any `<QUOTE>` means IDQ.
pub fn detect_encoding(text: &str) -> Encoding {
    if scan_markers(text)
        .iter()
        .any(|m| m.kind == MarkerKind::Quote)
    {
        Encoding::Idq
    } else {
        Encoding::Dq
    }
}

/// Serializes in the script's own encoding.
pub fn serialize(script: &Script) -> Result<String> {
    serialize_as(script, script.encoding)
}

/// Serializes in `target`. Under IDQ every quote, resolved or not, is written
/// as `<QUOTE>`; under DQ a bare placeholder is an error.
pub fn serialize_as(script: &Script, target: Encoding) -> Result<String> {
    let mut parts = Vec::with_capacity(script.elements.len());
    for (i, el) in script.elements.iter().enumerate() {
        match (el, target) {
            (ScriptElement::Narration(t), _) => parts.push(t.clone()),
            (ScriptElement::QuotePlaceholder, Encoding::Idq) => parts.push(QUOTE.to_string()),
            (ScriptElement::QuotePlaceholder, Encoding::Dq) => {
                return Err(Error::UnresolvedPlaceholder(i))
            }
            (ScriptElement::DirectQuote { .. }, Encoding::Idq) => parts.push(QUOTE.to_string()),
            (ScriptElement::DirectQuote { text, .. }, Encoding::Dq) => {
                parts.push(format!("{SOQ}{text}{EOQ}"))
            }
        }
    }
    Ok(parts.join(" "))
}

pub fn count_quotes(script: &Script) -> usize {
    script.elements.iter().filter(|e| e.is_quote()).count()
}
