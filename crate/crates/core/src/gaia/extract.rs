//! Pulls the `<Model>` document out of a backend reply that may wrap it in
//! prose or code fences.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no <Model> document found in the response{}", .reason.as_ref().map(|r| format!(" ({r})")).unwrap_or_default())]
pub struct NoXmlFound {
    pub reason: Option<String>,
}

enum Tag {
    Open,
    Close,
    SelfClosing,
}

/// Scans one tag starting at `start` (which points at `<`). Returns its kind
/// if it is a `Model` tag, and the index just past the closing `>`.
fn scan_tag(bytes: &[u8], start: usize) -> Option<(Option<Tag>, usize)> {
    let rest = &bytes[start + 1..];
    let (closing, name_at) = if rest.first() == Some(&b'/') {
        (true, start + 2)
    } else {
        (false, start + 1)
    };
    let name_end = bytes[name_at..]
        .iter()
        .position(|b| b.is_ascii_whitespace() || *b == b'>' || *b == b'/')
        .map(|i| name_at + i)?;
    let is_model = &bytes[name_at..name_end] == b"Model";
    let mut quote: Option<u8> = None;
    let mut i = name_end;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if b == b'"' || b == b'\'' => quote = Some(b),
            None if b == b'>' => {
                let kind = if !is_model {
                    None
                } else if closing {
                    Some(Tag::Close)
                } else if bytes[i - 1] == b'/' {
                    Some(Tag::SelfClosing)
                } else {
                    Some(Tag::Open)
                };
                return Some((kind, i + 1));
            }
            None => {}
        }
        i += 1;
    }
    None
}

fn find_root(raw: &str) -> Option<usize> {
    let bytes = raw.as_bytes();
    let mut from = 0;
    while let Some(i) = raw[from..].find("<Model") {
        let at = from + i;
        match bytes.get(at + "<Model".len()) {
            Some(b) if b.is_ascii_whitespace() || *b == b'>' || *b == b'/' => return Some(at),
            _ => from = at + 1,
        }
    }
    None
}

/// Returns the substring from the first `<Model` to its matching
/// `</Model>`, which also drops any surrounding code fence.
pub fn extract_xml(raw: &str) -> Result<String, NoXmlFound> {
    let start = find_root(raw).ok_or(NoXmlFound { reason: None })?;
    let bytes = raw.as_bytes();
    let mut depth = 0usize;
    let mut i = start;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let Some((kind, next)) = scan_tag(bytes, i) else {
            break;
        };
        match kind {
            Some(Tag::Open) => depth += 1,
            Some(Tag::SelfClosing) if depth == 0 => return Ok(raw[start..next].to_string()),
            Some(Tag::Close) => {
                depth -= 1;
                if depth == 0 {
                    return Ok(raw[start..next].to_string());
                }
            }
            _ => {}
        }
        i = next;
    }
    Err(NoXmlFound {
        reason: Some("unterminated <Model> element".into()),
    })
}
