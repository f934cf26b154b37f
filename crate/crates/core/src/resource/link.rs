//! CoRE link format as used for registration and discovery payloads.

use super::{ModelError, ResourcePath, ThingResourceModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub target: String,
    pub attributes: Vec<(String, Option<String>)>,
}

impl Link {
    pub fn path(&self) -> Option<ResourcePath> {
        self.target.parse().ok()
    }
}

/// `</obj/inst>` entries, comma-joined, ascending by (object, instance).
pub fn to_link_format(
    model: &ThingResourceModel,
    instances: &[(u16, u16)],
) -> Result<String, ModelError> {
    let mut sorted = instances.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut parts = Vec::with_capacity(sorted.len());
    for (obj, inst) in sorted {
        if model.object(obj).is_none() {
            return Err(ModelError::UnknownObjectId(obj));
        }
        parts.push(format!("<{}>", ResourcePath::instance(obj, inst)));
    }
    Ok(parts.join(","))
}

pub fn parse_link_format(text: &str) -> Result<Vec<Link>, ModelError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in split_outside_quotes(text, ',') {
        let entry = entry.trim();
        let mut parts = split_outside_quotes(entry, ';').into_iter();
        let target = parts.next().unwrap_or_default().trim();
        let target = target
            .strip_prefix('<')
            .and_then(|t| t.strip_suffix('>'))
            .ok_or_else(|| ModelError::MalformedLinks(format!("bad link target `{target}`")))?;
        if target.is_empty() {
            return Err(ModelError::MalformedLinks("empty link target".into()));
        }
        let mut attributes = Vec::new();
        for attr in parts {
            let attr = attr.trim();
            if attr.is_empty() {
                return Err(ModelError::MalformedLinks("empty attribute".into()));
            }
            match attr.split_once('=') {
                Some((k, v)) => {
                    let v = v.trim();
                    let v = v
                        .strip_prefix('"')
                        .and_then(|v| v.strip_suffix('"'))
                        .unwrap_or(v);
                    attributes.push((k.trim().to_string(), Some(v.to_string())));
                }
                None => attributes.push((attr.to_string(), None)),
            }
        }
        out.push(Link {
            target: target.to_string(),
            attributes,
        });
    }
    Ok(out)
}

fn split_outside_quotes(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut quoted = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if c == '"' {
            quoted = !quoted;
        } else if c == sep && !quoted {
            out.push(&s[start..i]);
            start = i + c.len_utf8();
        }
    }
    out.push(&s[start..]);
    out
}
