use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use super::CodegenError;

/// Fragment keys a template set must provide.
pub const REQUIRED_FRAGMENTS: &[&str] = &[
    "file",
    "instance-single",
    "instance-multiple",
    "target-single",
    "target-multiple",
    "wrapper-prototype",
    "wrapper",
    "wrapper-call-value",
    "wrapper-call-void",
    "getter",
    "read-text",
    "read-integer",
    "read-boolean",
    "read-opaque",
    "setter",
    "write-text",
    "write-integer",
    "write-boolean",
    "write-opaque",
    "table-entry",
    "resources",
    "instance",
    "instances-list",
    "object",
    "observable-setter",
    "setter-synth-single",
    "setter-synth-multiple",
    "setter-synth-body-single",
    "setter-synth-body-multiple",
    "notify-append",
    "notify-append-multiple",
    "init",
    "header-prototype",
    "header-file",
    "init-call",
    "init-calls-file",
];

macro_rules! builtin {
    ($($key:literal),* $(,)?) => {
        &[$(($key, include_str!(concat!("../../templates/contiki-c/", $key, ".tmpl")))),*]
    };
}

const CONTIKI_C: &[(&str, &str)] = builtin!(
    "file",
    "instance-single",
    "instance-multiple",
    "target-single",
    "target-multiple",
    "wrapper-prototype",
    "wrapper",
    "wrapper-call-value",
    "wrapper-call-void",
    "getter",
    "read-text",
    "read-integer",
    "read-boolean",
    "read-opaque",
    "setter",
    "write-text",
    "write-integer",
    "write-boolean",
    "write-opaque",
    "table-entry",
    "resources",
    "instance",
    "instances-list",
    "object",
    "observable-setter",
    "setter-synth-single",
    "setter-synth-multiple",
    "setter-synth-body-single",
    "setter-synth-body-multiple",
    "notify-append",
    "notify-append-multiple",
    "init",
    "header-prototype",
    "header-file",
    "init-call",
    "init-calls-file",
);

/// Named collection of text fragments with `{{placeholder}}` holes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub name: String,
    fragments: BTreeMap<String, String>,
}

impl TemplateSet {
    pub fn new(name: impl Into<String>) -> Self {
        TemplateSet {
            name: name.into(),
            fragments: BTreeMap::new(),
        }
    }

    /// The built-in set for the given name, if there is one.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "contiki-c" => Some(Self::contiki_c()),
            _ => None,
        }
    }

    pub fn contiki_c() -> Self {
        let mut set = Self::new("contiki-c");
        for (k, v) in CONTIKI_C {
            set.insert(*k, *v);
        }
        set
    }

    /// Loads every `<key>.tmpl` file in `dir`. The set is named after the
    /// directory.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        let mut set = Self::new(name);
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "tmpl") {
                if let Some(stem) = path.file_stem() {
                    set.insert(stem.to_string_lossy(), fs::read_to_string(&path)?);
                }
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, key: impl Into<String>, text: impl Into<String>) {
        let text = text.into();
        self.fragments
            .insert(key.into(), text.trim_end_matches('\n').to_string());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.fragments.remove(key)
    }

    pub fn fragment(&self, key: &str) -> Option<&str> {
        self.fragments.get(key).map(String::as_str)
    }

    pub fn missing_fragments(&self) -> Vec<&'static str> {
        REQUIRED_FRAGMENTS
            .iter()
            .copied()
            .filter(|k| !self.fragments.contains_key(*k))
            .collect()
    }

    /// Expands fragment `key`, substituting each placeholder from `vars`.
    pub fn fill(&self, key: &str, vars: &[(&str, &str)]) -> Result<String, CodegenError> {
        let text = self
            .fragment(key)
            .ok_or_else(|| CodegenError::MissingTemplateFragment(key.to_string()))?;
        expand(text, |name| {
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| CodegenError::UnboundPlaceholder {
                    fragment: key.to_string(),
                    name: name.to_string(),
                })
        })
    }
}

/// Placeholder names inside `text`, in order of appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let _ = expand(text, |name| {
        out.push(name.to_string());
        Ok::<_, CodegenError>("")
    });
    out
}

fn expand<'v, F>(text: &str, mut lookup: F) -> Result<String, CodegenError>
where
    F: FnMut(&str) -> Result<&'v str, CodegenError>,
{
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find("{{") {
        let after = &rest[i + 2..];
        let ident_len = after
            .bytes()
            .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
            .count();
        if ident_len > 0 && after[ident_len..].starts_with("}}") {
            out.push_str(&rest[..i]);
            out.push_str(lookup(&after[..ident_len])?);
            rest = &after[ident_len + 2..];
        } else {
            // Not a placeholder; keep one brace and rescan from the next.
            out.push_str(&rest[..=i]);
            rest = &rest[i + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}
