//! Annotated component source: lexing, parsing, validation and printing.
//!
//! The accepted dialect is a small slice of C: record declarations
//! (`struct name { ... };`) holding scalar fields, parameterless behavior
//! members (`void (*fill)(void);`) and aggregate members
//! (`struct valve *in_valve, *out_valve;`). Annotations are written on the
//! line that follows what they describe: `@ObjectType(...)` directly after
//! the opening brace of a record, `@ResourceDef(...)` directly after a
//! member declaration.
//!
//! Everything outside record bodies is skipped statement by statement,
//! except that top-level function definitions are kept by name and body so
//! the code generator can find legacy setters.

mod lexer;
mod parser;
mod print;
mod validate;

use std::fmt;

use thiserror::Error;

pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::parse_component_source;
pub use print::print_model;
pub use validate::{validate_annotations, Diagnostic, DiagnosticKind};
pub(crate) use validate::parse_type_name;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub name: String,
    pub text: String,
}

impl SourceUnit {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        SourceUnit {
            name: name.into(),
            text: text.into(),
        }
    }
}

/// 1-based line and column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnnotationKind {
    ObjectType,
    ResourceDef,
}

impl AnnotationKind {
    pub fn name(self) -> &'static str {
        match self {
            AnnotationKind::ObjectType => "ObjectType",
            AnnotationKind::ResourceDef => "ResourceDef",
        }
    }

    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            AnnotationKind::ObjectType => &["name", "id", "instanceType", "mandatory"],
            AnnotationKind::ResourceDef => &["id", "name", "operations"],
        }
    }

    pub fn known_keys(self) -> &'static [&'static str] {
        match self {
            AnnotationKind::ObjectType => &["name", "id", "instanceType", "mandatory"],
            AnnotationKind::ResourceDef => &[
                "id",
                "name",
                "operations",
                "type",
                "instanceType",
                "mandatory",
                "observable",
                "extended",
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgValue {
    Ident(String),
    Int(u64),
    Str(String),
}

impl ArgValue {
    /// The value as written, without quotes.
    pub fn text(&self) -> String {
        match self {
            ArgValue::Ident(s) | ArgValue::Str(s) => s.clone(),
            ArgValue::Int(n) => n.to_string(),
        }
    }

    pub fn as_int(&self) -> Option<u64> {
        match self {
            ArgValue::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ArgValue::Ident(s) if s == "true" => Some(true),
            ArgValue::Ident(s) if s == "false" => Some(false),
            _ => None,
        }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Ident(s) => f.write_str(s),
            ArgValue::Int(n) => write!(f, "{n}"),
            ArgValue::Str(s) => write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationNode {
    pub kind: AnnotationKind,
    pub args: Vec<(String, ArgValue)>,
    pub location: Position,
}

impl AnnotationNode {
    pub fn get(&self, key: &str) -> Option<&ArgValue> {
        self.args.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_text(&self, key: &str) -> Option<String> {
        self.get(key).map(ArgValue::text)
    }

    pub fn get_bool(&self, key: &str) -> Option<bool> {
        self.get(key).and_then(ArgValue::as_bool)
    }

    /// The `id` argument if it is an integer that fits 16 bits.
    pub fn id(&self) -> Option<u16> {
        self.get("id")
            .and_then(ArgValue::as_int)
            .and_then(|n| u16::try_from(n).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemberKind {
    ScalarField,
    /// A parameterless function pointer.
    BehaviorMember,
    /// A member whose type is another record.
    AggregateMember { target: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberDecl {
    pub name: String,
    pub kind: MemberKind,
    /// Type text as written. For behaviors this is the return type; pointer
    /// stars are appended as ` *`.
    pub declared_type: String,
    pub array_len: Option<u64>,
    pub annotation: Option<AnnotationNode>,
    pub location: Position,
}

impl MemberDecl {
    pub fn is_behavior(&self) -> bool {
        self.kind == MemberKind::BehaviorMember
    }

    pub fn aggregate_target(&self) -> Option<&str> {
        match &self.kind {
            MemberKind::AggregateMember { target } => Some(target),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentRecord {
    pub name: String,
    pub object_annotation: Option<AnnotationNode>,
    pub members: Vec<MemberDecl>,
    pub location: Position,
}

impl ComponentRecord {
    pub fn member(&self, name: &str) -> Option<&MemberDecl> {
        self.members.iter().find(|m| m.name == name)
    }

    pub fn annotated_members(&self) -> impl Iterator<Item = (&MemberDecl, &AnnotationNode)> {
        self.members
            .iter()
            .filter_map(|m| m.annotation.as_ref().map(|a| (m, a)))
    }
}

/// A top-level function definition found outside record bodies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    /// Everything before the opening brace, whitespace collapsed.
    pub signature: String,
    /// Raw text between the braces, trimmed.
    pub body: String,
    pub location: Position,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotatedComponentModel {
    pub source_name: String,
    pub records: Vec<ComponentRecord>,
    pub functions: Vec<FunctionDef>,
}

impl AnnotatedComponentModel {
    pub fn record(&self, name: &str) -> Option<&ComponentRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn annotation_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| {
                usize::from(r.object_annotation.is_some())
                    + r.members.iter().filter(|m| m.annotation.is_some()).count()
            })
            .sum()
    }

    /// Aggregate members, across all records, that embed `target`.
    pub fn aggregate_references<'a>(
        &'a self,
        target: &'a str,
    ) -> impl Iterator<Item = (&'a ComponentRecord, &'a MemberDecl)> + 'a {
        self.records.iter().flat_map(move |r| {
            r.members
                .iter()
                .filter(move |m| m.aggregate_target() == Some(target))
                .map(move |m| (r, m))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{pos}: unterminated string literal")]
    UnterminatedString { pos: Position },
    #[error("{pos}: unterminated block comment")]
    UnterminatedComment { pos: Position },
    #[error("{pos}: illegal character {ch:?}")]
    IllegalCharacter { ch: char, pos: Position },
    #[error("{pos}: integer literal out of range")]
    IntegerOverflow { pos: Position },
    #[error("{pos}: expected {expected}, found {found}")]
    Unexpected {
        expected: String,
        found: String,
        pos: Position,
    },
    #[error("unexpected end of input, expected {expected}")]
    UnexpectedEof { expected: String },
    #[error("{pos}: annotation is not adjacent to a record or member it could describe")]
    DanglingAnnotation { pos: Position },
    #[error("{pos}: a second annotation is bound to the same declaration")]
    DuplicateAnnotation { pos: Position },
    #[error("{pos}: unknown annotation `@{name}`")]
    UnknownAnnotation { name: String, pos: Position },
    #[error("{pos}: annotation key `{key}` given twice")]
    DuplicateKey { key: String, pos: Position },
    #[error("{pos}: member `{name}` declared twice")]
    DuplicateMember { name: String, pos: Position },
    #[error("{pos}: record `{name}` declared twice")]
    DuplicateRecord { name: String, pos: Position },
    #[error("{pos}: behavior member `{name}` must take no parameters")]
    BehaviorWithParameters { name: String, pos: Position },
}
