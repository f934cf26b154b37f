use std::collections::HashSet;
use std::fmt;

use super::{AnnotatedComponentModel, AnnotationNode, ArgValue, MemberDecl, Position};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    MissingKey { key: &'static str },
    UnknownKey { key: String },
    IdOutOfRange,
    IllegalOperations { operations: String },
    /// A ResourceDef on a behavior member without `E`.
    BehaviorWithoutExecute,
    /// `E` on a scalar or aggregate member.
    ExecuteOnField,
    /// `E` combined with `R` or `W`.
    ExecuteNotExclusive,
    ObservableWithoutRead,
    IllegalValue { key: &'static str, value: String },
    ValueTypeMismatch { value_type: String },
    DuplicateResourceId { id: u16 },
    DuplicateObjectId { id: u16 },
    UnresolvedAggregate { target: String },
    /// A ResourceDef inside a record that carries no ObjectType.
    ResourceOutsideObject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub record: String,
    pub member: Option<String>,
    pub location: Position,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.record)?;
        if let Some(m) = &self.member {
            write!(f, ".{m}")?;
        }
        f.write_str(": ")?;
        match &self.kind {
            DiagnosticKind::MissingKey { key } => write!(f, "missing annotation key `{key}`"),
            DiagnosticKind::UnknownKey { key } => write!(f, "unknown annotation key `{key}`"),
            DiagnosticKind::IdOutOfRange => f.write_str("id must be an integer below 65536"),
            DiagnosticKind::IllegalOperations { operations } => {
                write!(f, "operations `{operations}` is not a subset of R, W, E")
            }
            DiagnosticKind::BehaviorWithoutExecute => {
                f.write_str("behavior resources need operations=E")
            }
            DiagnosticKind::ExecuteOnField => f.write_str("only behavior members can be executable"),
            DiagnosticKind::ExecuteNotExclusive => f.write_str("E cannot be combined with R or W"),
            DiagnosticKind::ObservableWithoutRead => f.write_str("observable resources must be readable"),
            DiagnosticKind::IllegalValue { key, value } => {
                write!(f, "illegal value `{value}` for `{key}`")
            }
            DiagnosticKind::ValueTypeMismatch { value_type } => {
                write!(f, "type `{value_type}` does not fit the resource's operations")
            }
            DiagnosticKind::DuplicateResourceId { id } => write!(f, "resource id {id} used twice"),
            DiagnosticKind::DuplicateObjectId { id } => write!(f, "object id {id} used twice"),
            DiagnosticKind::UnresolvedAggregate { target } => {
                write!(f, "aggregate member refers to unknown record `{target}`")
            }
            DiagnosticKind::ResourceOutsideObject => {
                f.write_str("resource annotation in a record without @ObjectType")
            }
        }
    }
}

/// Value types accepted by the `type` key and what they map to.
pub(crate) fn parse_type_name(s: &str) -> Option<crate::resource::ValueType> {
    use crate::resource::ValueType;
    Some(match s {
        "string" | "text" => ValueType::Text,
        "int" | "integer" => ValueType::Integer,
        "bool" | "boolean" => ValueType::Boolean,
        "opaque" => ValueType::Opaque,
        "void" | "none" => ValueType::None,
        _ => return None,
    })
}

/// Checks every annotation in the model. An empty list means the model can
/// be turned into a resource model.
pub fn validate_annotations(model: &AnnotatedComponentModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let names: HashSet<&str> = model.records.iter().map(|r| r.name.as_str()).collect();
    let mut object_ids = HashSet::new();

    for record in &model.records {
        let mut push = |kind, member: Option<&MemberDecl>, location| {
            out.push(Diagnostic {
                kind,
                record: record.name.clone(),
                member: member.map(|m| m.name.clone()),
                location,
            })
        };

        if let Some(obj) = &record.object_annotation {
            check_common(obj, &mut |k, loc| push(k, None, loc));
            if let Some(v) = obj.get("instanceType") {
                check_enum(v, "instanceType", &["single", "multiple"], obj.location, &mut |k, loc| {
                    push(k, None, loc)
                });
            }
            if let Some(v) = obj.get("mandatory") {
                if v.as_bool().is_none() {
                    push(
                        DiagnosticKind::IllegalValue {
                            key: "mandatory",
                            value: v.text(),
                        },
                        None,
                        obj.location,
                    );
                }
            }
            if let Some(id) = obj.id() {
                if !object_ids.insert(id) {
                    push(DiagnosticKind::DuplicateObjectId { id }, None, obj.location);
                }
            }
        }

        let mut resource_ids = HashSet::new();
        for m in &record.members {
            if let Some(target) = m.aggregate_target() {
                if !names.contains(target) {
                    push(
                        DiagnosticKind::UnresolvedAggregate {
                            target: target.to_string(),
                        },
                        Some(m),
                        m.location,
                    );
                }
            }
            let Some(ann) = &m.annotation else { continue };
            let loc = ann.location;
            check_common(ann, &mut |k, l| push(k, Some(m), l));
            if record.object_annotation.is_none() {
                push(DiagnosticKind::ResourceOutsideObject, Some(m), loc);
            }
            if let Some(id) = ann.id() {
                if !resource_ids.insert(id) {
                    push(DiagnosticKind::DuplicateResourceId { id }, Some(m), loc);
                }
            }
            for key in ["observable", "extended", "mandatory"] {
                if let Some(v) = ann.get(key) {
                    if v.as_bool().is_none() {
                        push(
                            DiagnosticKind::IllegalValue {
                                key,
                                value: v.text(),
                            },
                            Some(m),
                            loc,
                        );
                    }
                }
            }
            if let Some(v) = ann.get("instanceType") {
                check_enum(v, "instanceType", &["single", "multiple"], loc, &mut |k, l| {
                    push(k, Some(m), l)
                });
            }

            let Some(ops_value) = ann.get("operations") else { continue };
            let ops = ops_value.text();
            if ops.is_empty() || !ops.chars().all(|c| matches!(c, 'R' | 'W' | 'E')) {
                push(
                    DiagnosticKind::IllegalOperations { operations: ops },
                    Some(m),
                    loc,
                );
                continue;
            }
            let exec = ops.contains('E');
            let read = ops.contains('R');
            if m.is_behavior() && !exec {
                push(DiagnosticKind::BehaviorWithoutExecute, Some(m), loc);
            }
            if exec && !m.is_behavior() {
                push(DiagnosticKind::ExecuteOnField, Some(m), loc);
            }
            if exec && ops.chars().any(|c| c != 'E') {
                push(DiagnosticKind::ExecuteNotExclusive, Some(m), loc);
            }
            if ann.get_bool("observable") == Some(true) && !read {
                push(DiagnosticKind::ObservableWithoutRead, Some(m), loc);
            }
            if let Some(t) = ann.get("type") {
                match parse_type_name(&t.text()) {
                    None => push(
                        DiagnosticKind::IllegalValue {
                            key: "type",
                            value: t.text(),
                        },
                        Some(m),
                        loc,
                    ),
                    Some(vt) => {
                        let none = vt == crate::resource::ValueType::None;
                        if exec != none {
                            push(
                                DiagnosticKind::ValueTypeMismatch {
                                    value_type: t.text(),
                                },
                                Some(m),
                                loc,
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

fn check_common(ann: &AnnotationNode, push: &mut dyn FnMut(DiagnosticKind, Position)) {
    for key in ann.kind.required_keys() {
        if ann.get(key).is_none() {
            push(DiagnosticKind::MissingKey { key }, ann.location);
        }
    }
    for (key, _) in &ann.args {
        if !ann.kind.known_keys().contains(&key.as_str()) {
            push(DiagnosticKind::UnknownKey { key: key.clone() }, ann.location);
        }
    }
    if ann.get("id").is_some() && ann.id().is_none() {
        push(DiagnosticKind::IdOutOfRange, ann.location);
    }
    if let Some(ArgValue::Int(n)) = ann.get("name") {
        push(
            DiagnosticKind::IllegalValue {
                key: "name",
                value: n.to_string(),
            },
            ann.location,
        );
    }
}

fn check_enum(
    v: &ArgValue,
    key: &'static str,
    allowed: &[&str],
    loc: Position,
    push: &mut dyn FnMut(DiagnosticKind, Position),
) {
    if !allowed.contains(&v.text().as_str()) {
        push(
            DiagnosticKind::IllegalValue {
                key,
                value: v.text(),
            },
            loc,
        );
    }
}
