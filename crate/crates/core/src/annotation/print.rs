use std::fmt::Write as _;

use super::{AnnotatedComponentModel, AnnotationNode, MemberDecl, MemberKind};

/// Renders a model back into the annotated dialect. Parsing the output
/// yields the same records, members, annotations and functions.
pub fn print_model(model: &AnnotatedComponentModel) -> String {
    let mut out = String::new();
    for (i, record) in model.records.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "struct {} {{", record.name);
        if let Some(ann) = &record.object_annotation {
            let _ = writeln!(out, "  {}", print_annotation(ann));
        }
        for m in &record.members {
            let _ = writeln!(out, "  {}", print_member(m));
            if let Some(ann) = &m.annotation {
                let _ = writeln!(out, "  {}", print_annotation(ann));
            }
        }
        out.push_str("};\n");
    }
    for f in &model.functions {
        let _ = write!(out, "\n{} {{\n  {}\n}}\n", f.signature, f.body);
    }
    out
}

pub(crate) fn print_annotation(ann: &AnnotationNode) -> String {
    let args: Vec<String> = ann.args.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("@{} ({})", ann.kind.name(), args.join(","))
}

fn print_member(m: &MemberDecl) -> String {
    match m.kind {
        MemberKind::BehaviorMember => format!("{} (*{})(void);", m.declared_type, m.name),
        _ => {
            let array = m.array_len.map(|n| format!("[{n}]")).unwrap_or_default();
            if m.declared_type.ends_with('*') {
                format!("{}{}{};", m.declared_type, m.name, array)
            } else {
                format!("{} {}{};", m.declared_type, m.name, array)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::annotation::{
        parse_component_source, AnnotationKind, ArgValue, ComponentRecord, FunctionDef, Position,
        SourceUnit,
    };

    fn clear_locations(model: &mut AnnotatedComponentModel) {
        for r in &mut model.records {
            r.location = Position::default();
            if let Some(a) = &mut r.object_annotation {
                a.location = Position::default();
            }
            for m in &mut r.members {
                m.location = Position::default();
                if let Some(a) = &mut m.annotation {
                    a.location = Position::default();
                }
            }
        }
        for f in &mut model.functions {
            f.location = Position::default();
        }
    }

    fn reparse(text: &str) -> AnnotatedComponentModel {
        parse_component_source(&SourceUnit::new("gen.c", text)).expect("printed model parses")
    }

    const KEYWORDS: &[&str] = &["struct", "enum", "void"];

    fn ident() -> impl Strategy<Value = String> {
        "[a-z_][a-z0-9_]{0,8}".prop_filter("not a keyword", |s| !KEYWORDS.contains(&s.as_str()))
    }

    fn arg_value() -> impl Strategy<Value = ArgValue> {
        prop_oneof![
            ident().prop_map(ArgValue::Ident),
            (0u64..70000).prop_map(ArgValue::Int),
            "[ -~]{0,10}".prop_map(ArgValue::Str),
        ]
    }

    fn annotation(kind: AnnotationKind) -> impl Strategy<Value = AnnotationNode> {
        prop::collection::btree_map(ident(), arg_value(), 0..5).prop_map(move |args| {
            AnnotationNode {
                kind,
                args: args.into_iter().collect(),
                location: Position::default(),
            }
        })
    }

    fn member() -> impl Strategy<Value = MemberDecl> {
        let kind = prop_oneof![
            Just(MemberKind::ScalarField),
            Just(MemberKind::BehaviorMember),
            ident().prop_map(|target| MemberKind::AggregateMember { target }),
        ];
        (
            ident(),
            kind,
            prop::bool::ANY,
            prop::option::of(annotation(AnnotationKind::ResourceDef)),
        )
            .prop_map(|(name, kind, pointer, annotation)| {
                let star = if pointer { " *" } else { "" };
                let (declared_type, kind) = match kind {
                    MemberKind::ScalarField => (format!("int{star}"), MemberKind::ScalarField),
                    MemberKind::BehaviorMember => ("int".to_string(), MemberKind::BehaviorMember),
                    MemberKind::AggregateMember { target } => (
                        format!("struct {target}{star}"),
                        MemberKind::AggregateMember { target },
                    ),
                };
                MemberDecl {
                    name,
                    kind,
                    declared_type,
                    array_len: None,
                    annotation,
                    location: Position::default(),
                }
            })
    }

    fn model() -> impl Strategy<Value = AnnotatedComponentModel> {
        let record = (
            ident(),
            prop::option::of(annotation(AnnotationKind::ObjectType)),
            prop::collection::vec(member(), 0..6),
        )
            .prop_map(|(name, object_annotation, mut members)| {
                let mut seen = std::collections::HashSet::new();
                members.retain(|m| seen.insert(m.name.clone()));
                ComponentRecord {
                    name,
                    object_annotation,
                    members,
                    location: Position::default(),
                }
            });
        let function = (ident(), "[a-z]{1,6} = [0-9]{1,3};").prop_map(|(name, body)| FunctionDef {
            signature: format!("void set_{name}()"),
            name: format!("set_{name}"),
            body,
            location: Position::default(),
        });
        (
            prop::collection::vec(record, 0..4),
            prop::collection::vec(function, 0..3),
        )
            .prop_map(|(mut records, functions)| {
                let mut seen = std::collections::HashSet::new();
                records.retain(|r| seen.insert(r.name.clone()));
                AnnotatedComponentModel {
                    source_name: "gen.c".into(),
                    records,
                    functions,
                }
            })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(m in model()) {
            let mut parsed = reparse(&print_model(&m));
            clear_locations(&mut parsed);
            prop_assert_eq!(&parsed, &m);
        }

        #[test]
        fn print_parse_reaches_fixpoint(m in model()) {
            let once = reparse(&print_model(&m));
            let text = print_model(&once);
            let twice = reparse(&text);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(print_model(&twice), text);
        }

        #[test]
        fn bound_annotations_match_sigils(m in model()) {
            let text = print_model(&m);
            let sigils = crate::annotation::tokenize(&SourceUnit::new("gen.c", text.clone()))
                .unwrap()
                .into_iter()
                .filter(|t| t.kind == crate::annotation::TokenKind::Sigil)
                .count();
            prop_assert_eq!(reparse(&text).annotation_count(), sigils);
        }
    }
}
