use std::path::Path;

use super::{InstanceType, ModelError, ObjectDefn, Operations, ResourceDefn, ThingResourceModel, ValueType};
use crate::annotation::{validate_annotations, AnnotatedComponentModel};
use crate::annotation::parse_type_name;

/// Builds the LWM2M object tree: one object per `@ObjectType` record and one
/// resource per `@ResourceDef` member. Unannotated records and members are
/// left out. Objects and resources are ordered by id.
pub fn build_resource_model(
    model: &AnnotatedComponentModel,
) -> Result<ThingResourceModel, ModelError> {
    let diagnostics = validate_annotations(model);
    if !diagnostics.is_empty() {
        return Err(ModelError::InvalidAnnotations(diagnostics));
    }
    let mut objects = Vec::new();
    for record in &model.records {
        let Some(obj) = &record.object_annotation else { continue };
        let mut resources = Vec::new();
        for (member, ann) in record.annotated_members() {
            let operations: Operations = ann
                .get_text("operations")
                .unwrap_or_default()
                .parse()
                .map_err(|e: String| ModelError::MalformedDescriptor(e))?;
            let value_type = if operations.execute {
                ValueType::None
            } else {
                ann.get_text("type")
                    .and_then(|t| parse_type_name(&t))
                    .unwrap_or(ValueType::Text)
            };
            resources.push(ResourceDefn {
                resource_id: ann.id().expect("validated"),
                name: ann.get_text("name").expect("validated"),
                operations,
                value_type,
                observable: ann.get_bool("observable").unwrap_or(false),
                extended: ann.get_bool("extended").unwrap_or(false),
                source_member: member.name.clone(),
            });
        }
        resources.sort_by_key(|r| r.resource_id);
        objects.push(ObjectDefn {
            object_id: obj.id().expect("validated"),
            name: obj.get_text("name").expect("validated"),
            instance_type: match obj.get_text("instanceType").as_deref() {
                Some("multiple") => InstanceType::Multiple,
                _ => InstanceType::Single,
            },
            mandatory: obj.get_bool("mandatory").unwrap_or(true),
            resources,
        });
    }
    if objects.is_empty() {
        return Err(ModelError::UnannotatedModel);
    }
    objects.sort_by_key(|o| o.object_id);
    let thing_name = Path::new(&model.source_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| model.source_name.clone());
    Ok(ThingResourceModel { thing_name, objects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{parse_component_source, SourceUnit};

    fn build(text: &str) -> Result<ThingResourceModel, ModelError> {
        build_resource_model(&parse_component_source(&SourceUnit::new("x.c", text)).unwrap())
    }

    #[test]
    fn unannotated_model() {
        assert_eq!(build("struct a{ int x; };"), Err(ModelError::UnannotatedModel));
    }

    #[test]
    fn invalid_annotations_are_refused() {
        let r = build(
            "struct a{\n @ObjectType(name=\"a\",id=1,instanceType=single,mandatory=true)\n int x;\n \
             @ResourceDef(id=1,name=\"x\",operations=X)\n};",
        );
        assert!(matches!(r, Err(ModelError::InvalidAnnotations(d)) if d.len() == 1));
    }

    #[test]
    fn drops_unannotated_members_and_defaults_types() {
        let m = build(
            "struct a{\n @ObjectType(name=\"A\",id=1,instanceType=multiple,mandatory=false)\n int x;\n \
             @ResourceDef(id=3,name=\"x\",operations=R)\n int hidden;\n void (*go)(void);\n \
             @ResourceDef(id=2,name=\"go\",operations=E)\n};",
        )
        .unwrap();
        assert_eq!(m.thing_name, "x");
        let o = &m.objects[0];
        assert_eq!(o.instance_type, InstanceType::Multiple);
        assert!(!o.mandatory);
        let ids: Vec<_> = o.resources.iter().map(|r| r.resource_id).collect();
        assert_eq!(ids, vec![2, 3]);
        assert_eq!(o.resource(2).unwrap().value_type, ValueType::None);
        assert_eq!(o.resource(3).unwrap().value_type, ValueType::Text);
        assert_eq!(o.resource(3).unwrap().source_member, "x");
    }
}
