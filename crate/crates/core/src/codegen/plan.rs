use std::collections::BTreeSet;

use super::CodegenError;
use crate::annotation::{AnnotatedComponentModel, ComponentRecord};
use crate::resource::{InstanceType, ObjectDefn, ThingResourceModel, ValueType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationPlan {
    pub source_name: String,
    pub thing_name: String,
    /// Ordered by object id.
    pub objects: Vec<ObjectPlan>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectPlan {
    pub object_id: u16,
    pub object_name: String,
    /// Source record the object was built from.
    pub record: String,
    pub instance_type: InstanceType,
    pub instance_ids: Vec<u16>,
    pub object_var: String,
    pub resources_var: String,
    pub instances_var: String,
    pub wrappers: Vec<WrapperSpec>,
    pub accessors: Vec<AccessorSpec>,
    pub table: Vec<TableEntry>,
    pub notifies: Vec<NotifyInjection>,
    pub init: InitSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrapperSpec {
    pub resource_id: u16,
    /// Wrapper function name; same as the behavior it wraps.
    pub name: String,
    pub behavior: String,
    pub returns_value: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessorSpec {
    pub resource_id: u16,
    pub member: String,
    pub value_type: ValueType,
    pub read: Option<String>,
    pub write: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableEntry {
    pub resource_id: u16,
    pub read: Option<String>,
    pub write: Option<String>,
    pub execute: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotifyInjection {
    pub resource_id: u16,
    pub member: String,
    pub setter: String,
    /// `None` for multiple-instance objects, where the instance is only
    /// known when the setter runs.
    pub instance_id: Option<u16>,
    /// The setter found in the source, if any. Otherwise one is synthesized.
    pub legacy: Option<LegacySetter>,
}

impl NotifyInjection {
    /// `/<instance>/<resource>`, with `%d` standing for a runtime instance.
    pub fn path(&self) -> String {
        match self.instance_id {
            Some(i) => format!("/{i}/{}", self.resource_id),
            None => format!("/%d/{}", self.resource_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegacySetter {
    pub signature: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitSpec {
    pub name: String,
    pub legacy_init: String,
    pub object_var: String,
    pub header_file: String,
    pub init_call_site: String,
}

pub fn plan_generation(
    model: &ThingResourceModel,
    annotated: &AnnotatedComponentModel,
) -> Result<GenerationPlan, CodegenError> {
    let annotated_objects = annotated
        .records
        .iter()
        .filter(|r| r.object_annotation.is_some())
        .count();
    if annotated_objects != model.objects.len() {
        return Err(inconsistent(format!(
            "model has {} objects, source has {annotated_objects} annotated records",
            model.objects.len()
        )));
    }
    let mut objects = Vec::with_capacity(model.objects.len());
    for object in &model.objects {
        let record = annotated
            .records
            .iter()
            .find(|r| {
                r.object_annotation.as_ref().and_then(|a| a.id()) == Some(object.object_id)
            })
            .ok_or_else(|| {
                inconsistent(format!("no record annotated with object id {}", object.object_id))
            })?;
        objects.push(plan_object(object, record, annotated)?);
    }
    objects.sort_by_key(|o| o.object_id);
    Ok(GenerationPlan {
        source_name: annotated.source_name.clone(),
        thing_name: model.thing_name.clone(),
        objects,
    })
}

fn plan_object(
    object: &ObjectDefn,
    record: &ComponentRecord,
    annotated: &AnnotatedComponentModel,
) -> Result<ObjectPlan, CodegenError> {
    let rec = record.name.as_str();
    let annotated_ids: BTreeSet<u16> = record
        .annotated_members()
        .filter_map(|(_, a)| a.id())
        .collect();
    let model_ids: BTreeSet<u16> = object.resources.iter().map(|r| r.resource_id).collect();
    if annotated_ids != model_ids {
        return Err(inconsistent(format!(
            "object {} resources {model_ids:?} differ from record `{rec}` annotations {annotated_ids:?}",
            object.object_id
        )));
    }
    let object_var = format!("{rec}_obj");
    let instance_ids: Vec<u16> = match object.instance_type {
        InstanceType::Single => vec![0],
        InstanceType::Multiple => {
            let n = annotated.aggregate_references(rec).count().max(1);
            (0..n as u16).collect()
        }
    };
    let mut wrappers = Vec::new();
    let mut accessors = Vec::new();
    let mut table = Vec::new();
    let mut notifies = Vec::new();
    for res in &object.resources {
        let member = record.member(&res.source_member).ok_or_else(|| {
            inconsistent(format!(
                "resource {} names member `{}` missing from `{rec}`",
                res.resource_id, res.source_member
            ))
        })?;
        if member.annotation.as_ref().and_then(|a| a.id()) != Some(res.resource_id) {
            return Err(inconsistent(format!(
                "member `{}` is not annotated with resource id {}",
                member.name, res.resource_id
            )));
        }
        let mut entry = TableEntry {
            resource_id: res.resource_id,
            read: None,
            write: None,
            execute: None,
        };
        if res.operations.execute {
            if !member.is_behavior() {
                return Err(inconsistent(format!(
                    "executable resource {} is bound to non-behavior `{}`",
                    res.resource_id, member.name
                )));
            }
            wrappers.push(WrapperSpec {
                resource_id: res.resource_id,
                name: member.name.clone(),
                behavior: member.name.clone(),
                returns_value: member.declared_type.trim() != "void",
            });
            entry.execute = Some(member.name.clone());
        } else {
            let ident = c_ident(&res.name);
            let read = res.operations.read.then(|| format!("get_{rec}_{ident}"));
            let write = res.operations.write.then(|| format!("set_{rec}_{ident}"));
            entry.read = read.clone();
            entry.write = write.clone();
            accessors.push(AccessorSpec {
                resource_id: res.resource_id,
                member: member.name.clone(),
                value_type: res.value_type,
                read,
                write,
            });
        }
        table.push(entry);
        if res.observable {
            let setter = format!("set_{}", member.name);
            let legacy = annotated.function(&setter).map(|f| LegacySetter {
                signature: f.signature.clone(),
                body: f.body.clone(),
            });
            notifies.push(NotifyInjection {
                resource_id: res.resource_id,
                member: member.name.clone(),
                setter,
                instance_id: match object.instance_type {
                    InstanceType::Single => Some(0),
                    InstanceType::Multiple => None,
                },
                legacy,
            });
        }
    }
    Ok(ObjectPlan {
        object_id: object.object_id,
        object_name: object.name.clone(),
        record: rec.to_string(),
        instance_type: object.instance_type,
        instance_ids,
        resources_var: format!("{rec}_resources"),
        instances_var: format!("{rec}_instances"),
        wrappers,
        accessors,
        table,
        notifies,
        init: InitSpec {
            name: format!("ipso_{rec}_init"),
            legacy_init: format!("{rec}_init"),
            object_var: object_var.clone(),
            header_file: "ipso-objects.h".into(),
            init_call_site: "ipso_objects_init".into(),
        },
        object_var,
    })
}

fn c_ident(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    s
}

fn inconsistent(msg: String) -> CodegenError {
    CodegenError::InconsistentInputs(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idents() {
        assert_eq!(c_ident("state"), "state");
        assert_eq!(c_ident("target temp-1"), "target_temp_1");
        assert_eq!(c_ident("1x"), "_1x");
    }
}
