//! Canonical JSON form of a [`ThingResourceModel`].
//!
//! Keys are sorted at every level and objects/resources keep model order, so
//! equal models serialize to identical bytes.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    InstanceType, ModelError, ObjectDefn, Operations, ResourceDefn, ThingResourceModel, ValueType,
};

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ThingDto {
    thing_name: String,
    objects: Vec<ObjectDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ObjectDto {
    object_id: u16,
    name: String,
    instance_type: InstanceType,
    mandatory: bool,
    resources: Vec<ResourceDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ResourceDto {
    resource_id: u16,
    name: String,
    operations: String,
    value_type: ValueType,
    observable: bool,
    extended: bool,
    source_member: String,
}

pub fn serialize_descriptor(model: &ThingResourceModel) -> String {
    let dto = ThingDto {
        thing_name: model.thing_name.clone(),
        objects: model
            .objects
            .iter()
            .map(|o| ObjectDto {
                object_id: o.object_id,
                name: o.name.clone(),
                instance_type: o.instance_type,
                mandatory: o.mandatory,
                resources: o
                    .resources
                    .iter()
                    .map(|r| ResourceDto {
                        resource_id: r.resource_id,
                        name: r.name.clone(),
                        operations: r.operations.to_string(),
                        value_type: r.value_type,
                        observable: r.observable,
                        extended: r.extended,
                        source_member: r.source_member.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let value = sort_keys(serde_json::to_value(dto).expect("descriptor is plain data"));
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

pub fn deserialize_descriptor(text: &str) -> Result<ThingResourceModel, ModelError> {
    let dto: ThingDto =
        serde_json::from_str(text).map_err(|e| ModelError::MalformedDescriptor(e.to_string()))?;
    let mut objects = Vec::with_capacity(dto.objects.len());
    for o in dto.objects {
        let mut resources = Vec::with_capacity(o.resources.len());
        for r in o.resources {
            let operations: Operations = r.operations.parse().map_err(|e| {
                ModelError::MalformedDescriptor(format!("resource {}: {e}", r.resource_id))
            })?;
            resources.push(ResourceDefn {
                resource_id: r.resource_id,
                name: r.name,
                operations,
                value_type: r.value_type,
                observable: r.observable,
                extended: r.extended,
                source_member: r.source_member,
            });
        }
        objects.push(ObjectDefn {
            object_id: o.object_id,
            name: o.name,
            instance_type: o.instance_type,
            mandatory: o.mandatory,
            resources,
        });
    }
    let model = ThingResourceModel {
        thing_name: dto.thing_name,
        objects,
    };
    model.check().map_err(ModelError::MalformedDescriptor)?;
    Ok(model)
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, sort_keys(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}
