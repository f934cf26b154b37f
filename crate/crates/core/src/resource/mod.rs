//! LWM2M object/resource model built from annotated components, and its
//! canonical JSON form (the Thing Descriptor).

mod build;
mod descriptor;
mod link;
mod path;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::Diagnostic;

pub use build::build_resource_model;
pub use descriptor::{deserialize_descriptor, serialize_descriptor};
pub use link::{parse_link_format, to_link_format, Link};
pub use path::{PathParseError, ResourcePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Text,
    Integer,
    Boolean,
    Opaque,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceType {
    Single,
    Multiple,
}

/// Subset of {R, W, E}.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Operations {
    pub read: bool,
    pub write: bool,
    pub execute: bool,
}

impl Operations {
    pub const R: Operations = Operations {
        read: true,
        write: false,
        execute: false,
    };
    pub const RW: Operations = Operations {
        read: true,
        write: true,
        execute: false,
    };
    pub const E: Operations = Operations {
        read: false,
        write: false,
        execute: true,
    };

    pub fn is_empty(self) -> bool {
        !(self.read || self.write || self.execute)
    }
}

impl fmt::Display for Operations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.read {
            f.write_str("R")?;
        }
        if self.write {
            f.write_str("W")?;
        }
        if self.execute {
            f.write_str("E")?;
        }
        Ok(())
    }
}

impl FromStr for Operations {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut ops = Operations::default();
        for c in s.chars() {
            let slot = match c {
                'R' => &mut ops.read,
                'W' => &mut ops.write,
                'E' => &mut ops.execute,
                _ => return Err(format!("`{c}` is not one of R, W, E")),
            };
            if *slot {
                return Err(format!("`{c}` repeated"));
            }
            *slot = true;
        }
        if ops.is_empty() {
            return Err("empty operations".into());
        }
        Ok(ops)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceDefn {
    pub resource_id: u16,
    pub name: String,
    pub operations: Operations,
    pub value_type: ValueType,
    pub observable: bool,
    /// Not part of the original component interface; added to complete it.
    pub extended: bool,
    pub source_member: String,
}

impl ResourceDefn {
    pub fn is_executable(&self) -> bool {
        self.operations.execute
    }

    pub(crate) fn check(&self) -> Result<(), String> {
        if self.operations.is_empty() {
            return Err(format!("resource {} has no operations", self.resource_id));
        }
        if self.operations.execute && (self.operations.read || self.operations.write) {
            return Err(format!(
                "resource {} mixes E with R/W",
                self.resource_id
            ));
        }
        if self.operations.execute != (self.value_type == ValueType::None) {
            return Err(format!(
                "resource {}: executable resources and only those carry no value",
                self.resource_id
            ));
        }
        if self.observable && !self.operations.read {
            return Err(format!(
                "resource {} is observable but not readable",
                self.resource_id
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectDefn {
    pub object_id: u16,
    pub name: String,
    pub instance_type: InstanceType,
    pub mandatory: bool,
    pub resources: Vec<ResourceDefn>,
}

impl ObjectDefn {
    pub fn resource(&self, id: u16) -> Option<&ResourceDefn> {
        self.resources.iter().find(|r| r.resource_id == id)
    }

    pub fn resource_named(&self, name: &str) -> Option<&ResourceDefn> {
        self.resources.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThingResourceModel {
    pub thing_name: String,
    pub objects: Vec<ObjectDefn>,
}

impl ThingResourceModel {
    pub fn object(&self, id: u16) -> Option<&ObjectDefn> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    pub fn resource(&self, object_id: u16, resource_id: u16) -> Option<&ResourceDefn> {
        self.object(object_id)?.resource(resource_id)
    }

    pub fn resource_count(&self) -> usize {
        self.objects.iter().map(|o| o.resources.len()).sum()
    }

    /// Checks every structural invariant of the model.
    pub fn check(&self) -> Result<(), String> {
        if self.objects.is_empty() {
            return Err("a thing exposes at least one object".into());
        }
        let mut seen = std::collections::HashSet::new();
        for o in &self.objects {
            if !seen.insert(o.object_id) {
                return Err(format!("object id {} used twice", o.object_id));
            }
            let mut ids = std::collections::HashSet::new();
            for r in &o.resources {
                if !ids.insert(r.resource_id) {
                    return Err(format!(
                        "resource id {} used twice in object {}",
                        r.resource_id, o.object_id
                    ));
                }
                r.check()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("no record carries an @ObjectType annotation")]
    UnannotatedModel,
    #[error("annotations are invalid ({} diagnostics)", .0.len())]
    InvalidAnnotations(Vec<Diagnostic>),
    #[error("unknown object id {0}")]
    UnknownObjectId(u16),
    #[error("malformed descriptor: {0}")]
    MalformedDescriptor(String),
    #[error("malformed link format: {0}")]
    MalformedLinks(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operations_text() {
        assert_eq!("RW".parse::<Operations>().unwrap(), Operations::RW);
        assert_eq!("WR".parse::<Operations>().unwrap().to_string(), "RW");
        assert_eq!(Operations::E.to_string(), "E");
        assert!("RR".parse::<Operations>().is_err());
        assert!("".parse::<Operations>().is_err());
        assert!("X".parse::<Operations>().is_err());
    }
}
