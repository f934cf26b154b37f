use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use super::{Lwm2mError, ResourceValue};
use crate::coap::{content_format, CoapMessage, Code, Response, Service, ServiceCtx};
use crate::resource::{to_link_format, InstanceType, ResourceDefn, ResourcePath, ThingResourceModel};

pub type ReadHook = Arc<dyn Fn() -> ResourceValue + Send + Sync>;
pub type WriteHook = Arc<dyn Fn(&ResourceValue) -> Result<(), String> + Send + Sync>;
/// Returns 0 on success, anything else is a failure.
pub type ExecHook = Arc<dyn Fn(&[u8]) -> i32 + Send + Sync>;

struct Slot {
    defn: ResourceDefn,
    value: ResourceValue,
    read: Option<ReadHook>,
    write: Option<WriteHook>,
    exec: Option<ExecHook>,
}

/// Instances of the objects of one Thing, with a value or hooks per
/// resource.
pub struct ObjectRegistry {
    descriptor: ThingResourceModel,
    instances: BTreeMap<(u16, u16), BTreeMap<u16, Slot>>,
}

pub type SharedRegistry = Arc<Mutex<ObjectRegistry>>;

/// Outcome of one request against the registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryReply {
    pub code: Code,
    pub payload: Vec<u8>,
    pub content_format: Option<u16>,
    /// The request registered an observation.
    pub observable: bool,
    /// Notifications to send: (path, payload).
    pub notify: Vec<(String, Vec<u8>)>,
}

impl RegistryReply {
    fn code(code: Code) -> Self {
        RegistryReply {
            code,
            payload: Vec::new(),
            content_format: None,
            observable: false,
            notify: Vec::new(),
        }
    }

    fn content(payload: Vec<u8>, cf: u16) -> Self {
        RegistryReply {
            payload,
            content_format: Some(cf),
            ..Self::code(Code::CONTENT)
        }
    }
}

impl ObjectRegistry {
    pub fn new(descriptor: ThingResourceModel) -> Self {
        ObjectRegistry {
            descriptor,
            instances: BTreeMap::new(),
        }
    }

    pub fn descriptor(&self) -> &ThingResourceModel {
        &self.descriptor
    }

    pub fn add_instance(&mut self, object_id: u16, instance_id: u16) -> Result<(), Lwm2mError> {
        let obj = self.descriptor.object(object_id).ok_or(Lwm2mError::NotFound)?;
        if obj.instance_type == InstanceType::Single && instance_id != 0 {
            return Err(Lwm2mError::BadRequest(format!(
                "object {object_id} is single-instance"
            )));
        }
        let slots = obj
            .resources
            .iter()
            .map(|r| {
                (
                    r.resource_id,
                    Slot {
                        defn: r.clone(),
                        value: ResourceValue::default_for(r.value_type),
                        read: None,
                        write: None,
                        exec: None,
                    },
                )
            })
            .collect();
        self.instances.insert((object_id, instance_id), slots);
        Ok(())
    }

    pub fn instances(&self) -> Vec<(u16, u16)> {
        self.instances.keys().copied().collect()
    }

    pub fn contains(&self, path: &ResourcePath) -> bool {
        match (path.instance_id, path.resource_id) {
            (None, _) => self.descriptor.object(path.object_id).is_some(),
            (Some(i), None) => self.instances.contains_key(&(path.object_id, i)),
            (Some(_), Some(_)) => self.slot(path).is_ok(),
        }
    }

    fn slot(&self, path: &ResourcePath) -> Result<&Slot, Lwm2mError> {
        let (Some(i), Some(r)) = (path.instance_id, path.resource_id) else {
            return Err(Lwm2mError::NotFound);
        };
        self.instances
            .get(&(path.object_id, i))
            .and_then(|s| s.get(&r))
            .ok_or(Lwm2mError::NotFound)
    }

    fn slot_mut(&mut self, path: &ResourcePath) -> Result<&mut Slot, Lwm2mError> {
        let (Some(i), Some(r)) = (path.instance_id, path.resource_id) else {
            return Err(Lwm2mError::NotFound);
        };
        self.instances
            .get_mut(&(path.object_id, i))
            .and_then(|s| s.get_mut(&r))
            .ok_or(Lwm2mError::NotFound)
    }

    pub fn definition(&self, path: &ResourcePath) -> Option<&ResourceDefn> {
        self.slot(path).ok().map(|s| &s.defn)
    }

    pub fn on_read(&mut self, path: &ResourcePath, hook: ReadHook) -> Result<(), Lwm2mError> {
        self.slot_mut(path)?.read = Some(hook);
        Ok(())
    }

    pub fn on_write(&mut self, path: &ResourcePath, hook: WriteHook) -> Result<(), Lwm2mError> {
        self.slot_mut(path)?.write = Some(hook);
        Ok(())
    }

    pub fn on_execute(&mut self, path: &ResourcePath, hook: ExecHook) -> Result<(), Lwm2mError> {
        self.slot_mut(path)?.exec = Some(hook);
        Ok(())
    }

    pub fn read(&self, path: &ResourcePath) -> Result<ResourceValue, Lwm2mError> {
        let slot = self.slot(path)?;
        if !slot.defn.operations.read {
            return Err(Lwm2mError::MethodNotAllowed);
        }
        Ok(match &slot.read {
            Some(h) => h(),
            None => slot.value.clone(),
        })
    }

    /// Returns true when observers of the path should be notified.
    pub fn write(&mut self, path: &ResourcePath, value: ResourceValue) -> Result<bool, Lwm2mError> {
        let slot = self.slot_mut(path)?;
        if !slot.defn.operations.write {
            return Err(Lwm2mError::MethodNotAllowed);
        }
        if value.value_type() != slot.defn.value_type {
            return Err(Lwm2mError::BadRequest("value type mismatch".into()));
        }
        if let Some(h) = &slot.write {
            h(&value).map_err(Lwm2mError::BadRequest)?;
        }
        slot.value = value;
        Ok(slot.defn.observable)
    }

    pub fn execute(&self, path: &ResourcePath, args: &[u8]) -> Result<(), Lwm2mError> {
        let slot = self.slot(path)?;
        if !slot.defn.operations.execute {
            return Err(Lwm2mError::MethodNotAllowed);
        }
        match &slot.exec {
            Some(h) => match h(args) {
                0 => Ok(()),
                rc => Err(Lwm2mError::InternalError(format!("execute returned {rc}"))),
            },
            None => Ok(()),
        }
    }

    /// Stores a value regardless of the allowed operations, for the Thing's
    /// own updates. Returns true when the resource is observable.
    pub fn set_value(&mut self, path: &ResourcePath, value: ResourceValue) -> Result<bool, Lwm2mError> {
        let slot = self.slot_mut(path)?;
        if value.value_type() != slot.defn.value_type {
            return Err(Lwm2mError::BadRequest("value type mismatch".into()));
        }
        slot.value = value;
        Ok(slot.defn.observable)
    }

    pub fn is_observable(&self, path: &ResourcePath) -> bool {
        self.slot(path).is_ok_and(|s| s.defn.observable)
    }

    /// Link format of every instance.
    pub fn link_format(&self) -> String {
        to_link_format(&self.descriptor, &self.instances()).expect("instances belong to descriptor")
    }

    /// Links under `path`: instances of an object, or resources of an
    /// instance (observable ones flagged with `obs`).
    pub fn discover(&self, path: &ResourcePath) -> Result<String, Lwm2mError> {
        match (path.instance_id, path.resource_id) {
            (None, _) => {
                if self.descriptor.object(path.object_id).is_none() {
                    return Err(Lwm2mError::NotFound);
                }
                let inst: Vec<_> = self
                    .instances()
                    .into_iter()
                    .filter(|(o, _)| *o == path.object_id)
                    .collect();
                Ok(to_link_format(&self.descriptor, &inst).expect("known object"))
            }
            (Some(i), None) => {
                let slots = self
                    .instances
                    .get(&(path.object_id, i))
                    .ok_or(Lwm2mError::NotFound)?;
                Ok(slots
                    .values()
                    .map(|s| {
                        let p = ResourcePath::resource(path.object_id, i, s.defn.resource_id);
                        if s.defn.observable {
                            format!("<{p}>;obs")
                        } else {
                            format!("<{p}>")
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(","))
            }
            (Some(_), Some(_)) => {
                self.slot(path)?;
                Ok(format!("<{path}>"))
            }
        }
    }

    /// Maps a CoAP request onto the registry.
    pub fn handle(&mut self, code: Code, segments: &[String], payload: &[u8], observe: Option<u32>) -> RegistryReply {
        if segments.is_empty() || segments == [".well-known", "core"] {
            return if code == Code::GET {
                RegistryReply::content(self.link_format().into_bytes(), content_format::LINK_FORMAT)
            } else {
                RegistryReply::code(Code::METHOD_NOT_ALLOWED)
            };
        }
        let Ok(path) = ResourcePath::from_segments(segments) else {
            return RegistryReply::code(Code::NOT_FOUND);
        };
        let result = if path.resource_id.is_none() {
            match code {
                Code::GET => self
                    .discover(&path)
                    .map(|l| RegistryReply::content(l.into_bytes(), content_format::LINK_FORMAT)),
                _ if self.contains(&path) => Err(Lwm2mError::MethodNotAllowed),
                _ => Err(Lwm2mError::NotFound),
            }
        } else {
            match code {
                Code::GET => self.read(&path).and_then(|v| {
                    let mut r = RegistryReply::content(v.to_payload(), content_format::TEXT_PLAIN);
                    if observe == Some(0) {
                        if !self.is_observable(&path) {
                            return Err(Lwm2mError::MethodNotAllowed);
                        }
                        r.observable = true;
                    }
                    Ok(r)
                }),
                Code::PUT => {
                    let vt = self.slot(&path).map(|s| (s.defn.value_type, s.defn.operations.write));
                    match vt {
                        Err(e) => Err(e),
                        Ok((_, false)) => Err(Lwm2mError::MethodNotAllowed),
                        Ok((vt, true)) => ResourceValue::from_payload(vt, payload)
                            .and_then(|v| self.write(&path, v))
                            .map(|notify| {
                                let mut r = RegistryReply::code(Code::CHANGED);
                                if notify {
                                    if let Ok(v) = self.read(&path) {
                                        r.notify.push((path.to_string(), v.to_payload()));
                                    }
                                }
                                r
                            }),
                    }
                }
                Code::POST => self
                    .execute(&path, payload)
                    .map(|_| RegistryReply::code(Code::CHANGED)),
                _ => self.slot(&path).and(Err(Lwm2mError::MethodNotAllowed)),
            }
        };
        result.unwrap_or_else(|e| {
            let mut r = RegistryReply::code(e.code());
            if let Lwm2mError::BadRequest(m) | Lwm2mError::InternalError(m) = e {
                r.payload = m.into_bytes();
            }
            r
        })
    }
}

/// CoAP service answering requests from a shared registry.
pub struct ClientService {
    registry: SharedRegistry,
}

impl ClientService {
    pub fn new(registry: SharedRegistry) -> Self {
        ClientService { registry }
    }
}

impl Service for ClientService {
    fn handle(&mut self, _peer: SocketAddr, req: &CoapMessage, ctx: &mut ServiceCtx) -> Response {
        let reply = self.registry.lock().expect("registry lock").handle(
            req.code,
            &req.uri_path(),
            &req.payload,
            req.observe(),
        );
        for (path, payload) in reply.notify {
            ctx.notify(&path, payload, Some(content_format::TEXT_PLAIN));
        }
        Response {
            code: reply.code,
            payload: reply.payload,
            content_format: reply.content_format,
            options: Vec::new(),
            observable: reply.observable,
        }
    }
}
