use super::plan::{GenerationPlan, NotifyInjection, ObjectPlan};
use super::{ArtifactKind, CodegenError, GeneratedArtifact, TemplateSet};
use crate::resource::{InstanceType, ValueType};

pub const HEADER_INSERT: &str = "ipso-objects.h.insert";
pub const INIT_CALLS_INSERT: &str = "ipso-objects.c.insert";

/// File name of the generated source for a record, e.g. `ipso-level-sensor.c`.
pub fn object_file_name(record: &str) -> String {
    format!("ipso-{}.c", record.replace('_', "-"))
}

pub fn render(
    plan: &GenerationPlan,
    templates: &TemplateSet,
) -> Result<Vec<GeneratedArtifact>, CodegenError> {
    if let Some(key) = templates.missing_fragments().first() {
        return Err(CodegenError::MissingTemplateFragment(key.to_string()));
    }
    let mut artifacts = Vec::with_capacity(plan.objects.len() + 2);
    for obj in &plan.objects {
        artifacts.push(GeneratedArtifact {
            relative_path: object_file_name(&obj.record),
            content: render_object(plan, obj, templates)?,
            kind: ArtifactKind::GeneratedSource,
        });
    }
    let prototypes = plan
        .objects
        .iter()
        .map(|o| templates.fill("header-prototype", &[("init_name", &o.init.name)]))
        .collect::<Result<Vec<_>, _>>()?
        .join("\n");
    artifacts.push(GeneratedArtifact {
        relative_path: HEADER_INSERT.into(),
        content: finish(templates.fill("header-file", &[("prototypes", &prototypes)])?),
        kind: ArtifactKind::GeneratedSource,
    });
    let calls = plan
        .objects
        .iter()
        .map(|o| templates.fill("init-call", &[("init_name", &o.init.name)]))
        .collect::<Result<Vec<_>, _>>()?
        .join("\n");
    artifacts.push(GeneratedArtifact {
        relative_path: INIT_CALLS_INSERT.into(),
        content: finish(templates.fill("init-calls-file", &[("calls", &calls)])?),
        kind: ArtifactKind::GeneratedSource,
    });
    Ok(artifacts)
}

fn render_object(
    plan: &GenerationPlan,
    obj: &ObjectPlan,
    t: &TemplateSet,
) -> Result<String, CodegenError> {
    let rec = obj.record.as_str();
    let multiple = obj.instance_type == InstanceType::Multiple;
    let suffix = if multiple { "multiple" } else { "single" };
    let count = obj.instance_ids.len().to_string();
    let target = t.fill(&format!("target-{suffix}"), &[("record", rec)])?;
    let instance_decl = t.fill(
        &format!("instance-{suffix}"),
        &[("record", rec), ("instance_count", &count)],
    )?;

    let mut prototypes = Vec::new();
    let mut wrappers = Vec::new();
    for w in &obj.wrappers {
        prototypes.push(t.fill("wrapper-prototype", &[("name", &w.name)])?);
        let call_key = if w.returns_value {
            "wrapper-call-value"
        } else {
            "wrapper-call-void"
        };
        let call = t.fill(call_key, &[("target", &target), ("behavior", &w.behavior)])?;
        wrappers.push(t.fill("wrapper", &[("name", &w.name), ("call", &call)])?);
    }

    let mut accessors = Vec::new();
    for a in &obj.accessors {
        let kind = value_key(a.value_type);
        if let Some(name) = &a.read {
            let vars = [("name", name.as_str()), ("target", &target), ("member", &a.member)];
            let body = t.fill(&format!("read-{kind}"), &vars)?;
            accessors.push(t.fill("getter", &[("name", name), ("body", &body)])?);
        }
        if let Some(name) = &a.write {
            let vars = [("name", name.as_str()), ("target", &target), ("member", &a.member)];
            let body = t.fill(&format!("write-{kind}"), &vars)?;
            accessors.push(t.fill("setter", &[("name", name), ("body", &body)])?);
        }
    }

    let setters = obj
        .notifies
        .iter()
        .map(|n| render_notify(obj, n, t, suffix))
        .collect::<Result<Vec<_>, _>>()?;

    let mut entries = Vec::with_capacity(obj.table.len());
    for e in &obj.table {
        let id = e.resource_id.to_string();
        let slot = |s: &Option<String>| s.clone().unwrap_or_else(|| "NULL".into());
        entries.push(t.fill(
            "table-entry",
            &[
                ("resource_id", &id),
                ("read", &slot(&e.read)),
                ("write", &slot(&e.write)),
                ("execute", &slot(&e.execute)),
            ],
        )?);
    }
    let resources = t.fill(
        "resources",
        &[("resources_var", &obj.resources_var), ("entries", &entries.join(",\n"))],
    )?;
    let instances = obj
        .instance_ids
        .iter()
        .map(|i| {
            t.fill(
                "instance",
                &[("instance_id", &i.to_string()), ("resources_var", &obj.resources_var)],
            )
        })
        .collect::<Result<Vec<_>, _>>()?
        .join(",\n  ");
    let instances_list = t.fill(
        "instances-list",
        &[("instances_var", &obj.instances_var), ("instances", &instances)],
    )?;
    let object = t.fill(
        "object",
        &[
            ("object_var", &obj.object_var),
            ("object_id", &obj.object_id.to_string()),
            ("instances_var", &obj.instances_var),
        ],
    )?;
    let table = [resources, instances_list, object].join("\n\n");

    let init = t.fill(
        "init",
        &[
            ("init_name", &obj.init.name),
            ("legacy_init", &obj.init.legacy_init),
            ("object_var", &obj.init.object_var),
        ],
    )?;

    let header = std::path::Path::new(&plan.source_name)
        .with_extension("h")
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let text = t.fill(
        "file",
        &[
            ("file_name", &object_file_name(rec)),
            ("object_name", &obj.object_name),
            ("object_id", &obj.object_id.to_string()),
            ("source_name", &plan.source_name),
            ("source_header", &header),
            ("instance_decl", &instance_decl),
            ("wrapper_prototypes", &prototypes.join("\n")),
            ("wrappers", &wrappers.join("\n\n")),
            ("accessors", &accessors.join("\n\n")),
            ("setters", &setters.join("\n\n")),
            ("table", &table),
            ("init", &init),
        ],
    )?;
    Ok(finish(text))
}

fn render_notify(
    obj: &ObjectPlan,
    n: &NotifyInjection,
    t: &TemplateSet,
    suffix: &str,
) -> Result<String, CodegenError> {
    let rid = n.resource_id.to_string();
    let path = n.path();
    let notify = match n.instance_id {
        Some(_) => t.fill(
            "notify-append",
            &[("object_var", &obj.object_var), ("path", &path)],
        )?,
        None => t.fill(
            "notify-append-multiple",
            &[("object_var", &obj.object_var), ("resource_id", &rid)],
        )?,
    };
    let (signature, body) = match &n.legacy {
        Some(l) => (l.signature.clone(), l.body.clone()),
        None => (
            t.fill(&format!("setter-synth-{suffix}"), &[("setter", &n.setter)])?,
            t.fill(
                &format!("setter-synth-body-{suffix}"),
                &[("record", &obj.record), ("member", &n.member)],
            )?,
        ),
    };
    t.fill(
        "observable-setter",
        &[("signature", &signature), ("body", &body), ("notify", &notify)],
    )
}

fn value_key(v: ValueType) -> &'static str {
    match v {
        ValueType::Integer => "integer",
        ValueType::Boolean => "boolean",
        ValueType::Opaque => "opaque",
        ValueType::Text | ValueType::None => "text",
    }
}

/// Squeezes runs of blank lines left by empty sections and ends with one
/// newline.
fn finish(text: String) -> String {
    let mut out = String::with_capacity(text.len());
    let mut blank = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            blank += 1;
            if blank > 1 {
                continue;
            }
        } else {
            blank = 0;
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    while out.ends_with("\n\n") {
        out.pop();
    }
    out
}
