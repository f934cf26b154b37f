//! Source-to-source transformation from an annotated component to the
//! files of an LWM2M client object.
//!
//! [`plan_generation`] decides every generated name, [`render`] turns the
//! plan into text through a [`TemplateSet`]. The plan does not depend on the
//! template, so other targets only need another set of fragments.

mod plan;
mod render;
mod template;

use serde_json::json;
use thiserror::Error;

use crate::annotation::{parse_component_source, ParseError, SourceUnit};
use crate::resource::{build_resource_model, serialize_descriptor, ModelError, ThingResourceModel};

pub use plan::{
    plan_generation, AccessorSpec, GenerationPlan, InitSpec, LegacySetter, NotifyInjection,
    ObjectPlan, TableEntry, WrapperSpec,
};
pub use render::{object_file_name, render, HEADER_INSERT, INIT_CALLS_INSERT};
pub use template::{placeholders, TemplateSet, REQUIRED_FRAGMENTS};

pub const DESCRIPTOR_FILE: &str = "thing.json";
pub const REPORT_FILE: &str = "transform-report.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArtifactKind {
    GeneratedSource,
    Descriptor,
    Report,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedArtifact {
    pub relative_path: String,
    pub content: String,
    pub kind: ArtifactKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("resource model and annotated source disagree: {0}")]
    InconsistentInputs(String),
    #[error("template fragment `{0}` is missing")]
    MissingTemplateFragment(String),
    #[error("placeholder `{name}` in fragment `{fragment}` has no value")]
    UnboundPlaceholder { fragment: String, name: String },
}

pub fn emit_descriptor(model: &ThingResourceModel) -> GeneratedArtifact {
    GeneratedArtifact {
        relative_path: DESCRIPTOR_FILE.into(),
        content: serialize_descriptor(model),
        kind: ArtifactKind::Descriptor,
    }
}

/// Counts per transformation step, as JSON.
pub fn report(plan: &GenerationPlan, templates: &TemplateSet) -> GeneratedArtifact {
    let objs = &plan.objects;
    let sum = |f: &dyn Fn(&ObjectPlan) -> usize| objs.iter().map(f).sum::<usize>();
    let value = json!({
        "source": plan.source_name,
        "template": templates.name,
        "thing": plan.thing_name,
        "objects": objs.iter().map(|o| json!({
            "objectId": o.object_id,
            "record": o.record,
            "file": object_file_name(&o.record),
            "instances": o.instance_ids.len(),
        })).collect::<Vec<_>>(),
        "rules": {
            "wrappers": sum(&|o| o.wrappers.len()),
            "readAccessors": sum(&|o| o.accessors.iter().filter(|a| a.read.is_some()).count()),
            "writeAccessors": sum(&|o| o.accessors.iter().filter(|a| a.write.is_some()).count()),
            "tableEntries": sum(&|o| o.table.len()),
            "instances": sum(&|o| o.instance_ids.len()),
            "objects": objs.len(),
            "notifyModified": sum(&|o| o.notifies.iter().filter(|n| n.legacy.is_some()).count()),
            "notifySynthesized": sum(&|o| o.notifies.iter().filter(|n| n.legacy.is_none()).count()),
            "initFunctions": objs.len(),
        },
    });
    let mut content = serde_json::to_string_pretty(&value).expect("report serializes");
    content.push('\n');
    GeneratedArtifact {
        relative_path: REPORT_FILE.into(),
        content,
        kind: ArtifactKind::Report,
    }
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
}

#[derive(Debug, Clone)]
pub struct TransformOutput {
    pub model: ThingResourceModel,
    pub plan: GenerationPlan,
    /// Generated sources, then the descriptor, then the report.
    pub artifacts: Vec<GeneratedArtifact>,
}

impl TransformOutput {
    pub fn artifact(&self, relative_path: &str) -> Option<&GeneratedArtifact> {
        self.artifacts.iter().find(|a| a.relative_path == relative_path)
    }
}

/// Parse, model, plan, render, in one go.
pub fn transform(
    unit: &SourceUnit,
    templates: &TemplateSet,
) -> Result<TransformOutput, TransformError> {
    let annotated = parse_component_source(unit)?;
    let model = build_resource_model(&annotated)?;
    let plan = plan_generation(&model, &annotated)?;
    let mut artifacts = render(&plan, templates)?;
    artifacts.push(emit_descriptor(&model));
    artifacts.push(report(&plan, templates));
    Ok(TransformOutput {
        model,
        plan,
        artifacts,
    })
}

/// Whitespace-free form used to compare generated text with expected
/// fragments regardless of layout.
pub fn normalize_whitespace(text: &str) -> String {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}
