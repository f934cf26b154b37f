use std::fmt;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::silo::PlantConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Couple {
    #[serde(rename = "silos1and4")]
    Silos1And4,
    #[serde(rename = "silos2and3")]
    Silos2And3,
}

impl Couple {
    pub const ALL: [Couple; 2] = [Couple::Silos1And4, Couple::Silos2And3];

    /// Members in transfer order: the first drains into the second.
    pub fn members(self) -> (&'static str, &'static str) {
        match self {
            Couple::Silos1And4 => ("silo1", "silo4"),
            Couple::Silos2And3 => ("silo2", "silo3"),
        }
    }

    pub fn contains(self, silo: &str) -> bool {
        let (a, b) = self.members();
        silo == a || silo == b
    }
}

impl fmt::Display for Couple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.members();
        write!(f, "{a}+{b}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "typeA")]
    TypeA,
    #[serde(rename = "typeB")]
    TypeB,
}

/// What a user submits. A preset fills in every field not given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecipeParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couple: Option<Couple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill_level: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat_target: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_duration: Option<i64>,
}

impl RecipeParams {
    pub fn preset(p: Preset) -> Self {
        RecipeParams {
            preset: Some(p),
            ..Default::default()
        }
    }

    /// Preset values with explicit fields taking precedence.
    pub fn resolved(&self) -> RecipeParams {
        let base = match self.preset {
            Some(Preset::TypeA) => (Couple::Silos1And4, 90, 60, 5),
            Some(Preset::TypeB) => (Couple::Silos2And3, 90, 55, 5),
            None => return self.clone(),
        };
        RecipeParams {
            preset: self.preset,
            couple: self.couple.or(Some(base.0)),
            fill_level: self.fill_level.or(Some(base.1)),
            heat_target: self.heat_target.or(Some(base.2)),
            mix_duration: self.mix_duration.or(Some(base.3)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Step {
    #[serde(rename_all = "camelCase")]
    Fill { silo: String, target_level: i64 },
    #[serde(rename_all = "camelCase")]
    Heat { silo: String, target_temp: i64 },
    #[serde(rename_all = "camelCase")]
    Mix { silo: String, duration: i64 },
    Transfer { from: String, to: String },
    Drain { silo: String },
}

impl Step {
    pub fn silos(&self) -> Vec<&str> {
        match self {
            Step::Fill { silo, .. } | Step::Heat { silo, .. } | Step::Mix { silo, .. } | Step::Drain { silo } => {
                vec![silo]
            }
            Step::Transfer { from, to } => vec![from, to],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Step::Fill { .. } => "fill",
            Step::Heat { .. } => "heat",
            Step::Mix { .. } => "mix",
            Step::Transfer { .. } => "transfer",
            Step::Drain { .. } => "drain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Recipe {
    pub recipe_id: String,
    pub couple: Couple,
    pub steps: Vec<Step>,
}

impl Recipe {
    /// Silo references stay inside the couple and transfers have distinct
    /// ends.
    pub fn check(&self) -> Result<(), OrchestratorError> {
        for s in &self.steps {
            if let Step::Transfer { from, to } = s {
                if from == to {
                    return Err(OrchestratorError::InvalidParameters(format!(
                        "transfer from {from} to itself"
                    )));
                }
            }
            for silo in s.silos() {
                if !self.couple.contains(silo) {
                    return Err(OrchestratorError::InvalidParameters(format!(
                        "{silo} is not part of couple {}",
                        self.couple
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fill, heat, mix, transfer, drain; mixing is left out for a zero duration.
pub fn plan_production(
    recipe_id: &str,
    params: &RecipeParams,
    c: &PlantConstants,
) -> Result<Recipe, OrchestratorError> {
    let p = params.resolved();
    let missing = |what: &str| OrchestratorError::InvalidParameters(format!("{what} is required"));
    let couple = p.couple.ok_or_else(|| missing("couple"))?;
    let fill = p.fill_level.ok_or_else(|| missing("fillLevel"))?;
    let heat = p.heat_target.ok_or_else(|| missing("heatTarget"))?;
    let mix = p.mix_duration.ok_or_else(|| missing("mixDuration"))?;
    if (fill as f64) <= c.low_threshold || (fill as f64) > c.high_threshold.min(c.capacity) {
        return Err(OrchestratorError::InvalidParameters(format!(
            "fillLevel {fill} outside ({}, {}]",
            c.low_threshold, c.high_threshold
        )));
    }
    if !(20..=100).contains(&heat) {
        return Err(OrchestratorError::InvalidParameters(format!(
            "heatTarget {heat} outside 20..=100"
        )));
    }
    if !(0..=3600).contains(&mix) {
        return Err(OrchestratorError::InvalidParameters(format!(
            "mixDuration {mix} outside 0..=3600"
        )));
    }
    let (first, second) = couple.members();
    let mut steps = vec![
        Step::Fill { silo: first.into(), target_level: fill },
        Step::Heat { silo: first.into(), target_temp: heat },
    ];
    if mix > 0 {
        steps.push(Step::Mix { silo: first.into(), duration: mix });
    }
    steps.push(Step::Transfer { from: first.into(), to: second.into() });
    steps.push(Step::Drain { silo: second.into() });
    let recipe = Recipe {
        recipe_id: recipe_id.to_string(),
        couple,
        steps,
    };
    recipe.check()?;
    Ok(recipe)
}
