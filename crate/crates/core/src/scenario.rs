//! Simulation scenarios: kickoff inputs, phase identity, and objective
//! checklists scored by literal-phrase matching.

use crate::prompt::Bindings;
use crate::schema::{as_object, parse_json, require, require_array, require_str, SchemaError};
use crate::transcript::Transcript;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafePhase {
    PrepPiPlanning,
    PiPlanning,
    IterationExecution,
    InspectAndAdapt,
    IpIteration,
    PiSystemDemo,
}

impl SafePhase {
    fn from_str(s: &str) -> Option<Self> {
        match s {
            "prep_pi_planning" => Some(Self::PrepPiPlanning),
            "pi_planning" => Some(Self::PiPlanning),
            "iteration_execution" => Some(Self::IterationExecution),
            "inspect_and_adapt" => Some(Self::InspectAndAdapt),
            "ip_iteration" => Some(Self::IpIteration),
            "pi_system_demo" => Some(Self::PiSystemDemo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub id: String,
    pub description: String,
    /// Case-insensitive literal phrases; the objective is met when any of
    /// them occurs in any message.
    pub match_patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub phase: SafePhase,
    pub seed_inputs: Bindings,
    pub kickoff_instruction: String,
    pub objectives: Vec<ObjectiveSpec>,
}

pub fn parse_scenario(raw: &str) -> Result<Scenario, SchemaError> {
    let value = parse_json(raw)?;
    let obj = as_object(&value, "")?;

    let name = require_str(obj, "", "name")?;
    let phase_str = require_str(obj, "", "phase")?;
    let phase = SafePhase::from_str(&phase_str).ok_or_else(|| SchemaError::BadEnumValue {
        path: "phase".into(),
        got: phase_str,
    })?;

    let mut seed_inputs = Bindings::new();
    if let Some(v) = obj.get("seed_inputs") {
        let sobj = as_object(v, "seed_inputs")?;
        for (k, val) in sobj {
            let s = val.as_str().ok_or(SchemaError::WrongType {
                path: format!("seed_inputs.{k}"),
                expected: "string",
            })?;
            seed_inputs.insert(k.clone(), s.to_string());
        }
    }

    let kickoff_instruction = require_str(obj, "", "kickoff_instruction")?;

    let objectives_arr = require_array(obj, "", "objectives")?;
    let mut objectives = Vec::with_capacity(objectives_arr.len());
    for (i, o) in objectives_arr.iter().enumerate() {
        let path = format!("objectives[{i}]");
        let oobj = as_object(o, &path)?;
        let id = require_str(oobj, &path, "id")?;
        let description = require_str(oobj, &path, "description")?;
        let patterns =
            crate::schema::string_list(require(oobj, &path, "match_patterns")?, &format!("{path}.match_patterns"))?;
        if patterns.is_empty() || patterns.iter().any(|p| p.is_empty()) {
            return Err(SchemaError::Invalid {
                path: format!("{path}.match_patterns"),
                detail: "must be a nonempty list of nonempty phrases".into(),
            });
        }
        objectives.push(ObjectiveSpec { id, description, match_patterns: patterns });
    }
    if objectives.is_empty() {
        return Err(SchemaError::Invalid {
            path: "objectives".into(),
            detail: "at least one objective is required".into(),
        });
    }

    Ok(Scenario { name, phase, seed_inputs, kickoff_instruction, objectives })
}

pub fn load_scenario(path: &std::path::Path) -> Result<Scenario, SchemaError> {
    let raw = std::fs::read_to_string(path).map_err(|e| SchemaError::Invalid {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    parse_scenario(&raw)
}

/// Fraction of objectives met, in [0, 1]. An objective is met iff any of its
/// patterns occurs case-insensitively in any message content.
pub fn evaluate_objectives(scenario: &Scenario, transcript: &Transcript) -> f64 {
    if scenario.objectives.is_empty() {
        return 0.0;
    }
    let lowered: Vec<String> =
        transcript.iter().map(|m| m.content.to_lowercase()).collect();
    let met = scenario
        .objectives
        .iter()
        .filter(|obj| {
            obj.match_patterns.iter().any(|pattern| {
                let needle = pattern.to_lowercase();
                lowered.iter().any(|content| content.contains(&needle))
            })
        })
        .count();
    met as f64 / scenario.objectives.len() as f64
}
