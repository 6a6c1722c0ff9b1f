//! JSON bodies exchanged between the HTTP service and its clients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{identify_schedules, solve_linear_equilibrium, EquilibriumPoint, LoopReport};
use crate::engine::{detect_equilibrium, Diagnostic, Fault, Method, RunResult, RunSpec, Series, SpecError};
use crate::model::{ElementKindTag, ModelDefinition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slider {
    pub name: String,
    pub default: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub name: String,
    pub elements: Vec<String>,
    pub sliders: Vec<Slider>,
}

impl ModelSummary {
    pub fn new(id: &str, model: &ModelDefinition) -> Self {
        ModelSummary {
            id: id.to_owned(),
            name: if model.name.is_empty() { id.to_owned() } else { model.name.clone() },
            elements: model.elements.iter().map(|e| e.name.clone()).collect(),
            sliders: sliders(model),
        }
    }
}

/// One slider per constant. Without a `# range` annotation the range is `[0, 4 * default]`.
pub fn sliders(model: &ModelDefinition) -> Vec<Slider> {
    model
        .constants()
        .map(|e| {
            let default = e.constant_value().unwrap_or_default();
            let (min, max) = e.range.unwrap_or_else(|| {
                let far = 4.0 * default;
                if far == 0.0 {
                    (0.0, 1.0)
                } else {
                    (far.min(0.0), far.max(0.0))
                }
            });
            Slider { name: e.name.clone(), default, min, max }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadFailure {
    pub file: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelList {
    pub models: Vec<ModelSummary>,
    pub errors: Vec<LoadFailure>,
}

/// Body of `POST /models/{id}/run`. Omitted fields take the simulator defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunRequest {
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

impl RunRequest {
    /// Converts to a [`RunSpec`]. Only field syntax is checked here; see [`RunSpec::validate`].
    pub fn to_spec(&self) -> Result<RunSpec, Vec<SpecError>> {
        let defaults = RunSpec::default();
        let method = match &self.method {
            None => defaults.method,
            Some(m) => m
                .parse::<Method>()
                .map_err(|message| vec![SpecError { field: "method".into(), message }])?,
        };
        Ok(RunSpec {
            start: self.start.unwrap_or(defaults.start),
            stop: self.stop.unwrap_or(defaults.stop),
            dt: self.dt.unwrap_or(defaults.dt),
            save_interval: self.save.unwrap_or(defaults.save_interval),
            method,
            overrides: self.overrides.clone(),
        })
    }
}

impl From<&RunSpec> for RunRequest {
    fn from(spec: &RunSpec) -> Self {
        RunRequest {
            overrides: spec.overrides.clone(),
            start: Some(spec.start),
            stop: Some(spec.stop),
            dt: Some(spec.dt),
            save: Some(spec.save_interval),
            method: Some(spec.method.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settled {
    pub element: String,
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPayload {
    pub model: String,
    pub times: Vec<f64>,
    /// Declaration order, each aligned with `times`.
    pub series: Vec<Series>,
    /// Elements that reached a steady value before the end of the run.
    pub settled: Vec<Settled>,
    /// Comparative-statics prediction, when supply and demand schedules can be identified.
    pub analytic: Option<EquilibriumPoint>,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

/// Trailing window and relative tolerance used for the `settled` list.
pub const SETTLE_WINDOW: f64 = 10.0;
pub const SETTLE_TOLERANCE: f64 = 1e-3;

impl RunPayload {
    /// Wraps a finished run. `settled` covers every non-constant element and `analytic` is the
    /// schedules' crossing at the demand shift in force at the last sample.
    pub fn new(id: &str, model: &ModelDefinition, result: RunResult) -> Self {
        let settled = result
            .series
            .iter()
            .filter(|s| model.element(&s.name).is_some_and(|e| e.tag() != ElementKindTag::Constant))
            .filter_map(|s| {
                let (time, value) = detect_equilibrium(&result, &s.name, SETTLE_WINDOW, SETTLE_TOLERANCE)?;
                Some(Settled { element: s.name.clone(), time, value })
            })
            .collect();
        let analytic = identify_schedules(model, None, None).ok().and_then(|(supply, demand)| {
            solve_linear_equilibrium(supply, demand, final_shift(model, &result)).ok()
        });
        RunPayload {
            model: id.to_owned(),
            times: result.times,
            series: result.series,
            settled,
            analytic,
            diagnostics: result.diagnostics,
            fault: result.fault,
        }
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|s| s.name == name).map(|s| s.values.as_slice())
    }

    pub fn settled(&self, name: &str) -> Option<&Settled> {
        self.settled.iter().find(|s| s.element == name)
    }
}

/// Last value of the first non-constant element named like `*shift*`, or 0.
fn final_shift(model: &ModelDefinition, result: &RunResult) -> f64 {
    result
        .series
        .iter()
        .filter(|s| s.name.to_ascii_lowercase().contains("shift"))
        .find(|s| model.element(&s.name).is_some_and(|e| e.tag() != ElementKindTag::Constant))
        .and_then(|s| s.values.last().copied())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopsPayload {
    pub model: String,
    #[serde(flatten)]
    pub report: LoopReport,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<SpecError>,
    /// Present on 422: the run that faulted, up to the fault.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<Box<RunPayload>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_model;

    #[test]
    fn slider_ranges() {
        let m = parse_model("const a = 10 [x]\nconst b = 2 [x] # range 1..3\nconst c = 0 [x]\nconst d = -1 [x]").unwrap();
        let s = sliders(&m);
        let ranges: Vec<(f64, f64, f64)> = s.iter().map(|s| (s.default, s.min, s.max)).collect();
        assert_eq!(ranges, vec![(10.0, 0.0, 40.0), (2.0, 1.0, 3.0), (0.0, 0.0, 1.0), (-1.0, -4.0, 0.0)]);
    }

    #[test]
    fn request_defaults_and_method_errors() {
        let spec = RunRequest::default().to_spec().unwrap();
        assert_eq!(spec, RunSpec::default());
        let bad = RunRequest { method: Some("leapfrog".into()), ..Default::default() };
        assert_eq!(bad.to_spec().unwrap_err()[0].field, "method");
        let req: RunRequest = serde_json::from_str(r#"{"stop": 20, "method": "RK4"}"#).unwrap();
        let spec = req.to_spec().unwrap();
        assert_eq!((spec.stop, spec.method), (20.0, Method::Rk4));
    }

    #[test]
    fn payload_reports_settled_values_and_the_shifted_crossing() {
        let src = "table Supply bounds (0,0)-(1,1) points (0,0) (50,100) domain [p] range [q]
table Demand bounds (0,0)-(1,1) points (0,100) (50,0) domain [p] range [q]
const h = 10 [q]
aux Shift = step(h, 1) [q]
const goal = 1 [u]
const tau = 1 [day]
stock s = integ((goal - s) / tau, 0) [u]";
        let m = crate::load_model("m", src).unwrap();
        let spec = RunSpec { stop: 30.0, ..RunSpec::default() };
        let payload = RunPayload::new("m", m.definition(), crate::simulate(&m.compiled, &spec).unwrap());
        let analytic = payload.analytic.unwrap();
        assert!((analytic.price - 27.5).abs() < 1e-6 && (analytic.quantity - 55.0).abs() < 1e-6);
        assert!(payload.settled("h").is_none());
        assert_eq!(payload.settled("Shift").unwrap().time, 1.0);
        assert!((payload.settled("s").unwrap().value - 1.0).abs() < 1e-3);
        assert_eq!(payload.series("s").unwrap().len(), payload.times.len());
    }
}
