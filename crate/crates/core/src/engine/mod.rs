//! Fixed-step continuous-time simulation.

mod equilibrium;
mod eval;
mod lookup;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compile::{CompiledModel, StateKind};
use crate::model::ElementKindTag;

pub use equilibrium::detect_equilibrium;
pub(crate) use eval::{eval_node, operand};
pub use lookup::lookup_eval;
pub(crate) use lookup::lookup_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(format!("unknown integration method `{other}` (expected euler or rk4)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub start: f64,
    pub stop: f64,
    pub dt: f64,
    pub method: Method,
    pub save_interval: f64,
    /// Replacement values for constants.
    pub overrides: BTreeMap<String, f64>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            start: 0.0,
            stop: 100.0,
            dt: 0.0625,
            method: Method::Euler,
            save_interval: 0.25,
            overrides: BTreeMap::new(),
        }
    }
}

/// One invalid field of a [`RunSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{field}: {message}")]
pub struct SpecError {
    pub field: String,
    pub message: String,
}

impl SpecError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        SpecError { field: field.into(), message: message.into() }
    }
}

const STEP_RATIO_TOLERANCE: f64 = 1e-9;

impl RunSpec {
    pub fn validate(&self, model: &CompiledModel) -> Result<(), Vec<SpecError>> {
        let mut errors = Vec::new();
        if !self.start.is_finite() {
            errors.push(SpecError::new("start", "must be finite"));
        }
        if !self.stop.is_finite() || !(self.stop > self.start) {
            errors.push(SpecError::new("stop", "must be finite and greater than start"));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            errors.push(SpecError::new("dt", "must be positive"));
        }
        if !self.save_interval.is_finite() || self.save_interval <= 0.0 {
            errors.push(SpecError::new("save", "must be positive"));
        } else if self.dt > 0.0 && self.save_every().is_none() {
            errors.push(SpecError::new("save", "must be an integer multiple of dt"));
        }
        for (name, value) in &self.overrides {
            let field = format!("overrides.{name}");
            match model.definition().element(name) {
                None => errors.push(SpecError::new(field, "no such element")),
                Some(e) if e.tag() != ElementKindTag::Constant => {
                    errors.push(SpecError::new(field, format!("`{name}` is a {}, not a constant", e.tag())))
                }
                Some(_) if !value.is_finite() => errors.push(SpecError::new(field, "must be finite")),
                Some(_) => {}
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Integration steps per saved sample.
    fn save_every(&self) -> Option<u64> {
        let ratio = self.save_interval / self.dt;
        let rounded = ratio.round();
        (rounded >= 1.0 && (ratio - rounded).abs() <= STEP_RATIO_TOLERANCE * rounded).then_some(rounded as u64)
    }

    /// Number of saved samples after the initial one.
    fn save_count(&self) -> u64 {
        ((self.stop - self.start) / self.save_interval + STEP_RATIO_TOLERANCE).floor() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    DivisionByZero,
    NonFinite,
    LookupNonFinite,
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultKind::DivisionByZero => "division by zero",
            FaultKind::NonFinite => "non-finite value",
            FaultKind::LookupNonFinite => "lookup of a non-finite argument",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Fault {
    #[error("t={time}: {kind} in `{element}`")]
    Numeric { time: f64, element: String, kind: FaultKind },
    #[error("t={time}: time budget exceeded")]
    Deadline { time: f64 },
}

impl Fault {
    pub fn time(&self) -> f64 {
        match self {
            Fault::Numeric { time, .. } | Fault::Deadline { time } => *time,
        }
    }

    /// What to name in a one-line fault summary.
    pub fn subject(&self) -> &str {
        match self {
            Fault::Numeric { element, .. } => element,
            Fault::Deadline { .. } => "time budget exceeded",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run settings: {}", fmt_spec_errors(.0))]
    InvalidSpec(Vec<SpecError>),
}

fn fmt_spec_errors(errors: &[SpecError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub time: f64,
    pub message: String,
}

/// Saved samples of every non-table element, aligned with `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub times: Vec<f64>,
    /// Declaration order.
    pub series: Vec<Series>,
    pub diagnostics: Vec<Diagnostic>,
    /// Set when the run stopped early; the series then end at the last good sample.
    pub fault: Option<Fault>,
}

impl RunResult {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|s| s.name == name).map(|s| s.values.as_slice())
    }

    pub fn final_value(&self, name: &str) -> Option<f64> {
        self.series(name).and_then(|v| v.last().copied())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// States plus the time they hold at.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub time: f64,
    /// Indexed like [`CompiledModel::states`].
    pub states: Vec<f64>,
}

/// Constant values with overrides applied; every other slot is zero.
pub(crate) fn base_values(model: &CompiledModel, overrides: &BTreeMap<String, f64>) -> Vec<f64> {
    model
        .definition()
        .elements
        .iter()
        .map(|e| overrides.get(&e.name).copied().or(e.constant_value()).unwrap_or(0.0))
        .collect()
}

/// Recomputes every flow and auxiliary from states at `time`.
pub(crate) fn evaluate_algebra(
    model: &CompiledModel,
    time: f64,
    states: &[f64],
    values: &mut [f64],
) -> Result<(), Fault> {
    for (k, stock) in model.stocks.iter().enumerate() {
        values[stock.element] = states[k];
    }
    for &i in model.algebra_indices() {
        let node = model.equations[i].as_ref().expect("algebra element has an equation");
        values[i] = eval_node(model, node, time, values, states).map_err(|kind| fault(model, time, i, kind))?;
    }
    Ok(())
}

fn fault(model: &CompiledModel, time: f64, element: usize, kind: FaultKind) -> Fault {
    Fault::Numeric { time, element: model.definition().elements[element].name.clone(), kind }
}

/// Rates of change of every state, given values already consistent with `states`.
pub(crate) fn rates(
    model: &CompiledModel,
    time: f64,
    states: &[f64],
    values: &[f64],
    out: &mut [f64],
) -> Result<(), Fault> {
    let n = model.stocks.len();
    for (k, stock) in model.stocks.iter().enumerate() {
        out[k] = eval_node(model, &stock.net_flow, time, values, states)
            .map_err(|kind| fault(model, time, stock.element, kind))?;
    }
    for (k, site) in model.smooths.iter().enumerate() {
        let input = eval_node(model, &site.input, time, values, states)
            .map_err(|kind| fault(model, time, site.owner, kind))?;
        let tau = operand(site.time, values);
        if tau == 0.0 {
            return Err(fault(model, time, site.owner, FaultKind::DivisionByZero));
        }
        let r = (input - states[n + k]) / tau;
        if !r.is_finite() {
            return Err(fault(model, time, site.owner, FaultKind::NonFinite));
        }
        out[n + k] = r;
    }
    Ok(())
}

/// Establishes initial stock values and smooth states at `time`.
pub(crate) fn initial_states(model: &CompiledModel, time: f64, values: &mut [f64]) -> Result<Vec<f64>, Fault> {
    let n = model.stocks.len();
    let mut states = vec![0.0; model.states().len()];
    let init_sites = |owner: usize, values: &[f64], states: &mut Vec<f64>| -> Result<(), Fault> {
        let sites: Vec<usize> = model.smooth_states_of(owner).collect();
        // Inner (later-numbered) sites feed outer ones.
        for &s in sites.iter().rev() {
            let site = &model.smooths[s - n];
            states[s] = eval_node(model, &site.input, time, values, states)
                .map_err(|kind| fault(model, time, owner, kind))?;
        }
        Ok(())
    };
    for &i in model.init_indices() {
        if let Some(k) = model.stock_state_of(i) {
            let v = eval_node(model, &model.stocks[k].initial, time, values, &states)
                .map_err(|kind| fault(model, time, i, kind))?;
            states[k] = v;
            values[i] = v;
        } else {
            init_sites(i, values, &mut states)?;
            let node = model.equations[i].as_ref().expect("algebra element has an equation");
            values[i] = eval_node(model, node, time, values, &states).map_err(|kind| fault(model, time, i, kind))?;
        }
    }
    for stock in &model.stocks {
        init_sites(stock.element, values, &mut states)?;
    }
    Ok(states)
}

/// Values of every element at an operating point.
pub fn evaluate_point(
    model: &CompiledModel,
    point: &OperatingPoint,
    overrides: &BTreeMap<String, f64>,
) -> Result<Vec<f64>, Fault> {
    let mut values = base_values(model, overrides);
    evaluate_algebra(model, point.time, &point.states, &mut values)?;
    Ok(values)
}

/// The operating point at the start of a run.
pub fn initial_point(model: &CompiledModel, spec: &RunSpec) -> Result<OperatingPoint, Fault> {
    let mut values = base_values(model, &spec.overrides);
    let states = initial_states(model, spec.start, &mut values)?;
    Ok(OperatingPoint { time: spec.start, states })
}

/// Steps a model forward one `dt` at a time.
pub struct Simulator<'m> {
    model: &'m CompiledModel,
    spec: RunSpec,
    step: u64,
    states: Vec<f64>,
    values: Vec<f64>,
    scratch: Scratch,
}

#[derive(Default)]
struct Scratch {
    k: [Vec<f64>; 4],
    probe: Vec<f64>,
    values: Vec<f64>,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m CompiledModel, spec: RunSpec) -> Result<Self, RunError> {
        spec.validate(model).map_err(RunError::InvalidSpec)?;
        let values = base_values(model, &spec.overrides);
        let n = model.states().len();
        let scratch = Scratch {
            k: std::array::from_fn(|_| vec![0.0; n]),
            probe: vec![0.0; n],
            values: values.clone(),
        };
        Ok(Simulator { model, spec, step: 0, states: Vec::new(), values, scratch })
    }

    /// Sets up initial conditions. Must be called once before [`Simulator::advance`].
    pub fn initialize(&mut self) -> Result<(), Fault> {
        self.step = 0;
        self.states = initial_states(self.model, self.spec.start, &mut self.values)?;
        evaluate_algebra(self.model, self.spec.start, &self.states, &mut self.values)
    }

    pub fn time(&self) -> f64 {
        self.spec.start + self.step as f64 * self.spec.dt
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Current value of every element, indexed like the model's declarations.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn operating_point(&self) -> OperatingPoint {
        OperatingPoint { time: self.time(), states: self.states.clone() }
    }

    /// Advances one step and refreshes element values at the new time.
    pub fn advance(&mut self) -> Result<(), Fault> {
        let model = self.model;
        let t = self.time();
        let dt = self.spec.dt;
        let s = &mut self.scratch;
        match self.spec.method {
            Method::Euler => {
                rates(model, t, &self.states, &self.values, &mut s.k[0])?;
                for (x, k) in self.states.iter_mut().zip(&s.k[0]) {
                    *x += dt * k;
                }
            }
            Method::Rk4 => {
                let [k1, k2, k3, k4] = &mut s.k;
                rates(model, t, &self.states, &self.values, k1)?;
                let mut stage = |from: &[f64], h: f64, out: &mut [f64]| -> Result<(), Fault> {
                    for ((p, x), k) in s.probe.iter_mut().zip(&self.states).zip(from) {
                        *p = x + h * k;
                    }
                    s.values.copy_from_slice(&self.values);
                    evaluate_algebra(model, t + h, &s.probe, &mut s.values)?;
                    rates(model, t + h, &s.probe, &s.values, out)
                };
                stage(k1, dt / 2.0, k2)?;
                stage(k2, dt / 2.0, k3)?;
                stage(k3, dt, k4)?;
                for (i, x) in self.states.iter_mut().enumerate() {
                    *x += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        self.step += 1;
        for (k, x) in self.states.iter().enumerate() {
            if !x.is_finite() {
                let element = match model.states()[k].kind {
                    StateKind::Stock { element } | StateKind::Smooth { owner: element } => element,
                };
                return Err(fault(model, self.time(), element, FaultKind::NonFinite));
            }
        }
        evaluate_algebra(model, self.time(), &self.states, &mut self.values)
    }
}

pub fn simulate(model: &CompiledModel, spec: &RunSpec) -> Result<RunResult, RunError> {
    simulate_with_deadline(model, spec, None)
}

/// Like [`simulate`], but gives up with [`Fault::Deadline`] once `deadline` passes.
pub fn simulate_with_deadline(
    model: &CompiledModel,
    spec: &RunSpec,
    deadline: Option<Instant>,
) -> Result<RunResult, RunError> {
    let mut sim = Simulator::new(model, spec.clone())?;
    let save_every = spec.save_every().expect("validated");
    let saves = spec.save_count();
    let recorded: Vec<usize> = model
        .definition()
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.is_table())
        .map(|(i, _)| i)
        .collect();
    let capacity = saves as usize + 1;
    let mut result = RunResult {
        times: Vec::with_capacity(capacity),
        series: recorded
            .iter()
            .map(|&i| Series {
                name: model.definition().elements[i].name.clone(),
                values: Vec::with_capacity(capacity),
            })
            .collect(),
        diagnostics: Vec::new(),
        fault: None,
    };
    let record = |sim: &Simulator<'_>, result: &mut RunResult| {
        result.times.push(sim.time());
        for (series, &i) in result.series.iter_mut().zip(&recorded) {
            series.values.push(sim.values()[i]);
        }
    };

    let outcome = (|| {
        sim.initialize()?;
        record(&sim, &mut result);
        for _ in 0..saves {
            for _ in 0..save_every {
                sim.advance()?;
            }
            record(&sim, &mut result);
            if deadline.is_some_and(|d| Instant::now() >= d) && result.times.len() < capacity {
                return Err(Fault::Deadline { time: sim.time() });
            }
        }
        Ok(())
    })();
    if let Err(fault) = outcome {
        result.diagnostics.push(Diagnostic { time: fault.time(), message: fault.to_string() });
        result.fault = Some(fault);
    }
    Ok(result)
}
