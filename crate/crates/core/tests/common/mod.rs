#![allow(dead_code)]

use stockflow_core::{load_model, CheckedModel};

pub fn model_path(file: &str) -> String {
    format!("{}/../../models/{file}", env!("CARGO_MANIFEST_DIR"))
}

pub fn source(file: &str) -> String {
    std::fs::read_to_string(model_path(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

pub fn load(file: &str) -> CheckedModel {
    let name = file.trim_end_matches(".sdm");
    load_model(name, &source(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

pub fn reference() -> CheckedModel {
    load("supply_demand.sdm")
}

pub fn appendix() -> CheckedModel {
    load("appendix_equations.sdm")
}

/// The isolated first-order model used for the SMOOTH/ODE oracle.
pub const FIRST_ORDER: &str = "\
const c = 10 [widget]
const tau = 5 [day]
stock s = integ((c - s) / tau, 0) [widget]
";
