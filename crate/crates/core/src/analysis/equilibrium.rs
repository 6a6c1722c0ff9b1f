use serde::{Deserialize, Serialize};

use crate::engine::lookup_points;
use crate::model::{Element, ElementKind, ModelDefinition};

use super::AnalysisError;

/// Bisection stops once the bracket is narrower than this.
pub const PRICE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub price: f64,
    pub quantity: f64,
}

fn points<'a>(table: &'a Element) -> Result<&'a [(f64, f64)], AnalysisError> {
    match &table.kind {
        ElementKind::Table { points, .. } => Ok(points),
        _ => Err(AnalysisError::NotATable { name: table.name.clone() }),
    }
}

/// Price at which `supply(p) = demand(p) + shift`, with the quantity traded there.
pub fn solve_linear_equilibrium(
    supply: &Element,
    demand: &Element,
    shift: f64,
) -> Result<EquilibriumPoint, AnalysisError> {
    let supply = points(supply)?;
    let demand = points(demand)?;
    let gap = |p: f64| lookup_points(supply, p) - lookup_points(demand, p) - shift;
    let mut lo = supply[0].0.min(demand[0].0);
    let mut hi = supply[supply.len() - 1].0.max(demand[demand.len() - 1].0);
    let (mut g_lo, g_hi) = (gap(lo), gap(hi));
    let at = |p: f64| EquilibriumPoint { price: p, quantity: lookup_points(supply, p) };
    if g_lo == 0.0 {
        return Ok(at(lo));
    }
    if g_hi == 0.0 {
        return Ok(at(hi));
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(AnalysisError::NoCrossing { shift });
    }
    while hi - lo > PRICE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let g = gap(mid);
        if g == 0.0 {
            return Ok(at(mid));
        }
        if g.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

/// The single table whose name contains `Supply` and the single one containing `Demand`
/// (case-insensitive), unless names are given explicitly.
pub fn identify_schedules<'m>(
    model: &'m ModelDefinition,
    supply: Option<&str>,
    demand: Option<&str>,
) -> Result<(&'m Element, &'m Element), AnalysisError> {
    let pick = |explicit: Option<&str>, needle: &str| -> Result<&'m Element, AnalysisError> {
        if let Some(name) = explicit {
            let e = model.element(name).ok_or_else(|| AnalysisError::NotATable { name: name.to_owned() })?;
            points(e)?;
            return Ok(e);
        }
        let found: Vec<&Element> = model
            .elements
            .iter()
            .filter(|e| e.is_table() && e.name.to_ascii_lowercase().contains(needle))
            .collect();
        match found.as_slice() {
            [one] => Ok(one),
            _ => Err(AnalysisError::SchedulesNotIdentified { needle: needle.to_owned(), found: found.len() }),
        }
    };
    Ok((pick(supply, "supply")?, pick(demand, "demand")?))
}
