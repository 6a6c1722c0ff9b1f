use crate::model::{Element, ElementKind};

/// Linear interpolation between points, holding the end values outside the x range.
pub(crate) fn lookup_points(points: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (points[0], points[points.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    // First point with x strictly greater than the argument; 1 <= hi < len here.
    let hi = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[hi - 1];
    let (x1, y1) = points[hi];
    y0 + (x - x0) * (y1 - y0) / (x1 - x0)
}

/// Evaluates a table element at `x`. Returns `None` if `table` is not a table or `x` is NaN.
pub fn lookup_eval(table: &Element, x: f64) -> Option<f64> {
    match &table.kind {
        ElementKind::Table { points, .. } if !x.is_nan() => Some(lookup_points(points, x)),
        _ => None,
    }
}
