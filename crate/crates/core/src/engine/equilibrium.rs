use super::RunResult;

/// Earliest saved time from which `element` stays within `rel_tol` of its final value
/// until the end of the run, provided at least `window` time remains. Returns that time
/// and the final value.
pub fn detect_equilibrium(result: &RunResult, element: &str, window: f64, rel_tol: f64) -> Option<(f64, f64)> {
    let values = result.series(element)?;
    let (&last_time, &final_value) = (result.times.last()?, values.last()?);
    let tol = if final_value == 0.0 { rel_tol } else { rel_tol * final_value.abs() };
    let first_settled = match values.iter().rposition(|v| (v - final_value).abs() > tol) {
        Some(i) => i + 1,
        None => 0,
    };
    let t = result.times[first_settled];
    (last_time - t >= window).then_some((t, final_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Series;

    fn run(values: Vec<f64>) -> RunResult {
        RunResult {
            times: (0..values.len()).map(|i| i as f64).collect(),
            series: vec![Series { name: "x".into(), values }],
            diagnostics: vec![],
            fault: None,
        }
    }

    #[test]
    fn constant_series_settles_at_start() {
        assert_eq!(detect_equilibrium(&run(vec![4.0; 50]), "x", 10.0, 1e-3), Some((0.0, 4.0)));
    }

    #[test]
    fn growing_series_never_settles() {
        let r = run((0..=100).map(f64::from).collect());
        assert_eq!(detect_equilibrium(&r, "x", 10.0, 1e-3), None);
    }

    #[test]
    fn settles_after_last_excursion() {
        let mut v = vec![0.0, 5.0, 12.0, 9.0, 10.05];
        v.extend(std::iter::repeat_n(10.0, 20));
        let r = run(v);
        assert_eq!(detect_equilibrium(&r, "x", 10.0, 1e-3), Some((5.0, 10.0)));
        assert_eq!(detect_equilibrium(&r, "x", 10.0, 1e-2), Some((4.0, 10.0)));
        assert_eq!(detect_equilibrium(&r, "x", 30.0, 1e-3), None);
        assert_eq!(detect_equilibrium(&r, "missing", 1.0, 1e-3), None);
    }
}
