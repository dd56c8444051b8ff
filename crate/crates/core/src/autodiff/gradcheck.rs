//! Central finite differences, the oracle for every analytic gradient.

/// Relative step applied to each coordinate: `h = STEP · max(1, |x|)`.
pub const STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so that gradients which are
/// zero up to rounding compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// Numerical gradient of `f` at `x` by central differences.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = STEP * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Outcome of one gradient comparison.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub elements: usize,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn new(name: impl Into<String>, analytic: &[f64], numeric: &[f64], tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_rel_err: max_relative_error(analytic, numeric),
            elements: analytic.len(),
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_derivative() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, -1.0]);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert!(max_relative_error(&[1e-12], &[0.0]) < 1e-5);
        assert!((max_relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }
}
