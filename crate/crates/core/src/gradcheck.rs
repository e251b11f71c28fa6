//! Central finite-difference oracles for checking reverse-mode gradients.
//!
//! Everything here only evaluates the function being checked; it never
//! touches the tape's backward pass.

/// `|ad - fd| / (|fd| + 1e-12)`.
pub fn relative_error(autodiff: f64, finite: f64) -> f64 {
    (autodiff - finite).abs() / (finite.abs() + 1e-12)
}

/// Smallest derivative a central difference of step `h` resolves to
/// roughly 1e-7 relative accuracy when the function value is `f_value`.
///
/// Rounding in `f(x+h) - f(x-h)` leaves an absolute error near
/// `eps * |f| / h`; below `1e7` times that the quotient is mostly noise.
pub fn resolution_floor(f_value: f64, h: f64) -> f64 {
    1e7 * f64::EPSILON * f_value.abs() / h
}

/// Relative error whose denominator never drops below the oracle's
/// [`resolution_floor`]; coincides with [`relative_error`] for every
/// derivative the central difference can resolve.
pub fn fd_error(autodiff: f64, finite: f64, f_value: f64, h: f64) -> f64 {
    (autodiff - finite).abs() / (finite.abs() + 1e-12).max(resolution_floor(f_value, h))
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every `i`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Outcome of a piecewise-smooth finite-difference comparison.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates where `x ± h` switched a ReLU on or off.
    pub skipped_kinks: usize,
}

impl FdReport {
    pub fn merge(&mut self, other: &FdReport) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
    }
}

/// Compares `grad` against central differences of `f`, where `f` also
/// returns an activation signature. Coordinates whose perturbation changes
/// the signature straddle a non-differentiable point and are skipped.
pub fn check_piecewise(mut f: impl FnMut(&[f64]) -> (f64, Vec<bool>), x: &[f64], grad: &[f64], h: f64) -> FdReport {
    assert_eq!(x.len(), grad.len(), "gradient length");
    let (base, base_sig) = f(x);
    let mut probe = x.to_vec();
    let mut report = FdReport::default();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let (up, sig_up) = f(&probe);
        probe[i] = orig - h;
        let (down, sig_down) = f(&probe);
        probe[i] = orig;
        if sig_up != base_sig || sig_down != base_sig {
            report.skipped_kinks += 1;
            continue;
        }
        let fd = (up - down) / (2.0 * h);
        report.max_rel_err = report.max_rel_err.max(fd_error(grad[i], fd, base, h));
        report.checked += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_cubic() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn piecewise_check_skips_the_kink() {
        // |x| at 1e-9: the probe crosses zero, so the coordinate is skipped.
        let f = |x: &[f64]| (x[0].abs() + x[1] * x[1], vec![x[0] > 0.0]);
        let r = check_piecewise(f, &[1e-9, 3.0], &[1.0, 6.0], 1e-6);
        assert_eq!(r.skipped_kinks, 1);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_err < 1e-8);
    }
}
