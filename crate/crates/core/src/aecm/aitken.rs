//! Aitken-accelerated stopping rule.

/// Returns true when the Aitken estimate of the limiting log-likelihood lies
/// strictly within `(0, eps)` above `l_curr`.
///
/// `a = (l_next - l_curr) / (l_curr - l_prev)` and
/// `l∞ = l_curr + (l_next - l_curr) / (1 - a)`. Degenerate denominators
/// (`|l_curr - l_prev| < 1e-14`, or `a >= 1`) never stop.
pub fn aitken_should_stop(l_prev: f64, l_curr: f64, l_next: f64, eps: f64) -> bool {
    match aitken_limit(l_prev, l_curr, l_next) {
        Some(limit) => {
            let gap = limit - l_curr;
            gap > 0.0 && gap < eps
        }
        None => false,
    }
}

/// The extrapolated limit, when defined.
pub fn aitken_limit(l_prev: f64, l_curr: f64, l_next: f64) -> Option<f64> {
    let denom = l_curr - l_prev;
    if denom.abs() < 1e-14 {
        return None;
    }
    let a = (l_next - l_curr) / denom;
    if a >= 1.0 || !a.is_finite() {
        return None;
    }
    Some(l_curr + (l_next - l_curr) / (1.0 - a))
}

/// Plateau guard: a stalled sequence counts as converged only when it is flat to 1e-10.
pub(crate) fn plateau_converged(l_prev: f64, l_curr: f64, l_next: f64) -> bool {
    if l_curr - l_prev >= 1e-12 {
        return false;
    }
    let hi = l_prev.max(l_curr).max(l_next);
    let lo = l_prev.min(l_curr).min(l_next);
    hi - lo <= 1e-10
}

/// `10^(floor(log10 |l|) - 3)`: three orders of magnitude below the log-likelihood.
pub fn auto_tolerance(loglik: f64) -> f64 {
    let mag = loglik.abs();
    if !(mag > 0.0) || !mag.is_finite() {
        return 1e-3;
    }
    10f64.powf(mag.log10().floor() - 3.0)
}
