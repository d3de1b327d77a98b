//! One-dimensional integration helpers on top of `quadrature`.

/// Width of one log-space segment (natural-log units).
const LOG_SEGMENT: f64 = 2.0;
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// ∫_a^b f, split at the given interior breakpoints.
pub fn integrate_split(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> Integral {
    let mut pts: Vec<f64> = std::iter::once(a).chain(breaks.iter().copied().filter(|&x| x > a && x < b)).chain(std::iter::once(b)).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = Integral { value: 0.0, error: 0.0 };
    for w in pts.windows(2) {
        let scale = f(0.5 * (w[0] + w[1])).abs().max(f(w[0]).abs()).max(f(w[1]).abs()) * (w[1] - w[0]);
        let r = quadrature::integrate(&f, w[0], w[1], (REL_TOL * scale).max(1e-300));
        out.value += r.integral;
        out.error += r.error_estimate;
    }
    out
}

/// ∫_{lo}^{hi} f(u) du for 0 < lo < hi, integrated in s = ln u over
/// segments of bounded width, with extra breakpoints in u.
pub fn integrate_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64, breaks: &[f64]) -> Integral {
    if !(lo > 0.0 && hi > lo) {
        return Integral { value: 0.0, error: 0.0 };
    }
    let (s0, s1) = (lo.ln(), hi.ln());
    let mut pts: Vec<f64> = vec![s0];
    let segments = ((s1 - s0) / LOG_SEGMENT).ceil().max(1.0) as usize;
    for i in 1..segments {
        pts.push(s0 + (s1 - s0) * i as f64 / segments as f64);
    }
    pts.extend(breaks.iter().filter(|&&b| b > lo && b < hi).map(|b| b.ln()));
    pts.push(s1);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let g = |s: f64| {
        let u = s.exp();
        f(u) * u
    };
    let mut out = Integral { value: 0.0, error: 0.0 };
    for w in pts.windows(2) {
        let scale = g(0.5 * (w[0] + w[1])).abs().max(g(w[0]).abs()).max(g(w[1]).abs()) * (w[1] - w[0]);
        let r = quadrature::integrate(g, w[0], w[1], (REL_TOL * scale).max(1e-300));
        out.value += r.integral;
        out.error += r.error_estimate;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_integral_of_power() {
        // ∫_{1e-20}^1 u^{-1/2} du = 2(1 - 1e-10)
        let r = integrate_log(|u| u.powf(-0.5), 1e-20, 1.0, &[]);
        assert!((r.value - 2.0 * (1.0 - 1e-10)).abs() < 1e-10);
    }

    #[test]
    fn split_integral_with_kink() {
        let r = integrate_split(|x| (x - 0.3).abs(), 0.0, 1.0, &[0.3]);
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-12);
    }
}
