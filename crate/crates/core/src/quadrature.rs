//! One-dimensional quadrature rules, including rules adapted to cells that
//! touch or approach a singular stratum.

use std::sync::OnceLock;

const MAX_CACHED: usize = 32;

static RULES: [OnceLock<(Vec<f64>, Vec<f64>)>; MAX_CACHED + 1] = [const { OnceLock::new() }; MAX_CACHED + 1];

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    if n <= MAX_CACHED {
        return RULES[n].get_or_init(|| compute_gauss_legendre(n)).clone();
    }
    compute_gauss_legendre(n)
}

fn with_rule<R>(n: usize, f: impl FnOnce(&[f64], &[f64]) -> R) -> R {
    if n <= MAX_CACHED {
        let (x, w) = RULES[n].get_or_init(|| compute_gauss_legendre(n));
        f(x, w)
    } else {
        let (x, w) = compute_gauss_legendre(n);
        f(&x, &w)
    }
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// The logarithmic factor `X(t) = 1 / (1 - ln t)` for `0 < t <= 1`.
pub fn x_factor(t: f64) -> f64 {
    1.0 / (1.0 - t.ln())
}

/// Exact `∫_a^b t^s dt` for `0 <= a < b`.
pub fn power_integral(a: f64, b: f64, s: f64) -> f64 {
    if (s + 1.0).abs() < 1e-14 {
        return (b / a).ln();
    }
    let e = s + 1.0;
    if a == 0.0 {
        return b.powf(e) / e;
    }
    // b^e - a^e = a^e (exp(e ln(b/a)) - 1), stable when b is close to a
    a.powf(e) * (e * (b / a).ln()).exp_m1() / e
}

/// Algebraic tail of an integrand that decays like `(offset + y)^(-exponent)`
/// in the variable `y = ln(t1 / t)`; used when the weight is exactly `X^m / t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogTail {
    pub offset: f64,
    pub exponent: f64,
}

/// A quadrature point expressed as distance from an anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistPoint {
    pub t: f64,
    pub w: f64,
}

/// Rule for `∫_{t0}^{t1} f(t) dt` where `t` is the distance to a singular
/// anchor and `f` may be singular (but integrable) at `t = 0`.
pub fn anchored_rule(t0: f64, t1: f64, order: usize, tail: Option<LogTail>) -> Vec<DistPoint> {
    anchored_rule_with_depth(t0, t1, order, tail, 720.0)
}

/// As [`anchored_rule`], resolving a touching cell only down to `t1 e^{-depth}`.
pub fn anchored_rule_with_depth(t0: f64, t1: f64, order: usize, tail: Option<LogTail>, depth: f64) -> Vec<DistPoint> {
    debug_assert!(t0 >= 0.0 && t1 > t0);
    let mut out = Vec::new();
    if t0 == 0.0 {
        touching_rule(t1, order.max(8), tail, depth, &mut out);
    } else if t1 / t0 > 1.25 {
        log_rule(t0, t1, order.max(6), &mut out);
    } else {
        plain_rule(t0, t1, order, &mut out);
    }
    out
}

/// Plain Gauss–Legendre on `[a, b]`.
pub fn plain_rule(a: f64, b: f64, order: usize, out: &mut Vec<DistPoint>) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    with_rule(order, |x, w| {
        for (xi, wi) in x.iter().zip(w) {
            out.push(DistPoint { t: mid + half * xi, w: half * wi });
        }
    });
}

fn log_rule(t0: f64, t1: f64, order: usize, out: &mut Vec<DistPoint>) {
    let z0 = t0.ln();
    let z1 = t1.ln();
    let panels = ((z1 - z0) / std::f64::consts::LN_2).ceil().max(1.0) as usize;
    let dz = (z1 - z0) / panels as f64;
    with_rule(order, |x, w| {
        for p in 0..panels {
            let a = z0 + p as f64 * dz;
            let mid = a + 0.5 * dz;
            for (xi, wi) in x.iter().zip(w) {
                let z = mid + 0.5 * dz * xi;
                let t = z.exp();
                out.push(DistPoint { t, w: 0.5 * dz * wi * t });
            }
        }
    });
}

fn touching_rule(t1: f64, order: usize, tail: Option<LogTail>, depth: f64, out: &mut Vec<DistPoint>) {
    // substitution t = t1 e^{-y}; dyadic panels in y up to the underflow limit
    let y_max = (t1.ln() + 690.0).min(depth);
    let mut edges = vec![0.0, 1.0];
    let mut y = 1.0;
    while y < y_max {
        y = (2.0 * y).min(y_max);
        edges.push(y);
    }
    with_rule(order, |x, w| {
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(w) {
                let yy = mid + half * xi;
                let t = t1 * (-yy).exp();
                out.push(DistPoint { t, w: half * wi * t });
            }
        }
    });
    if let Some(tail) = tail {
        if tail.exponent > 1.0 {
            let t = t1 * (-y_max).exp();
            let wy = (tail.offset + y_max) / (tail.exponent - 1.0);
            out.push(DistPoint { t, w: wy * t });
        }
    }
}

/// Integrates `f` over `[t0, t1]` with [`anchored_rule`].
pub fn integrate_anchored(t0: f64, t1: f64, order: usize, f: impl Fn(f64) -> f64) -> f64 {
    anchored_rule(t0, t1, order, None).iter().map(|p| p.w * f(p.t)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rules_integrate_polynomials() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn x_factor_values() {
        assert_eq!(x_factor(1.0), 1.0);
        assert!((x_factor((-1.0f64).exp()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn power_integral_matches_closed_forms() {
        assert!((power_integral(0.0, 0.1, 1.0) - 0.005).abs() < 1e-16);
        assert!((power_integral(1.0, 2.0, -1.0) - 2f64.ln()).abs() < 1e-15);
        let a = 0.5;
        let b = 0.5 + 1e-9;
        let approx = power_integral(a, b, 2.0);
        let exact = (b - a) * (a * a + a * b + b * b) / 3.0;
        assert!((approx / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn touching_rule_handles_weak_singularities() {
        for s in [-0.9, -0.5, 0.0, 0.5, 2.0] {
            let approx = integrate_anchored(0.0, 0.3, 8, |t| t.powf(s));
            let exact = power_integral(0.0, 0.3, s);
            assert!((approx / exact - 1.0).abs() < 1e-12, "s={s}: {approx} vs {exact}");
        }
    }

    #[test]
    fn touching_rule_with_log_tail() {
        // ∫_0^{t1} X(t)^2 / t dt = 1 / (1 - ln t1)
        let t1: f64 = 0.2;
        let tail = LogTail { offset: 1.0 - t1.ln(), exponent: 2.0 };
        let approx: f64 = anchored_rule(0.0, t1, 8, Some(tail)).iter().map(|p| p.w * x_factor(p.t).powi(2) / p.t).sum();
        let exact = 1.0 / (1.0 - t1.ln());
        assert!((approx / exact - 1.0).abs() < 1e-10, "{approx} vs {exact}");
    }

    #[test]
    fn log_rule_on_graded_cells() {
        let approx = integrate_anchored(1e-30, 3e-30, 4, |t| 1.0 / (t * t));
        let exact = 1.0 / 1e-30 - 1.0 / 3e-30;
        assert!((approx / exact - 1.0).abs() < 1e-13);
    }
}
