//! Rayleigh-quotient estimators for weighted Sobolev, Hardy–log, log-Sobolev,
//! local Poincaré and local Moser inequalities.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::{Axis, DiscreteForm, GradedMesh, Jacobian, MeshParams, QuadPoint, Weight};
use crate::error::{Error, Result};
use crate::geometry::{norm, BallKind, Exponents, Shape, StratifiedDomain, StratumGeometry, Target};
use crate::linalg::{inverse_iteration, BandedSym};
use crate::potentials::PotentialSpec;
pub use crate::quadrature::x_factor;
use crate::spectral::{solve_ground_state, GroundState};

/// `-(k-2)/2 - (n-k)(q-2)/(2(q+2))`; exponents must exceed it.
pub fn sobolev_threshold(k: usize, n: usize, q: f64) -> f64 {
    -(k as f64 - 2.0) / 2.0 - (n as f64 - k as f64) * (q - 2.0) / (2.0 * (q + 2.0))
}

/// `-(k-2)/2 - (n-k)/(2(n-1))` for `k < n`, and `-(n-2)/2` (inclusive) for `k = n`.
pub fn log_sobolev_threshold(k: usize, n: usize) -> f64 {
    if k == n || n == 1 {
        -(n as f64 - 2.0) / 2.0
    } else {
        -(k as f64 - 2.0) / 2.0 - (n as f64 - k as f64) / (2.0 * (n as f64 - 1.0))
    }
}

/// `-(k-2)/2`.
pub fn harnack_threshold(k: usize) -> f64 {
    -(k as f64 - 2.0) / 2.0
}

/// `α - 1 + (q-2)n/(2q)`.
pub fn beta_exponent(alpha: f64, n: usize, q: f64) -> f64 {
    alpha - 1.0 + (q - 2.0) * n as f64 / (2.0 * q)
}

/// Power of `d` in the Sobolev denominator, `(q(n-2) - 2n)/2`.
pub fn sobolev_weight_power(n: usize, q: f64) -> f64 {
    (q * (n as f64 - 2.0) - 2.0 * n as f64) / 2.0
}

/// `2n/(n-2)` for `n ≥ 3`.
pub fn critical_sobolev_exponent(n: usize) -> Option<f64> {
    (n >= 3).then(|| 2.0 * n as f64 / (n as f64 - 2.0))
}

/// Whether `q(n - 2 + 2α) ≤ 2(n + 2α)`, equivalently `2α ≥ qβ`.
pub fn lq_admissible(alpha: f64, n: usize, q: f64) -> bool {
    q * (n as f64 - 2.0 + 2.0 * alpha) <= 2.0 * (n as f64 + 2.0 * alpha) + 1e-12
}

fn check_q(n: usize, q: f64) -> Result<()> {
    let ok = match critical_sobolev_exponent(n) {
        Some(qc) => q > 2.0 && q <= qc + 1e-12,
        None => q > 2.0 && q.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!("q = {q} for n = {n}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BoundedBelow,
    DegeneratesToZero,
    Inconclusive,
}

/// Classifies a sequence of per-level minima.
pub fn verdict(estimates: &[f64]) -> Verdict {
    let n = estimates.len();
    if n < 2 || estimates.iter().any(|e| !e.is_finite()) {
        return Verdict::Inconclusive;
    }
    if n >= 3 && estimates[n - 3..].windows(2).all(|w| w[0] > 0.0 && w[1] <= 0.5 * w[0]) {
        return Verdict::DegeneratesToZero;
    }
    let (prev, last) = (estimates[n - 2], estimates[n - 1]);
    if prev > 0.0 && last > 0.0 && last >= 0.9 * prev {
        return Verdict::BoundedBelow;
    }
    Verdict::Inconclusive
}

/// Mesh levels multiplying the grading depth exponent `log(h_max/h_min)` by
/// `factor`, dividing `1 - ρ` by `factor` and halving `h_max` at each step.
pub fn refine_levels(base: &MeshParams, count: usize, factor: f64) -> Vec<MeshParams> {
    let deepen = |h_min: f64, h_max: f64| h_max / 2.0 * (h_min / h_max).powf(factor);
    let flatten = |rho: f64| 1.0 - (1.0 - rho) / factor;
    let mut out = vec![base.clone()];
    for _ in 1..count {
        let p = out.last().unwrap();
        let mut next = p.clone();
        next.h_min = deepen(p.h_min, p.h_max);
        next.rho = flatten(p.rho);
        next.h_max = p.h_max / 2.0;
        next.layers = None;
        for o in next.overrides.values_mut() {
            if let Some(h) = o.h_min {
                o.h_min = Some(deepen(h, p.h_max));
            }
            if let Some(r) = o.rho {
                o.rho = Some(flatten(r));
            }
            o.layers = None;
        }
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for QuotientOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000, restarts: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub h_min: f64,
    pub rho: f64,
    pub h_max: f64,
    pub nodes: usize,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPoint {
    pub position: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientReport {
    pub inequality: String,
    pub q: f64,
    pub lambda: Option<f64>,
    pub alphas: Exponents,
    /// Admissibility threshold per stratum.
    pub thresholds: BTreeMap<String, f64>,
    pub admissible: bool,
    pub stratum: Option<String>,
    pub beta: Option<f64>,
    pub levels: Vec<LevelEstimate>,
    pub verdict: Verdict,
    /// Minimizer at the finest level, max-normalized.
    pub minimizer: Vec<SnapshotPoint>,
}

impl QuotientReport {
    pub fn estimates(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.value).collect()
    }
}

/// Row sums of the weighted mass over all nodes, restricted to free nodes.
fn nodal_weights(mesh: &GradedMesh, order: usize, w: &dyn Fn(&QuadPoint) -> Result<f64>) -> Result<Vec<f64>> {
    let full = mesh.without_dirichlet()?;
    let m = full.mass_matrix(order, w)?;
    let ones = vec![1.0; m.dim()];
    Ok(mesh.restrict(&m.matvec(&ones)))
}

struct PowerOutcome {
    value: f64,
    vector: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn lq_norm_sq(w: &[f64], u: &[f64], q: f64) -> f64 {
    w.iter().zip(u).map(|(wi, ui)| wi * ui.abs().powf(q)).sum::<f64>().powf(2.0 / q)
}

/// Minimizes `uᵀKu / (Σ wᵢ|uᵢ|^q)^{2/q}` by the nonlinear inverse power
/// method, which decreases the quotient monotonically.
fn minimize_power_quotient(
    k: &BandedSym,
    w: &[f64],
    q: f64,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PowerOutcome> {
    let factor = k.cholesky()?;
    let mut u = start.to_vec();
    let g = lq_norm_sq(w, &u, q);
    if !(g > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    u.iter_mut().for_each(|x| *x /= g.sqrt());
    let mut value = k.form(&u, &u);
    for it in 1..=max_iter {
        let s: Vec<f64> = w.iter().zip(&u).map(|(wi, ui)| wi * ui.abs().powf(q - 2.0) * ui).collect();
        let mut y = factor.solve(&s);
        let g = lq_norm_sq(w, &y, q);
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::NonConvergedMinimizer(value));
        }
        y.iter_mut().for_each(|x| *x /= g.sqrt());
        let next = k.form(&y, &y);
        u = y;
        let done = (value - next).abs() <= tol * next.abs();
        value = next;
        if done {
            return Ok(PowerOutcome { value, vector: u, iterations: it, converged: true });
        }
    }
    Ok(PowerOutcome { value, vector: u, iterations: max_iter, converged: false })
}

fn best_power_minimum(k: &BandedSym, w: &[f64], q: f64, init: &[f64], opts: &QuotientOptions) -> Result<PowerOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<PowerOutcome> = None;
    for r in 0..=opts.restarts {
        let start: Vec<f64> = if r == 0 {
            init.iter().map(|v| v.abs()).collect()
        } else {
            init.iter().map(|v| v.abs() * rng.gen_range(0.1..2.0)).collect()
        };
        let out = minimize_power_quotient(k, w, q, &start, opts.tol, opts.max_iter)?;
        if best.as_ref().map_or(true, |b| out.value < b.value) {
            best = Some(out);
        }
    }
    best.ok_or(Error::NonConvergedMinimizer(f64::NAN))
}

fn snapshot(mesh: &GradedMesh, u: &[f64]) -> Vec<SnapshotPoint> {
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    mesh.free_nodes()
        .iter()
        .zip(u)
        .map(|(n, v)| SnapshotPoint { position: mesh.node_position(*n), value: v / scale })
        .collect()
}

fn level_of(p: &MeshParams, nodes: usize, out: &PowerOutcome) -> LevelEstimate {
    LevelEstimate {
        h_min: p.h_min,
        rho: p.rho,
        h_max: p.h_max,
        nodes,
        value: out.value,
        iterations: out.iterations,
        converged: out.converged,
    }
}

fn finish(
    inequality: &str,
    q: f64,
    lambda: Option<f64>,
    alphas: Exponents,
    thresholds: BTreeMap<String, f64>,
    admissible: bool,
    levels: Vec<LevelEstimate>,
    minimizer: Vec<SnapshotPoint>,
) -> QuotientReport {
    let estimates: Vec<f64> = levels.iter().map(|l| l.value).collect();
    let verdict = if levels.iter().all(|l| l.converged) { verdict(&estimates) } else { Verdict::Inconclusive };
    QuotientReport {
        inequality: inequality.into(),
        q,
        lambda,
        alphas,
        thresholds,
        admissible,
        stratum: None,
        beta: None,
        levels,
        verdict,
        minimizer,
    }
}

fn thresholds_by(
    dom: &StratifiedDomain,
    alphas: &Exponents,
    rule: impl Fn(usize) -> f64,
) -> (BTreeMap<String, f64>, bool) {
    let mut out = BTreeMap::new();
    let mut ok = true;
    for s in &dom.strata {
        let t = rule(s.codim);
        if let Some(a) = alphas.get(&s.label) {
            ok &= *a > t;
        }
        out.insert(s.label.clone(), t);
    }
    (out, ok)
}

/// Denominator weight of the log-corrected Sobolev quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SobolevWeight {
    Plain,
    /// Extra factor `X(d_n/D_n)^{q/2+1}` at the point stratum.
    LogCorrected,
}

/// Per-level minima of `(Q[u] + (λ-λ₁)∫u²) / (∫ d^{(q(n-2)-2n)/2} |u|^q)^{2/q}`.
pub fn sobolev_quotient(
    dom: &StratifiedDomain,
    spec: &PotentialSpec,
    q: f64,
    lambda: f64,
    levels: &[MeshParams],
    weight: SobolevWeight,
    opts: &QuotientOptions,
) -> Result<QuotientReport> {
    let n = dom.dimension;
    check_q(n, q)?;
    if !(lambda > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("lambda = {lambda}")));
    }
    let alphas = spec.predicted.clone();
    let point = dom.strata.iter().find(|s| s.codim == n && n >= 3).cloned();
    let (mut thresholds, mut admissible) = thresholds_by(dom, &alphas, |k| sobolev_threshold(k, n, q));
    if weight == SobolevWeight::LogCorrected {
        let p = point.as_ref().ok_or(Error::NoSuchStratum(n))?;
        let a = alphas.get(&p.label).copied().unwrap_or(0.0);
        if (a - harnack_threshold(n)).abs() > 1e-12 {
            return Err(Error::ParameterOutOfRange(format!("point exponent {a} is not -(n-2)/2")));
        }
        thresholds.insert(p.label.clone(), harnack_threshold(n));
        admissible = dom
            .strata
            .iter()
            .filter(|s| s.label != p.label)
            .all(|s| alphas.get(&s.label).map_or(true, |a| *a > sobolev_threshold(s.codim, n, q)));
    }
    let power = sobolev_weight_power(n, q);
    let log_weight = match (&point, weight) {
        (Some(p), SobolevWeight::LogCorrected) => Some(Weight::Distance {
            target: Target::Stratum(p.label.clone()),
            power: 0.0,
            log_power: q / 2.0 + 1.0,
            log_scale: None,
        }),
        _ => None,
    };
    let mut out_levels = Vec::new();
    let mut minimizer = Vec::new();
    for p in levels {
        let form = DiscreteForm::build(dom, spec, p)?;
        let gs = solve_ground_state(&form, 1e-12)?;
        let k = form.operator().combine(1.0, &form.mass, lambda - gs.lambda1);
        let wd = Weight::distance(Target::All, power);
        let w = nodal_weights(&form.mesh, form.quad_order, &|qp| {
            let mut v = wd.eval(dom, qp)?;
            if let Some(lw) = &log_weight {
                v *= lw.eval(dom, qp)?;
            }
            Ok(v)
        })?;
        let out = best_power_minimum(&k, &w, q, &gs.phi1, opts)?;
        out_levels.push(level_of(p, form.mesh.free_count(), &out));
        minimizer = snapshot(&form.mesh, &out.vector);
    }
    let id = match weight {
        SobolevWeight::Plain => "sobolev",
        SobolevWeight::LogCorrected => "log_corrected_sobolev",
    };
    Ok(finish(id, q, Some(lambda), alphas, thresholds, admissible, out_levels, minimizer))
}

/// [`sobolev_quotient`] with the `X^{q/2+1}` denominator factor.
pub fn log_corrected_quotient(
    dom: &StratifiedDomain,
    spec: &PotentialSpec,
    q: f64,
    lambda: f64,
    levels: &[MeshParams],
    opts: &QuotientOptions,
) -> Result<QuotientReport> {
    sobolev_quotient(dom, spec, q, lambda, levels, SobolevWeight::LogCorrected, opts)
}

/// Smallest generalized eigenvalue of `(Q + (λ-λ₁)M, ∫ X² u²/d²)` per level;
/// with `log_factor = false` the denominator is `∫ u²/d²`.
pub fn critical_hardy_log(
    dom: &StratifiedDomain,
    spec: &PotentialSpec,
    lambda: f64,
    levels: &[MeshParams],
    log_factor: bool,
) -> Result<QuotientReport> {
    if !(lambda > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("lambda = {lambda}")));
    }
    let alphas = spec.predicted.clone();
    let (thresholds, _) = thresholds_by(dom, &alphas, harnack_threshold);
    let admissible =
        dom.strata.iter().all(|s| alphas.get(&s.label).map_or(true, |a| *a >= harnack_threshold(s.codim) - 1e-12));
    let w = Weight::Distance {
        target: Target::All,
        power: -2.0,
        log_power: if log_factor { 2.0 } else { 0.0 },
        log_scale: None,
    };
    let mut out_levels = Vec::new();
    let mut minimizer = Vec::new();
    for p in levels {
        let form = DiscreteForm::build(dom, spec, p)?;
        let gs = solve_ground_state(&form, 1e-12)?;
        let k = form.operator().combine(1.0, &form.mass, lambda - gs.lambda1);
        let m = form.weighted_mass(&w)?;
        let ep = inverse_iteration(&k, &m, Some(0.0), 1e-12, 20_000, &[], Some(&gs.phi1))?;
        let out = PowerOutcome { value: ep.value, vector: ep.vector, iterations: ep.iterations, converged: true };
        out_levels.push(level_of(p, form.mesh.free_count(), &out));
        minimizer = snapshot(&form.mesh, &out.vector);
    }
    let id = if log_factor { "critical_hardy_log" } else { "critical_hardy" };
    Ok(finish(id, 2.0, Some(lambda), alphas, thresholds, admissible, out_levels, minimizer))
}

/// Layer `{d_S < δ}` around one stratum as a one-dimensional mesh.
fn layer_mesh(
    dom: &StratifiedDomain,
    label: &str,
    delta: f64,
    params: &MeshParams,
    stratum_dirichlet: bool,
) -> Result<GradedMesh> {
    let s = dom.stratum(label)?;
    let g = params.grading_for(label)?;
    let h_max = params.h_max.min(delta / 8.0);
    let (axis, jac) = match (&dom.shape, &s.geometry) {
        (Shape::Interval { a, .. }, StratumGeometry::FullBoundary) => {
            (Axis::graded(*a, a + delta, Some(g), None, h_max, [stratum_dirichlet, false])?, Jacobian::Flat)
        }
        (Shape::Interval { a, b }, StratumGeometry::FlatPiece { .. } | StratumGeometry::Point(_)) => {
            let x = dom.to_coords(&[*a]);
            if dom.stratum_distance_coords(s, &x) == 0.0 {
                (Axis::graded(*a, a + delta, Some(g), None, h_max, [stratum_dirichlet, false])?, Jacobian::Flat)
            } else {
                (Axis::graded(b - delta, *b, None, Some(g), h_max, [false, stratum_dirichlet])?, Jacobian::Flat)
            }
        }
        (Shape::RadialBall { radius, .. } | Shape::Disc { radius }, _) => {
            let jac = Jacobian::Radial { ambient_n: dom.dimension };
            if s.codim == dom.dimension {
                (Axis::graded(0.0, delta, Some(g), None, h_max, [stratum_dirichlet, false])?, jac)
            } else {
                (Axis::graded(radius - delta, *radius, None, Some(g), h_max, [false, stratum_dirichlet])?, jac)
            }
        }
        _ => return Err(Error::Unsupported(format!("stratum layer for `{label}` on this shape"))),
    };
    GradedMesh::from_axes(vec![axis], jac, [(label.to_string(), g)].into(), params.max_nodes)
}

/// Per-level minima of `∫_{Γ^δ} d^{2α}(|∇v|² + v²) / ‖d^β v‖²_{L^q(Γ^δ)}` on
/// the layer around one stratum.
pub fn codim_block(
    dom: &StratifiedDomain,
    label: &str,
    q: f64,
    alpha: f64,
    delta: f64,
    levels: &[MeshParams],
    opts: &QuotientOptions,
) -> Result<QuotientReport> {
    let s = dom.stratum(label)?.clone();
    let (k, n) = (s.codim, dom.dimension);
    check_q(n, q)?;
    if !(delta > 0.0 && delta <= dom.localization_beta) {
        return Err(Error::RadiusTooLarge { radius: delta, beta: dom.localization_beta });
    }
    let excluded = sobolev_threshold(k, n, q);
    let log_block = k == n && n >= 3 && (alpha - harnack_threshold(n)).abs() < 1e-12;
    if !log_block && (alpha - excluded).abs() < 1e-12 {
        return Err(Error::ExcludedExponent { codim: k, alpha });
    }
    let beta = if log_block {
        harnack_threshold(n) - 1.0 + (q - 2.0) * n as f64 / (2.0 * q)
    } else {
        beta_exponent(alpha, n, q)
    };
    let target = Target::Stratum(label.into());
    let w_num = Weight::distance(target.clone(), 2.0 * alpha);
    let w_den = Weight::Distance {
        target: target.clone(),
        power: beta * q,
        log_power: if log_block { q / 2.0 + 1.0 } else { 0.0 },
        log_scale: None,
    };
    let dirichlet = 2.0 * alpha + k as f64 - 2.0 < 0.0;
    let mut out_levels = Vec::new();
    let mut minimizer = Vec::new();
    for p in levels {
        let mesh = layer_mesh(dom, label, delta, p, dirichlet)?;
        let order = p.quad_order;
        let stiff = mesh.stiffness_matrix(order, &|qp| w_num.eval(dom, qp), &|_| [[1.0, 0.0], [0.0, 1.0]])?;
        let mass = mesh.mass_matrix(order, &|qp| w_num.eval(dom, qp))?;
        let kmat = stiff.combine(1.0, &mass, 1.0);
        let w = nodal_weights(&mesh, order, &|qp| w_den.eval(dom, qp))?;
        let init = inverse_iteration(&kmat, &mass, Some(0.0), 1e-10, 5000, &[], None)?;
        let out = best_power_minimum(&kmat, &w, q, &init.vector, opts)?;
        out_levels.push(level_of(p, mesh.free_count(), &out));
        minimizer = snapshot(&mesh, &out.vector);
    }
    let mut thresholds = BTreeMap::new();
    thresholds.insert(label.to_string(), excluded);
    let mut alphas = Exponents::new();
    alphas.insert(label.to_string(), alpha);
    let id = if log_block { "codim_block_log" } else { "codim_block" };
    let mut rep = finish(id, q, None, alphas, thresholds, log_block || alpha > excluded, out_levels, minimizer);
    rep.stratum = Some(label.into());
    rep.beta = Some(beta);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSobolevReport {
    /// `(n + 2A)/4`.
    pub coefficient: f64,
    pub a_max: f64,
    pub n: usize,
    pub k_hat: f64,
    pub eps: Vec<f64>,
    /// `max_u [LHS - εQ[u]]/‖u‖²` per `ε`.
    pub bound: Vec<f64>,
    pub slope_eps: Vec<f64>,
    pub slope_bound: Vec<f64>,
    /// Least-squares slope of `slope_bound` against `ln ε`.
    pub slope: f64,
    pub samples: usize,
}

impl LogSobolevReport {
    pub fn slope_error(&self) -> f64 {
        (self.slope / -self.coefficient - 1.0).abs()
    }
}

/// `∫ u² ln(|u| / (‖u‖₂ ∏d^α))` by nodal quadrature.
pub fn weighted_entropy(form: &DiscreteForm, alphas: &Exponents, u: &[f64], nodal: &[f64]) -> Result<f64> {
    let norm = form.mass.form(u, u).sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    let coords = form.free_coords();
    let mut total = 0.0;
    for (i, ui) in u.iter().enumerate() {
        if *ui == 0.0 {
            continue;
        }
        let w = form.domain.weight_at(alphas, &coords[i])?.sqrt();
        total += nodal[i] * ui * ui * (ui.abs() / (norm * w)).ln();
    }
    Ok(total)
}

/// Fits `K̂ = max_{u,ε} [LHS - εQ[u]]/‖u‖² + ((n+2A)/4) ln ε` over `eps`
/// and the slope of the sampled bound in `ln ε` over `slope_eps`.
pub fn weighted_log_sobolev(
    form: &DiscreteForm,
    alphas: &Exponents,
    eps: &[f64],
    slope_eps: &[f64],
    samples: &[Vec<f64>],
) -> Result<LogSobolevReport> {
    if eps.is_empty() || slope_eps.len() < 2 || samples.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let n = form.domain.dimension;
    let a_max = alphas.values().cloned().fold(0.0, f64::max);
    let c = (n as f64 + 2.0 * a_max) / 4.0;
    let nodal = nodal_weights(&form.mesh, form.quad_order, &|_| Ok(1.0))?;
    let mut terms = Vec::with_capacity(samples.len());
    for (s, u) in samples.iter().enumerate() {
        let nrm2 = form.mass.form(u, u);
        let lhs = weighted_entropy(form, alphas, u, &nodal)?;
        let q = form.energy(u);
        if !(lhs.is_finite() && q.is_finite() && nrm2 > 0.0) {
            return Err(Error::NonFiniteEntropy(s));
        }
        terms.push((lhs / nrm2, q / nrm2));
    }
    let sup = |grid: &[f64]| -> Vec<f64> {
        grid.iter().map(|e| terms.iter().map(|(l, q)| l - e * q).fold(f64::NEG_INFINITY, f64::max)).collect()
    };
    let bound = sup(eps);
    let k_hat = eps.iter().zip(&bound).map(|(e, b)| b + c * e.ln()).fold(f64::NEG_INFINITY, f64::max);
    let slope_bound = sup(slope_eps);
    let xs: Vec<f64> = slope_eps.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = slope_bound.iter().sum::<f64>() / slope_bound.len() as f64;
    let sxy: f64 = xs.iter().zip(&slope_bound).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    Ok(LogSobolevReport {
        coefficient: c,
        a_max,
        n,
        k_hat,
        eps: eps.to_vec(),
        bound,
        slope_eps: slope_eps.to_vec(),
        slope_bound,
        slope,
        samples: samples.len(),
    })
}

/// `φ₁ e^{-d_S/s}` for each scale `s`.
pub fn boundary_concentrated(
    form: &DiscreteForm,
    gs: &GroundState,
    label: &str,
    scales: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let s = form.domain.stratum(label)?;
    let coords = form.free_coords();
    let d: Vec<f64> = coords.iter().map(|c| form.domain.stratum_distance_coords(s, c)).collect();
    Ok(scales.iter().map(|sc| gs.phi1.iter().zip(&d).map(|(p, di)| p * (-di / sc).exp()).collect()).collect())
}

/// `φ₁` times random mixtures of Gaussian bumps.
pub fn random_bump_mixtures(form: &DiscreteForm, gs: &GroundState, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v = crate::heat::random_positive_mixture(form, &mut rng, 3);
            v.iter().zip(&gs.phi1).map(|(a, b)| a * b).collect()
        })
        .collect()
}

/// Box approximating `ℬ(x, r) ∩ Ω`.
fn ball_box(dom: &StratifiedDomain, x: &[f64], r: f64) -> Result<(Vec<f64>, Vec<f64>, BallKind)> {
    let ball = dom.make_ball(x, r)?;
    let (lo, hi) = match &dom.shape {
        Shape::Interval { a, b } => (vec![*a], vec![*b]),
        Shape::Rectangle { widths } => (vec![0.0; widths.len()], widths.clone()),
        _ => return Err(Error::Unsupported("local problems need an interval or a rectangle".into())),
    };
    let (l, h) = ball.clipped_box(&lo, &hi);
    Ok((l, h, ball.kind))
}

fn ball_mesh(dom: &StratifiedDomain, x: &[f64], r: f64, params: &MeshParams) -> Result<(GradedMesh, BallKind)> {
    let (lo, hi, kind) = ball_box(dom, x, r)?;
    let g = params.grading_for(&dom.strata[0].label)?;
    let (dom_lo, dom_hi) = match &dom.shape {
        Shape::Interval { a, b } => (vec![*a], vec![*b]),
        Shape::Rectangle { widths } => (vec![0.0; widths.len()], widths.clone()),
        _ => unreachable!(),
    };
    let mut axes = Vec::new();
    for d in 0..lo.len() {
        let glo = (lo[d] <= dom_lo[d]).then_some(g);
        let ghi = (hi[d] >= dom_hi[d]).then_some(g);
        let h_max = params.h_max.min((hi[d] - lo[d]) / 16.0);
        axes.push(Axis::graded(lo[d], hi[d], glo, ghi, h_max, [false, false])?);
    }
    Ok((
        GradedMesh::from_axes(axes, Jacobian::Flat, [(dom.strata[0].label.clone(), g)].into(), params.max_nodes)?,
        kind,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEntry {
    pub center: Vec<f64>,
    pub radius: f64,
    pub kind: BallKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub worst: f64,
    pub best: f64,
    pub entries: Vec<LocalEntry>,
}

impl LocalReport {
    fn from_entries(entries: Vec<LocalEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let worst = entries.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
        let best = entries.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
        Ok(Self { worst, best, entries })
    }

    pub fn spread(&self) -> f64 {
        self.worst / self.best
    }
}

fn identity_coef(_: &QuadPoint) -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

/// `C_P(x,r) = 1/(r² μ₂)` with `μ₂` the first nonzero eigenvalue of the
/// weighted natural-boundary problem on `ℬ(x,r) ∩ Ω`.
pub fn local_poincare(
    dom: &StratifiedDomain,
    alphas: &Exponents,
    centers: &[Vec<f64>],
    radii: &[f64],
    params: &MeshParams,
) -> Result<LocalReport> {
    let r0 = dom.localization_beta / 2.0;
    let w = Weight::Strata(alphas.clone());
    let mut entries = Vec::new();
    for x in centers {
        for &r in radii {
            if !(r > 0.0 && r < r0) {
                return Err(Error::RadiusTooLarge { radius: r, beta: r0 });
            }
            let (mesh, kind) = ball_mesh(dom, x, r, params)?;
            let order = params.quad_order;
            let k = mesh.stiffness_matrix(order, &|qp| w.eval(dom, qp), &identity_coef)?;
            let m = mesh.mass_matrix(order, &|qp| w.eval(dom, qp))?;
            let n = mesh.free_count();
            let ramp: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
            let ep = inverse_iteration(&k, &m, Some(-1.0), 1e-11, 20_000, &[vec![1.0; n]], Some(&ramp))?;
            entries.push(LocalEntry { center: x.clone(), radius: r, kind, value: 1.0 / (r * r * ep.value) });
        }
    }
    LocalReport::from_entries(entries)
}

/// Smooth bump supported in `(c - w, c + w)` along each axis.
fn bump(x: &[f64], c: &[f64], w: f64) -> f64 {
    let mut v = 1.0;
    for (xi, ci) in x.iter().zip(c) {
        let s = (xi - ci) / w;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        v *= (1.0 - 1.0 / (1.0 - s * s)).exp();
    }
    v
}

/// `C_M = max LHS / (r² V(x,r)^{-2/ν} ∫|∇f|²w (∫f²w)^{2/ν})` over bump samples
/// supported in each ball.
pub fn local_moser(
    dom: &StratifiedDomain,
    alphas: &Exponents,
    nu: f64,
    centers: &[Vec<f64>],
    radii: &[f64],
    samples: usize,
    seed: u64,
    params: &MeshParams,
) -> Result<LocalReport> {
    let a_max = alphas.values().cloned().fold(0.0, f64::max);
    if !(nu >= dom.dimension as f64 + 2.0 * a_max - 1e-12) {
        return Err(Error::ParameterOutOfRange(format!("nu = {nu} below n + 2A")));
    }
    let r0 = dom.localization_beta / 2.0;
    let w = Weight::Strata(alphas.clone());
    let p = 2.0 * (1.0 + 2.0 / nu);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for x in centers {
        for &r in radii {
            if !(r > 0.0 && r < r0) {
                return Err(Error::RadiusTooLarge { radius: r, beta: r0 });
            }
            let (mesh, kind) = ball_mesh(dom, x, r, params)?;
            let full = mesh.without_dirichlet()?;
            let order = params.quad_order;
            let k = full.stiffness_matrix(order, &|qp| w.eval(dom, qp), &identity_coef)?;
            let m = full.mass_matrix(order, &|qp| w.eval(dom, qp))?;
            let nodal = m.matvec(&vec![1.0; m.dim()]);
            let volume = dom.weighted_volume(x, r, alphas)?;
            let (lo, hi, _) = ball_box(dom, x, r)?;
            let positions: Vec<Vec<f64>> = (0..full.node_count()).map(|i| full.node_position(i)).collect();
            let mut worst = 0.0f64;
            for _ in 0..samples {
                let width = r * rng.gen_range(0.2..0.5);
                let c: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..*h)).collect();
                let f: Vec<f64> = positions
                    .iter()
                    .map(|y| {
                        if norm(&y.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>()) < r {
                            bump(y, &c, width)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let l2 = m.form(&f, &f);
                if !(l2 > 0.0) {
                    continue;
                }
                let grad = k.form(&f, &f);
                let lhs: f64 = nodal.iter().zip(&f).map(|(wi, fi)| wi * fi.abs().powf(p)).sum();
                let rhs = r * r * volume.powf(-2.0 / nu) * grad * l2.powf(2.0 / nu);
                worst = worst.max(lhs / rhs);
            }
            if worst == 0.0 {
                return Err(Error::ZeroDenominator);
            }
            entries.push(LocalEntry { center: x.clone(), radius: r, kind, value: worst });
        }
    }
    LocalReport::from_entries(entries)
}

/// Moser ratio of one nodal function on the full mesh of `ℬ(x,r) ∩ Ω`.
pub fn moser_ratio(
    dom: &StratifiedDomain,
    alphas: &Exponents,
    nu: f64,
    x: &[f64],
    r: f64,
    f: impl Fn(&[f64]) -> f64,
    params: &MeshParams,
) -> Result<f64> {
    let (mesh, _) = ball_mesh(dom, x, r, params)?;
    let full = mesh.without_dirichlet()?;
    let w = Weight::Strata(alphas.clone());
    let order = params.quad_order;
    let k = full.stiffness_matrix(order, &|qp| w.eval(dom, qp), &identity_coef)?;
    let m = full.mass_matrix(order, &|qp| w.eval(dom, qp))?;
    let nodal = m.matvec(&vec![1.0; m.dim()]);
    let vals: Vec<f64> = (0..full.node_count()).map(|i| f(&full.node_position(i))).collect();
    let l2 = m.form(&vals, &vals);
    if !(l2 > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    let p = 2.0 * (1.0 + 2.0 / nu);
    let lhs: f64 = nodal.iter().zip(&vals).map(|(wi, fi)| wi * fi.abs().powf(p)).sum();
    let volume = dom.weighted_volume(x, r, alphas)?;
    Ok(lhs / (r * r * volume.powf(-2.0 / nu) * k.form(&vals, &vals) * l2.powf(2.0 / nu)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_generalized_eigen;
    use crate::potentials::{example_i, example_iii};
    use proptest::{prop_assert, prop_assert_eq, proptest};

    fn interval() -> StratifiedDomain {
        StratifiedDomain::interval(0.0, 1.0).unwrap()
    }

    fn one(label: &str, a: f64) -> Exponents {
        [(label.to_string(), a)].into()
    }

    #[test]
    fn threshold_arithmetic() {
        for n in 3..8 {
            let qc = critical_sobolev_exponent(n).unwrap();
            for k in 1..=n {
                assert!((sobolev_threshold(k, n, 2.0) - harnack_threshold(k)).abs() < 1e-14);
                if k < n {
                    assert!((sobolev_threshold(k, n, qc) - log_sobolev_threshold(k, n)).abs() < 1e-14);
                }
            }
            assert!((sobolev_threshold(n, n, 4.0) - harnack_threshold(n)).abs() < 1e-14);
            assert!(beta_exponent(0.0, n, qc).abs() < 1e-14);
            assert_eq!(sobolev_weight_power(n, qc), 0.0);
        }
        assert_eq!(critical_sobolev_exponent(2), None);
        assert_eq!(sobolev_threshold(1, 1, 4.0), 0.5);
    }

    #[test]
    fn verdict_rules() {
        assert_eq!(verdict(&[1.0, 0.95, 0.9]), Verdict::BoundedBelow);
        assert_eq!(verdict(&[1.0, 0.5, 0.25]), Verdict::DegeneratesToZero);
        assert_eq!(verdict(&[1.0, 0.6, 0.3]), Verdict::Inconclusive);
        assert_eq!(verdict(&[1.0, 0.8]), Verdict::Inconclusive);
        assert_eq!(verdict(&[0.9]), Verdict::Inconclusive);
        assert_eq!(verdict(&[-1.0, -1.0, -1.0]), Verdict::Inconclusive);
    }

    #[test]
    fn refinement_deepens_and_flattens() {
        let base = MeshParams { h_max: 1.0 / 32.0, ..MeshParams::graded(1.0 / 1024.0, 0.5) };
        let lv = refine_levels(&base, 3, 2.0);
        assert!((lv[1].h_max - 1.0 / 64.0).abs() < 1e-15);
        assert!(((lv[1].h_max / lv[1].h_min).log2() - 10.0).abs() < 1e-9);
        assert_eq!(lv[2].rho, 0.875);
    }

    #[test]
    fn quadratic_denominator_matches_dense_oracle() {
        let dom = interval();
        let spec = example_iii(&dom).unwrap();
        let form = DiscreteForm::build(&dom, &spec, &MeshParams { h_max: 1.0 / 64.0, ..MeshParams::graded(1e-6, 0.5) })
            .unwrap();
        let k = form.operator().combine(1.0, &form.mass, 1.0);
        let w = nodal_weights(&form.mesh, 4, &|_| Ok(1.0)).unwrap();
        let start = vec![1.0; w.len()];
        let out = minimize_power_quotient(&k, &w, 2.0, &start, 1e-14, 100_000).unwrap();
        let (vals, _) = dense_generalized_eigen(&k.to_dense(), &BandedSym::from_diagonal(&w).to_dense()).unwrap();
        assert!(out.value / vals[0] - 1.0 < 1e-8, "{} vs {}", out.value, vals[0]);
    }

    #[test]
    fn hardy_log_matches_dense_oracle() {
        let dom = interval();
        let spec = example_iii(&dom).unwrap();
        let p = MeshParams { h_max: 1.0 / 64.0, ..MeshParams::graded(1e-6, 0.5) };
        let rep = critical_hardy_log(&dom, &spec, 1.0, std::slice::from_ref(&p), true).unwrap();
        let form = DiscreteForm::build(&dom, &spec, &p).unwrap();
        let gs = solve_ground_state(&form, 1e-12).unwrap();
        let k = form.operator().combine(1.0, &form.mass, 1.0 - gs.lambda1);
        let w = Weight::Distance { target: Target::All, power: -2.0, log_power: 2.0, log_scale: None };
        let m = form.weighted_mass(&w).unwrap();
        let (vals, _) = dense_generalized_eigen(&k.to_dense(), &m.to_dense()).unwrap();
        assert!((rep.levels[0].value / vals[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hardy_log_bounded_and_control_degenerates() {
        let dom = interval();
        let spec = example_iii(&dom).unwrap();
        let levels =
            refine_levels(&MeshParams { h_max: 1.0 / 32.0, ..MeshParams::graded(2f64.powi(-20), 0.5) }, 3, 2.0);
        assert_eq!(critical_hardy_log(&dom, &spec, 1.0, &levels, true).unwrap().verdict, Verdict::BoundedBelow);
        assert_eq!(critical_hardy_log(&dom, &spec, 1.0, &levels, false).unwrap().verdict, Verdict::DegeneratesToZero);
    }

    #[test]
    fn point_case_on_radial_ball() {
        let ball = StratifiedDomain::radial_ball(1.0, 3, true).unwrap();
        let spec = example_i(&ball, &[(vec![0.0; 3], 0.25)]).unwrap();
        let levels =
            refine_levels(&MeshParams { h_max: 1.0 / 32.0, ..MeshParams::graded(2f64.powi(-11), 0.5) }, 6, 2.0);
        let rep = critical_hardy_log(&ball, &spec, 1.0, &levels, true).unwrap();
        assert_eq!(rep.verdict, Verdict::BoundedBelow, "{:?}", rep.estimates());
    }

    #[test]
    fn lambda_shift_raises_the_infimum() {
        let ball = StratifiedDomain::radial_ball(1.0, 3, true).unwrap();
        let spec = example_i(&ball, &[(vec![0.0; 3], 3.0 / 16.0)]).unwrap();
        let p = [MeshParams { h_max: 1.0 / 32.0, ..MeshParams::graded(2f64.powi(-20), 0.5) }];
        let opts = QuotientOptions { restarts: 1, ..Default::default() };
        let a = sobolev_quotient(&ball, &spec, 4.0, 1.0, &p, SobolevWeight::Plain, &opts).unwrap();
        let b = sobolev_quotient(&ball, &spec, 4.0, 2.0, &p, SobolevWeight::Plain, &opts).unwrap();
        assert!(b.levels[0].value > a.levels[0].value);
        assert!(a.admissible);
    }

    #[test]
    fn sobolev_rejects_q_out_of_range() {
        let ball = StratifiedDomain::radial_ball(1.0, 3, true).unwrap();
        let spec = example_i(&ball, &[(vec![0.0; 3], 0.1)]).unwrap();
        let p = [MeshParams::default()];
        let opts = QuotientOptions::default();
        assert!(sobolev_quotient(&ball, &spec, 7.0, 1.0, &p, SobolevWeight::Plain, &opts).is_err());
        assert!(sobolev_quotient(&ball, &spec, 2.0, 1.0, &p, SobolevWeight::Plain, &opts).is_err());
        assert!(log_corrected_quotient(&ball, &spec, 6.0, 1.0, &p, &opts).is_err());
    }

    #[test]
    fn codim_blocks() {
        let dom = interval();
        let levels =
            refine_levels(&MeshParams { h_max: 1.0 / 64.0, ..MeshParams::graded(2f64.powi(-20), 0.5) }, 3, 2.0);
        let opts = QuotientOptions { restarts: 1, ..Default::default() };
        assert_eq!(
            codim_block(&dom, "boundary", 4.0, 0.5, 0.2, &levels, &opts).unwrap_err(),
            Error::ExcludedExponent { codim: 1, alpha: 0.5 }
        );
        let rep = codim_block(&dom, "boundary", 4.0, 1.0, 0.2, &levels, &opts).unwrap();
        assert_eq!(rep.verdict, Verdict::BoundedBelow);
        assert_eq!(rep.beta, Some(0.25));
        let ball = StratifiedDomain::radial_ball(1.0, 3, true).unwrap();
        let rep = codim_block(&ball, "origin", 6.0, -0.5, 0.2, &levels, &opts).unwrap();
        assert_eq!(rep.inequality, "codim_block_log");
        assert!(codim_block(&dom, "boundary", 4.0, 1.0, 0.9, &levels, &opts).is_err());
    }

    #[test]
    fn poincare_matches_interval_constant() {
        let p = MeshParams { h_max: 1.0 / 512.0, ..MeshParams::graded(2f64.powi(-30), 0.5) };
        let rep = local_poincare(&interval(), &one("boundary", 0.0), &[vec![0.5]], &[0.05, 0.1], &p).unwrap();
        let classical = 4.0 / std::f64::consts::PI.powi(2);
        for e in &rep.entries {
            assert!((e.value / classical - 1.0).abs() < 0.2);
        }
    }

    #[test]
    fn poincare_uniform_up_to_the_boundary() {
        let p = MeshParams { h_max: 1.0 / 512.0, ..MeshParams::graded(2f64.powi(-30), 0.5) };
        let centers: Vec<Vec<f64>> = [1e-4, 0.01, 0.05, 0.3, 0.5, 0.999].iter().map(|x| vec![*x]).collect();
        let rep = local_poincare(&interval(), &one("boundary", 0.5), &centers, &[0.02, 0.05, 0.1], &p).unwrap();
        assert!(rep.spread() <= 10.0, "{}", rep.spread());
        assert!(rep.entries.iter().any(|e| e.kind != BallKind::Euclidean));
        assert!(local_poincare(&interval(), &one("boundary", 0.5), &centers, &[0.2], &p).is_err());
    }

    #[test]
    fn moser_ratio_is_scale_invariant() {
        let p = MeshParams { h_max: 1.0 / 512.0, ..MeshParams::graded(2f64.powi(-30), 0.5) };
        let dom = interval();
        let a = one("boundary", 0.5);
        let f = |x: &[f64]| bump(x, &[0.03], 0.04);
        let r1 = moser_ratio(&dom, &a, 2.0, &[0.02], 0.05, f, &p).unwrap();
        let r2 = moser_ratio(&dom, &a, 2.0, &[0.02], 0.05, |x| 3.5 * f(x), &p).unwrap();
        assert!((r1 / r2 - 1.0).abs() < 1e-10);
        assert!(moser_ratio(&dom, &a, 2.0, &[0.5], 0.05, |_| 0.0, &p).is_err());
        let rep = local_moser(&dom, &a, 2.0, &[vec![0.01], vec![0.5]], &[0.05], 5, 1, &p).unwrap();
        assert!(rep.worst.is_finite() && rep.best > 0.0);
        assert!(local_moser(&dom, &a, 1.5, &[vec![0.5]], &[0.05], 5, 1, &p).is_err());
    }

    #[test]
    fn log_sobolev_slope() {
        let dom = interval();
        let spec = example_iii(&dom).unwrap();
        let form = DiscreteForm::build(
            &dom,
            &spec,
            &MeshParams { h_max: 1.0 / 256.0, ..MeshParams::graded(2f64.powi(-30), 0.5) },
        )
        .unwrap();
        let gs = solve_ground_state(&form, 1e-12).unwrap();
        let mut samples = boundary_concentrated(&form, &gs, "boundary", &crate::heat::log_grid(1e-5, 1.0, 40)).unwrap();
        samples.extend(random_bump_mixtures(&form, &gs, 20, 3));
        let eps = crate::heat::log_grid(1e-3, 1.0, 8);
        let window = crate::heat::log_grid(1e-5, 1e-2, 8);
        let rep = weighted_log_sobolev(&form, &spec.predicted, &eps, &window, &samples).unwrap();
        assert_eq!(rep.coefficient, 0.5);
        assert!(rep.k_hat.is_finite());
        assert!(rep.slope_error() < 0.05, "{}", rep.slope);
    }

    fn quotient(k: &BandedSym, w: &[f64], q: f64, u: &[f64]) -> f64 {
        k.form(u, u) / lq_norm_sq(w, u, q)
    }

    proptest! {
        #[test]
        fn lq_admissibility_matches_beta(alpha in -2.0f64..2.0, n in 2usize..8, q in 2.01f64..6.0) {
            let beta = beta_exponent(alpha, n, q);
            prop_assert_eq!(lq_admissible(alpha, n, q), 2.0 * alpha >= q * beta - 1e-12);
        }

        #[test]
        fn thresholds_decrease_in_q(k in 1usize..6, extra in 0usize..4, q1 in 2.0f64..4.0, dq in 0.0f64..2.0) {
            let n = k + extra;
            prop_assert!(sobolev_threshold(k, n, q1 + dq) <= sobolev_threshold(k, n, q1) + 1e-14);
        }

        #[test]
        fn quotient_is_homogeneous(s in 1e-3f64..1e3, q in 2.0f64..6.0, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let mut k = BandedSym::zeros(n, 1);
            for i in 0..n {
                k.add(i, i, 2.0);
                if i + 1 < n {
                    k.add(i, i + 1, -1.0);
                }
            }
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let su: Vec<f64> = u.iter().map(|x| s * x).collect();
            let a = quotient(&k, &w, q, &u);
            let b = quotient(&k, &w, q, &su);
            prop_assert!((a / b - 1.0).abs() < 1e-10);
        }

        #[test]
        fn inverse_power_never_increases(seed in 0u64..50, q in 2.5f64..6.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 20;
            let mut k = BandedSym::zeros(n, 1);
            for i in 0..n {
                k.add(i, i, 2.5);
                if i + 1 < n {
                    k.add(i, i + 1, -1.0);
                }
            }
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let before = quotient(&k, &w, q, &u);
            let out = minimize_power_quotient(&k, &w, q, &u, 1e-12, 1).unwrap();
            prop_assert!(out.value <= before * (1.0 + 1e-12));
        }
    }
}
