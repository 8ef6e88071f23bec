//! Ground states, boundary exponent fits, the ground-state transform identity
//! and boundary-layer eigenvalues.

use serde::{Deserialize, Serialize};

use crate::discretize::{coefficient_at, Axis, DiscreteForm, GradedMesh, Grading, Jacobian, MeshParams, Weight};
use crate::error::{Error, Result};
use crate::geometry::{Coord, Exponents, Shape, StratifiedDomain, StratumGeometry, Target};
use crate::linalg::{inverse_iteration, BandedSym};

/// First zero of the Bessel function `J_0`.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassKind {
    Consistent,
    Lumped,
}

impl MassKind {
    pub fn matrix(self, form: &DiscreteForm) -> BandedSym {
        match self {
            MassKind::Consistent => form.mass.clone(),
            MassKind::Lumped => form.mass.lumped(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedExponent {
    pub label: String,
    pub alpha: f64,
    pub predicted: Option<f64>,
    pub r_lo: f64,
    pub r_hi: f64,
    pub r_squared: f64,
    pub samples: usize,
    /// `max / min` of `φ₁ / ∏ d^α̂` over the window.
    pub two_sided_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub lambda1: f64,
    /// Free-node values, max-normalized.
    pub phi1: Vec<f64>,
    pub min_value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub mass: MassKind,
    pub fitted: Vec<FittedExponent>,
}

/// Smallest eigenpair of `(A - P, M)` with the consistent mass.
pub fn solve_ground_state(form: &DiscreteForm, tol: f64) -> Result<GroundState> {
    solve_ground_state_with(form, tol, MassKind::Consistent, None)
}

pub fn solve_ground_state_with(
    form: &DiscreteForm,
    tol: f64,
    mass: MassKind,
    shift: Option<f64>,
) -> Result<GroundState> {
    let k = form.operator();
    let m = mass.matrix(form);
    let ep = inverse_iteration(&k, &m, Some(shift.unwrap_or(0.0)), tol, 2000, &[], None)?;
    let mut phi = ep.vector;
    if phi.iter().sum::<f64>() < 0.0 {
        phi.iter_mut().for_each(|x| *x = -*x);
    }
    let max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    phi.iter_mut().for_each(|x| *x /= max);
    let min_value = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(GroundState {
        lambda1: ep.value,
        phi1: phi,
        min_value,
        residual: ep.backward_error,
        iterations: ep.iterations,
        mass,
        fitted: Vec::new(),
    })
}

/// Extrapolates two values with errors of order `h^p`, the second on a mesh
/// twice as fine.
pub fn richardson(coarse: f64, fine: f64, p: f64) -> f64 {
    fine + (fine - coarse) / (2f64.powf(p) - 1.0)
}

/// Fails when a sequence of first eigenvalues keeps falling without settling.
pub fn check_bounded_below(lambdas: &[f64]) -> Result<()> {
    if lambdas.len() < 3 {
        return Ok(());
    }
    let n = lambdas.len();
    let d1 = lambdas[n - 2] - lambdas[n - 3];
    let d2 = lambdas[n - 1] - lambdas[n - 2];
    let scale = lambdas[n - 1].abs().max(1.0);
    if d1 < 0.0 && d2 < 0.0 && d2.abs() > 0.5 * d1.abs() && d2.abs() > 1e-6 * scale {
        return Err(Error::NotBoundedBelow(lambdas.to_vec()));
    }
    Ok(())
}

/// Free nodes on a ray transversal to a stratum with their distance to it,
/// sorted by distance.
fn transversal_ray(form: &DiscreteForm, label: &str) -> Result<Vec<(usize, f64)>> {
    let dom = &form.domain;
    let mesh = &form.mesh;
    let s = dom.stratum(label)?;
    let (axis, end) = match (&dom.shape, &s.geometry) {
        (Shape::Interval { a, .. }, StratumGeometry::FullBoundary) => (0, *a),
        (Shape::Interval { .. }, StratumGeometry::FlatPiece(f)) => (0, f[0].1),
        (Shape::Interval { .. }, StratumGeometry::Point(p)) => (0, p[0]),
        (Shape::Rectangle { .. }, StratumGeometry::FullBoundary) => (0, 0.0),
        (Shape::Rectangle { .. }, StratumGeometry::FlatPiece(f)) if f.len() == 1 => f[0],
        (Shape::Disc { radius } | Shape::RadialBall { radius, .. }, StratumGeometry::FullBoundary) => (0, *radius),
        (Shape::Disc { .. } | Shape::RadialBall { .. }, StratumGeometry::Point(_)) => (0, 0.0),
        _ => return Err(Error::Unsupported(format!("no transversal ray for `{label}`"))),
    };
    let ax = &mesh.axes[axis];
    let mid_axis = 0.5 * (ax.lo + ax.hi);
    let mut idx = vec![0usize; mesh.dimension()];
    if mesh.dimension() == 2 {
        let other = 1 - axis;
        let o = &mesh.axes[other];
        let centre = 0.5 * (o.lo + o.hi);
        idx[other] = (0..o.nodes.len())
            .min_by(|i, j| (o.nodes[*i].value() - centre).abs().total_cmp(&(o.nodes[*j].value() - centre).abs()))
            .unwrap_or(0);
    }
    let mut out = Vec::new();
    for (i, c) in ax.nodes.iter().enumerate() {
        let near_end = if end <= mid_axis { c.value() <= mid_axis } else { c.value() >= mid_axis };
        if !near_end {
            continue;
        }
        idx[axis] = i;
        let node = mesh.node_at(&idx);
        if let Some(f) = mesh.free_index(node) {
            let d = dom.stratum_distance_coords(s, &mesh.node_coords(node));
            if d > 0.0 {
                out.push((f, d));
            }
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Default fit window `[max(10 h_min, 1e-4), β/4]` for a stratum.
pub fn default_window(form: &DiscreteForm, label: &str) -> (f64, f64) {
    let h = form.mesh.grading.get(label).map(|g| g.h_min).unwrap_or(form.mesh.h_min);
    ((10.0 * h).max(1e-4), form.domain.localization_beta / 4.0)
}

/// Slopes of `log φ₁` against `log d_S` over dyadic radii in the window,
/// after dividing out the other strata's factors.
pub fn fit_exponents(form: &DiscreteForm, gs: &GroundState, window: Option<(f64, f64)>) -> Result<Vec<FittedExponent>> {
    let dom = &form.domain;
    let labels: Vec<String> = dom.strata.iter().map(|s| s.label.clone()).collect();
    let mut current: Exponents = form.spec.predicted.clone();
    for l in &labels {
        current.entry(l.clone()).or_insert(0.0);
    }
    let coords = form.free_coords();
    let mut results: Vec<FittedExponent> = Vec::new();
    for _ in 0..2 {
        results.clear();
        for label in &labels {
            let (r_lo, r_hi) = window.unwrap_or_else(|| default_window(form, label));
            let ray = transversal_ray(form, label)?;
            let corrected = |f: usize, alphas: &Exponents, skip: Option<&str>| -> f64 {
                let mut v = gs.phi1[f].ln();
                for (l, a) in alphas {
                    if Some(l.as_str()) != skip && *a != 0.0 {
                        let s = dom.stratum(l).expect("label from domain");
                        v -= a * dom.stratum_distance_coords(s, &coords[f]).ln();
                    }
                }
                v
            };
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut r = r_lo;
            while r <= r_hi * (1.0 + 1e-12) {
                if let Some(pos) = ray.windows(2).position(|w| w[0].1 <= r && r <= w[1].1) {
                    let (f0, d0) = ray[pos];
                    let (f1, d1) = ray[pos + 1];
                    let y0 = corrected(f0, &current, Some(label));
                    let y1 = corrected(f1, &current, Some(label));
                    let s = (r.ln() - d0.ln()) / (d1.ln() - d0.ln());
                    let y = y0 + s * (y1 - y0);
                    if y.is_finite() {
                        xs.push(r.ln());
                        ys.push(y);
                    }
                }
                r *= 2.0;
            }
            if xs.len() < 8 {
                return Err(Error::WindowTooNarrow(xs.len()));
            }
            let (slope, _, r2) = least_squares(&xs, &ys);
            results.push(FittedExponent {
                label: label.clone(),
                alpha: slope,
                predicted: form.spec.predicted.get(label).copied(),
                r_lo,
                r_hi,
                r_squared: r2,
                samples: xs.len(),
                two_sided_ratio: f64::NAN,
            });
        }
        for f in &results {
            current.insert(f.label.clone(), f.alpha);
        }
    }
    for f in results.iter_mut() {
        let ray = transversal_ray(form, &f.label)?;
        let vals: Vec<f64> = ray
            .iter()
            .filter(|(_, d)| *d >= f.r_lo && *d <= f.r_hi)
            .map(|(node, _)| {
                let mut v = gs.phi1[*node];
                for (l, a) in &current {
                    let s = dom.stratum(l).expect("label from domain");
                    v /= dom.stratum_distance_coords(s, &coords[*node]).powf(*a);
                }
                v
            })
            .collect();
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        f.two_sided_ratio = hi / lo;
    }
    Ok(results)
}

/// Largest relative defect of `Q[u] - λ₁‖u‖² = ∫φ₁² a∇(u/φ₁)·∇(u/φ₁)` over
/// the samples (free-node vectors).
pub fn ground_state_identity(form: &DiscreteForm, gs: &GroundState, samples: &[Vec<f64>]) -> Result<f64> {
    let mesh = &form.mesh;
    let full = mesh.without_dirichlet()?;
    let phi = mesh.expand(&gs.phi1);
    let weight = Weight::NodalSquare(phi.clone());
    let dom = &form.domain;
    let coef = &form.spec.coefficient;
    let a_phi =
        full.stiffness_matrix(form.quad_order, &|qp| weight.eval(dom, qp), &|qp| coefficient_at(coef, dom, qp))?;
    let m = gs.mass.matrix(form);
    let mut worst = 0.0f64;
    for u in samples {
        let uf = mesh.expand(u);
        let mut v = vec![0.0; uf.len()];
        for node in 0..uf.len() {
            if mesh.free_index(node).is_some() {
                if uf[node] != 0.0 && phi[node].abs() < 1e-300 {
                    return Err(Error::DivisionUnderflow(node));
                }
                if uf[node] != 0.0 {
                    v[node] = uf[node] / phi[node];
                }
            }
        }
        for node in 0..uf.len() {
            if mesh.free_index(node).is_none() {
                v[node] = v[mesh.nearest_free(node)];
            }
        }
        let q = form.energy(u);
        let norm2 = m.form(u, u);
        let transformed = a_phi.form(&v, &v);
        let defect = (q - gs.lambda1 * norm2 - transformed).abs() / (q.abs() + norm2);
        worst = worst.max(defect);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLayerLevel {
    pub delta: f64,
    pub mu1: f64,
    /// Closed form where available (flat faces: `j_{0,1}² / δ²`).
    pub exact: Option<f64>,
    /// `∫(d|∇v|² - Δd v²/2) / ∫ X(d)² v² / d` at the minimizer.
    pub refined_quotient: f64,
}

/// `μ₁(Ω_δ)` for the weighted problem with weight `d` on the layer
/// `{d < δ}`, free on the boundary and Dirichlet on `{d = δ}`.
pub fn boundary_layer_mu1(
    dom: &StratifiedDomain,
    deltas: &[f64],
    params: &MeshParams,
) -> Result<Vec<BoundaryLayerLevel>> {
    if deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::ParameterOutOfRange("layer widths must decrease".into()));
    }
    let target = Target::Codim(1);
    dom.select(&target)?;
    let mut out = Vec::new();
    for &delta in deltas {
        if !(delta > 0.0 && delta < dom.localization_beta) {
            return Err(Error::RadiusTooLarge { radius: delta, beta: dom.localization_beta });
        }
        let h_max = params.h_max.min(delta / 16.0);
        let grading = params.grading_for(&dom.strata[0].label)?;
        let grading = Grading { layers: grading.layers.max(1), ..grading };
        let (axis, jacobian, laplacian_d, exact): (Axis, Jacobian, Box<dyn Fn(&[Coord]) -> f64>, Option<f64>) =
            match &dom.shape {
                Shape::Interval { a, .. } => (
                    Axis::graded(*a, a + delta, Some(grading), None, h_max, [false, true])?,
                    Jacobian::Flat,
                    Box::new(|_| 0.0),
                    Some((BESSEL_J0_FIRST_ZERO / delta).powi(2)),
                ),
                Shape::Disc { radius } | Shape::RadialBall { radius, .. } => {
                    let n = dom.dimension as f64;
                    (
                        Axis::graded(radius - delta, *radius, None, Some(grading), h_max, [true, false])?,
                        Jacobian::Radial { ambient_n: dom.dimension },
                        Box::new(move |c: &[Coord]| -(n - 1.0) / c[0].value()),
                        None,
                    )
                }
                Shape::Rectangle { .. } => {
                    return Err(Error::Unsupported("boundary layers of boxes".into()));
                }
            };
        let mesh = GradedMesh::from_axes(vec![axis], jacobian, Default::default(), params.max_nodes)?;
        let w_d = Weight::distance(target.clone(), 1.0);
        let order = params.quad_order;
        let stiff = mesh.stiffness_matrix(order, &|qp| w_d.eval(dom, qp), &|_| [[1.0, 0.0], [0.0, 1.0]])?;
        let pot = mesh.mass_matrix(order, &|qp| Ok(-0.5 * laplacian_d(qp.coords)))?;
        let k = stiff.combine(1.0, &pot, 1.0);
        let m = mesh.mass_matrix(order, &|qp| w_d.eval(dom, qp))?;
        let ep = inverse_iteration(&k, &m, Some(0.0), 1e-12, 2000, &[], None)?;
        let w_x = Weight::Distance { target: target.clone(), power: -1.0, log_power: 2.0, log_scale: Some(1.0) };
        let mx = mesh.mass_matrix_log_tail(order, &|qp| w_x.eval(dom, qp), 1.0, 2.0)?;
        let v = &ep.vector;
        let refined = k.form(v, v) / mx.form(v, v);
        out.push(BoundaryLayerLevel { delta, mu1: ep.value, exact, refined_quotient: refined });
    }
    Ok(out)
}
