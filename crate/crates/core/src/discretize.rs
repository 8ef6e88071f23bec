//! Graded tensor-product meshes and piecewise-linear assembly of the
//! quadratic form, weighted masses and weighted stiffness matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sphere_measure, Coord, Exponents, Shape, StratifiedDomain, StratumGeometry, Target};
use crate::linalg::BandedSym;
use crate::potentials::{Coefficient, PotentialSpec};
use crate::quadrature::{anchored_rule_with_depth, x_factor, LogTail};

/// How far (in e-folds below the cell width) touching cells are resolved.
const TOUCHING_DEPTH: f64 = 80.0;

/// Geometric grading toward one end of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grading {
    pub h_min: f64,
    pub rho: f64,
    pub layers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradingOverride {
    pub h_min: Option<f64>,
    pub rho: Option<f64>,
    pub layers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshParams {
    pub h_min: f64,
    pub rho: f64,
    /// Geometric layers per graded stratum; derived from `h_max / h_min` when absent.
    pub layers: Option<usize>,
    /// Cell size away from the strata.
    pub h_max: f64,
    pub overrides: BTreeMap<String, GradingOverride>,
    pub max_nodes: usize,
    pub quad_order: usize,
}

impl Default for MeshParams {
    fn default() -> Self {
        Self {
            h_min: 2f64.powi(-20),
            rho: 0.5,
            layers: None,
            h_max: 1.0 / 32.0,
            overrides: BTreeMap::new(),
            max_nodes: 1_000_000,
            quad_order: 4,
        }
    }
}

impl MeshParams {
    pub fn uniform(h: f64) -> Self {
        Self { h_min: h, h_max: h, layers: Some(0), ..Self::default() }
    }

    pub fn graded(h_min: f64, rho: f64) -> Self {
        Self { h_min, rho, ..Self::default() }
    }

    pub fn with_override(mut self, label: &str, h_min: f64, rho: f64) -> Self {
        self.overrides.insert(label.to_string(), GradingOverride { h_min: Some(h_min), rho: Some(rho), layers: None });
        self
    }

    pub fn grading_for(&self, label: &str) -> Result<Grading> {
        let o = self.overrides.get(label).cloned().unwrap_or_default();
        let h_min = o.h_min.unwrap_or(self.h_min);
        let rho = o.rho.unwrap_or(self.rho);
        if !(h_min > 0.0 && h_min.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("h_min = {h_min} for `{label}`")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::ParameterOutOfRange(format!("rho = {rho} for `{label}`")));
        }
        let layers = match o.layers.or(self.layers) {
            Some(l) => l,
            None => {
                let x = (self.h_max / h_min).log2() / (1.0 / rho).log2();
                (x - 1e-9).ceil().max(0.0) as usize
            }
        };
        Ok(Grading { h_min, rho, layers })
    }
}

/// One axis of a tensor mesh; nodes are anchored at the nearer graded end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub nodes: Vec<Coord>,
    pub lo: f64,
    pub hi: f64,
    /// Dirichlet flags at `lo` and `hi`.
    pub dirichlet: [bool; 2],
}

impl Axis {
    pub fn uniform(lo: f64, hi: f64, cells: usize, dirichlet: [bool; 2]) -> Self {
        let cells = cells.max(1);
        let mut nodes: Vec<Coord> =
            (0..=cells).map(|k| Coord::plain(lo + (hi - lo) * k as f64 / cells as f64)).collect();
        nodes[0] = Coord::anchored(lo, 0.0);
        nodes[cells] = Coord::anchored(hi, 0.0);
        Self { nodes, lo, hi, dirichlet }
    }

    pub fn graded(
        lo: f64,
        hi: f64,
        grade_lo: Option<Grading>,
        grade_hi: Option<Grading>,
        h_max: f64,
        dirichlet: [bool; 2],
    ) -> Result<Self> {
        if !(hi > lo) || !(h_max > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("axis ({lo}, {hi}) with h_max {h_max}")));
        }
        let len = hi - lo;
        let limit = if grade_lo.is_some() && grade_hi.is_some() { 0.45 * len } else { 0.9 * len };
        let zl = grade_lo.map(|g| zone(g, h_max, limit)).unwrap_or_default();
        let zr = grade_hi.map(|g| zone(g, h_max, limit)).unwrap_or_default();
        let a = zl.last().copied().unwrap_or(0.0);
        let b = zr.last().copied().unwrap_or(0.0);
        let mid = len - a - b;
        let n_mid = ((mid / h_max) - 1e-9).ceil().max(1.0) as usize;
        let mut nodes = vec![Coord::anchored(lo, 0.0)];
        nodes.extend(zl.iter().map(|t| Coord::anchored(lo, *t)));
        let start = lo + a;
        for k in 1..n_mid {
            nodes.push(Coord::plain(start + mid * k as f64 / n_mid as f64));
        }
        nodes.extend(zr.iter().rev().map(|t| Coord::anchored(hi, -t)));
        nodes.push(Coord::anchored(hi, 0.0));
        Ok(Self { nodes, lo, hi, dirichlet })
    }

    pub fn cell_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn width(&self, i: usize) -> f64 {
        self.nodes[i].delta(self.nodes[i + 1])
    }

    fn is_free(&self, i: usize) -> bool {
        !((i == 0 && self.dirichlet[0]) || (i + 1 == self.nodes.len() && self.dirichlet[1]))
    }
}

fn zone(g: Grading, cap: f64, limit: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.layers);
    let mut t = 0.0;
    let mut h = g.h_min;
    for _ in 0..g.layers {
        if h > cap * (1.0 + 1e-12) || t + h > limit {
            break;
        }
        t += h;
        out.push(t);
        h /= g.rho;
    }
    out
}

/// Volume factor of the computational coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Jacobian {
    Flat,
    /// `|S^{n-1}| ρ^{n-1}` for radial reductions of an `n`-ball.
    Radial {
        ambient_n: usize,
    },
}

impl Jacobian {
    pub fn factor(self, c: &[Coord]) -> f64 {
        match self {
            Jacobian::Flat => 1.0,
            Jacobian::Radial { ambient_n } => sphere_measure(ambient_n - 1) * c[0].value().powi(ambient_n as i32 - 1),
        }
    }

    pub fn exponent(self) -> usize {
        match self {
            Jacobian::Flat => 0,
            Jacobian::Radial { ambient_n } => ambient_n - 1,
        }
    }
}

/// Quadrature point handed to weight callbacks.
pub struct QuadPoint<'a> {
    pub coords: &'a [Coord],
    /// Full node indices of the cell, in local order.
    pub nodes: &'a [usize],
    /// Local basis values at the point.
    pub basis: &'a [f64],
}

impl QuadPoint<'_> {
    /// Piecewise-linear interpolant of a full nodal vector.
    pub fn interpolate(&self, values: &[f64]) -> f64 {
        self.nodes.iter().zip(self.basis).map(|(n, b)| values[*n] * b).sum()
    }
}

struct AxisPoint {
    c: Coord,
    w: f64,
    n: [f64; 2],
    dn: [f64; 2],
}

/// Tensor-product mesh (one or two computational axes) with Dirichlet nodes
/// eliminated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedMesh {
    pub axes: Vec<Axis>,
    pub jacobian: Jacobian,
    pub grading: BTreeMap<String, Grading>,
    pub h_min: f64,
    fast: usize,
    free_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
}

impl GradedMesh {
    pub fn from_axes(
        axes: Vec<Axis>,
        jacobian: Jacobian,
        grading: BTreeMap<String, Grading>,
        max_nodes: usize,
    ) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Unsupported(format!("{} computational axes", axes.len())));
        }
        let total: usize = axes.iter().map(|a| a.nodes.len()).product();
        if total > max_nodes {
            return Err(Error::BudgetExceeded { nodes: total, cap: max_nodes });
        }
        let fast = if axes.len() == 2 && axes[1].nodes.len() < axes[0].nodes.len() { 1 } else { 0 };
        let h_min =
            axes.iter().flat_map(|a| (0..a.cell_count()).map(move |i| a.width(i))).fold(f64::INFINITY, f64::min);
        let mut mesh = Self { axes, jacobian, grading, h_min, fast, free_index: Vec::new(), free_nodes: Vec::new() };
        let mut free_index = vec![None; total];
        let mut free_nodes = Vec::new();
        for node in 0..total {
            let idx = mesh.node_axes(node);
            if idx.iter().zip(&mesh.axes).all(|(i, a)| a.is_free(*i)) {
                free_index[node] = Some(free_nodes.len());
                free_nodes.push(node);
            }
        }
        mesh.free_index = free_index;
        mesh.free_nodes = free_nodes;
        Ok(mesh)
    }

    /// Computational dimension.
    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn node_count(&self) -> usize {
        self.free_index.len()
    }

    pub fn free_count(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_index[node]
    }

    /// Per-axis indices of a full node.
    pub fn node_axes(&self, node: usize) -> Vec<usize> {
        if self.axes.len() == 1 {
            return vec![node];
        }
        let nf = self.axes[self.fast].nodes.len();
        let (f, s) = (node % nf, node / nf);
        if self.fast == 0 {
            vec![f, s]
        } else {
            vec![s, f]
        }
    }

    pub fn node_at(&self, idx: &[usize]) -> usize {
        if self.axes.len() == 1 {
            return idx[0];
        }
        let nf = self.axes[self.fast].nodes.len();
        let slow = 1 - self.fast;
        idx[self.fast] + nf * idx[slow]
    }

    pub fn node_coords(&self, node: usize) -> Vec<Coord> {
        self.node_axes(node).iter().zip(&self.axes).map(|(i, a)| a.nodes[*i]).collect()
    }

    pub fn node_position(&self, node: usize) -> Vec<f64> {
        self.node_coords(node).iter().map(|c| c.value()).collect()
    }

    /// Full nodal vector from free values, zero on Dirichlet nodes.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count()];
        for (k, node) in self.free_nodes.iter().enumerate() {
            out[*node] = free[k];
        }
        out
    }

    /// The same nodes with every node free.
    pub fn without_dirichlet(&self) -> Result<Self> {
        let mut axes = self.axes.clone();
        for a in &mut axes {
            a.dirichlet = [false, false];
        }
        Self::from_axes(axes, self.jacobian, self.grading.clone(), usize::MAX)
    }

    /// Free node reached by stepping each axis index off a Dirichlet end.
    pub fn nearest_free(&self, node: usize) -> usize {
        let idx: Vec<usize> = self
            .node_axes(node)
            .iter()
            .zip(&self.axes)
            .map(|(i, a)| {
                let last = a.nodes.len() - 1;
                let lo = usize::from(a.dirichlet[0]);
                let hi = if a.dirichlet[1] { last - 1 } else { last };
                (*i).clamp(lo, hi)
            })
            .collect();
        self.node_at(&idx)
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|n| full[*n]).collect()
    }

    /// Free-node vector of `f` evaluated at node coordinates.
    pub fn sample(&self, f: impl Fn(&[Coord]) -> f64) -> Vec<f64> {
        self.free_nodes.iter().map(|n| f(&self.node_coords(*n))).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.cell_count()).product()
    }

    fn axis_rules(&self, order: usize, tail: Option<(f64, f64)>) -> Vec<Vec<Vec<AxisPoint>>> {
        self.axes.iter().map(|axis| (0..axis.cell_count()).map(|i| axis_rule(axis, i, order, tail)).collect()).collect()
    }

    /// `∫ w φ_i φ_j J` over free nodes.
    pub fn mass_matrix(&self, order: usize, w: &dyn Fn(&QuadPoint) -> Result<f64>) -> Result<BandedSym> {
        self.integrate(order, w, None, None)
    }

    /// As [`GradedMesh::mass_matrix`] for weights behaving like
    /// `X(t/scale)^exponent / t` at a touching end, adding the analytic
    /// remainder below the resolved depth.
    pub fn mass_matrix_log_tail(
        &self,
        order: usize,
        w: &dyn Fn(&QuadPoint) -> Result<f64>,
        scale: f64,
        exponent: f64,
    ) -> Result<BandedSym> {
        self.integrate(order, w, None, Some((scale, exponent)))
    }

    /// `∫ w (a ∇φ_i · ∇φ_j) J` over free nodes.
    pub fn stiffness_matrix(
        &self,
        order: usize,
        w: &dyn Fn(&QuadPoint) -> Result<f64>,
        coef: &dyn Fn(&QuadPoint) -> [[f64; 2]; 2],
    ) -> Result<BandedSym> {
        self.integrate(order, w, Some(coef), None)
    }

    fn integrate(
        &self,
        order: usize,
        w: &dyn Fn(&QuadPoint) -> Result<f64>,
        coef: Option<&dyn Fn(&QuadPoint) -> [[f64; 2]; 2]>,
        tail: Option<(f64, f64)>,
    ) -> Result<BandedSym> {
        let rules = self.axis_rules(order, tail);
        let bw = if self.axes.len() == 1 { 1 } else { self.axes[self.fast].nodes.len() + 1 };
        let mut out = BandedSym::zeros(self.free_count(), bw);
        let dim = self.axes.len();
        let cells: Vec<Vec<usize>> = if dim == 1 {
            (0..self.axes[0].cell_count()).map(|i| vec![i]).collect()
        } else {
            let mut v = Vec::with_capacity(self.cell_count());
            for j in 0..self.axes[1].cell_count() {
                for i in 0..self.axes[0].cell_count() {
                    v.push(vec![i, j]);
                }
            }
            v
        };
        let nloc = 1 << dim;
        let mut nodes = vec![0usize; nloc];
        let mut basis = vec![0.0; nloc];
        let mut grads = vec![[0.0; 2]; nloc];
        let mut coords = vec![Coord::plain(0.0); dim];
        for (cell_id, cell) in cells.iter().enumerate() {
            for (k, node) in nodes.iter_mut().enumerate() {
                let idx: Vec<usize> = (0..dim).map(|d| cell[d] + ((k >> d) & 1)).collect();
                *node = self.node_at(&idx);
            }
            let free: Vec<usize> = (0..nloc).filter(|k| self.free_index[nodes[*k]].is_some()).collect();
            if free.is_empty() {
                continue;
            }
            let mut local = vec![0.0; nloc * nloc];
            let r0 = &rules[0][cell[0]];
            let r1: &[AxisPoint] = if dim == 2 { &rules[1][cell[1]] } else { &[] };
            let outer = if dim == 2 { r1.len() } else { 1 };
            for q1 in 0..outer {
                for p0 in r0 {
                    let (wq, n1, dn1) = if dim == 2 {
                        let p1 = &r1[q1];
                        coords[1] = p1.c;
                        (p0.w * p1.w, p1.n, p1.dn)
                    } else {
                        (p0.w, [1.0, 1.0], [0.0, 0.0])
                    };
                    coords[0] = p0.c;
                    for k in 0..nloc {
                        let a = k & 1;
                        let b = (k >> 1) & 1;
                        let nb = if dim == 2 { n1[b] } else { 1.0 };
                        basis[k] = p0.n[a] * nb;
                        grads[k] = [p0.dn[a] * nb, if dim == 2 { p0.n[a] * dn1[b] } else { 0.0 }];
                    }
                    let qp = QuadPoint { coords: &coords, nodes: &nodes, basis: &basis };
                    let scale = wq * w(&qp)? * self.jacobian.factor(&coords);
                    match coef {
                        None => {
                            for &i in &free {
                                for &j in &free {
                                    local[i * nloc + j] += scale * basis[i] * basis[j];
                                }
                            }
                        }
                        Some(c) => {
                            let a = c(&qp);
                            for &i in &free {
                                for &j in &free {
                                    let gi = grads[i];
                                    let gj = grads[j];
                                    let v = if dim == 1 {
                                        a[0][0] * gi[0] * gj[0]
                                    } else {
                                        gi[0] * (a[0][0] * gj[0] + a[0][1] * gj[1])
                                            + gi[1] * (a[1][0] * gj[0] + a[1][1] * gj[1])
                                    };
                                    local[i * nloc + j] += scale * v;
                                }
                            }
                        }
                    }
                }
            }
            for &i in &free {
                for &j in &free {
                    let v = local[i * nloc + j];
                    if !v.is_finite() {
                        return Err(Error::QuadratureBreakdown { cell: cell_id });
                    }
                    let fi = self.free_index[nodes[i]].unwrap();
                    let fj = self.free_index[nodes[j]].unwrap();
                    if fi >= fj && v != 0.0 {
                        out.add(fi, fj, v);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Keeps the deepest point above `1e-150`, where inverse squares stay finite.
fn touching_depth(t1: f64) -> f64 {
    TOUCHING_DEPTH.min(t1.ln() + 345.0).max(4.0)
}

fn axis_rule(axis: &Axis, i: usize, order: usize, tail: Option<(f64, f64)>) -> Vec<AxisPoint> {
    let (c0, c1) = (axis.nodes[i], axis.nodes[i + 1]);
    let h = c0.delta(c1);
    let dl = c0.dist_to(axis.lo);
    let dh = c1.dist_to(axis.hi);
    let points: Vec<Coord>;
    let weights: Vec<f64>;
    let log_tail = |t1: f64| tail.map(|(scale, exponent)| LogTail { offset: 1.0 + scale.ln() - t1.ln(), exponent });
    if dl <= dh {
        let t1 = c1.dist_to(axis.lo);
        let rule = anchored_rule_with_depth(dl, t1, order, log_tail(t1), touching_depth(t1));
        points = rule.iter().map(|p| Coord::anchored(axis.lo, p.t)).collect();
        weights = rule.iter().map(|p| p.w).collect();
    } else {
        let t1 = c0.dist_to(axis.hi);
        let rule = anchored_rule_with_depth(dh, t1, order, log_tail(t1), touching_depth(t1));
        points = rule.iter().map(|p| Coord::anchored(axis.hi, -p.t)).collect();
        weights = rule.iter().map(|p| p.w).collect();
    }
    points
        .into_iter()
        .zip(weights)
        .map(|(c, w)| AxisPoint { c, w, n: [c.delta(c1) / h, c0.delta(c) / h], dn: [-1.0 / h, 1.0 / h] })
        .collect()
}

/// Mesh graded toward every stratum of `dom`, with Dirichlet nodes on the
/// strata and at a removed origin. Ends of an interval or box without a
/// stratum carry natural boundary conditions.
pub fn build_mesh(dom: &StratifiedDomain, params: &MeshParams) -> Result<GradedMesh> {
    if !(params.h_max > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("h_max = {}", params.h_max)));
    }
    for label in params.overrides.keys() {
        dom.stratum(label)?;
    }
    let mut grading = BTreeMap::new();
    for s in &dom.strata {
        grading.insert(s.label.clone(), params.grading_for(&s.label)?);
    }
    let finer = |cur: Option<Grading>, g: Grading| match cur {
        Some(c) if c.h_min <= g.h_min => Some(c),
        _ => Some(g),
    };
    let (axes, jacobian) = match &dom.shape {
        Shape::Interval { a, b } => {
            let (mut glo, mut ghi) = (None, None);
            for s in &dom.strata {
                let g = grading[&s.label];
                match &s.geometry {
                    StratumGeometry::FullBoundary => {
                        glo = finer(glo, g);
                        ghi = finer(ghi, g);
                    }
                    StratumGeometry::FlatPiece(fixed) => {
                        for (_, v) in fixed {
                            if v == a {
                                glo = finer(glo, g)
                            } else {
                                ghi = finer(ghi, g)
                            }
                        }
                    }
                    StratumGeometry::Point(p) => {
                        if p[0] == *a {
                            glo = finer(glo, g)
                        } else {
                            ghi = finer(ghi, g)
                        }
                    }
                }
            }
            let dirichlet = [glo.is_some(), ghi.is_some()];
            (vec![Axis::graded(*a, *b, glo, ghi, params.h_max, dirichlet)?], Jacobian::Flat)
        }
        Shape::Rectangle { widths } => {
            if widths.len() != 2 {
                return Err(Error::Unsupported(format!("{}-dimensional boxes are not meshed", widths.len())));
            }
            let mut ends: Vec<(Option<Grading>, Option<Grading>)> = vec![(None, None); 2];
            for s in &dom.strata {
                let g = grading[&s.label];
                match &s.geometry {
                    StratumGeometry::FullBoundary => {
                        for e in ends.iter_mut() {
                            e.0 = finer(e.0, g);
                            e.1 = finer(e.1, g);
                        }
                    }
                    StratumGeometry::FlatPiece(fixed) => {
                        for (axis, v) in fixed {
                            let e = &mut ends[*axis];
                            if *v == 0.0 {
                                e.0 = finer(e.0, g)
                            } else {
                                e.1 = finer(e.1, g)
                            }
                        }
                    }
                    StratumGeometry::Point(_) => {
                        return Err(Error::Unsupported(format!("meshing toward interior point `{}`", s.label)));
                    }
                }
            }
            let axes = widths
                .iter()
                .zip(ends)
                .map(|(w, (lo, hi))| Axis::graded(0.0, *w, lo, hi, params.h_max, [lo.is_some(), hi.is_some()]))
                .collect::<Result<Vec<_>>>()?;
            (axes, Jacobian::Flat)
        }
        Shape::Disc { radius } | Shape::RadialBall { radius, .. } => {
            let n = dom.dimension;
            let (mut glo, mut ghi, mut origin) = (None, None, false);
            for s in &dom.strata {
                let g = grading[&s.label];
                match &s.geometry {
                    StratumGeometry::Point(_) => {
                        glo = finer(glo, g);
                        origin = true;
                    }
                    _ => ghi = finer(ghi, g),
                }
            }
            let axis = Axis::graded(0.0, *radius, glo, ghi, params.h_max, [origin, true])?;
            (vec![axis], Jacobian::Radial { ambient_n: n })
        }
    };
    GradedMesh::from_axes(axes, jacobian, grading, params.max_nodes)
}

/// Weight function multiplying the integrand of a mass or stiffness matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    Unit,
    /// `∏ d_S^{2α_S}`.
    Strata(Exponents),
    /// `d^power X(d/scale)^log_power`, with `scale` defaulting to the
    /// largest distance to the target.
    Distance {
        target: Target,
        power: f64,
        log_power: f64,
        log_scale: Option<f64>,
    },
    /// Square of the interpolant of a full nodal vector.
    NodalSquare(Vec<f64>),
    Product(Vec<Weight>),
}

impl Weight {
    pub fn distance(target: Target, power: f64) -> Self {
        Weight::Distance { target, power, log_power: 0.0, log_scale: None }
    }

    pub fn eval(&self, dom: &StratifiedDomain, qp: &QuadPoint) -> Result<f64> {
        Ok(match self {
            Weight::Unit => 1.0,
            Weight::Strata(alphas) => dom.weight_at(alphas, qp.coords)?,
            Weight::Distance { target, power, log_power, log_scale } => {
                let d = dom.target_distance_coords(target, qp.coords)?;
                let mut w = if *power == 0.0 { 1.0 } else { d.powf(*power) };
                if *log_power != 0.0 {
                    let scale = match log_scale {
                        Some(s) => *s,
                        None => dom.max_distance(target)?,
                    };
                    w *= x_factor(d / scale).powf(*log_power);
                }
                w
            }
            Weight::NodalSquare(v) => qp.interpolate(v).powi(2),
            Weight::Product(ws) => {
                let mut p = 1.0;
                for w in ws {
                    p *= w.eval(dom, qp)?;
                }
                p
            }
        })
    }
}

/// Assembled matrices of the quadratic form on the free nodes.
#[derive(Debug, Clone)]
pub struct DiscreteForm {
    pub mesh: GradedMesh,
    pub domain: StratifiedDomain,
    pub spec: PotentialSpec,
    /// `∫ a ∇u · ∇u`.
    pub stiffness: BandedSym,
    /// `∫ V u²`.
    pub potential: BandedSym,
    /// `∫ u²`.
    pub mass: BandedSym,
    pub weighted: BTreeMap<String, BandedSym>,
    pub quad_order: usize,
}

/// Evaluates the coefficient field at a quadrature point.
pub(crate) fn coefficient_at(coef: &Coefficient, dom: &StratifiedDomain, qp: &QuadPoint) -> [[f64; 2]; 2] {
    if dom.is_radial() {
        let s = coef.isotropic_scale().unwrap_or(f64::NAN);
        return [[s, 0.0], [0.0, s]];
    }
    let x: Vec<f64> = qp.coords.iter().map(|c| c.value()).collect();
    let a = coef.matrix(&x);
    if x.len() == 1 {
        [[a[(0, 0)], 0.0], [0.0, 0.0]]
    } else {
        [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]]
    }
}

pub fn assemble(
    mesh: GradedMesh,
    dom: &StratifiedDomain,
    spec: &PotentialSpec,
    quad_order: usize,
    weights: &[(String, Weight)],
) -> Result<DiscreteForm> {
    if spec.ambient_n != dom.dimension {
        return Err(Error::InvalidDomain(format!(
            "potential is for n = {} but the domain has n = {}",
            spec.ambient_n, dom.dimension
        )));
    }
    if dom.is_radial() && spec.coefficient.isotropic_scale().is_none() {
        return Err(Error::Unsupported("radial reduction needs isotropic coefficients".into()));
    }
    for t in &spec.terms {
        dom.select(&t.target)?;
    }
    let mut form = DiscreteForm {
        stiffness: BandedSym::zeros(0, 0),
        potential: BandedSym::zeros(0, 0),
        mass: BandedSym::zeros(0, 0),
        weighted: BTreeMap::new(),
        mesh,
        domain: dom.clone(),
        spec: spec.clone(),
        quad_order,
    };
    form.stiffness = form.weighted_stiffness(&Weight::Unit)?;
    form.potential = form.mesh.mass_matrix(quad_order, &|qp| spec.potential_at(dom, qp.coords))?;
    form.mass = form.weighted_mass(&Weight::Unit)?;
    for (name, w) in weights {
        let m = form.weighted_mass(w)?;
        form.weighted.insert(name.clone(), m);
    }
    Ok(form)
}

impl DiscreteForm {
    pub fn build(dom: &StratifiedDomain, spec: &PotentialSpec, params: &MeshParams) -> Result<Self> {
        let mesh = build_mesh(dom, params)?;
        assemble(mesh, dom, spec, params.quad_order, &[])
    }

    /// `A - P`.
    pub fn operator(&self) -> BandedSym {
        self.stiffness.combine(1.0, &self.potential, -1.0)
    }

    /// `Q[u] = uᵀ(A - P)u` for a free-node vector.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.stiffness.form(u, u) - self.potential.form(u, u)
    }

    pub fn weighted_mass(&self, w: &Weight) -> Result<BandedSym> {
        let dom = &self.domain;
        self.mesh.mass_matrix(self.quad_order, &|qp| w.eval(dom, qp))
    }

    pub fn weighted_stiffness(&self, w: &Weight) -> Result<BandedSym> {
        let dom = &self.domain;
        let coef = &self.spec.coefficient;
        self.mesh.stiffness_matrix(self.quad_order, &|qp| w.eval(dom, qp), &|qp| coefficient_at(coef, dom, qp))
    }

    /// Free-node vector of a function of the node coordinates.
    pub fn sample(&self, f: impl Fn(&[Coord]) -> f64) -> Vec<f64> {
        self.mesh.sample(f)
    }

    /// Coordinates of each free node.
    pub fn free_coords(&self) -> Vec<Vec<Coord>> {
        self.mesh.free_nodes().iter().map(|n| self.mesh.node_coords(*n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inverse_iteration;
    use crate::potentials::example_iii;

    #[test]
    fn layer_counts() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let p = MeshParams { h_min: 2f64.powi(-20), rho: 0.5, layers: Some(20), ..MeshParams::default() };
        let mesh = build_mesh(&dom, &p).unwrap();
        assert!(mesh.node_count() <= 2 * 20 + 32 + 1);
        let mut last = 0;
        for k in 10..14 {
            let p = MeshParams::graded(2f64.powi(-k), 0.5);
            let n = build_mesh(&dom, &p).unwrap().node_count();
            if last > 0 {
                assert_eq!(n, last + 2, "one layer per graded end");
            }
            last = n;
        }
    }

    #[test]
    fn nodes_increase_and_first_cell_is_h_min() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let mesh = build_mesh(&dom, &MeshParams::graded(2f64.powi(-200), 0.85)).unwrap();
        let axis = &mesh.axes[0];
        for i in 0..axis.cell_count() {
            assert!(axis.width(i) > 0.0);
        }
        assert_eq!(axis.width(0), 2f64.powi(-200));
        assert_eq!(axis.width(axis.cell_count() - 1), 2f64.powi(-200));
        assert_eq!(mesh.free_count(), mesh.node_count() - 2);
    }

    #[test]
    fn radial_mesh_has_jacobian() {
        let dom = StratifiedDomain::radial_ball(1.0, 3, true).unwrap();
        let mesh = build_mesh(&dom, &MeshParams::graded(1e-6, 0.5)).unwrap();
        assert_eq!(mesh.jacobian.exponent(), 2);
        assert_eq!(mesh.axes[0].width(0), 1e-6);
        assert_eq!(mesh.free_count(), mesh.node_count() - 2);
    }

    #[test]
    fn budget_is_enforced() {
        let dom = StratifiedDomain::rectangle(&[1.0, 1.0]).unwrap();
        let p = MeshParams { max_nodes: 100, ..MeshParams::graded(1e-6, 0.5) };
        assert!(matches!(build_mesh(&dom, &p), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn laplacian_eigenvalue_on_interval() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let spec = PotentialSpec::zero(&dom);
        let form = DiscreteForm::build(&dom, &spec, &MeshParams::uniform(1.0 / 1024.0)).unwrap();
        let h = 1.0 / 1024.0;
        assert!((form.stiffness.get(5, 5) - 2.0 / h).abs() < 1e-9 / h);
        assert!((form.stiffness.get(5, 4) + 1.0 / h).abs() < 1e-9 / h);
        let ep = inverse_iteration(&form.stiffness, &form.mass, Some(0.0), 1e-12, 500, &[], None).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((ep.value / pi2 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn weighted_mass_matches_antiderivative() {
        // ∫_0^1 x (1 - x)^2 dx = 1/12 with u = 1 - x on nodes including x = 0
        let axis =
            Axis::graded(0.0, 1.0, Some(Grading { h_min: 1e-8, rho: 0.5, layers: 40 }), None, 0.05, [false, true])
                .unwrap();
        let mesh = GradedMesh::from_axes(vec![axis], Jacobian::Flat, BTreeMap::new(), 10_000).unwrap();
        let dom = StratifiedDomain::interval_with_ends(0.0, 1.0).unwrap();
        let w = Weight::distance(Target::Stratum("left".into()), 1.0);
        let m = mesh.mass_matrix(4, &|qp| w.eval(&dom, qp)).unwrap();
        let u = mesh.sample(|c| 1.0 - c[0].value());
        assert!((m.form(&u, &u) - 1.0 / 12.0).abs() < 1e-10);
    }

    #[test]
    fn hardy_potential_is_finite_on_deep_meshes() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let spec = example_iii(&dom).unwrap();
        let form = DiscreteForm::build(&dom, &spec, &MeshParams::graded(2f64.powi(-200), 0.85)).unwrap();
        let k = form.operator();
        assert!(k.diagonal().iter().all(|v| v.is_finite() && *v > 0.0));
        let u = form.sample(|c| (std::f64::consts::PI * c[0].value()).sin());
        let q = form.energy(&u);
        assert!(q.is_finite() && q > 0.0);
    }

    #[test]
    fn galerkin_consistency_in_two_dimensions() {
        // ∫ |∇(sin πx sin πy)|² over the unit square = π²/2
        let dom = StratifiedDomain::rectangle(&[1.0, 1.0]).unwrap();
        let spec = PotentialSpec::zero(&dom);
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let form = DiscreteForm::build(&dom, &spec, &MeshParams::uniform(h)).unwrap();
            let pi = std::f64::consts::PI;
            let u = form.sample(|c| (pi * c[0].value()).sin() * (pi * c[1].value()).sin());
            errs.push((form.energy(&u) - pi * pi / 2.0).abs());
        }
        assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
    }

    #[test]
    fn matrices_are_deterministic() {
        let dom = StratifiedDomain::rectangle(&[1.0, 1.0]).unwrap();
        let spec = example_iii(&dom).unwrap();
        let p = MeshParams { h_max: 0.125, ..MeshParams::graded(1e-4, 0.5) };
        let a = DiscreteForm::build(&dom, &spec, &p).unwrap();
        let b = DiscreteForm::build(&dom, &spec, &p).unwrap();
        assert_eq!(a.potential, b.potential);
        assert_eq!(a.stiffness, b.stiffness);
    }
}
