//! Stratified domains, distance functions, balls adapted to the strata and
//! weighted volumes.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{anchored_rule, gauss_legendre, plain_rule, power_integral, DistPoint};

/// Exponent attached to each stratum, keyed by stratum label.
pub type Exponents = BTreeMap<String, f64>;

/// A coordinate stored as `base + off`.
///
/// Meshes graded toward a face at `base` keep tiny offsets exact, so
/// distances to that face never suffer cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub base: f64,
    pub off: f64,
}

impl Coord {
    pub fn plain(x: f64) -> Self {
        Self { base: 0.0, off: x }
    }

    pub fn anchored(base: f64, off: f64) -> Self {
        Self { base, off }
    }

    pub fn value(self) -> f64 {
        self.base + self.off
    }

    /// `|self - p|`, exact in the offset when anchored at `p`.
    pub fn dist_to(self, p: f64) -> f64 {
        if self.base == p {
            self.off.abs()
        } else {
            (self.value() - p).abs()
        }
    }

    /// `other - self`, exact when both share an anchor.
    pub fn delta(self, other: Coord) -> f64 {
        if self.base == other.base {
            other.off - self.off
        } else {
            other.value() - self.value()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Rectangle { widths: Vec<f64> },
    Disc { radius: f64 },
    RadialBall { radius: f64, ambient_n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumGeometry {
    /// The whole topological boundary of the shape.
    FullBoundary,
    Point(Vec<f64>),
    /// Set where the listed axes take fixed values, e.g. a face `x_0 = 0`.
    FlatPiece(Vec<(usize, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub codim: usize,
    pub geometry: StratumGeometry,
    pub label: String,
}

/// What a distance, weight or potential term refers to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Union of all strata of the given codimension.
    Codim(usize),
    Stratum(String),
    /// Union of all strata.
    All,
}

/// Range of `V(x, r) / (∏(d_S(x) + r)^{2α_S} r^n)` over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSandwich {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub samples: usize,
}

impl VolumeSandwich {
    pub fn spread(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedDomain {
    pub dimension: usize,
    pub shape: Shape,
    pub strata: Vec<Stratum>,
    pub localization_beta: f64,
    pub gamma: f64,
}

pub const DEFAULT_GAMMA: f64 = 1.5;

impl StratifiedDomain {
    pub fn new(shape: Shape, strata: Vec<Stratum>, localization_beta: f64) -> Result<Self> {
        let dimension = match &shape {
            Shape::Interval { a, b } => {
                if !(a < b) {
                    return Err(Error::InvalidDomain(format!("empty interval ({a}, {b})")));
                }
                1
            }
            Shape::Rectangle { widths } => {
                if widths.is_empty() || widths.iter().any(|w| !(*w > 0.0)) {
                    return Err(Error::InvalidDomain("rectangle widths must be positive".into()));
                }
                widths.len()
            }
            Shape::Disc { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidDomain("disc radius must be positive".into()));
                }
                2
            }
            Shape::RadialBall { radius, ambient_n } => {
                if !(*radius > 0.0) || *ambient_n < 1 {
                    return Err(Error::InvalidDomain("ball needs a positive radius and n >= 1".into()));
                }
                *ambient_n
            }
        };
        if !(localization_beta > 0.0 && localization_beta < 1.0) {
            return Err(Error::InvalidDomain(format!("localization_beta {localization_beta} not in (0,1)")));
        }
        let dom = Self { dimension, shape, strata, localization_beta, gamma: DEFAULT_GAMMA };
        dom.validate()?;
        Ok(dom)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(Error::ParameterOutOfRange(format!("gamma {gamma} not in (1,2)")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidDomain(format!("localization_beta {beta} not in (0,1)")));
        }
        self.localization_beta = beta;
        Ok(self)
    }

    /// `(a, b)` with its boundary as one codimension-1 stratum `boundary`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        let beta = (0.25 * (b - a)).min(0.5);
        Self::new(Shape::Interval { a, b }, vec![boundary_stratum()], beta)
    }

    /// `(a, b)` with the endpoints as separate strata `left` and `right`.
    pub fn interval_with_ends(a: f64, b: f64) -> Result<Self> {
        let beta = (0.25 * (b - a)).min(0.5);
        let strata = vec![
            Stratum { codim: 1, geometry: StratumGeometry::FlatPiece(vec![(0, a)]), label: "left".into() },
            Stratum { codim: 1, geometry: StratumGeometry::FlatPiece(vec![(0, b)]), label: "right".into() },
        ];
        Self::new(Shape::Interval { a, b }, strata, beta)
    }

    /// Axis-aligned box `[0, w_0] × … ` with its boundary as one stratum.
    pub fn rectangle(widths: &[f64]) -> Result<Self> {
        let beta = (0.25 * widths.iter().cloned().fold(f64::INFINITY, f64::min)).min(0.5);
        Self::new(Shape::Rectangle { widths: widths.to_vec() }, vec![boundary_stratum()], beta)
    }

    /// Box whose faces are separate codimension-1 strata labelled
    /// `x{axis}-` (at 0) and `x{axis}+` (at the width).
    pub fn rectangle_with_faces(widths: &[f64]) -> Result<Self> {
        let beta = (0.25 * widths.iter().cloned().fold(f64::INFINITY, f64::min)).min(0.5);
        let mut strata = Vec::new();
        for (axis, w) in widths.iter().enumerate() {
            strata.push(Stratum {
                codim: 1,
                geometry: StratumGeometry::FlatPiece(vec![(axis, 0.0)]),
                label: format!("x{axis}-"),
            });
            strata.push(Stratum {
                codim: 1,
                geometry: StratumGeometry::FlatPiece(vec![(axis, *w)]),
                label: format!("x{axis}+"),
            });
        }
        Self::new(Shape::Rectangle { widths: widths.to_vec() }, strata, beta)
    }

    /// Ball of radius `radius` in `R^n`, optionally with the origin removed
    /// as a codimension-`n` stratum `origin`.
    pub fn radial_ball(radius: f64, ambient_n: usize, punctured: bool) -> Result<Self> {
        let mut strata = vec![boundary_stratum()];
        if punctured {
            strata.push(origin_stratum(ambient_n));
        }
        Self::new(Shape::RadialBall { radius, ambient_n }, strata, (0.25 * radius).min(0.5))
    }

    pub fn disc(radius: f64, punctured: bool) -> Result<Self> {
        let mut strata = vec![boundary_stratum()];
        if punctured {
            strata.push(origin_stratum(2));
        }
        Self::new(Shape::Disc { radius }, strata, (0.25 * radius).min(0.5))
    }

    fn validate(&self) -> Result<()> {
        let n = self.dimension;
        let mut labels = std::collections::BTreeSet::new();
        for s in &self.strata {
            if !labels.insert(s.label.clone()) {
                return Err(Error::InvalidDomain(format!("duplicate stratum label `{}`", s.label)));
            }
            if s.codim < 1 || s.codim > n {
                return Err(Error::InvalidDomain(format!(
                    "stratum `{}` has codimension {} outside 1..={n}",
                    s.label, s.codim
                )));
            }
            match &s.geometry {
                StratumGeometry::FullBoundary => {
                    if s.codim != 1 {
                        return Err(Error::InvalidDomain("the full boundary has codimension 1".into()));
                    }
                }
                StratumGeometry::Point(p) => {
                    if p.len() != n || s.codim != n {
                        return Err(Error::InvalidDomain(format!(
                            "point stratum `{}` must have {n} coordinates and codimension {n}",
                            s.label
                        )));
                    }
                    self.validate_point(&s.label, p)?;
                }
                StratumGeometry::FlatPiece(fixed) => {
                    if fixed.len() != s.codim {
                        return Err(Error::InvalidDomain(format!(
                            "flat piece `{}` fixes {} axes but has codimension {}",
                            s.label,
                            fixed.len(),
                            s.codim
                        )));
                    }
                    self.validate_flat(&s.label, fixed)?;
                }
            }
        }
        Ok(())
    }

    fn validate_point(&self, label: &str, p: &[f64]) -> Result<()> {
        match &self.shape {
            Shape::Interval { a, b } => {
                if p[0] != *a && p[0] != *b {
                    return Err(Error::Unsupported(format!("interior point stratum `{label}` on an interval")));
                }
            }
            Shape::Rectangle { widths } => {
                for (x, w) in p.iter().zip(widths) {
                    if *x < 0.0 || *x > *w {
                        return Err(Error::InvalidDomain(format!("point stratum `{label}` outside the closure")));
                    }
                    if (*x == 0.0 || *x == *w) && self.dimension > 1 {
                        return Err(Error::InvalidDomain(format!(
                            "point stratum `{label}` lies on a codimension-1 face"
                        )));
                    }
                }
            }
            Shape::Disc { .. } | Shape::RadialBall { .. } => {
                if p.iter().any(|x| *x != 0.0) {
                    return Err(Error::Unsupported(format!(
                        "point stratum `{label}` must sit at the centre of a radial shape"
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_flat(&self, label: &str, fixed: &[(usize, f64)]) -> Result<()> {
        let ends: Vec<(f64, f64)> = match &self.shape {
            Shape::Interval { a, b } => vec![(*a, *b)],
            Shape::Rectangle { widths } => widths.iter().map(|w| (0.0, *w)).collect(),
            _ => return Err(Error::Unsupported(format!("flat piece `{label}` on a radial shape"))),
        };
        for (axis, v) in fixed {
            let Some((lo, hi)) = ends.get(*axis) else {
                return Err(Error::InvalidDomain(format!("flat piece `{label}` names axis {axis}")));
            };
            if *v != *lo && *v != *hi {
                return Err(Error::InvalidDomain(format!("flat piece `{label}` is not on a face")));
            }
        }
        Ok(())
    }

    pub fn stratum(&self, label: &str) -> Result<&Stratum> {
        self.strata.iter().find(|s| s.label == label).ok_or_else(|| Error::UnknownStratum(label.to_string()))
    }

    pub fn has_codim(&self, k: usize) -> bool {
        self.strata.iter().any(|s| s.codim == k)
    }

    /// Strata selected by a target.
    pub fn select(&self, target: &Target) -> Result<Vec<&Stratum>> {
        let out: Vec<&Stratum> = match target {
            Target::Codim(k) => self.strata.iter().filter(|s| s.codim == *k).collect(),
            Target::Stratum(l) => vec![self.stratum(l)?],
            Target::All => self.strata.iter().collect(),
        };
        if out.is_empty() {
            return Err(match target {
                Target::Codim(k) => Error::NoSuchStratum(*k),
                _ => Error::NoSuchStratum(0),
            });
        }
        Ok(out)
    }

    /// True for Disc and RadialBall, whose computational coordinate is the radius.
    pub fn is_radial(&self) -> bool {
        matches!(self.shape, Shape::Disc { .. } | Shape::RadialBall { .. })
    }

    pub fn radius(&self) -> Option<f64> {
        match self.shape {
            Shape::Disc { radius } | Shape::RadialBall { radius, .. } => Some(radius),
            _ => None,
        }
    }

    /// Computational coordinates of an ambient point.
    pub fn to_coords(&self, x: &[f64]) -> Vec<Coord> {
        if self.is_radial() {
            vec![Coord::plain(norm(x))]
        } else {
            x.iter().map(|v| Coord::plain(*v)).collect()
        }
    }

    /// Distance from a point in computational coordinates to one stratum.
    pub fn stratum_distance_coords(&self, s: &Stratum, c: &[Coord]) -> f64 {
        match (&self.shape, &s.geometry) {
            (Shape::Interval { a, b }, StratumGeometry::FullBoundary) => c[0].dist_to(*a).min(c[0].dist_to(*b)),
            (Shape::Rectangle { widths }, StratumGeometry::FullBoundary) => {
                c.iter().zip(widths).map(|(ci, w)| ci.dist_to(0.0).min(ci.dist_to(*w))).fold(f64::INFINITY, f64::min)
            }
            (Shape::Disc { radius } | Shape::RadialBall { radius, .. }, StratumGeometry::FullBoundary) => {
                c[0].dist_to(*radius)
            }
            (Shape::Disc { .. } | Shape::RadialBall { .. }, StratumGeometry::Point(_)) => c[0].dist_to(0.0),
            (_, StratumGeometry::Point(p)) => {
                c.iter().zip(p).map(|(ci, pi)| ci.dist_to(*pi).powi(2)).sum::<f64>().sqrt()
            }
            (Shape::Disc { .. } | Shape::RadialBall { .. }, StratumGeometry::FlatPiece(_)) => f64::INFINITY,
            (_, StratumGeometry::FlatPiece(fixed)) => {
                fixed.iter().map(|(axis, v)| c[*axis].dist_to(*v).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    pub fn target_distance_coords(&self, target: &Target, c: &[Coord]) -> Result<f64> {
        Ok(self.select(target)?.into_iter().map(|s| self.stratum_distance_coords(s, c)).fold(f64::INFINITY, f64::min))
    }

    fn in_closure(&self, x: &[f64]) -> bool {
        if x.len() != self.dimension {
            return false;
        }
        match &self.shape {
            Shape::Interval { a, b } => x[0] >= *a && x[0] <= *b,
            Shape::Rectangle { widths } => x.iter().zip(widths).all(|(v, w)| *v >= 0.0 && *v <= *w),
            Shape::Disc { radius } | Shape::RadialBall { radius, .. } => norm(x) <= *radius,
        }
    }

    fn is_interior(&self, x: &[f64]) -> bool {
        if !self.in_closure(x) || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let c = self.to_coords(x);
        self.strata.iter().all(|s| self.stratum_distance_coords(s, &c) > 0.0)
            && match &self.shape {
                Shape::Interval { a, b } => x[0] > *a && x[0] < *b,
                Shape::Rectangle { widths } => x.iter().zip(widths).all(|(v, w)| *v > 0.0 && *v < *w),
                Shape::Disc { radius } | Shape::RadialBall { radius, .. } => norm(x) < *radius,
            }
    }

    /// `d_k(x)`, the distance to the union of codimension-`k` strata.
    pub fn distance(&self, k: usize, x: &[f64]) -> Result<f64> {
        if !self.is_interior(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        self.target_distance_coords(&Target::Codim(k), &self.to_coords(x))
    }

    /// `d(x) = min_k d_k(x)`.
    pub fn distance_all(&self, x: &[f64]) -> Result<f64> {
        if !self.is_interior(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        self.target_distance_coords(&Target::All, &self.to_coords(x))
    }

    pub fn distance_to(&self, target: &Target, x: &[f64]) -> Result<f64> {
        if !self.is_interior(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        self.target_distance_coords(target, &self.to_coords(x))
    }

    /// Distance between two strata (zero if they touch).
    pub fn strata_separation(&self, a: &Stratum, b: &Stratum) -> f64 {
        if a.label == b.label {
            return 0.0;
        }
        match (&a.geometry, &b.geometry) {
            (StratumGeometry::Point(p), _) => {
                let c: Vec<Coord> = if self.is_radial() {
                    vec![Coord::plain(norm(p))]
                } else {
                    p.iter().map(|v| Coord::plain(*v)).collect()
                };
                self.stratum_distance_coords(b, &c)
            }
            (_, StratumGeometry::Point(_)) => self.strata_separation(b, a),
            (StratumGeometry::FlatPiece(fa), StratumGeometry::FlatPiece(fb)) => {
                let mut sq = 0.0;
                for (ax, va) in fa {
                    if let Some((_, vb)) = fb.iter().find(|(bx, _)| bx == ax) {
                        sq += (va - vb).powi(2);
                    }
                }
                sq.sqrt()
            }
            _ => 0.0,
        }
    }

    /// Sup of the distance to a target over the domain.
    pub fn max_distance(&self, target: &Target) -> Result<f64> {
        let strata = self.select(target)?;
        let all_points = strata.iter().all(|s| matches!(s.geometry, StratumGeometry::Point(_)));
        Ok(match &self.shape {
            Shape::Interval { a, b } => {
                if strata.len() == 1 {
                    if let StratumGeometry::FlatPiece(_) | StratumGeometry::Point(_) = strata[0].geometry {
                        return Ok(b - a);
                    }
                }
                0.5 * (b - a)
            }
            Shape::Rectangle { widths } => {
                if all_points || strata.iter().any(|s| matches!(s.geometry, StratumGeometry::FlatPiece(_))) {
                    widths.iter().map(|w| w * w).sum::<f64>().sqrt()
                } else {
                    0.5 * widths.iter().cloned().fold(f64::INFINITY, f64::min)
                }
            }
            Shape::Disc { radius } | Shape::RadialBall { radius, .. } => *radius,
        })
    }

    /// Checks by sampling that strata neighbourhoods of size β are disjoint.
    pub fn check_localization(&self) -> bool {
        for (i, a) in self.strata.iter().enumerate() {
            for b in self.strata.iter().skip(i + 1) {
                if self.strata_separation(a, b) <= 2.0 * self.localization_beta {
                    return false;
                }
            }
        }
        true
    }

    /// Builds the ball `ℬ(x, r)` adapted to the strata.
    pub fn make_ball(&self, x: &[f64], r: f64) -> Result<BallSpec> {
        if !(r > 0.0 && r < self.localization_beta) {
            return Err(Error::RadiusTooLarge { radius: r, beta: self.localization_beta });
        }
        if !self.in_closure(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        let c = self.to_coords(x);
        let mut near: Vec<(&Stratum, f64)> = self
            .strata
            .iter()
            .map(|s| (s, self.stratum_distance_coords(s, &c)))
            .filter(|(_, d)| *d < self.gamma * r)
            .collect();
        near.sort_by(|a, b| a.1.total_cmp(&b.1));
        let kind = match near.first() {
            None => BallKind::Euclidean,
            Some((s, _)) if s.codim == self.dimension && self.dimension > 1 => BallKind::Euclidean,
            Some((s, _)) => BallKind::DeformedCube(s.label.clone()),
        };
        Ok(BallSpec { center: x.to_vec(), radius: r, kind, gamma: self.gamma })
    }

    /// `V(x, r) = ∫_{ℬ(x,r)∩Ω} ∏ d_S^{2α_S}`.
    pub fn weighted_volume(&self, x: &[f64], r: f64, alphas: &Exponents) -> Result<f64> {
        self.check_integrable(alphas)?;
        let ball = self.make_ball(x, r)?;
        self.ball_integral(&ball, alphas)
    }

    pub fn check_integrable(&self, alphas: &Exponents) -> Result<()> {
        for (label, a) in alphas {
            let s = self.stratum(label)?;
            let bound = -(s.codim as f64) / 2.0;
            if !(*a > bound) {
                return Err(Error::NonIntegrableWeight { codim: s.codim, alpha: *a, bound });
            }
        }
        Ok(())
    }

    /// `∏ d_S(c)^{2α_S}` at computational coordinates.
    pub fn weight_at(&self, alphas: &Exponents, c: &[Coord]) -> Result<f64> {
        let mut w = 1.0;
        for (label, a) in alphas {
            if *a != 0.0 {
                let s = self.stratum(label)?;
                w *= self.stratum_distance_coords(s, c).powf(2.0 * a);
            }
        }
        Ok(w)
    }

    /// Model `∏ (d_S(x) + r)^{2α_S} r^n` of the sharp volume estimate.
    pub fn volume_model(&self, x: &[f64], r: f64, alphas: &Exponents) -> Result<f64> {
        let c = self.to_coords(x);
        let mut m = r.powi(self.dimension as i32);
        for (label, a) in alphas {
            let s = self.stratum(label)?;
            m *= (self.stratum_distance_coords(s, &c) + r).powf(2.0 * a);
        }
        Ok(m)
    }

    /// `max V(x, 2r) / V(x, r)` over the samples.
    pub fn doubling_constant(&self, alphas: &Exponents, samples: &[(Vec<f64>, f64)]) -> Result<f64> {
        let mut worst = 0.0f64;
        for (x, r) in samples {
            let v1 = self.weighted_volume(x, *r, alphas)?;
            let v2 = self.weighted_volume(x, 2.0 * r, alphas)?;
            worst = worst.max(v2 / v1);
        }
        Ok(worst)
    }

    /// Extremes of `V(x, r)` over its model across the samples.
    pub fn volume_sandwich(&self, alphas: &Exponents, samples: &[(Vec<f64>, f64)]) -> Result<VolumeSandwich> {
        if samples.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (x, r) in samples {
            let ratio = self.weighted_volume(x, *r, alphas)? / self.volume_model(x, *r, alphas)?;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        Ok(VolumeSandwich { min_ratio: lo, max_ratio: hi, samples: samples.len() })
    }

    /// `per_axis` evenly spaced centers per axis, endpoints included (along a
    /// ray for radial shapes), each paired with every radius.
    pub fn sample_grid(&self, per_axis: usize, radii: &[f64]) -> Vec<(Vec<f64>, f64)> {
        let mid = |lo: f64, hi: f64, i: usize| {
            if per_axis < 2 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
            }
        };
        let centers: Vec<Vec<f64>> = match &self.shape {
            Shape::Interval { a, b } => (0..per_axis).map(|i| vec![mid(*a, *b, i)]).collect(),
            Shape::Rectangle { widths } => {
                let mut out = vec![Vec::new()];
                for w in widths {
                    out = out
                        .into_iter()
                        .flat_map(|p: Vec<f64>| {
                            (0..per_axis).map(move |i| {
                                let mut q = p.clone();
                                q.push(mid(0.0, *w, i));
                                q
                            })
                        })
                        .collect();
                }
                out
            }
            Shape::Disc { radius } | Shape::RadialBall { radius, .. } => (0..per_axis)
                .map(|i| {
                    let mut x = vec![0.0; self.dimension];
                    x[0] = mid(0.0, *radius, i);
                    x
                })
                .collect(),
        };
        centers.iter().flat_map(|c| radii.iter().map(move |r| (c.clone(), *r))).collect()
    }

    fn ball_integral(&self, ball: &BallSpec, alphas: &Exponents) -> Result<f64> {
        let x = &ball.center;
        let r = ball.radius;
        match &self.shape {
            Shape::Interval { a, b } => {
                let lo = (x[0] - r).max(*a);
                let hi = (x[0] + r).min(*b);
                self.interval_integral(lo, hi, alphas)
            }
            Shape::Rectangle { widths } => match &ball.kind {
                BallKind::DeformedCube(_) => {
                    let lo: Vec<f64> = x.iter().map(|v| v - r).zip(widths).map(|(v, _)| v.max(0.0)).collect();
                    let hi: Vec<f64> = x.iter().zip(widths).map(|(v, w)| (v + r).min(*w)).collect();
                    if widths.len() != 2 {
                        return Err(Error::Unsupported("weighted volumes on boxes need n = 2".into()));
                    }
                    self.box_integral(&lo, &hi, alphas)
                }
                BallKind::Euclidean => {
                    if widths.len() != 2 {
                        return Err(Error::Unsupported("weighted volumes on boxes need n = 2".into()));
                    }
                    self.disc_integral(x, r, alphas)
                }
            },
            Shape::Disc { radius } | Shape::RadialBall { radius, .. } => {
                let n = self.dimension;
                let (a_origin, a_boundary) = self.radial_exponents(alphas)?;
                let f = |rho: f64| {
                    let mut w = 1.0;
                    if a_origin != 0.0 {
                        w *= rho.powf(2.0 * a_origin);
                    }
                    if a_boundary != 0.0 {
                        w *= (radius - rho).powf(2.0 * a_boundary);
                    }
                    w
                };
                match &ball.kind {
                    BallKind::Euclidean => Ok(radial_ball_about_origin(norm(x), r, n, *radius, &f)),
                    BallKind::DeformedCube(_) => {
                        let s = norm(x);
                        let lo = (s - r).max(0.0);
                        let hi = (s + r).min(*radius);
                        let cap = cap_measure(n, (r / radius).min(PI));
                        let radial = integrate_segment(lo, hi, &[0.0, *radius], |rho| f(rho) * rho.powi(n as i32 - 1));
                        Ok(cap * radial)
                    }
                }
            }
        }
    }

    fn radial_exponents(&self, alphas: &Exponents) -> Result<(f64, f64)> {
        let mut a0 = 0.0;
        let mut a1 = 0.0;
        for (label, a) in alphas {
            match self.stratum(label)?.geometry {
                StratumGeometry::Point(_) => a0 += a,
                StratumGeometry::FullBoundary => a1 += a,
                StratumGeometry::FlatPiece(_) => {}
            }
        }
        Ok((a0, a1))
    }

    fn interval_integral(&self, lo: f64, hi: f64, alphas: &Exponents) -> Result<f64> {
        let Shape::Interval { a, b } = self.shape else { unreachable!() };
        let mid = 0.5 * (a + b);
        let mut total = 0.0;
        for (p, q, anchor) in [(lo, hi.min(mid), a), (lo.max(mid), hi, b)] {
            if q <= p {
                continue;
            }
            let (t0, t1) = ((p - anchor).abs().min((q - anchor).abs()), (p - anchor).abs().max((q - anchor).abs()));
            // pure power of the distance to `anchor` on this half
            let mut power = 0.0;
            let mut pure = true;
            for (label, al) in alphas {
                if *al == 0.0 {
                    continue;
                }
                let s = self.stratum(label)?;
                let active = match &s.geometry {
                    StratumGeometry::FullBoundary => true,
                    StratumGeometry::FlatPiece(f) => f[0].1 == anchor,
                    StratumGeometry::Point(pt) => pt[0] == anchor,
                };
                if active {
                    power += 2.0 * al;
                } else {
                    pure = false;
                }
            }
            if pure {
                total += power_integral(t0, t1, power);
            } else {
                let sign = if anchor == a { 1.0 } else { -1.0 };
                for pt in anchored_rule(t0, t1, 12, None) {
                    let c = [Coord::anchored(anchor, sign * pt.t)];
                    total += pt.w * self.weight_at(alphas, &c)?;
                }
            }
        }
        Ok(total)
    }

    fn box_integral(&self, lo: &[f64], hi: &[f64], alphas: &Exponents) -> Result<f64> {
        let Shape::Rectangle { widths } = &self.shape else { unreachable!() };
        let (w, h) = (widths[0], widths[1]);
        let full_boundary = self.strata.iter().any(|s| s.geometry == StratumGeometry::FullBoundary);
        let mut xbreaks = vec![lo[0], hi[0], 0.5 * w];
        if full_boundary {
            for y in [lo[1], hi[1]] {
                xbreaks.extend([y, w - y, h - y, y - h + w]);
            }
        }
        let xs = sorted_breaks(xbreaks, lo[0], hi[0]);
        let mut total = 0.0;
        for seg in xs.windows(2) {
            for px in axis_points(seg[0], seg[1], 0.0, w) {
                let mut ybreaks = vec![lo[1], hi[1], 0.5 * h];
                if full_boundary {
                    let xv = px.0.value();
                    ybreaks.extend([xv, w - xv, h - xv, h - w + xv]);
                }
                let ys = sorted_breaks(ybreaks, lo[1], hi[1]);
                let mut inner = 0.0;
                for sy in ys.windows(2) {
                    for py in axis_points(sy[0], sy[1], 0.0, h) {
                        inner += py.1 * self.weight_at(alphas, &[px.0, py.0])?;
                    }
                }
                total += px.1 * inner;
            }
        }
        Ok(total)
    }

    fn disc_integral(&self, x: &[f64], r: f64, alphas: &Exponents) -> Result<f64> {
        // polar coordinates about the nearest point stratum inside reach, else about x
        let mut pole = x.to_vec();
        for s in &self.strata {
            if let StratumGeometry::Point(p) = &s.geometry {
                if dist(p, x) < 2.0 * r {
                    pole = p.clone();
                }
            }
        }
        let s = dist(&pole, x);
        let theta_x = (x[1] - pole[1]).atan2(x[0] - pole[0]);
        let (gx, gw) = gauss_legendre(24);
        let ring = |rho: f64| -> f64 {
            let half = arc_half_angle(rho, s, r);
            if half <= 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for (xi, wi) in gx.iter().zip(&gw) {
                let th = theta_x + half * xi;
                let c = [Coord::plain(pole[0] + rho * th.cos()), Coord::plain(pole[1] + rho * th.sin())];
                // labels were validated by check_integrable
                acc += half * wi * self.weight_at(alphas, &c).unwrap_or(f64::NAN);
            }
            acc * rho
        };
        let total = integrate_segment(0.0, s + r, &[0.0, (r - s).abs(), s + r], ring);
        Ok(total)
    }
}

fn boundary_stratum() -> Stratum {
    Stratum { codim: 1, geometry: StratumGeometry::FullBoundary, label: "boundary".into() }
}

fn origin_stratum(n: usize) -> Stratum {
    Stratum { codim: n, geometry: StratumGeometry::Point(vec![0.0; n]), label: "origin".into() }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Surface measure of the unit sphere `S^k ⊂ R^{k+1}`.
pub fn sphere_measure(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_measure(k - 2),
    }
}

/// Measure of the spherical cap of half-angle `theta` on `S^{n-1}`.
pub fn cap_measure(n: usize, theta: f64) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * theta,
        3 => 2.0 * PI * (1.0 - theta.cos()),
        _ => {
            let (x, w) = gauss_legendre(24);
            let half = 0.5 * theta;
            let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * (half * (1.0 + xi)).sin().powi(n as i32 - 2)).sum();
            sphere_measure(n - 2) * half * s
        }
    }
}

/// Half-angle of the arc of the circle `|y - p| = rho` inside `B(x, r)`,
/// where `s = |x - p|`; `π` when the circle lies fully inside.
fn arc_half_angle(rho: f64, s: f64, r: f64) -> f64 {
    if rho + s <= r {
        return PI;
    }
    if s == 0.0 || rho >= s + r || rho <= s - r {
        return 0.0;
    }
    let c = ((s * s + rho * rho - r * r) / (2.0 * s * rho)).clamp(-1.0, 1.0);
    c.acos()
}

/// `∫_{B(x,r)} f(|y|) dy` in `R^n` with `|x| = s`, for a ball inside the
/// shape of radius `outer`.
fn radial_ball_about_origin(s: f64, r: f64, n: usize, outer: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let hi = (s + r).min(outer);
    let g = |rho: f64| {
        let half = arc_half_angle(rho, s, r);
        let cap = if half >= PI { sphere_measure(n - 1) } else { cap_measure(n, half) };
        f(rho) * cap * rho.powi(n as i32 - 1)
    };
    integrate_segment(0.0, hi, &[0.0, (r - s).abs(), s + r, outer], g)
}

fn sorted_breaks(mut v: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    v.retain(|x| *x >= lo && *x <= hi && x.is_finite());
    v.push(lo);
    v.push(hi);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    v
}

/// Quadrature points on `[p, q] ⊂ [lo, hi]`, graded toward whichever of the
/// faces `lo`, `hi` is close.
fn axis_points(p: f64, q: f64, lo: f64, hi: f64) -> Vec<(Coord, f64)> {
    let dl = p - lo;
    let dr = hi - q;
    let len = q - p;
    let mut out = Vec::new();
    if dl <= dr && dl < len {
        for DistPoint { t, w } in anchored_rule(dl, q - lo, 10, None) {
            out.push((Coord::anchored(lo, t), w));
        }
    } else if dr < len {
        for DistPoint { t, w } in anchored_rule(dr, hi - p, 10, None) {
            out.push((Coord::anchored(hi, -t), w));
        }
    } else {
        let mut pts = Vec::new();
        plain_rule(p, q, 10, &mut pts);
        out.extend(pts.into_iter().map(|d| (Coord::plain(d.t), d.w)));
    }
    out
}

/// `∫_a^b g` with panels split at `breaks`, each panel graded toward both
/// of its ends so endpoint singularities of integrable type are resolved.
pub fn integrate_segment(a: f64, b: f64, breaks: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    let pts = sorted_breaks(breaks.to_vec(), a, b);
    let mut total = 0.0;
    for seg in pts.windows(2) {
        let (p, q) = (seg[0], seg[1]);
        if q <= p {
            continue;
        }
        let m = 0.5 * (p + q);
        for DistPoint { t, w } in anchored_rule(0.0, m - p, 10, None) {
            total += w * g(p + t);
        }
        for DistPoint { t, w } in anchored_rule(0.0, q - m, 10, None) {
            total += w * g(q - t);
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallKind {
    Euclidean,
    DeformedCube(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub kind: BallKind,
    pub gamma: f64,
}

impl BallSpec {
    /// Axis-aligned bounding box of the ball clipped to a box shape.
    pub fn clipped_box(&self, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let a = self.center.iter().zip(lo).map(|(c, l)| (c - self.radius).max(*l)).collect();
        let b = self.center.iter().zip(hi).map(|(c, h)| (c + self.radius).min(*h)).collect();
        (a, b)
    }
}

/// Exponents given per codimension `(α_1, …, α_n)`, expanded to every stratum.
pub fn exponents_by_codim(dom: &StratifiedDomain, alphas: &[f64]) -> Exponents {
    dom.strata.iter().filter_map(|s| alphas.get(s.codim - 1).map(|a| (s.label.clone(), *a))).collect()
}
