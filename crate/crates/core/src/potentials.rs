//! Coefficient matrices, inverse-square potentials and their predicted
//! ground-state exponents.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, Coord, Exponents, StratifiedDomain, StratumGeometry, Target};

/// Symmetric coefficient field `a_ij(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Identity,
    Scalar(f64),
    /// `δ_ij + ½|x|^{2-a}(1 - δ_ij)`.
    OffDiagonalPower {
        a: f64,
    },
    Constant(Vec<Vec<f64>>),
}

impl Coefficient {
    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        match self {
            Coefficient::Identity => DMatrix::identity(n, n),
            Coefficient::Scalar(s) => DMatrix::identity(n, n) * *s,
            Coefficient::OffDiagonalPower { a } => {
                let s = 0.5 * norm(x).powf(2.0 - a);
                DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { s })
            }
            Coefficient::Constant(rows) => DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        }
    }

    /// Scalar multiple of the identity, if the field is one.
    pub fn isotropic_scale(&self) -> Option<f64> {
        match self {
            Coefficient::Identity => Some(1.0),
            Coefficient::Scalar(s) => Some(*s),
            Coefficient::Constant(rows) => {
                let n = rows.len();
                let s = rows[0][0];
                let iso = (0..n).all(|i| (0..n).all(|j| rows[i][j] == if i == j { s } else { 0.0 }));
                iso.then_some(s)
            }
            Coefficient::OffDiagonalPower { .. } => None,
        }
    }
}

/// One summand `c / dist(x, target)^2` of the potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseSquareTerm {
    pub target: Target,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda1Hint {
    Positive,
    FiniteUnknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub name: String,
    pub ambient_n: usize,
    pub coefficient: Coefficient,
    pub ellipticity_c0: f64,
    pub terms: Vec<InverseSquareTerm>,
    /// Predicted exponent of the ground state at each stratum.
    pub predicted: Exponents,
    pub lambda1_hint: Lambda1Hint,
    /// Labels of strata where a coupling sits exactly at its Hardy constant.
    pub critical: Vec<String>,
}

impl PotentialSpec {
    /// `V = 0` with identity coefficients.
    pub fn zero(dom: &StratifiedDomain) -> Self {
        let predicted = dom.strata.iter().map(|s| (s.label.clone(), if s.codim == 1 { 1.0 } else { 0.0 })).collect();
        Self {
            name: "zero".into(),
            ambient_n: dom.dimension,
            coefficient: Coefficient::Identity,
            ellipticity_c0: 1.0,
            terms: Vec::new(),
            predicted,
            lambda1_hint: Lambda1Hint::Positive,
            critical: Vec::new(),
        }
    }

    /// `V` at computational coordinates of `dom`.
    pub fn potential_at(&self, dom: &StratifiedDomain, c: &[Coord]) -> Result<f64> {
        let mut v = 0.0;
        for t in &self.terms {
            if t.c != 0.0 {
                let d = dom.target_distance_coords(&t.target, c)?;
                v += t.c / (d * d);
            }
        }
        Ok(v)
    }

    /// `V` at an ambient point.
    pub fn potential(&self, dom: &StratifiedDomain, x: &[f64]) -> Result<f64> {
        dom.distance_all(x)?;
        self.potential_at(dom, &dom.to_coords(x))
    }

    /// Labels of strata carrying a nonzero coupling.
    pub fn singular_strata(&self, dom: &StratifiedDomain) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for t in &self.terms {
            if t.c != 0.0 {
                for s in dom.select(&t.target)? {
                    if !out.contains(&s.label) {
                        out.push(s.label.clone());
                    }
                }
            }
        }
        Ok(out)
    }

    /// `∏ d_S^{α_S}` with the predicted exponents.
    pub fn predicted_profile(&self, dom: &StratifiedDomain, c: &[Coord]) -> Result<f64> {
        let mut p = 1.0;
        for (label, a) in &self.predicted {
            if *a != 0.0 {
                p *= dom.stratum_distance_coords(dom.stratum(label)?, c).powf(*a);
            }
        }
        Ok(p)
    }
}

/// `β = (2 - n + sqrt((n-2)^2 - 4c)) / 2`, the exponent at a pole of strength `c`.
pub fn pole_exponent(n: usize, c: f64) -> f64 {
    let m = n as f64 - 2.0;
    (-m + (m * m - 4.0 * c).max(0.0).sqrt()) / 2.0
}

/// Point-pole potential `Σ c_i / |x - x_i|^2` in dimension `n >= 3`.
pub fn example_i(dom: &StratifiedDomain, poles: &[(Vec<f64>, f64)]) -> Result<PotentialSpec> {
    let n = dom.dimension;
    if n < 3 {
        return Err(Error::ParameterOutOfRange(format!("pole potentials need n >= 3, got {n}")));
    }
    let limit = (n as f64 - 2.0).powi(2) / 4.0;
    let mut spec = PotentialSpec::zero(dom);
    spec.name = "example_I".into();
    spec.lambda1_hint = Lambda1Hint::FiniteUnknown;
    let mut seen: Vec<String> = Vec::new();
    for (p, c) in poles {
        if *c > limit {
            return Err(Error::HardyConstantExceeded { c: *c, limit });
        }
        if *c < 0.0 {
            return Err(Error::ParameterOutOfRange(format!("pole strength {c} is negative")));
        }
        let coords = dom.to_coords(p);
        let stratum = dom
            .strata
            .iter()
            .find(|s| matches!(s.geometry, StratumGeometry::Point(_)) && dom.stratum_distance_coords(s, &coords) == 0.0)
            .ok_or_else(|| Error::InvalidDomain(format!("no point stratum at {p:?}")))?;
        if seen.contains(&stratum.label) {
            return Err(Error::InvalidDomain(format!("pole {p:?} listed twice")));
        }
        seen.push(stratum.label.clone());
        spec.terms.push(InverseSquareTerm { target: Target::Stratum(stratum.label.clone()), c: *c });
        spec.predicted.insert(stratum.label.clone(), pole_exponent(n, *c));
        if *c == limit {
            spec.critical.push(stratum.label.clone());
        }
    }
    Ok(spec)
}

/// `V = 1 / (4 d^2)` with `d` the distance to the codimension-1 boundary.
pub fn example_iii(dom: &StratifiedDomain) -> Result<PotentialSpec> {
    if dom.strata.iter().any(|s| s.codim != 1) || !dom.has_codim(1) {
        return Err(Error::InvalidDomain("needs a domain with only codimension-1 strata".into()));
    }
    let mut spec = PotentialSpec::zero(dom);
    spec.name = "example_III".into();
    spec.lambda1_hint = Lambda1Hint::FiniteUnknown;
    spec.terms.push(InverseSquareTerm { target: Target::Codim(1), c: 0.25 });
    for s in &dom.strata {
        spec.predicted.insert(s.label.clone(), 0.5);
        spec.critical.push(s.label.clone());
    }
    Ok(spec)
}

/// Boundary Hardy term plus a critical pole at the centre, `n >= 3`.
pub fn example_iv(dom: &StratifiedDomain) -> Result<PotentialSpec> {
    let n = dom.dimension;
    if n < 3 {
        return Err(Error::ParameterOutOfRange(format!("needs n >= 3, got {n}")));
    }
    let pole = dom
        .strata
        .iter()
        .find(|s| matches!(s.geometry, StratumGeometry::Point(_)))
        .ok_or_else(|| Error::InvalidDomain("needs a punctured domain".into()))?;
    if !dom.has_codim(1) {
        return Err(Error::NoSuchStratum(1));
    }
    let c_pole = (n as f64 - 2.0).powi(2) / 4.0;
    let mut spec = PotentialSpec::zero(dom);
    spec.name = "example_IV".into();
    spec.lambda1_hint = Lambda1Hint::FiniteUnknown;
    spec.terms.push(InverseSquareTerm { target: Target::Codim(1), c: 0.25 });
    spec.terms.push(InverseSquareTerm { target: Target::Stratum(pole.label.clone()), c: c_pole });
    for s in dom.strata.iter().filter(|s| s.codim == 1) {
        spec.predicted.insert(s.label.clone(), 0.5);
        spec.critical.push(s.label.clone());
    }
    spec.predicted.insert(pole.label.clone(), (2.0 - n as f64) / 2.0);
    spec.critical.push(pole.label.clone());
    Ok(spec)
}

/// Anisotropic coefficients with a compensating pole on the punctured unit
/// ball of `R^n`; labels follow [`StratifiedDomain::radial_ball`].
pub fn example_v(a: f64, n: usize) -> Result<PotentialSpec> {
    let lo = -(n as f64 - 2.0) / 2.0;
    if n < 3 || !(a >= lo && a < 0.0) {
        return Err(Error::ParameterOutOfRange(format!("a = {a} outside [{lo}, 0) for n = {n}")));
    }
    let mut predicted = Exponents::new();
    predicted.insert("boundary".into(), 1.0);
    predicted.insert("origin".into(), a);
    Ok(PotentialSpec {
        name: "example_V".into(),
        ambient_n: n,
        coefficient: Coefficient::OffDiagonalPower { a },
        ellipticity_c0: (0.5f64).min(1.0 / (1.0 + n as f64 / 2.0)),
        terms: vec![InverseSquareTerm { target: Target::Stratum("origin".into()), c: -a * (n as f64 + a - 2.0) }],
        predicted,
        lambda1_hint: Lambda1Hint::FiniteUnknown,
        critical: if a == lo { vec!["origin".into()] } else { Vec::new() },
    })
}

/// Exponent bookkeeping for the boundary-plus-circle potential (`n >= 4`);
/// no domain is meshed for it.
pub fn example_ii_catalog(n: usize) -> Result<PotentialSpec> {
    if n < 4 {
        return Err(Error::ParameterOutOfRange(format!("needs n >= 4, got {n}")));
    }
    let mut predicted = Exponents::new();
    predicted.insert("boundary".into(), 0.5);
    predicted.insert("circle".into(), (3.0 - n as f64) / 2.0);
    Ok(PotentialSpec {
        name: "example_II".into(),
        ambient_n: n,
        coefficient: Coefficient::Identity,
        ellipticity_c0: 1.0,
        terms: vec![
            InverseSquareTerm { target: Target::Codim(1), c: 0.25 },
            InverseSquareTerm { target: Target::Codim(n - 1), c: (n as f64 - 3.0).powi(2) / 4.0 },
        ],
        predicted,
        lambda1_hint: Lambda1Hint::FiniteUnknown,
        critical: vec!["boundary".into(), "circle".into()],
    })
}

/// Pointwise sum of two potentials with separated singular sets.
pub fn sum_spec(p1: &PotentialSpec, p2: &PotentialSpec, dom: &StratifiedDomain) -> Result<PotentialSpec> {
    if p1.coefficient != p2.coefficient {
        return Err(Error::Unsupported("summands must share the coefficient field".into()));
    }
    let s1 = p1.singular_strata(dom)?;
    let s2 = p2.singular_strata(dom)?;
    for a in &s1 {
        for b in &s2 {
            let sa = dom.stratum(a)?;
            let sb = dom.stratum(b)?;
            if a == b || dom.strata_separation(sa, sb) <= 2.0 * dom.localization_beta {
                return Err(Error::OverlappingSingularities(format!("`{a}` and `{b}`")));
            }
        }
    }
    let mut predicted = p1.predicted.clone();
    for (label, a) in &p2.predicted {
        if s2.contains(label) || !predicted.contains_key(label) {
            predicted.insert(label.clone(), *a);
        }
    }
    let mut critical: Vec<String> = p1.critical.iter().filter(|l| s1.contains(l)).cloned().collect();
    critical.extend(p2.critical.iter().filter(|l| s2.contains(l)).cloned());
    let mut terms = p1.terms.clone();
    terms.extend(p2.terms.iter().cloned());
    Ok(PotentialSpec {
        name: format!("{}+{}", p1.name, p2.name),
        ambient_n: p1.ambient_n,
        coefficient: p1.coefficient.clone(),
        ellipticity_c0: p1.ellipticity_c0.min(p2.ellipticity_c0),
        terms,
        predicted,
        lambda1_hint: Lambda1Hint::FiniteUnknown,
        critical,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub c0_verified: bool,
}

/// Extreme eigenvalues of `a(x)` over interior samples.
pub fn check_ellipticity(spec: &PotentialSpec, samples: &[Vec<f64>]) -> Result<EllipticityReport> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in samples {
        let a = spec.coefficient.matrix(x);
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::AsymmetricCoefficient(asym));
        }
        let eig = SymmetricEigen::new(a);
        lo = lo.min(eig.eigenvalues.min());
        hi = hi.max(eig.eigenvalues.max());
    }
    let c0 = spec.ellipticity_c0;
    Ok(EllipticityReport { min_eig: lo, max_eig: hi, c0_verified: lo >= c0 && hi <= 1.0 / c0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pole_exponents() {
        assert!((pole_exponent(3, 0.25) + 0.5).abs() < 1e-15);
        assert_eq!(pole_exponent(3, 0.0), 0.0);
        assert!((pole_exponent(4, 1.0) + 1.0).abs() < 1e-15);
        assert!((pole_exponent(3, 3.0 / 16.0) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn example_i_rejects_supercritical() {
        let dom = StratifiedDomain::radial_ball(1.0, 3, true).unwrap();
        let err = example_i(&dom, &[(vec![0.0; 3], 0.3)]).unwrap_err();
        assert!(matches!(err, Error::HardyConstantExceeded { .. }));
        let spec = example_i(&dom, &[(vec![0.0; 3], 0.25)]).unwrap();
        assert_eq!(spec.predicted["origin"], -0.5);
        assert_eq!(spec.predicted["boundary"], 1.0);
        assert_eq!(spec.critical, vec!["origin".to_string()]);
    }

    #[test]
    fn example_iii_on_interval_and_rectangle() {
        for dom in [
            StratifiedDomain::interval(0.0, 1.0).unwrap(),
            StratifiedDomain::rectangle(&[1.0, 1.0]).unwrap(),
            StratifiedDomain::interval(0.0, 7.0).unwrap(),
        ] {
            let spec = example_iii(&dom).unwrap();
            assert_eq!(spec.predicted["boundary"], 0.5);
        }
        let v = example_iii(&StratifiedDomain::interval(0.0, 1.0).unwrap()).unwrap();
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        assert!((v.potential(&dom, &[0.25]).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn example_v_values() {
        let spec = example_v(-0.5, 3).unwrap();
        assert_eq!(spec.predicted["origin"], -0.5);
        assert_eq!(spec.predicted["boundary"], 1.0);
        assert!((spec.terms[0].c - 0.25).abs() < 1e-15);
        assert!(matches!(example_v(-0.6, 3), Err(Error::ParameterOutOfRange(_))));
        assert!(matches!(example_v(0.0, 3), Err(Error::ParameterOutOfRange(_))));
        let samples: Vec<Vec<f64>> = (0..50)
            .map(|k| {
                let t = k as f64 * 0.37;
                let r = 0.02 * k as f64 % 0.99;
                vec![r * t.cos() * 0.6, r * t.sin() * 0.6, r * 0.8 * (t * 1.3).cos()]
            })
            .collect();
        let rep = check_ellipticity(&spec, &samples).unwrap();
        assert!(rep.min_eig >= 0.5 - 1e-12 && rep.max_eig <= 2.5 + 1e-12);
        assert!(rep.c0_verified);
    }

    #[test]
    fn ellipticity_of_scaled_identity() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let mut spec = PotentialSpec::zero(&dom);
        spec.coefficient = Coefficient::Scalar(2.0);
        spec.ellipticity_c0 = 0.5;
        let rep = check_ellipticity(&spec, &[vec![0.5]]).unwrap();
        assert!(rep.c0_verified && rep.min_eig == 2.0);
        spec.coefficient = Coefficient::Constant(vec![vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(check_ellipticity(&spec, &[vec![0.5, 0.5]]), Err(Error::AsymmetricCoefficient(_))));
    }

    #[test]
    fn example_iv_is_a_sum() {
        let dom = StratifiedDomain::radial_ball(1.0, 3, true).unwrap();
        let boundary_only = StratifiedDomain::radial_ball(1.0, 3, false).unwrap();
        let p3 = example_iii(&boundary_only).unwrap();
        let p1 = example_i(&dom, &[(vec![0.0; 3], 0.25)]).unwrap();
        let sum = sum_spec(&p3, &p1, &dom).unwrap();
        let iv = example_iv(&dom).unwrap();
        assert_eq!(sum.predicted, iv.predicted);
        for r in [0.1, 0.4, 0.8] {
            let x = [r, 0.0, 0.0];
            assert!((sum.potential(&dom, &x).unwrap() - iv.potential(&dom, &x).unwrap()).abs() < 1e-12);
        }
        let zero = PotentialSpec::zero(&dom);
        let same = sum_spec(&iv, &zero, &dom).unwrap();
        assert_eq!(same.predicted, iv.predicted);
        assert!(matches!(sum_spec(&iv, &iv, &dom), Err(Error::OverlappingSingularities(_))));
    }
}
