use hardyheat_core::potentials::{
    example_i, example_ii_catalog, example_iii, example_iv, example_v, sum_spec, PotentialSpec,
};
use hardyheat_core::{Result, StratifiedDomain};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    pub parameters: String,
    pub predicted: Vec<(String, f64)>,
    pub critical: Vec<String>,
}

impl CatalogEntry {
    fn from_spec(spec: &PotentialSpec, parameters: String) -> Self {
        Self {
            name: spec.name.clone(),
            parameters,
            predicted: spec.predicted.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            critical: spec.critical.clone(),
        }
    }
}

/// Catalog potentials on the unit ball of `R^n` with their predicted
/// ground-state exponents.
pub fn catalog(n: usize) -> Result<Vec<CatalogEntry>> {
    let ball = StratifiedDomain::radial_ball(1.0, n, false)?;
    let mut out = vec![CatalogEntry::from_spec(&example_iii(&ball)?, "c = 1/4".into())];
    if n >= 3 {
        let punctured = StratifiedDomain::radial_ball(1.0, n, true)?;
        let limit = (n as f64 - 2.0).powi(2) / 4.0;
        let origin = vec![0.0; n];
        for c in [0.0, 0.75 * limit, limit] {
            let spec = example_i(&punctured, &[(origin.clone(), c)])?;
            out.push(CatalogEntry::from_spec(&spec, format!("c = {c}")));
        }
        out.push(CatalogEntry::from_spec(&example_iv(&punctured)?, String::new()));
        let lo = -(n as f64 - 2.0) / 2.0;
        for a in [lo, lo / 2.0] {
            out.push(CatalogEntry::from_spec(&example_v(a, n)?, format!("a = {a}")));
        }
        let pole = example_i(&punctured, &[(origin, 0.75 * limit)])?;
        let sum = sum_spec(&example_iii(&ball)?, &pole, &punctured)?;
        out.push(CatalogEntry::from_spec(&sum, format!("c = {}", 0.75 * limit)));
    }
    if n >= 4 {
        out.push(CatalogEntry::from_spec(&example_ii_catalog(n)?, String::new()));
    }
    Ok(out)
}

pub fn render(entries: &[CatalogEntry]) -> String {
    let mut s = format!("{:<24} {:<16} {:<36} {}\n", "potential", "parameters", "predicted exponents", "critical");
    for e in entries {
        let exps: Vec<String> = e.predicted.iter().map(|(l, a)| format!("{l}={a:+.4}")).collect();
        s.push_str(&format!("{:<24} {:<16} {:<36} {}\n", e.name, e.parameters, exps.join(" "), e.critical.join(",")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_ball_catalog() {
        let c = catalog(3).unwrap();
        let poles: Vec<f64> = c
            .iter()
            .filter(|e| e.name == "example_I")
            .map(|e| e.predicted.iter().find(|(l, _)| l == "origin").unwrap().1)
            .collect();
        assert_eq!(poles.len(), 3);
        assert!((poles[0]).abs() < 1e-15 && (poles[1] + 0.25).abs() < 1e-15 && (poles[2] + 0.5).abs() < 1e-15);
        assert!(render(&c).contains("example_V"));
        assert!(!c.iter().any(|e| e.name == "example_II"));
        assert!(catalog(4).unwrap().iter().any(|e| e.name == "example_II"));
    }

    #[test]
    fn interval_catalog_has_boundary_entry() {
        let c = catalog(1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].predicted, vec![("boundary".to_string(), 0.5)]);
    }
}
