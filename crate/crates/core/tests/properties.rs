use hardyheat_core::discretize::{DiscreteForm, MeshParams};
use hardyheat_core::potentials::{example_i, example_iii, pole_exponent, sum_spec};
use hardyheat_core::spectral::solve_ground_state;
use hardyheat_core::{Coord, Exponents, StratifiedDomain};
use proptest::prelude::*;

fn boundary(a: f64) -> Exponents {
    [("boundary".to_string(), a)].into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pole_exponent_decreases_with_strength(n in 3usize..8, c1 in 0.0f64..1.0, c2 in 0.0f64..1.0) {
        let limit = (n as f64 - 2.0).powi(2) / 4.0;
        let (a, b) = (c1.min(c2) * limit, c1.max(c2) * limit);
        prop_assert!(pole_exponent(n, b) <= pole_exponent(n, a) + 1e-14);
        prop_assert!(pole_exponent(n, b) >= -(n as f64 - 2.0) / 2.0 - 1e-14);
    }

    #[test]
    fn pole_exponent_solves_indicial_equation(n in 3usize..8, t in 0.0f64..1.0) {
        let c = t * (n as f64 - 2.0).powi(2) / 4.0;
        let b = pole_exponent(n, c);
        prop_assert!((b * (b + n as f64 - 2.0) + c).abs() < 1e-9);
    }

    #[test]
    fn sums_commute(c1 in 0.0f64..0.25, c2 in 0.0f64..0.25, x in 0.05f64..0.95) {
        let dom = StratifiedDomain::radial_ball(1.0, 3, true).unwrap();
        let p = example_i(&dom, &[(vec![0.0; 3], c1)]).unwrap();
        let q = example_i(&dom, &[(vec![0.0; 3], c2)]).unwrap();
        if let (Ok(s1), Ok(s2)) = (sum_spec(&p, &q, &dom), sum_spec(&q, &p, &dom)) {
            let y = [x, 0.0, 0.0];
            prop_assert!((s1.potential(&dom, &y).unwrap() - s2.potential(&dom, &y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn volume_grows_with_radius(x in 0.0f64..1.0, r in 0.01f64..0.2, a in 0.0f64..1.5) {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let v1 = dom.weighted_volume(&[x], r, &boundary(a)).unwrap();
        let v2 = dom.weighted_volume(&[x], 1.2 * r, &boundary(a)).unwrap();
        prop_assert!(v2 >= v1);
        prop_assert!(v1 > 0.0);
    }

    #[test]
    fn anchored_distances_are_exact(base in prop::sample::select(vec![0.0, 1.0]), e in 20i32..300) {
        let off = 2f64.powi(-e) * if base == 0.0 { 1.0 } else { -1.0 };
        let c = Coord::anchored(base, off);
        prop_assert_eq!(c.dist_to(base), off.abs());
    }
}

#[test]
fn energy_is_quadratic() {
    let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
    let form = DiscreteForm::build(
        &dom,
        &example_iii(&dom).unwrap(),
        &MeshParams { h_max: 1.0 / 64.0, ..MeshParams::graded(1e-8, 0.5) },
    )
    .unwrap();
    let gs = solve_ground_state(&form, 1e-12).unwrap();
    let u: Vec<f64> = gs.phi1.iter().map(|v| 2.5 * v).collect();
    assert!((form.energy(&u) / form.energy(&gs.phi1) - 6.25).abs() < 1e-10);
}
