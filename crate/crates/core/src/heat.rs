//! Heat semigroup: time stepping, kernel synthesis, two-sided kernel fits,
//! ultracontractive constants and parabolic Harnack scans.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::DiscreteForm;
use crate::error::{Error, Result};
use crate::geometry::{Coord, Exponents, StratifiedDomain};
use crate::linalg::{dense_generalized_eigen, BandedSym};
use crate::spectral::GroundState;

/// Largest free-node count for which kernels are synthesized from a dense
/// eigendecomposition.
pub const DENSE_LIMIT: usize = 2000;

/// Kernel values below this are treated as underflow.
pub const UNDERFLOW_FLOOR: f64 = 1e-250;

/// Default relative floor below which synthesized kernel values are
/// cancellation noise.
pub const RELATIVE_FLOOR: f64 = 1e-10;

/// `M u' = -K u` with `K = A - P` and the row-sum lumped mass.
#[derive(Debug, Clone)]
pub struct HeatOperator {
    pub k: BandedSym,
    pub m: BandedSym,
}

impl HeatOperator {
    pub fn new(form: &DiscreteForm) -> Self {
        Self { k: form.operator(), m: form.mass.lumped() }
    }

    /// Crank–Nicolson with two implicit-Euler half steps at the start.
    pub fn propagate(&self, u0: &[f64], t: f64, steps: usize) -> Result<Vec<f64>> {
        if !(t > 0.0) || steps == 0 {
            return Err(Error::ParameterOutOfRange(format!("t = {t}, steps = {steps}")));
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(0));
        }
        let dt = t / steps as f64;
        let lhs = self.m.combine(1.0, &self.k, 0.5 * dt).cholesky()?;
        let mut u = u0.to_vec();
        for step in 1..=steps + 1 {
            let mut rhs = self.m.matvec(&u);
            if step > 2 {
                let ku = self.k.matvec(&u);
                for (r, k) in rhs.iter_mut().zip(&ku) {
                    *r -= 0.5 * dt * k;
                }
            }
            lhs.solve_in_place(&mut rhs);
            if rhs.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState(step));
            }
            u = rhs;
        }
        Ok(u)
    }
}

/// Evolves free-node data `u0` to time `t`.
pub fn propagate(form: &DiscreteForm, u0: &[f64], t: f64, steps: usize) -> Result<Vec<f64>> {
    HeatOperator::new(form).propagate(u0, t, steps)
}

/// Discrete kernel `H(t) = Σ e^{-λ_j t} ψ_j ψ_jᵀ` from all modes of the
/// lumped system.
#[derive(Debug, Clone)]
pub struct KernelSynth {
    pub values: Vec<f64>,
    /// Mass-orthonormal modes as columns.
    pub modes: DMatrix<f64>,
    pub mass: Vec<f64>,
}

impl KernelSynth {
    pub fn new(form: &DiscreteForm) -> Result<Self> {
        let n = form.mesh.free_count();
        if n > DENSE_LIMIT {
            return Err(Error::BudgetExceeded { nodes: n, cap: DENSE_LIMIT });
        }
        let op = HeatOperator::new(form);
        let (values, modes) = dense_generalized_eigen(&op.k.to_dense(), &op.m.to_dense())?;
        Ok(Self { values, modes, mass: op.m.diagonal() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn decay(&self, t: f64) -> Vec<f64> {
        self.values.iter().map(|l| (-l * t).exp()).collect()
    }

    /// `h(t, x_i, x_j)` for free nodes `i`, `j`.
    pub fn kernel(&self, t: f64, i: usize, j: usize) -> f64 {
        let w = self.decay(t);
        (0..self.len()).map(|k| w[k] * self.modes[(i, k)] * self.modes[(j, k)]).sum()
    }

    /// `h(t, ·, x_j)`.
    pub fn column(&self, t: f64, j: usize) -> Vec<f64> {
        let w = self.decay(t);
        let n = self.len();
        let coeff: Vec<f64> = (0..n).map(|k| w[k] * self.modes[(j, k)]).collect();
        (0..n).map(|i| (0..n).map(|k| coeff[k] * self.modes[(i, k)]).sum()).collect()
    }

    /// `∫ h(t, ·, y) u0(y) dy`.
    pub fn evolve(&self, u0: &[f64], t: f64) -> Vec<f64> {
        let n = self.len();
        let w = self.decay(t);
        let coeff: Vec<f64> =
            (0..n).map(|k| w[k] * (0..n).map(|i| self.modes[(i, k)] * self.mass[i] * u0[i]).sum::<f64>()).collect();
        (0..n).map(|i| (0..n).map(|k| coeff[k] * self.modes[(i, k)]).sum()).collect()
    }

    /// Bound on `|h(t,x,y)|` from modes beyond the first `j`.
    pub fn tail_bound(&self, t: f64, i: usize, j: usize, modes: usize) -> f64 {
        let w = self.decay(t);
        (modes..self.len()).map(|k| (w[k] * self.modes[(i, k)] * self.modes[(j, k)]).abs()).sum()
    }
}

/// `h(t, ·, y)` by synthesis when the mesh is small enough, otherwise by
/// propagating `M⁻¹ e_y`.
pub fn kernel_column(form: &DiscreteForm, y: usize, t: f64) -> Result<Vec<f64>> {
    if y >= form.mesh.free_count() {
        return Err(Error::ParameterOutOfRange(format!("node {y} is not a free node")));
    }
    if form.mesh.free_count() <= DENSE_LIMIT {
        return Ok(KernelSynth::new(form)?.column(t, y));
    }
    let op = HeatOperator::new(form);
    let mut u0 = vec![0.0; form.mesh.free_count()];
    u0[y] = 1.0 / op.m.get(y, y);
    op.propagate(&u0, t, 400)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub h: f64,
    pub model: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSpread {
    pub t: f64,
    /// `ln(max/min)` of the short-time ratio at this time.
    pub short: f64,
    /// `ln(max/min)` of `h e^{λ₁t} / (∏d^α(x) ∏d^α(y))`.
    pub long: f64,
    /// `max/min - 1` of `h e^{λ₁t} / (φ₁(x) φ₁(y))`.
    pub ground_state: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCertificate {
    /// Gaussian rate `c` in `e^{-c|x-y|²/t}`.
    pub gaussian_rate: f64,
    pub c1: f64,
    pub c2: f64,
    /// Short/long crossover time.
    pub crossover: f64,
    pub long_c1: f64,
    pub long_c2: f64,
    /// First sampled time after which the ground-state ratio stays within 2%.
    pub settling_time: Option<f64>,
    pub spreads: Vec<TimeSpread>,
    pub samples: Vec<SandwichSample>,
    pub excluded: usize,
    /// Computational dimension used in `t^{-n/2}`.
    pub n: usize,
}

impl KernelCertificate {
    pub fn spread(&self) -> f64 {
        self.c2 / self.c1
    }

    /// Largest ground-state ratio spread over times at or beyond `t`.
    pub fn long_time_spread_after(&self, t: f64) -> f64 {
        self.spreads.iter().filter(|s| s.t >= t).map(|s| s.ground_state).fold(0.0, f64::max)
    }
}

/// Sample points and times for kernel fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    /// Free node indices.
    pub nodes: Vec<usize>,
    pub short_times: Vec<f64>,
    /// Times for the crossover and long-time checks.
    pub long_times: Vec<f64>,
    pub max_separation: f64,
    /// Samples with `h ≤ floor·√(h(t,x,x) h(t,y,y))` are excluded.
    pub relative_floor: f64,
}

impl SampleGrid {
    fn resolved(&self, synth: &KernelSynth, t: f64, i: usize, j: usize) -> Option<f64> {
        let h = synth.kernel(t, i, j);
        let scale = (synth.kernel(t, i, i) * synth.kernel(t, j, j)).abs().sqrt();
        (h > UNDERFLOW_FLOOR && h > self.relative_floor * scale).then_some(h)
    }

    /// Free nodes closest to the given ambient points, deduplicated.
    pub fn nearest_nodes(form: &DiscreteForm, points: &[Vec<f64>]) -> Vec<usize> {
        let coords = form.free_coords();
        let mut out: Vec<usize> = Vec::new();
        for p in points {
            let best = (0..coords.len())
                .min_by(|a, b| dist_to_point(&coords[*a], p).total_cmp(&dist_to_point(&coords[*b], p)));
            if let Some(b) = best {
                if !out.contains(&b) {
                    out.push(b);
                }
            }
        }
        out
    }
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    (0..count).map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64)).collect()
}

fn dist_to_point(c: &[Coord], p: &[f64]) -> f64 {
    c.iter().zip(p).map(|(a, b)| (a.value() - b).powi(2)).sum::<f64>().sqrt()
}

fn separation(a: &[Coord], b: &[Coord]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.delta(*y).powi(2)).sum::<f64>().sqrt()
}

fn boundary_factor(dom: &StratifiedDomain, alphas: &Exponents, c: &[Coord], t: f64) -> Result<f64> {
    let mut f = 1.0;
    for (label, a) in alphas {
        if *a != 0.0 {
            let d = dom.stratum_distance_coords(dom.stratum(label)?, c);
            f *= (1.0 + t.sqrt() / d).powf(-a);
        }
    }
    Ok(f)
}

fn spread_of(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Fits the short-time sandwich, the crossover time and long-time constants.
pub fn fit_sandwich(
    synth: &KernelSynth,
    form: &DiscreteForm,
    gs: &GroundState,
    alphas: &Exponents,
    grid: &SampleGrid,
) -> Result<KernelCertificate> {
    let dom = &form.domain;
    let n = form.mesh.dimension();
    let coords = form.free_coords();
    let pairs: Vec<(usize, usize)> = grid
        .nodes
        .iter()
        .flat_map(|i| grid.nodes.iter().map(move |j| (*i, *j)))
        .filter(|(i, j)| i <= j && separation(&coords[*i], &coords[*j]) <= grid.max_separation)
        .collect();
    if pairs.is_empty() || grid.short_times.is_empty() {
        return Err(Error::EmptyGrid);
    }
    // (t, i, j, h, base model without the Gaussian, |x-y|²)
    let mut raw = Vec::new();
    let mut excluded = 0;
    for &t in &grid.short_times {
        for &(i, j) in &pairs {
            let Some(h) = grid.resolved(synth, t, i, j) else {
                excluded += 1;
                continue;
            };
            let base = boundary_factor(dom, alphas, &coords[i], t)?
                * boundary_factor(dom, alphas, &coords[j], t)?
                * t.powf(-(n as f64) / 2.0);
            raw.push((t, i, j, h, base, separation(&coords[i], &coords[j]).powi(2)));
        }
    }
    if raw.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let log_ratios =
        |c: f64| -> Vec<f64> { raw.iter().map(|(t, _, _, h, base, r2)| h.ln() - base.ln() + c * r2 / t).collect() };
    let mut best = (f64::INFINITY, 0.25);
    for k in 1..=32 {
        let c = k as f64 / 16.0;
        let s = spread_of(&log_ratios(c));
        if s < best.0 {
            best = (s, c);
        }
    }
    let c = best.1;
    let lr = log_ratios(c);
    if best.0 > 1e6f64.ln() {
        return Err(Error::UnboundedRatio(best.0.exp()));
    }
    let c1 = lr.iter().cloned().fold(f64::INFINITY, f64::min).exp();
    let c2 = lr.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
    let samples = raw
        .iter()
        .zip(&lr)
        .map(|((t, i, j, h, base, r2), l)| SandwichSample {
            t: *t,
            x: coords[*i].iter().map(|c| c.value()).collect(),
            y: coords[*j].iter().map(|c| c.value()).collect(),
            h: *h,
            model: base * (-c * r2 / t).exp(),
            ratio: l.exp(),
        })
        .collect();

    let lambda = gs.lambda1;
    let product = |node: usize| -> Result<f64> { dom.weight_at(alphas, &coords[node]).map(|w| w.sqrt()) };
    let mut spreads = Vec::new();
    let mut long_all = Vec::new();
    let mut times: Vec<f64> = grid.short_times.iter().chain(&grid.long_times).cloned().collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for &t in &times {
        let mut short = Vec::new();
        let mut long = Vec::new();
        let mut ground = Vec::new();
        for &(i, j) in &pairs {
            let Some(h) = grid.resolved(synth, t, i, j) else {
                continue;
            };
            let base = boundary_factor(dom, alphas, &coords[i], t)?
                * boundary_factor(dom, alphas, &coords[j], t)?
                * t.powf(-(n as f64) / 2.0);
            let r2 = separation(&coords[i], &coords[j]).powi(2);
            short.push(h.ln() - base.ln() + c * r2 / t);
            let scaled = h.ln() + lambda * t;
            long.push(scaled - (product(i)? * product(j)?).ln());
            ground.push(scaled - (gs.phi1[i] * gs.phi1[j]).ln());
        }
        if short.is_empty() {
            continue;
        }
        spreads.push(TimeSpread {
            t,
            short: spread_of(&short),
            long: spread_of(&long),
            ground_state: spread_of(&ground).exp() - 1.0,
        });
        long_all.push((t, long));
    }
    let crossover = spreads
        .iter()
        .find(|s| s.long <= s.short)
        .map(|s| s.t)
        .unwrap_or_else(|| times.last().copied().unwrap_or(f64::NAN));
    let tail: Vec<f64> = long_all.iter().filter(|(t, _)| *t >= crossover).flat_map(|(_, v)| v.clone()).collect();
    let long_c1 = tail.iter().cloned().fold(f64::INFINITY, f64::min).exp();
    let long_c2 = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
    let settling_time = spreads
        .iter()
        .enumerate()
        .find(|(k, _)| spreads[*k..].iter().all(|s| s.ground_state <= 0.02))
        .map(|(_, s)| s.t);
    Ok(KernelCertificate {
        gaussian_rate: c,
        settling_time,
        c1,
        c2,
        crossover,
        long_c1,
        long_c2,
        spreads,
        samples,
        excluded,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltracontractiveBound {
    pub constant: f64,
    /// `(n + 2A) / 2`.
    pub exponent: f64,
    pub ambient_n: usize,
    pub computational_n: usize,
}

/// `max h t^{(n+2A)/2} e^{λ₁t} / (∏d^α(x) ∏d^α(y))` over the grid.
pub fn ultracontractive_bound(
    synth: &KernelSynth,
    form: &DiscreteForm,
    gs: &GroundState,
    alphas: &Exponents,
    grid: &SampleGrid,
) -> Result<UltracontractiveBound> {
    let dom = &form.domain;
    let coords = form.free_coords();
    let a_max = alphas.values().cloned().fold(0.0, f64::max);
    let n = form.mesh.dimension();
    let exponent = (n as f64 + 2.0 * a_max) / 2.0;
    let mut best = 0.0f64;
    let mut count = 0;
    let times: Vec<f64> = grid.short_times.iter().chain(&grid.long_times).cloned().collect();
    for &t in &times {
        for &i in &grid.nodes {
            for &j in &grid.nodes {
                let Some(h) = grid.resolved(synth, t, i, j) else {
                    continue;
                };
                let w = (dom.weight_at(alphas, &coords[i])? * dom.weight_at(alphas, &coords[j])?).sqrt();
                best = best.max(h * t.powf(exponent) * (gs.lambda1 * t).exp() / w);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyGrid);
    }
    Ok(UltracontractiveBound { constant: best, exponent, ambient_n: dom.dimension, computational_n: n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackEntry {
    pub center: Vec<f64>,
    pub radius: f64,
    pub boundary_touching: bool,
    pub sample: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub c_h: f64,
    pub interior_max: f64,
    pub boundary_max: f64,
    pub entries: Vec<HarnackEntry>,
}

impl HarnackReport {
    /// Largest ratio for one initial datum.
    pub fn max_for_sample(&self, sample: usize) -> f64 {
        self.entries.iter().filter(|e| e.sample == sample).map(|e| e.ratio).fold(0.0, f64::max)
    }
}

/// `sup_{ℬ(x,r/2)×(r²/4,r²/2)} u/φ₁ / inf_{ℬ(x,r/2)×(3r²/4,r²)} u/φ₁` for each
/// center, radius and initial datum.
pub fn harnack_scan(
    synth: &KernelSynth,
    form: &DiscreteForm,
    gs: &GroundState,
    centers: &[Vec<f64>],
    radii: &[f64],
    data: &[Vec<f64>],
) -> Result<HarnackReport> {
    let dom = &form.domain;
    let coords = form.free_coords();
    let r_max = dom.localization_beta / 2.0;
    let window_times = |a: f64, b: f64| (0..6).map(move |k| a + (b - a) * k as f64 / 5.0);
    let mut entries = Vec::new();
    for (s, u0) in data.iter().enumerate() {
        let scale = u0.iter().cloned().fold(0.0, f64::max);
        let mut cache: Vec<(f64, Vec<f64>)> = Vec::new();
        for &r in radii {
            if !(r > 0.0 && r < r_max) {
                return Err(Error::RadiusTooLarge { radius: r, beta: r_max });
            }
            let mut states = Vec::new();
            for t in window_times(r * r / 4.0, r * r / 2.0).chain(window_times(0.75 * r * r, r * r)) {
                let u = match cache.iter().find(|(tc, _)| *tc == t) {
                    Some((_, u)) => u.clone(),
                    None => {
                        let u = synth.evolve(u0, t);
                        cache.push((t, u.clone()));
                        u
                    }
                };
                let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
                if lo < -1e-10 * scale {
                    return Err(Error::NonPositiveSolution(lo));
                }
                states.push(u);
            }
            for x in centers {
                let ball: Vec<usize> = (0..coords.len()).filter(|i| dist_to_point(&coords[*i], x) < r / 2.0).collect();
                if ball.is_empty() {
                    continue;
                }
                let ratio_at = |u: &[f64], i: usize| u[i] / gs.phi1[i];
                let sup = states[..6]
                    .iter()
                    .flat_map(|u| ball.iter().map(move |i| ratio_at(u, *i)))
                    .fold(f64::NEG_INFINITY, f64::max);
                let inf = states[6..]
                    .iter()
                    .flat_map(|u| ball.iter().map(move |i| ratio_at(u, *i)))
                    .fold(f64::INFINITY, f64::min);
                if !(inf > 0.0) {
                    return Err(Error::NonPositiveSolution(inf));
                }
                let d = dom.distance_all(x).unwrap_or(0.0);
                entries.push(HarnackEntry {
                    center: x.clone(),
                    radius: r,
                    boundary_touching: d < dom.gamma * r,
                    sample: s,
                    ratio: sup / inf,
                });
            }
        }
    }
    let max_of =
        |f: &dyn Fn(&HarnackEntry) -> bool| entries.iter().filter(|e| f(e)).map(|e| e.ratio).fold(0.0, f64::max);
    Ok(HarnackReport {
        c_h: max_of(&|_| true),
        interior_max: max_of(&|e| !e.boundary_touching),
        boundary_max: max_of(&|e| e.boundary_touching),
        entries,
    })
}

/// Positive initial data: a random mixture of Gaussian bumps on free nodes.
pub fn random_positive_mixture<R: Rng>(form: &DiscreteForm, rng: &mut R, components: usize) -> Vec<f64> {
    let coords = form.free_coords();
    let dim = form.mesh.dimension();
    let lo: Vec<f64> = form.mesh.axes.iter().map(|a| a.lo).collect();
    let hi: Vec<f64> = form.mesh.axes.iter().map(|a| a.hi).collect();
    let bumps: Vec<(Vec<f64>, f64, f64)> = (0..components)
        .map(|_| {
            let c: Vec<f64> = (0..dim).map(|d| rng.gen_range(lo[d]..hi[d])).collect();
            let width = rng.gen_range(0.05..0.3) * (hi[0] - lo[0]);
            let weight = rng.gen_range(0.2..1.0);
            (c, width, weight)
        })
        .collect();
    coords
        .iter()
        .map(|c| {
            bumps
                .iter()
                .map(|(centre, width, weight)| weight * (-(dist_to_point(c, centre) / width).powi(2)).exp())
                .sum()
        })
        .collect()
}

/// `count` mixtures drawn in sequence from a ChaCha8 stream seeded with `seed`.
pub fn random_positive_data(form: &DiscreteForm, count: usize, components: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_positive_mixture(form, &mut rng, components)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::MeshParams;
    use crate::potentials::{example_iii, PotentialSpec};
    use crate::spectral::{solve_ground_state_with, MassKind};
    use std::f64::consts::PI;

    fn laplace_form(h: f64) -> DiscreteForm {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        DiscreteForm::build(&dom, &PotentialSpec::zero(&dom), &MeshParams::uniform(h)).unwrap()
    }

    #[test]
    fn sine_mode_decays_exactly() {
        let form = laplace_form(1.0 / 512.0);
        let u0 = form.sample(|c| (PI * c[0].value()).sin());
        let u = propagate(&form, &u0, 0.1, 400).unwrap();
        let exact: Vec<f64> = u0.iter().map(|v| v * (-PI * PI * 0.1).exp()).collect();
        let err = u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn ground_state_is_separable() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let form = DiscreteForm::build(&dom, &example_iii(&dom).unwrap(), &MeshParams::graded(1e-8, 0.5)).unwrap();
        let gs = solve_ground_state_with(&form, 1e-13, MassKind::Lumped, None).unwrap();
        let synth = KernelSynth::new(&form).unwrap();
        let u = synth.evolve(&gs.phi1, 0.3);
        for (a, b) in u.iter().zip(&gs.phi1) {
            assert!((a - b * (-gs.lambda1 * 0.3).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn kernel_is_symmetric_and_positive() {
        let form = laplace_form(1.0 / 64.0);
        let synth = KernelSynth::new(&form).unwrap();
        for (i, j) in [(3, 40), (10, 11), (0, 62)] {
            let a = synth.kernel(0.01, i, j);
            let b = synth.kernel(0.01, j, i);
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
        let col = synth.column(0.01, 20);
        assert!(col.iter().all(|v| *v > -1e-10));
    }

    #[test]
    fn semigroup_property() {
        let form = laplace_form(1.0 / 64.0);
        let synth = KernelSynth::new(&form).unwrap();
        let (i, j) = (12, 40);
        let lhs: f64 =
            (0..synth.len()).map(|z| synth.kernel(0.02, i, z) * synth.mass[z] * synth.kernel(0.03, z, j)).sum();
        assert!((lhs - synth.kernel(0.05, i, j)).abs() < 1e-6);
    }

    #[test]
    fn time_stepping_preserves_positivity() {
        let form = laplace_form(1.0 / 128.0);
        let mut u0 = vec![0.0; form.mesh.free_count()];
        u0[60] = 1.0;
        let u = propagate(&form, &u0, 0.01, 200).unwrap();
        assert!(u.iter().all(|v| *v >= -1e-10));
    }

    #[test]
    fn harnack_of_separable_solution() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let form = DiscreteForm::build(&dom, &example_iii(&dom).unwrap(), &MeshParams::graded(1e-8, 0.5)).unwrap();
        let gs = solve_ground_state_with(&form, 1e-13, MassKind::Lumped, None).unwrap();
        let synth = KernelSynth::new(&form).unwrap();
        let r = 0.1;
        let rep = harnack_scan(&synth, &form, &gs, &[vec![0.5]], &[r], std::slice::from_ref(&gs.phi1)).unwrap();
        let expected = (gs.lambda1 * 0.75 * r * r).exp();
        assert!((rep.c_h / expected - 1.0).abs() < 1e-6, "{} vs {expected}", rep.c_h);
    }

    #[test]
    fn matches_classical_sine_series() {
        let form = laplace_form(1.0 / 1024.0);
        let synth = KernelSynth::new(&form).unwrap();
        let coords = form.free_coords();
        let series = |x: f64, y: f64| -> f64 {
            (1..400)
                .map(|k| {
                    let kf = k as f64 * PI;
                    2.0 * (kf * x).sin() * (kf * y).sin() * (-kf * kf * 0.05).exp()
                })
                .sum()
        };
        for (i, j) in [(100, 500), (511, 511), (20, 900)] {
            let exact = series(coords[i][0].value(), coords[j][0].value());
            assert!((synth.kernel(0.05, i, j) - exact).abs() < 1e-4);
        }
    }

    #[test]
    fn l1_contraction_without_potential() {
        let form = laplace_form(1.0 / 128.0);
        let synth = KernelSynth::new(&form).unwrap();
        for t in [1e-3, 1e-2, 0.1] {
            for j in [0, 30, 63, 126] {
                let col = synth.column(t, j);
                let mass: f64 = col.iter().zip(&synth.mass).map(|(h, m)| h * m).sum();
                assert!(mass <= 1.0 + 1e-8, "{mass}");
            }
        }
    }

    #[test]
    fn free_sandwich_is_bounded() {
        let form = laplace_form(1.0 / 512.0);
        let gs = solve_ground_state_with(&form, 1e-12, MassKind::Lumped, None).unwrap();
        let synth = KernelSynth::new(&form).unwrap();
        let points: Vec<Vec<f64>> = [0.3, 0.4, 0.5, 0.6, 0.7].iter().map(|x| vec![*x]).collect();
        let grid = SampleGrid {
            nodes: SampleGrid::nearest_nodes(&form, &points),
            short_times: log_grid(1e-3, 1e-1, 7),
            long_times: log_grid(0.2, 2.0, 5),
            max_separation: 0.5,
            relative_floor: RELATIVE_FLOOR,
        };
        let cert = fit_sandwich(&synth, &form, &gs, &Exponents::new(), &grid).unwrap();
        assert!(cert.c1 <= cert.c2);
        assert!(cert.crossover > 0.0);
        assert!(cert.spread() <= 50.0, "{}", cert.spread());
        assert!(cert.samples.iter().all(|s| s.ratio >= cert.c1 * (1.0 - 1e-12) && s.ratio <= cert.c2 * (1.0 + 1e-12)));
        let empty = SampleGrid { nodes: vec![], ..grid.clone() };
        assert_eq!(fit_sandwich(&synth, &form, &gs, &Exponents::new(), &empty).unwrap_err(), Error::EmptyGrid);
    }

    #[test]
    fn ultracontractive_constant_shrinks_with_the_grid() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let spec = example_iii(&dom).unwrap();
        let form =
            DiscreteForm::build(&dom, &spec, &MeshParams { h_max: 1.0 / 128.0, ..MeshParams::graded(1e-8, 0.5) })
                .unwrap();
        let gs = solve_ground_state_with(&form, 1e-12, MassKind::Lumped, None).unwrap();
        let synth = KernelSynth::new(&form).unwrap();
        let wide: Vec<Vec<f64>> = [0.01, 0.1, 0.3, 0.5, 0.7, 0.99].iter().map(|x| vec![*x]).collect();
        let grid = |pts: &[Vec<f64>]| SampleGrid {
            nodes: SampleGrid::nearest_nodes(&form, pts),
            short_times: log_grid(1e-3, 1e-1, 5),
            long_times: vec![0.5, 1.0],
            max_separation: 1.0,
            relative_floor: RELATIVE_FLOOR,
        };
        let big = ultracontractive_bound(&synth, &form, &gs, &spec.predicted, &grid(&wide)).unwrap();
        let small = ultracontractive_bound(&synth, &form, &gs, &spec.predicted, &grid(&wide[2..4])).unwrap();
        assert_eq!(big.exponent, 1.0);
        assert!(big.constant.is_finite());
        assert!(small.constant <= big.constant);
    }

    #[test]
    fn radius_and_positivity_checks() {
        let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
        let form = DiscreteForm::build(
            &dom,
            &example_iii(&dom).unwrap(),
            &MeshParams { h_max: 1.0 / 64.0, ..MeshParams::graded(1e-6, 0.5) },
        )
        .unwrap();
        let gs = solve_ground_state_with(&form, 1e-12, MassKind::Lumped, None).unwrap();
        let synth = KernelSynth::new(&form).unwrap();
        let err = harnack_scan(&synth, &form, &gs, &[vec![0.5]], &[0.2], std::slice::from_ref(&gs.phi1)).unwrap_err();
        assert!(matches!(err, Error::RadiusTooLarge { .. }));
        let neg: Vec<f64> = gs.phi1.iter().map(|v| -v).collect();
        let err = harnack_scan(&synth, &form, &gs, &[vec![0.5]], &[0.1], &[neg]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveSolution(_)));
        assert!(propagate(&form, &gs.phi1, -1.0, 10).is_err());
    }
}
