use std::sync::OnceLock;

use hardyheat_core::discretize::{DiscreteForm, MeshParams};
use hardyheat_core::heat::{
    fit_sandwich, harnack_scan, random_positive_data, ultracontractive_bound, HarnackReport, KernelSynth, SampleGrid,
};
use hardyheat_core::inequalities::{
    boundary_concentrated, codim_block, critical_hardy_log, local_moser, local_poincare, random_bump_mixtures,
    refine_levels, sobolev_quotient, weighted_log_sobolev, LocalReport, QuotientOptions, SobolevWeight, Verdict,
};
use hardyheat_core::potentials::PotentialSpec;
use hardyheat_core::spectral::{
    boundary_layer_mu1, check_bounded_below, fit_exponents, ground_state_identity, richardson, solve_ground_state,
    solve_ground_state_with, GroundState, MassKind,
};
use hardyheat_core::{Error, Exponents, Result, StratifiedDomain};
use serde_json::json;

use crate::config::{ExperimentConfig, QuotientVariant, TaskConfig};
use crate::report::{fmt_number, fmt_point, to_value, Check, Table, TaskOutcome};

const GROUND_STATE_TOL: f64 = 1e-12;

pub struct Solved {
    pub form: DiscreteForm,
    pub gs: GroundState,
}

impl Solved {
    pub fn new(dom: &StratifiedDomain, spec: &PotentialSpec, mesh: &MeshParams) -> Result<Self> {
        let form = DiscreteForm::build(dom, spec, mesh)?;
        let gs = solve_ground_state(&form, GROUND_STATE_TOL)?;
        Ok(Self { form, gs })
    }
}

/// Shared inputs of one run; the config-mesh ground state is solved once,
/// on first use.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub dom: StratifiedDomain,
    pub spec: PotentialSpec,
    pub seed: u64,
    base: OnceLock<Result<Solved>>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig, seed: u64) -> Result<Self> {
        let dom = cfg.domain.build()?;
        let spec = cfg.potential.build(&dom)?;
        Ok(Self { cfg, dom, spec, seed, base: OnceLock::new() })
    }

    pub fn base(&self) -> Result<&Solved> {
        self.base.get_or_init(|| Solved::new(&self.dom, &self.spec, &self.cfg.mesh)).as_ref().map_err(Clone::clone)
    }

    fn alphas(&self, custom: &Option<Exponents>) -> Exponents {
        custom.clone().unwrap_or_else(|| self.spec.predicted.clone())
    }

    fn solved_on(&self, mesh: &MeshParams) -> Result<Solved> {
        Solved::new(&self.dom, &self.spec, mesh)
    }
}

pub fn execute(ctx: &Context, task: &TaskConfig, id: &str) -> Result<TaskOutcome> {
    let mut out = TaskOutcome::new(id, task.kind());
    match task {
        TaskConfig::Spectrum { tol, mass, expect_lambda1, refinement, .. } => {
            let base = ctx.base()?;
            let gs = if *tol == GROUND_STATE_TOL && *mass == MassKind::Consistent {
                base.gs.clone()
            } else {
                solve_ground_state_with(&base.form, *tol, *mass, None)?
            };
            out.summary.insert("lambda1".into(), gs.lambda1);
            out.summary.insert("residual".into(), gs.residual);
            if let Some(e) = expect_lambda1 {
                out.checks.push(Check::at_most("lambda1_relative_error", (gs.lambda1 / e.value - 1.0).abs(), e.rtol));
            }
            let mut levels = Vec::new();
            let mut lambdas = Vec::new();
            out.table = Table::new(&["level", "h_min", "rho", "h_max", "nodes", "lambda1"]);
            if let Some(r) = refinement {
                for (i, p) in refine_levels(&ctx.cfg.mesh, r.levels, r.factor).iter().enumerate() {
                    let s = ctx.solved_on(p)?;
                    out.table.push(vec![
                        i.to_string(),
                        fmt_number(p.h_min),
                        fmt_number(p.rho),
                        fmt_number(p.h_max),
                        s.form.mesh.free_count().to_string(),
                        fmt_number(s.gs.lambda1),
                    ]);
                    out.summary.insert(format!("lambda1_level{i}"), s.gs.lambda1);
                    lambdas.push(s.gs.lambda1);
                    levels
                        .push(json!({"mesh": to_value(p), "nodes": s.form.mesh.free_count(), "lambda1": s.gs.lambda1}));
                }
            }
            let mut extrapolated = None;
            if lambdas.len() >= 2 {
                out.checks.push(Check::holds("bounded_below", check_bounded_below(&lambdas).is_ok()));
                let e = richardson(lambdas[lambdas.len() - 2], lambdas[lambdas.len() - 1], 2.0);
                out.summary.insert("lambda1_extrapolated".into(), e);
                extrapolated = Some(e);
            }
            out.result = json!({
                "lambda1": gs.lambda1,
                "residual": gs.residual,
                "iterations": gs.iterations,
                "min_value": gs.min_value,
                "mass": to_value(&gs.mass),
                "nodes": base.form.mesh.free_count(),
                "refinement": levels,
                "lambda1_extrapolated": extrapolated,
            });
        }
        TaskConfig::Exponents { window, .. } => {
            let base = ctx.base()?;
            let fitted = fit_exponents(&base.form, &base.gs, window.map(|w| (w[0], w[1])))?;
            out.table = Table::new(&[
                "stratum",
                "alpha",
                "predicted",
                "r_lo",
                "r_hi",
                "r_squared",
                "samples",
                "two_sided_ratio",
            ]);
            for f in &fitted {
                out.summary.insert(format!("alpha_{}", f.label), f.alpha);
                if let Some(p) = f.predicted {
                    out.checks.push(Check::at_most(
                        format!("alpha_{}_error", f.label),
                        (f.alpha - p).abs(),
                        ctx.cfg.tolerances.exponent,
                    ));
                }
                out.table.push(vec![
                    f.label.clone(),
                    fmt_number(f.alpha),
                    f.predicted.map(fmt_number).unwrap_or_default(),
                    fmt_number(f.r_lo),
                    fmt_number(f.r_hi),
                    fmt_number(f.r_squared),
                    f.samples.to_string(),
                    fmt_number(f.two_sided_ratio),
                ]);
            }
            out.result = json!({ "lambda1": base.gs.lambda1, "fitted": to_value(&fitted) });
        }
        TaskConfig::Identity { samples, refined, .. } => {
            let base = ctx.base()?;
            let mut defects = Vec::new();
            let mut nodes = Vec::new();
            let probe = |s: &Solved| {
                let us = random_bump_mixtures(&s.form, &s.gs, *samples, ctx.seed);
                ground_state_identity(&s.form, &s.gs, &us)
            };
            defects.push(probe(base)?);
            nodes.push(base.form.mesh.free_count());
            for p in refined {
                let s = ctx.solved_on(p)?;
                defects.push(probe(&s)?);
                nodes.push(s.form.mesh.free_count());
            }
            out.table = Table::new(&["level", "nodes", "defect"]);
            for (i, d) in defects.iter().enumerate() {
                out.summary.insert(format!("defect_level{i}"), *d);
                out.table.push(vec![i.to_string(), nodes[i].to_string(), fmt_number(*d)]);
            }
            out.checks.push(Check::at_most("defect", defects[0], ctx.cfg.tolerances.identity));
            if defects.len() > 1 {
                out.checks.push(Check::holds("defect_decreasing", defects.windows(2).all(|w| w[1] < w[0])));
            }
            out.result = json!({ "defects": defects, "nodes": nodes });
        }
        TaskConfig::Heatkernel {
            points,
            short_times,
            long_times,
            max_separation,
            relative_floor,
            meshes,
            alphas,
            ..
        } => {
            let alphas = ctx.alphas(alphas);
            let tol = &ctx.cfg.tolerances;
            let mut levels = Vec::new();
            let mut spreads = Vec::new();
            out.table = Table::new(&["level", "t", "x", "y", "h", "model", "ratio"]);
            let run_level = |s: &Solved| -> Result<_> {
                let synth = KernelSynth::new(&s.form)?;
                let grid = SampleGrid {
                    nodes: SampleGrid::nearest_nodes(&s.form, points),
                    short_times: short_times.values(),
                    long_times: long_times.values(),
                    max_separation: *max_separation,
                    relative_floor: *relative_floor,
                };
                let cert = fit_sandwich(&synth, &s.form, &s.gs, &alphas, &grid)?;
                let ultra = ultracontractive_bound(&synth, &s.form, &s.gs, &alphas, &grid)?;
                Ok((cert, ultra))
            };
            let owned: Vec<Solved>;
            let solved: Vec<&Solved> = if meshes.is_empty() {
                vec![ctx.base()?]
            } else {
                owned = meshes.iter().map(|m| ctx.solved_on(m)).collect::<Result<_>>()?;
                owned.iter().collect()
            };
            for (i, s) in solved.iter().enumerate() {
                let (cert, ultra) = run_level(s)?;
                let long = cert.long_time_spread_after(cert.crossover);
                out.summary.insert(format!("c1_level{i}"), cert.c1);
                out.summary.insert(format!("c2_level{i}"), cert.c2);
                out.summary.insert(format!("spread_level{i}"), cert.spread());
                out.summary.insert(format!("crossover_level{i}"), cert.crossover);
                out.summary.insert(format!("long_time_spread_level{i}"), long);
                out.summary.insert(format!("ultracontractive_level{i}"), ultra.constant);
                if let Some(t) = cert.settling_time {
                    out.summary.insert(format!("settling_time_level{i}"), t);
                }
                out.checks.push(Check::at_most(format!("spread_level{i}"), cert.spread(), tol.sandwich_spread));
                if let Some(lt) = tol.long_time {
                    out.checks.push(Check::at_most(format!("long_time_spread_level{i}"), long, lt));
                }
                for smp in &cert.samples {
                    out.table.push(vec![
                        i.to_string(),
                        fmt_number(smp.t),
                        fmt_point(&smp.x),
                        fmt_point(&smp.y),
                        fmt_number(smp.h),
                        fmt_number(smp.model),
                        fmt_number(smp.ratio),
                    ]);
                }
                spreads.push(cert.spread());
                levels.push(json!({
                    "nodes": s.form.mesh.free_count(),
                    "lambda1": s.gs.lambda1,
                    "certificate": to_value(&cert),
                    "ultracontractive": to_value(&ultra),
                    "long_time_spread": long,
                }));
            }
            for (i, w) in spreads.windows(2).enumerate() {
                let growth = w[1] / w[0] - 1.0;
                out.summary.insert(format!("spread_growth_level{}", i + 1), growth);
                out.checks.push(Check::at_most(format!("spread_growth_level{}", i + 1), growth, tol.sandwich_growth));
            }
            out.result = json!({ "alphas": to_value(&alphas), "levels": levels });
        }
        TaskConfig::Harnack { centers, radii, data, components, meshes, .. } => {
            let stab = ctx.cfg.tolerances.harnack_stability;
            let owned: Vec<Solved>;
            let solved: Vec<&Solved> = if meshes.is_empty() {
                vec![ctx.base()?]
            } else {
                owned = meshes.iter().map(|m| ctx.solved_on(m)).collect::<Result<_>>()?;
                owned.iter().collect()
            };
            let mut reports: Vec<HarnackReport> = Vec::new();
            out.table = Table::new(&["level", "center", "radius", "boundary_touching", "sample", "ratio"]);
            for (i, s) in solved.iter().enumerate() {
                let synth = KernelSynth::new(&s.form)?;
                let u0 = random_positive_data(&s.form, *data, *components, ctx.seed);
                let rep = harnack_scan(&synth, &s.form, &s.gs, centers, radii, &u0)?;
                out.summary.insert(format!("c_h_level{i}"), rep.c_h);
                out.summary.insert(format!("interior_max_level{i}"), rep.interior_max);
                out.summary.insert(format!("boundary_max_level{i}"), rep.boundary_max);
                out.checks.push(Check::holds(format!("finite_level{i}"), rep.c_h.is_finite()));
                for e in &rep.entries {
                    out.table.push(vec![
                        i.to_string(),
                        fmt_point(&e.center),
                        fmt_number(e.radius),
                        e.boundary_touching.to_string(),
                        e.sample.to_string(),
                        fmt_number(e.ratio),
                    ]);
                }
                reports.push(rep);
            }
            for (i, w) in reports.windows(2).enumerate() {
                for (class, a, b) in [
                    ("interior", w[0].interior_max, w[1].interior_max),
                    ("boundary", w[0].boundary_max, w[1].boundary_max),
                ] {
                    if a > 0.0 && b > 0.0 {
                        let change = (b / a - 1.0).abs();
                        out.summary.insert(format!("{class}_change_level{}", i + 1), change);
                        out.checks.push(Check::at_most(format!("{class}_change_level{}", i + 1), change, stab));
                    }
                }
                for (class, touching) in [("interior", false), ("boundary", true)] {
                    let worst = (0..*data)
                        .map(|k| (class_max(&w[0], touching, Some(k)), class_max(&w[1], touching, Some(k))))
                        .filter(|(a, b)| *a > 0.0 && *b > 0.0)
                        .map(|(a, b)| (b / a - 1.0).abs())
                        .fold(0.0, f64::max);
                    out.summary.insert(format!("{class}_datum_change_level{}", i + 1), worst);
                    out.checks.push(Check::at_most(format!("{class}_datum_change_level{}", i + 1), worst, stab));
                }
            }
            out.result = json!({ "levels": to_value(&reports), "data": data, "components": components });
        }
        TaskConfig::Sobolev { variant, q, lambda, refinement, label, alpha, delta, expect, .. } => {
            let levels = refine_levels(&ctx.cfg.mesh, refinement.levels, refinement.factor);
            let opts = QuotientOptions { seed: ctx.seed, ..QuotientOptions::default() };
            let need =
                |v: &Option<f64>, key: &str| v.ok_or_else(|| Error::ParameterOutOfRange(format!("{key} is required")));
            let rep = match variant {
                QuotientVariant::Plain => {
                    sobolev_quotient(&ctx.dom, &ctx.spec, need(q, "q")?, *lambda, &levels, SobolevWeight::Plain, &opts)?
                }
                QuotientVariant::LogCorrected => sobolev_quotient(
                    &ctx.dom,
                    &ctx.spec,
                    need(q, "q")?,
                    *lambda,
                    &levels,
                    SobolevWeight::LogCorrected,
                    &opts,
                )?,
                QuotientVariant::CriticalHardyLog => critical_hardy_log(&ctx.dom, &ctx.spec, *lambda, &levels, true)?,
                QuotientVariant::CriticalHardy => critical_hardy_log(&ctx.dom, &ctx.spec, *lambda, &levels, false)?,
                QuotientVariant::CodimBlock => {
                    let label =
                        label.as_deref().ok_or_else(|| Error::ParameterOutOfRange("label is required".into()))?;
                    codim_block(
                        &ctx.dom,
                        label,
                        need(q, "q")?,
                        need(alpha, "alpha")?,
                        need(delta, "delta")?,
                        &levels,
                        &opts,
                    )?
                }
            };
            out.table = Table::new(&["level", "h_min", "rho", "h_max", "nodes", "value", "iterations", "converged"]);
            for (i, l) in rep.levels.iter().enumerate() {
                out.summary.insert(format!("value_level{i}"), l.value);
                out.table.push(vec![
                    i.to_string(),
                    fmt_number(l.h_min),
                    fmt_number(l.rho),
                    fmt_number(l.h_max),
                    l.nodes.to_string(),
                    fmt_number(l.value),
                    l.iterations.to_string(),
                    l.converged.to_string(),
                ]);
            }
            out.inconclusive = rep.verdict == Verdict::Inconclusive;
            if let Some(e) = expect {
                out.checks.push(Check::holds("verdict", rep.verdict == *e));
            }
            out.result = to_value(&rep);
        }
        TaskConfig::Logsobolev { eps, slope_eps, label, scales, bumps, .. } => {
            let base = ctx.base()?;
            let mut samples = boundary_concentrated(&base.form, &base.gs, label, &scales.values())?;
            samples.extend(random_bump_mixtures(&base.form, &base.gs, *bumps, ctx.seed));
            let rep =
                weighted_log_sobolev(&base.form, &ctx.spec.predicted, &eps.values(), &slope_eps.values(), &samples)?;
            out.summary.insert("k_hat".into(), rep.k_hat);
            out.summary.insert("slope".into(), rep.slope);
            out.summary.insert("coefficient".into(), rep.coefficient);
            out.summary.insert("slope_error".into(), rep.slope_error());
            out.checks.push(Check::holds("k_hat_finite", rep.k_hat.is_finite()));
            out.checks.push(Check::at_most("slope_error", rep.slope_error(), ctx.cfg.tolerances.log_sobolev_slope));
            out.table = Table::new(&["series", "eps", "bound"]);
            for (e, b) in rep.eps.iter().zip(&rep.bound) {
                out.table.push(vec!["scan".into(), fmt_number(*e), fmt_number(*b)]);
            }
            for (e, b) in rep.slope_eps.iter().zip(&rep.slope_bound) {
                out.table.push(vec!["slope".into(), fmt_number(*e), fmt_number(*b)]);
            }
            out.result = to_value(&rep);
        }
        TaskConfig::Poincare { centers, radii, mesh, alphas, .. } => {
            let alphas = ctx.alphas(alphas);
            let mesh = mesh.clone().unwrap_or_else(|| ctx.cfg.mesh.clone());
            let rep = local_poincare(&ctx.dom, &alphas, centers, radii, &mesh)?;
            local_outcome(&mut out, &rep, "c_p");
            out.result = json!({ "alphas": to_value(&alphas), "report": to_value(&rep) });
        }
        TaskConfig::Moser { centers, radii, nu, samples, mesh, alphas, .. } => {
            let alphas = ctx.alphas(alphas);
            let a_max = alphas.values().cloned().fold(0.0, f64::max);
            let nu = nu.unwrap_or(ctx.dom.dimension as f64 + 2.0 * a_max);
            let mesh = mesh.clone().unwrap_or_else(|| ctx.cfg.mesh.clone());
            let rep = local_moser(&ctx.dom, &alphas, nu, centers, radii, *samples, ctx.seed, &mesh)?;
            local_outcome(&mut out, &rep, "c_m");
            out.result = json!({ "alphas": to_value(&alphas), "nu": nu, "report": to_value(&rep) });
        }
        TaskConfig::Volume { per_axis, radii, alphas, .. } => {
            let alphas = ctx.alphas(alphas);
            let tol = &ctx.cfg.tolerances;
            let fine_radii = interleave_geometric(radii);
            let coarse = ctx.dom.sample_grid(*per_axis, radii);
            let fine = ctx.dom.sample_grid(2 * per_axis, &fine_radii);
            let s0 = ctx.dom.volume_sandwich(&alphas, &coarse)?;
            let s1 = ctx.dom.volume_sandwich(&alphas, &fine)?;
            let d0 = ctx.dom.doubling_constant(&alphas, &coarse)?;
            let d1 = ctx.dom.doubling_constant(&alphas, &fine)?;
            for (k, v) in
                [("spread", s0.spread()), ("spread_refined", s1.spread()), ("doubling", d0), ("doubling_refined", d1)]
            {
                out.summary.insert(k.into(), v);
            }
            out.checks.push(Check::at_most("spread_growth", s1.spread() / s0.spread() - 1.0, tol.volume_growth));
            out.checks.push(Check::at_most("doubling_change", (d1 / d0 - 1.0).abs(), tol.doubling_stability));
            out.table = Table::new(&["x", "r", "volume", "model"]);
            for (x, r) in &coarse {
                out.table.push(vec![
                    fmt_point(x),
                    fmt_number(*r),
                    fmt_number(ctx.dom.weighted_volume(x, *r, &alphas)?),
                    fmt_number(ctx.dom.volume_model(x, *r, &alphas)?),
                ]);
            }
            out.result = json!({
                "alphas": to_value(&alphas),
                "sandwich": to_value(&s0),
                "sandwich_refined": to_value(&s1),
                "doubling": d0,
                "doubling_refined": d1,
            });
        }
        TaskConfig::Appendix { deltas, mesh, .. } => {
            let mesh = mesh.clone().unwrap_or_else(|| ctx.cfg.mesh.clone());
            let levels = boundary_layer_mu1(&ctx.dom, deltas, &mesh)?;
            out.table = Table::new(&["delta", "mu1", "exact", "refined_quotient"]);
            for (i, l) in levels.iter().enumerate() {
                out.summary.insert(format!("mu1_level{i}"), l.mu1);
                out.summary.insert(format!("refined_quotient_level{i}"), l.refined_quotient);
                out.checks.push(Check::at_least(
                    format!("refined_quotient_level{i}"),
                    l.refined_quotient,
                    ctx.cfg.tolerances.appendix_floor,
                ));
                out.table.push(vec![
                    fmt_number(l.delta),
                    fmt_number(l.mu1),
                    l.exact.map(fmt_number).unwrap_or_default(),
                    fmt_number(l.refined_quotient),
                ]);
            }
            out.checks.push(Check::holds("mu1_increasing", levels.windows(2).all(|w| w[1].mu1 > w[0].mu1)));
            out.result = to_value(&levels);
        }
    }
    Ok(out)
}

/// Largest ratio in one ball class, optionally leaving out one datum.
/// Largest ratio over balls of one class, for one datum or all of them.
fn class_max(rep: &HarnackReport, touching: bool, sample: Option<usize>) -> f64 {
    rep.entries
        .iter()
        .filter(|e| e.boundary_touching == touching && sample.map_or(true, |k| e.sample == k))
        .map(|e| e.ratio)
        .fold(0.0, f64::max)
}

fn local_outcome(out: &mut TaskOutcome, rep: &LocalReport, name: &str) {
    out.summary.insert(format!("{name}_worst"), rep.worst);
    out.summary.insert(format!("{name}_best"), rep.best);
    out.summary.insert("spread".into(), rep.spread());
    out.checks.push(Check::holds("finite", rep.worst.is_finite() && rep.best > 0.0));
    out.table = Table::new(&["center", "radius", "kind", "value"]);
    for e in &rep.entries {
        let kind = serde_json::to_string(&e.kind).unwrap_or_default();
        out.table.push(vec![fmt_point(&e.center), fmt_number(e.radius), kind, fmt_number(e.value)]);
    }
}

/// The radii with their consecutive geometric means inserted.
fn interleave_geometric(radii: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * radii.len());
    for (i, r) in radii.iter().enumerate() {
        if i > 0 {
            out.push((radii[i - 1] * r).sqrt());
        }
        out.push(*r);
    }
    out
}
