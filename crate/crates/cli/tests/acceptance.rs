use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hardyheat_core::discretize::{DiscreteForm, MeshParams};
use hardyheat_core::heat::KernelSynth;
use hardyheat_core::potentials::{example_iii, PotentialSpec};
use hardyheat_core::spectral::solve_ground_state;
use hardyheat_core::StratifiedDomain;
use serde_json::Value;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load_config(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(config_path(name)).unwrap()).unwrap()
}

struct Run {
    report: Value,
    elapsed: Duration,
    code: i32,
}

impl Run {
    fn task(&self, id: &str) -> &Value {
        self.report["tasks"]
            .as_array()
            .unwrap()
            .iter()
            .find(|t| t["id"] == id)
            .unwrap_or_else(|| panic!("no task {id}"))
    }

    fn summary(&self, id: &str, key: &str) -> f64 {
        self.task(id)["summary"][key].as_f64().unwrap_or_else(|| panic!("no summary {key} in {id}"))
    }
}

fn run_config(config: &Value, extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, serde_json::to_string(config).unwrap()).unwrap();
    let out = dir.path().join("out");
    let t0 = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_hardyheat"))
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    let elapsed = t0.elapsed();
    assert!(out.join("report.json").exists(), "run failed: {}", String::from_utf8_lossy(&status.stderr));
    let report = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    Run { report, elapsed, code: status.status.code().unwrap_or(-1) }
}

fn verdict(n: usize, label: &str, passed: bool, detail: String) {
    println!("AC{n} {label}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "AC{n} {label} failed: {detail}");
}

fn sine_series_kernel(t: f64, x: f64, y: f64) -> f64 {
    (1..=200)
        .map(|k| {
            let kp = k as f64 * PI;
            2.0 * (-kp * kp * t).exp() * (kp * x).sin() * (kp * y).sin()
        })
        .sum()
}

#[test]
fn ac01_free_interval_oracle() {
    let t0 = Instant::now();
    let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
    let form = DiscreteForm::build(&dom, &PotentialSpec::zero(&dom), &MeshParams::uniform(1.0 / 1024.0)).unwrap();
    let gs = solve_ground_state(&form, 1e-12).unwrap();
    let lambda_err = (gs.lambda1 / (PI * PI) - 1.0).abs();
    let synth = KernelSynth::new(&form).unwrap();
    let xs: Vec<f64> = form.free_coords().iter().map(|c| c[0].value()).collect();
    let mut kernel_err = 0.0f64;
    for i in (0..xs.len()).step_by(31) {
        for j in (0..xs.len()).step_by(37) {
            kernel_err = kernel_err.max((synth.kernel(0.05, i, j) - sine_series_kernel(0.05, xs[i], xs[j])).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let passed = lambda_err <= 1e-3 && kernel_err <= 1e-4 && secs < 5.0;
    verdict(
        1,
        "free interval oracle",
        passed,
        format!("lambda1 rel err {lambda_err:.2e}, kernel err {kernel_err:.2e}, {secs:.2}s"),
    );
}

#[test]
fn ac02_exponent_recovery_example_iii() {
    let iv = run_config(&load_config("example_III_interval.json"), &[]);
    let a_iv = iv.summary("01_exponents", "alpha_boundary");
    let sq = run_config(&load_config("example_III_square.json"), &[]);
    let a_x0 = sq.summary("01_exponents", "alpha_x0-");
    let a_x1 = sq.summary("01_exponents", "alpha_x1-");
    let within = |a: f64| (a - 0.5).abs() <= 0.025;
    let passed = within(a_iv)
        && within(a_x0)
        && within(a_x1)
        && iv.elapsed.as_secs_f64() < 60.0
        && sq.elapsed.as_secs_f64() < 60.0;
    verdict(
        2,
        "exponent recovery, interval and square",
        passed,
        format!(
            "interval {a_iv:.4} in {:.1}s, square {a_x0:.4}/{a_x1:.4} in {:.1}s",
            iv.elapsed.as_secs_f64(),
            sq.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn ac03_exponent_recovery_example_i() {
    let base = load_config("example_I_ball.json");
    let mut details = Vec::new();
    let mut passed = true;
    for (c, expected) in [(0.0, 0.0), (3.0 / 16.0, -0.25), (0.25, -0.5)] {
        let mut cfg = base.clone();
        cfg["potential"]["poles"][0]["c"] = c.into();
        let run = run_config(&cfg, &[]);
        let beta = run.summary("01_exponents", "alpha_origin");
        passed &= (beta - expected).abs() <= 0.03 && run.elapsed.as_secs_f64() < 60.0;
        details.push(format!("c={c}: {beta:.4} in {:.1}s", run.elapsed.as_secs_f64()));
    }
    verdict(3, "exponent recovery, punctured ball", passed, details.join(", "));
}

#[test]
fn ac04_ground_state_identity() {
    let run = run_config(&load_config("identity_interval.json"), &[]);
    let d0 = run.summary("00_identity", "defect_level0");
    let d1 = run.summary("00_identity", "defect_level1");
    let nodes = run.task("00_identity")["result"]["nodes"][0].as_f64().unwrap();
    let passed = d0 <= 5e-3 && d1 < d0 && (nodes.log2() - 12.0).abs() < 0.1;
    verdict(4, "ground-state transform identity", passed, format!("defects {d0:.2e} -> {d1:.2e}, {nodes} nodes"));
}

#[test]
fn ac05_heat_kernel_sandwich() {
    let run = run_config(&load_config("heat_example_III.json"), &[]);
    let s0 = run.summary("00_heatkernel", "spread_level0");
    let s1 = run.summary("00_heatkernel", "spread_level1");
    let growth = s1 / s0 - 1.0;
    let passed = s0 <= 100.0 && s1 <= 100.0 && growth <= 0.10;
    verdict(5, "short-time sandwich", passed, format!("spread {s0:.2} -> {s1:.2}, growth {growth:+.3}"));
}

#[test]
fn ac05_long_time() {
    let run = run_config(&load_config("heat_example_III.json"), &[]);
    let mut passed = true;
    let mut details = Vec::new();
    for level in 0..2 {
        let t = run.summary("00_heatkernel", &format!("crossover_level{level}"));
        let spread = run.summary("00_heatkernel", &format!("long_time_spread_level{level}"));
        passed &= spread - 1.0 <= 0.02;
        details.push(format!("level {level}: T {t:.3}, ratio spread {spread:.3}"));
    }
    verdict(5, "long-time ratio constant beyond T", passed, details.join(", "));
}

#[test]
fn ac06_harnack_scan() {
    let run = run_config(&load_config("heat_example_III.json"), &[]);
    let id = "01_harnack";
    let finite = (0..2).all(|l| run.summary(id, &format!("c_h_level{l}")).is_finite());
    let mut changes = Vec::new();
    for key in [
        "interior_change_level1",
        "boundary_change_level1",
        "interior_datum_change_level1",
        "boundary_datum_change_level1",
    ] {
        changes.push(run.summary(id, key));
    }
    let passed = finite && changes.iter().all(|c| *c <= 0.2) && run.report["config"]["tasks"][1]["data"] == 10;
    verdict(
        6,
        "Harnack constant",
        passed,
        format!(
            "C_H {:.3} / {:.3}, worst change {:.3}",
            run.summary(id, "c_h_level0"),
            run.summary(id, "c_h_level1"),
            changes.iter().cloned().fold(0.0, f64::max)
        ),
    );
}

fn sobolev_verdicts(run: &Run) -> Vec<String> {
    run.report["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["result"]["verdict"].as_str().unwrap_or("missing").to_string())
        .collect()
}

#[test]
fn ac07_sobolev_verdicts() {
    let admissible = run_config(&load_config("sobolev_admissible_ball.json"), &[]);
    let critical = run_config(&load_config("sobolev_critical_ball.json"), &[]);
    let a = sobolev_verdicts(&admissible);
    let c = sobolev_verdicts(&critical);
    let secs = admissible.elapsed.as_secs_f64() + critical.elapsed.as_secs_f64();
    let passed = a == ["bounded_below"] && c == ["degenerates_to_zero", "bounded_below"] && secs < 120.0;
    verdict(7, "Sobolev verdicts", passed, format!("admissible {a:?}, critical {c:?}, {secs:.1}s"));
}

#[test]
fn ac08_critical_hardy_log() {
    let run = run_config(&load_config("hardy_log_interval.json"), &[]);
    let v = sobolev_verdicts(&run);
    let passed = v == ["bounded_below", "degenerates_to_zero"];
    verdict(8, "critical q=2 log weight", passed, format!("weighted {}, control {}", v[0], v[1]));
}

/// `∫_lo^hi min(t, 1 - t)^p dt` on the unit interval.
fn boundary_power_integral(lo: f64, hi: f64, p: f64) -> f64 {
    let f = |t: f64| {
        if t <= 0.5 {
            t.powf(p + 1.0) / (p + 1.0)
        } else {
            2.0 * 0.5f64.powf(p + 1.0) / (p + 1.0) - (1.0 - t).powf(p + 1.0) / (p + 1.0)
        }
    };
    f(hi) - f(lo)
}

#[test]
fn ac09_volume_sandwich_and_doubling() {
    let run = run_config(&load_config("geometry_interval.json"), &[]);
    let alpha = 0.5;
    let shape_constant = 2f64.powf(2.0 + 2.0 * alpha);
    let spread = run.summary("00_volume", "spread");
    let spread_refined = run.summary("00_volume", "spread_refined");
    let d0 = run.summary("00_volume", "doubling");
    let d1 = run.summary("00_volume", "doubling_refined");
    let samples = run.report["config"]["tasks"][0]["per_axis"].as_u64().unwrap()
        * run.report["config"]["tasks"][0]["radii"].as_array().unwrap().len() as u64;

    let dom = StratifiedDomain::interval(0.0, 1.0).unwrap();
    let alphas = example_iii(&dom).unwrap().predicted;
    let mut exact_err = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            let x = i as f64 / 9.0;
            let r = 0.01 + 0.011 * j as f64;
            let v = dom.weighted_volume(&[x], r, &alphas).unwrap();
            let exact = boundary_power_integral((x - r).max(0.0), (x + r).min(1.0), 2.0 * alpha);
            exact_err = exact_err.max((v / exact - 1.0).abs());
        }
    }
    let passed = samples == 100
        && spread <= shape_constant
        && spread_refined <= shape_constant
        && (d1 / d0 - 1.0).abs() <= 0.05
        && d1 <= 2f64.powf(1.0 + 2.0 * alpha) * (1.0 + 1e-9)
        && exact_err <= 1e-10;
    verdict(
        9,
        "volume sandwich and doubling",
        passed,
        format!(
            "spread {spread:.3} / {spread_refined:.3} <= {shape_constant}, C_D {d0:.4} / {d1:.4}, exact rel err {exact_err:.1e}"
        ),
    );
}

#[test]
fn ac10_boundary_layer_blow_up() {
    let run = run_config(&load_config("geometry_interval.json"), &[]);
    let id = "03_appendix";
    let mu: Vec<f64> = (0..4).map(|i| run.summary(id, &format!("mu1_level{i}"))).collect();
    let refined: Vec<f64> = (0..4).map(|i| run.summary(id, &format!("refined_quotient_level{i}"))).collect();
    let deltas = &run.report["config"]["tasks"][3]["deltas"];
    let passed = deltas == &serde_json::json!([0.2, 0.1, 0.05, 0.025])
        && mu.windows(2).all(|w| w[1] > w[0])
        && refined.iter().all(|q| *q >= 1.0 / 8.0 - 1e-2);
    verdict(
        10,
        "boundary-layer eigenvalue",
        passed,
        format!("mu1 {mu:.1?}, min refined quotient {:.3}", refined.iter().cloned().fold(f64::INFINITY, f64::min)),
    );
}

#[test]
fn ac11_weighted_log_sobolev() {
    let run = run_config(&load_config("log_sobolev_interval.json"), &[]);
    let k_hat = run.summary("00_logsobolev", "k_hat");
    let slope = run.summary("00_logsobolev", "slope");
    let (n, a_max) = (1.0, 0.5);
    let expected = -(n + 2.0 * a_max) / 4.0;
    let err = (slope / expected - 1.0).abs();
    let passed = k_hat.is_finite() && err <= 0.05;
    verdict(
        11,
        "weighted log-Sobolev",
        passed,
        format!("K {k_hat:.4}, slope {slope:.4} vs {expected}, rel err {err:.3}"),
    );
}

#[test]
fn ac12_determinism() {
    let cfg = load_config("geometry_interval.json");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let mut reports = Vec::new();
    for (k, jobs) in ["1", "1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_hardyheat"))
            .args(["run", path.to_str().unwrap(), "--seed", "11", "--jobs", jobs, "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(status.status.code().is_some());
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    let passed = reports[0] == reports[1] && reports[0] == reports[2];
    verdict(12, "determinism", passed, format!("{} byte reports, jobs 1/1/2", reports[0].len()));
}

#[test]
fn exit_codes_follow_status() {
    let run = run_config(&load_config("free_interval.json"), &[]);
    assert_eq!(run.code, 0);
    assert_eq!(run.report["exit_code"], 0);
}
