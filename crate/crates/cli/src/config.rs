use std::path::{Path, PathBuf};

use hardyheat_core::discretize::MeshParams;
use hardyheat_core::inequalities::Verdict;
use hardyheat_core::potentials::{example_i, example_iii, example_iv, example_v, sum_spec, PotentialSpec};
use hardyheat_core::spectral::MassKind;
use hardyheat_core::{Exponents, StratifiedDomain, Stratum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub id: String,
    pub domain: DomainConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub mesh: MeshParams,
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: ShapeConfig,
    /// Replaces the strata the shape would carry by default.
    #[serde(default)]
    pub strata: Option<Vec<Stratum>>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Interval {
        a: f64,
        b: f64,
        #[serde(default)]
        split_ends: bool,
    },
    Rectangle {
        widths: Vec<f64>,
        #[serde(default)]
        split_faces: bool,
    },
    Disc {
        radius: f64,
        #[serde(default)]
        punctured: bool,
    },
    RadialBall {
        radius: f64,
        n: usize,
        #[serde(default)]
        punctured: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pole {
    pub at: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalog", deny_unknown_fields)]
pub enum PotentialConfig {
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "example_I")]
    ExampleI { poles: Vec<Pole> },
    #[serde(rename = "example_III")]
    ExampleIII,
    #[serde(rename = "example_IV")]
    ExampleIV,
    #[serde(rename = "example_V")]
    ExampleV { a: f64 },
    #[serde(rename = "sum")]
    Sum { parts: Vec<PotentialConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub exponent: f64,
    pub lambda_rtol: f64,
    pub identity: f64,
    pub sandwich_spread: f64,
    pub sandwich_growth: f64,
    /// Asserted only when set.
    pub long_time: Option<f64>,
    pub harnack_stability: f64,
    pub log_sobolev_slope: f64,
    pub doubling_stability: f64,
    pub volume_growth: f64,
    pub appendix_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exponent: 0.025,
            lambda_rtol: 1e-3,
            identity: 5e-3,
            sandwich_spread: 100.0,
            sandwich_growth: 0.10,
            long_time: None,
            harnack_stability: 0.20,
            log_sobolev_slope: 0.05,
            doubling_stability: 0.05,
            volume_growth: 0.05,
            appendix_floor: 0.125 - 1e-2,
        }
    }
}

/// `count` logarithmically spaced values in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl LogRange {
    pub fn values(&self) -> Vec<f64> {
        hardyheat_core::heat::log_grid(self.lo, self.hi, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub value: f64,
    pub rtol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Refinement {
    pub levels: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotientVariant {
    Plain,
    LogCorrected,
    CriticalHardyLog,
    CriticalHardy,
    CodimBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Spectrum {
        #[serde(default)]
        id: Option<String>,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_mass")]
        mass: MassKind,
        #[serde(default)]
        expect_lambda1: Option<Expectation>,
        #[serde(default)]
        refinement: Option<Refinement>,
    },
    Exponents {
        #[serde(default)]
        id: Option<String>,
        #[serde(default)]
        window: Option<[f64; 2]>,
    },
    Identity {
        #[serde(default)]
        id: Option<String>,
        #[serde(default = "default_identity_samples")]
        samples: usize,
        /// Finer meshes on which the defect must keep decreasing.
        #[serde(default)]
        refined: Vec<MeshParams>,
    },
    Heatkernel {
        #[serde(default)]
        id: Option<String>,
        points: Vec<Vec<f64>>,
        short_times: LogRange,
        long_times: LogRange,
        #[serde(default = "default_separation")]
        max_separation: f64,
        #[serde(default = "default_floor")]
        relative_floor: f64,
        /// Mesh levels; the config mesh when empty.
        #[serde(default)]
        meshes: Vec<MeshParams>,
        #[serde(default)]
        alphas: Option<Exponents>,
    },
    Harnack {
        #[serde(default)]
        id: Option<String>,
        centers: Vec<Vec<f64>>,
        radii: Vec<f64>,
        #[serde(default = "default_data")]
        data: usize,
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default)]
        meshes: Vec<MeshParams>,
    },
    Sobolev {
        #[serde(default)]
        id: Option<String>,
        variant: QuotientVariant,
        #[serde(default)]
        q: Option<f64>,
        #[serde(default = "default_lambda")]
        lambda: f64,
        refinement: Refinement,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        expect: Option<Verdict>,
    },
    Logsobolev {
        #[serde(default)]
        id: Option<String>,
        eps: LogRange,
        slope_eps: LogRange,
        label: String,
        scales: LogRange,
        #[serde(default = "default_bumps")]
        bumps: usize,
    },
    Poincare {
        #[serde(default)]
        id: Option<String>,
        centers: Vec<Vec<f64>>,
        radii: Vec<f64>,
        #[serde(default)]
        mesh: Option<MeshParams>,
        #[serde(default)]
        alphas: Option<Exponents>,
    },
    Moser {
        #[serde(default)]
        id: Option<String>,
        centers: Vec<Vec<f64>>,
        radii: Vec<f64>,
        #[serde(default)]
        nu: Option<f64>,
        #[serde(default = "default_moser_samples")]
        samples: usize,
        #[serde(default)]
        mesh: Option<MeshParams>,
        #[serde(default)]
        alphas: Option<Exponents>,
    },
    Volume {
        #[serde(default)]
        id: Option<String>,
        per_axis: usize,
        radii: Vec<f64>,
        #[serde(default)]
        alphas: Option<Exponents>,
    },
    Appendix {
        #[serde(default)]
        id: Option<String>,
        deltas: Vec<f64>,
        #[serde(default)]
        mesh: Option<MeshParams>,
    },
}

fn default_tol() -> f64 {
    1e-12
}
fn default_mass() -> MassKind {
    MassKind::Consistent
}
fn default_identity_samples() -> usize {
    8
}
fn default_separation() -> f64 {
    0.5
}
fn default_floor() -> f64 {
    1e-10
}
fn default_data() -> usize {
    10
}
fn default_components() -> usize {
    3
}
fn default_lambda() -> f64 {
    1.0
}
fn default_bumps() -> usize {
    20
}
fn default_moser_samples() -> usize {
    4
}

impl TaskConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskConfig::Spectrum { .. } => "spectrum",
            TaskConfig::Exponents { .. } => "exponents",
            TaskConfig::Identity { .. } => "identity",
            TaskConfig::Heatkernel { .. } => "heatkernel",
            TaskConfig::Harnack { .. } => "harnack",
            TaskConfig::Sobolev { .. } => "sobolev",
            TaskConfig::Logsobolev { .. } => "logsobolev",
            TaskConfig::Poincare { .. } => "poincare",
            TaskConfig::Moser { .. } => "moser",
            TaskConfig::Volume { .. } => "volume",
            TaskConfig::Appendix { .. } => "appendix",
        }
    }

    fn explicit_id(&self) -> Option<&str> {
        match self {
            TaskConfig::Spectrum { id, .. }
            | TaskConfig::Exponents { id, .. }
            | TaskConfig::Identity { id, .. }
            | TaskConfig::Heatkernel { id, .. }
            | TaskConfig::Harnack { id, .. }
            | TaskConfig::Sobolev { id, .. }
            | TaskConfig::Logsobolev { id, .. }
            | TaskConfig::Poincare { id, .. }
            | TaskConfig::Moser { id, .. }
            | TaskConfig::Volume { id, .. }
            | TaskConfig::Appendix { id, .. } => id.as_deref(),
        }
    }

    /// Explicit id, or `{index}_{kind}`.
    pub fn id(&self, index: usize) -> String {
        self.explicit_id().map(str::to_string).unwrap_or_else(|| format!("{index:02}_{}", self.kind()))
    }

    /// Whether the task reads the ground state on the config mesh.
    pub fn needs_ground_state(&self) -> bool {
        match self {
            TaskConfig::Spectrum { .. }
            | TaskConfig::Exponents { .. }
            | TaskConfig::Identity { .. }
            | TaskConfig::Logsobolev { .. } => true,
            TaskConfig::Heatkernel { meshes, .. } | TaskConfig::Harnack { meshes, .. } => meshes.is_empty(),
            _ => false,
        }
    }
}

impl DomainConfig {
    pub fn build(&self) -> hardyheat_core::Result<StratifiedDomain> {
        let mut dom = match &self.shape {
            ShapeConfig::Interval { a, b, split_ends } => {
                if *split_ends {
                    StratifiedDomain::interval_with_ends(*a, *b)?
                } else {
                    StratifiedDomain::interval(*a, *b)?
                }
            }
            ShapeConfig::Rectangle { widths, split_faces } => {
                if *split_faces {
                    StratifiedDomain::rectangle_with_faces(widths)?
                } else {
                    StratifiedDomain::rectangle(widths)?
                }
            }
            ShapeConfig::Disc { radius, punctured } => StratifiedDomain::disc(*radius, *punctured)?,
            ShapeConfig::RadialBall { radius, n, punctured } => StratifiedDomain::radial_ball(*radius, *n, *punctured)?,
        };
        if let Some(strata) = &self.strata {
            dom = StratifiedDomain::new(dom.shape.clone(), strata.clone(), dom.localization_beta)?;
        }
        if let Some(beta) = self.beta {
            dom = dom.with_beta(beta)?;
        }
        if let Some(gamma) = self.gamma {
            dom = dom.with_gamma(gamma)?;
        }
        Ok(dom)
    }
}

impl PotentialConfig {
    pub fn build(&self, dom: &StratifiedDomain) -> hardyheat_core::Result<PotentialSpec> {
        match self {
            PotentialConfig::Zero => Ok(PotentialSpec::zero(dom)),
            PotentialConfig::ExampleI { poles } => {
                let poles: Vec<(Vec<f64>, f64)> = poles.iter().map(|p| (p.at.clone(), p.c)).collect();
                example_i(dom, &poles)
            }
            PotentialConfig::ExampleIII => example_iii(dom),
            PotentialConfig::ExampleIV => example_iv(dom),
            PotentialConfig::ExampleV { a } => example_v(*a, dom.dimension),
            PotentialConfig::Sum { parts } => {
                let mut iter = parts.iter();
                let first = iter
                    .next()
                    .ok_or_else(|| hardyheat_core::Error::ParameterOutOfRange("sum needs at least one part".into()))?;
                let mut acc = first.build(dom)?;
                for p in iter {
                    acc = sum_spec(&acc, &p.build(dom)?, dom)?;
                }
                Ok(acc)
            }
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::ConfigInvalid(format!("{path}: {}", e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text)
    }

    /// Checks that need more than the schema: versions, ids and the
    /// domain and potential constructors.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::ConfigInvalid(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.tasks.is_empty() {
            return Err(CliError::ConfigInvalid("tasks: list is empty".into()));
        }
        let dom = self.domain.build().map_err(|e| CliError::ConfigInvalid(format!("domain: {e}")))?;
        self.potential.build(&dom).map_err(|e| CliError::ConfigInvalid(format!("potential: {e}")))?;
        let mut seen = std::collections::BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let id = t.id(i);
            if !seen.insert(id.clone()) {
                return Err(CliError::ConfigInvalid(format!("tasks[{i}].id: duplicate id `{id}`")));
            }
            if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(CliError::ConfigInvalid(format!("tasks[{i}].id: `{id}` must be alphanumeric, `_` or `-`")));
            }
            if let TaskConfig::Sobolev { variant, q, label, alpha, delta, .. } = t {
                let needs_q = matches!(
                    variant,
                    QuotientVariant::Plain | QuotientVariant::LogCorrected | QuotientVariant::CodimBlock
                );
                if needs_q && q.is_none() {
                    return Err(CliError::ConfigInvalid(format!("tasks[{i}].q: required for this variant")));
                }
                if *variant == QuotientVariant::CodimBlock {
                    for (key, missing) in
                        [("label", label.is_none()), ("alpha", alpha.is_none()), ("delta", delta.is_none())]
                    {
                        if missing {
                            return Err(CliError::ConfigInvalid(format!("tasks[{i}].{key}: required for codim_block")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
