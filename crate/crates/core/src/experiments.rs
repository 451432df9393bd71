//! Experiment configurations, shipped presets and the offline/online pipeline
//! shared by the command-line driver, the benchmarks and the acceptance tests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EsdgError, Result};
use crate::fom::{entropy_diagnostics, integrate_fom, BoundaryCondition, EntropyDiagnostics, FomProblem, Trajectory};
use crate::hyperreduction::{
    assemble_hyperreduced, build_test_basis, hyperreduce, HyperReducedOperators, HyperReducedQuadrature, HyperReductionOptions,
    TestBasisKind,
};
use crate::io;
use crate::operators::{BoundaryKind, GlobalOperators, Mesh};
use crate::physics::{euler_conservative, ConservationLaw};
use crate::pod::{build_snapshots, energy_residual, weighted_pod, ReducedBasis};
use crate::rom::{integrate_rom, relative_l2_error, RomProblem, ViscosityForm};
use crate::timestepping::IntegratorOptions;

const PRESETS: [(&str, &str); 7] = [
    ("advection-gaussian", include_str!("../presets/advection-gaussian.toml")),
    ("burgers-sine", include_str!("../presets/burgers-sine.toml")),
    ("euler-isentropic", include_str!("../presets/euler-isentropic.toml")),
    ("euler-wall", include_str!("../presets/euler-wall.toml")),
    ("sod-smoothed", include_str!("../presets/sod-smoothed.toml")),
    ("kh", include_str!("../presets/kh.toml")),
    ("euler-wall-2d", include_str!("../presets/euler-wall-2d.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| EsdgError::config("preset", format!("unknown preset `{name}` (available: {})", preset_names().join(", "))))?;
    ExperimentConfig::from_toml(text)
}

fn default_gamma() -> f64 {
    1.4
}
fn default_frames() -> usize {
    400
}
fn default_rtol() -> f64 {
    1e-7
}
fn default_atol() -> f64 {
    1e-9
}
fn default_true() -> bool {
    true
}
fn default_modes() -> usize {
    20
}
fn default_kh_param() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// `advection1d`, `burgers1d`, `euler1d` or `euler2d`.
    pub law: String,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub viscosity: f64,
    /// Exterior-state rule on weak boundaries.
    #[serde(default)]
    pub boundary_condition: Option<BoundaryRule>,
    pub mesh: MeshConfig,
    pub initial: InitialCondition,
    pub time: TimeConfig,
    #[serde(default)]
    pub pod: PodConfig,
    #[serde(default)]
    pub hyperreduction: HyperReductionConfig,
    #[serde(default)]
    pub rom: RomConfig,
    /// Output directory; `out/<name>` when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Only used by randomized tests; the pipeline is deterministic.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    Mirror,
    /// Exterior states fixed to the initial condition at the boundary.
    InitialState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Element count per direction.
    pub elements: Vec<usize>,
    pub degree: usize,
    pub bounds: Vec<[f64; 2]>,
    pub boundary: BoundaryKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `u = exp(-50 x²)`.
    AdvectionGaussian,
    /// `u = 0.5 - sin(πx)`.
    BurgersSine,
    /// `ρ = 1 + 0.1 exp(-25x²)`, `u = 0.1 sin(πx)`, `p = ρ^γ`.
    IsentropicGaussian,
    /// `ρ = 2 + 0.5 exp(-100(x-0.5)²)`, `u = 0.1 exp(-100(x-0.5)²)`, `p = ρ^γ`.
    WallGaussian,
    /// Sod states joined by a logistic profile of sharpness 100.
    SodSmoothed,
    KelvinHelmholtz {
        #[serde(default = "default_kh_param")]
        alpha: f64,
        #[serde(default = "default_kh_param")]
        sigma: f64,
    },
    /// `ρ = 1 + 0.5 exp(-25((x+0.5)² + (y+0.5)²))` at rest, `p = ρ^γ`.
    #[serde(rename = "wall-gaussian-2d")]
    WallGaussian2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PodConfig {
    pub modes: usize,
    /// Append entropy-variable snapshots.
    pub enrich: bool,
}

impl Default for PodConfig {
    fn default() -> Self {
        PodConfig {
            modes: default_modes(),
            enrich: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperReductionConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Test basis kind; `fvm` is selected automatically for degree 0 when absent.
    #[serde(default)]
    pub test_basis: Option<TestBasisKind>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub target_tolerance: Option<f64>,
    #[serde(default)]
    pub max_condition: Option<f64>,
}

impl Default for HyperReductionConfig {
    fn default() -> Self {
        HyperReductionConfig {
            enabled: true,
            test_basis: None,
            tolerance: None,
            target_tolerance: None,
            max_condition: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RomConfig {
    pub viscosity_form: ViscosityForm,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_else(|| "config".into());
            EsdgError::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| EsdgError::config(path.display().to_string(), format!("cannot read configuration: {e}")))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn law(&self) -> Result<ConservationLaw> {
        let law = ConservationLaw::from_name(&self.law)?;
        match law {
            ConservationLaw::Euler { dim, .. } => crate::physics::entropy_pair_euler(dim, self.gamma),
            other => Ok(other),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| Path::new("out").join(&self.name))
    }

    pub fn hyperreduction_options(&self) -> HyperReductionOptions {
        let d = HyperReductionOptions::default();
        let h = &self.hyperreduction;
        HyperReductionOptions {
            tolerance: h.tolerance.unwrap_or(d.tolerance),
            target_tolerance: h.target_tolerance.unwrap_or(d.target_tolerance),
            max_condition: h.max_condition.unwrap_or(d.max_condition),
            test_basis: h.test_basis.unwrap_or(if self.mesh.degree == 0 { TestBasisKind::Fvm } else { TestBasisKind::Dg }),
        }
    }

    pub fn integrator_options(&self) -> IntegratorOptions {
        IntegratorOptions {
            rtol: self.time.rtol,
            atol: self.time.atol,
            ..Default::default()
        }
    }

    /// Uniform refinement at fixed total node count, as used for the
    /// degree sweeps: `elements · (degree + 1)` is preserved per direction.
    pub fn with_degree(&self, degree: usize) -> ExperimentConfig {
        let mut cfg = self.clone();
        for k in cfg.mesh.elements.iter_mut() {
            *k = *k * (self.mesh.degree + 1) / (degree + 1);
        }
        cfg.mesh.degree = degree;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let law = self.law()?;
        let dim = law.dim();
        let m = &self.mesh;
        if m.elements.len() != dim {
            return Err(EsdgError::config(
                "mesh.elements",
                format!("{} entries for a {dim}D law", m.elements.len()),
            ));
        }
        if m.bounds.len() != dim {
            return Err(EsdgError::config("mesh.bounds", format!("{} entries for a {dim}D law", m.bounds.len())));
        }
        if m.elements.contains(&0) {
            return Err(EsdgError::config("mesh.elements", "element counts must be positive"));
        }
        if m.bounds.iter().any(|b| !(b[1] > b[0])) {
            return Err(EsdgError::config("mesh.bounds", "each interval needs lower < upper"));
        }
        if dim == 2 && m.degree == 0 {
            return Err(EsdgError::config("mesh.degree", "2D meshes need degree >= 1"));
        }
        if !(self.viscosity >= 0.0) {
            return Err(EsdgError::config("viscosity", "must be nonnegative"));
        }
        if !(self.time.t_final > 0.0) {
            return Err(EsdgError::config("time.t_final", "must be positive"));
        }
        if self.time.frames < 2 {
            return Err(EsdgError::config("time.frames", "at least 2 frames are needed"));
        }
        if !(self.time.rtol > 0.0 && self.time.atol > 0.0) {
            return Err(EsdgError::config("time", "tolerances must be positive"));
        }
        if self.pod.modes == 0 {
            return Err(EsdgError::config("pod.modes", "must be at least 1"));
        }
        match (m.boundary, self.boundary_condition) {
            (BoundaryKind::Weak, None) => {
                return Err(EsdgError::config("boundary_condition", "weak boundaries need `mirror` or `initial-state`"))
            }
            (BoundaryKind::Periodic, Some(_)) => {
                return Err(EsdgError::config("boundary_condition", "not used on periodic meshes"))
            }
            (_, Some(BoundaryRule::Mirror)) if !matches!(law, ConservationLaw::Euler { .. }) => {
                return Err(EsdgError::config("boundary_condition", "mirror states need the Euler equations"))
            }
            _ => {}
        }
        let expected = match self.initial {
            InitialCondition::AdvectionGaussian => "advection1d",
            InitialCondition::BurgersSine => "burgers1d",
            InitialCondition::IsentropicGaussian | InitialCondition::WallGaussian | InitialCondition::SodSmoothed => "euler1d",
            InitialCondition::KelvinHelmholtz { .. } | InitialCondition::WallGaussian2d => "euler2d",
        };
        if law.name() != expected {
            return Err(EsdgError::config(
                "initial.preset",
                format!("this initial condition needs law `{expected}`, not `{}`", law.name()),
            ));
        }
        if let InitialCondition::KelvinHelmholtz { sigma, .. } = self.initial {
            if !(sigma > 0.0) {
                return Err(EsdgError::config("initial.sigma", "must be positive"));
            }
        }
        Ok(())
    }
}

impl InitialCondition {
    pub fn evaluate(&self, x: &[f64], gamma: f64) -> Vec<f64> {
        use std::f64::consts::PI;
        match *self {
            InitialCondition::AdvectionGaussian => vec![(-50.0 * x[0] * x[0]).exp()],
            InitialCondition::BurgersSine => vec![0.5 - (PI * x[0]).sin()],
            InitialCondition::IsentropicGaussian => {
                let rho = 1.0 + 0.1 * (-25.0 * x[0] * x[0]).exp();
                euler_conservative(rho, &[0.1 * (PI * x[0]).sin()], rho.powf(gamma), gamma)
            }
            InitialCondition::WallGaussian => {
                let e = (-100.0 * (x[0] - 0.5).powi(2)).exp();
                let rho = 2.0 + 0.5 * e;
                euler_conservative(rho, &[0.1 * e], rho.powf(gamma), gamma)
            }
            InitialCondition::SodSmoothed => {
                let s = 1.0 / (1.0 + (100.0 * x[0]).exp());
                euler_conservative(0.125 + 0.875 * s, &[0.0], 0.1 + 0.9 * s, gamma)
            }
            InitialCondition::KelvinHelmholtz { alpha, sigma } => {
                let y = x[1];
                let s2 = sigma * sigma;
                let lower = 1.0 / (1.0 + (-(y + 0.5) / s2).exp());
                let upper = 1.0 / (1.0 + (-(y - 0.5) / s2).exp());
                let rho = 1.0 + lower - upper;
                let u1 = lower - upper - 0.5;
                let u2 = alpha * (2.0 * PI * x[0]).sin() * ((-(y + 0.5).powi(2) / s2).exp() - (-(y - 0.5).powi(2) / s2).exp());
                euler_conservative(rho, &[u1, u2], 2.5, gamma)
            }
            InitialCondition::WallGaussian2d => {
                let rho = 1.0 + 0.5 * (-25.0 * ((x[0] + 0.5).powi(2) + (x[1] + 0.5).powi(2))).exp();
                euler_conservative(rho, &[0.0, 0.0], rho.powf(gamma), gamma)
            }
        }
    }
}

/// A configured full-order problem with its initial state.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub fom: FomProblem,
    pub initial: Vec<f64>,
}

/// Reduced basis plus optional hyper-reduction, the output of the offline stage.
#[derive(Clone, Debug)]
pub struct OfflineArtifacts {
    pub basis: ReducedBasis,
    pub enriched: bool,
    pub hyperreduction: Option<HyperReducedOperators>,
}

/// Result of one online reduced-order run.
#[derive(Clone, Debug)]
pub struct RomRun {
    pub trajectory: Trajectory,
    /// Final-time relative error against the full-order trajectory.
    pub error: f64,
    pub diagnostics: Vec<EntropyDiagnostics>,
    pub hyperreduced: bool,
    pub volume_nodes: usize,
    pub boundary_nodes: usize,
}

#[derive(Serialize, Deserialize)]
struct ArtifactManifest {
    experiment: String,
    law: String,
    num_nodes: usize,
    modes: usize,
    enriched: bool,
    singular_values: Vec<f64>,
    hyperreduction: Option<HyperReductionManifest>,
}

#[derive(Serialize, Deserialize)]
struct HyperReductionManifest {
    options: HyperReductionOptions,
    quadrature: HyperReducedQuadrature,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let law = config.law()?;
        let m = &config.mesh;
        let mesh = match m.elements.len() {
            1 => Mesh::uniform_1d(m.elements[0], (m.bounds[0][0], m.bounds[0][1]), m.boundary)?,
            _ => Mesh::uniform_2d(
                [m.elements[0], m.elements[1]],
                [(m.bounds[0][0], m.bounds[0][1]), (m.bounds[1][0], m.bounds[1][1])],
                [m.boundary, m.boundary],
            )?,
        };
        let ops = GlobalOperators::assemble(&mesh, m.degree)?;
        let gamma = config.gamma;
        let init = config.initial.clone();
        let boundary = match config.boundary_condition {
            None => None,
            Some(BoundaryRule::Mirror) => Some(BoundaryCondition::Mirror),
            Some(BoundaryRule::InitialState) => {
                let mut states = Vec::new();
                for bp in &ops.boundary {
                    let x: Vec<f64> = (0..ops.dim).map(|d| ops.coords[(bp.node, d)]).collect();
                    states.extend(init.evaluate(&x, gamma));
                }
                Some(BoundaryCondition::Prescribed(states))
            }
        };
        let fom = FomProblem::new(law, ops, config.viscosity, boundary)?;
        let initial = fom.project_initial(|x| init.evaluate(x, gamma));
        Ok(Experiment { config, fom, initial })
    }

    pub fn law(&self) -> &ConservationLaw {
        &self.fom.law
    }

    pub fn run_fom(&self) -> Result<Trajectory> {
        let c = &self.config;
        integrate_fom(&self.fom, &self.initial, c.time.t_final, c.time.frames, &c.integrator_options()).map_err(|e| e.in_stage("full-order run"))
    }

    pub fn fom_diagnostics(&self, traj: &Trajectory) -> Result<Vec<EntropyDiagnostics>> {
        traj.states.iter().map(|u| entropy_diagnostics(&self.fom, u)).collect()
    }

    /// Nodal exact solution at time `t` when one is known (periodic advection).
    pub fn analytic_solution(&self, t: f64) -> Option<Vec<f64>> {
        if self.config.initial != InitialCondition::AdvectionGaussian || self.config.mesh.boundary != BoundaryKind::Periodic {
            return None;
        }
        let [a, b] = self.config.mesh.bounds[0];
        let len = b - a;
        let ops = &self.fom.ops;
        Some(
            (0..ops.num_nodes())
                .map(|i| {
                    let x = a + (ops.coords[(i, 0)] - t - a).rem_euclid(len);
                    self.config.initial.evaluate(&[x], self.config.gamma)[0]
                })
                .collect(),
        )
    }

    /// Relative error of the final full-order frame against the exact solution.
    pub fn fom_analytic_error(&self, traj: &Trajectory) -> Option<f64> {
        let exact = self.analytic_solution(*traj.times.last()?)?;
        relative_l2_error(&exact, traj.final_state(), &self.fom.ops.weights).ok()
    }

    /// POD basis (with all singular values kept for reporting) and, when
    /// enabled, the hyper-reduced operators.
    pub fn offline(&self, traj: &Trajectory) -> Result<OfflineArtifacts> {
        let c = &self.config;
        let snap = build_snapshots(traj, self.law(), c.pod.enrich).map_err(|e| e.in_stage("snapshots"))?;
        let basis = weighted_pod(&snap, &self.fom.ops.weights, c.pod.modes).map_err(|e| e.in_stage("proper orthogonal decomposition"))?;
        let hyperreduction = if c.hyperreduction.enabled {
            Some(hyperreduce(&self.fom.ops, &basis, &c.hyperreduction_options()).map_err(|e| e.in_stage("hyper-reduction"))?)
        } else {
            None
        };
        Ok(OfflineArtifacts {
            basis,
            enriched: c.pod.enrich,
            hyperreduction,
        })
    }

    pub fn rom_problem(&self, art: &OfflineArtifacts, hyperreduced: bool) -> Result<RomProblem> {
        let hr = if hyperreduced {
            Some(art.hyperreduction.clone().ok_or_else(|| {
                EsdgError::config("hyperreduction.enabled", "the artifacts were built without hyper-reduction")
            })?)
        } else {
            None
        };
        RomProblem::new(self.fom.clone(), art.basis.clone(), hr, self.config.rom.viscosity_form)
    }

    /// Online stage: integrates the reduced model over the full-order frames
    /// and compares with the full-order trajectory.
    pub fn run_rom(&self, art: &OfflineArtifacts, fom_traj: &Trajectory, hyperreduced: bool) -> Result<RomRun> {
        let c = &self.config;
        let rom = self.rom_problem(art, hyperreduced)?;
        let u0 = rom.reduce(&self.initial);
        let trajectory = integrate_rom(&rom, &u0, c.time.t_final, c.time.frames, &c.integrator_options()).map_err(|e| e.in_stage("reduced-order run"))?;
        let error = crate::rom::rom_error(fom_traj, &trajectory, &rom)?;
        let diagnostics = trajectory
            .states
            .iter()
            .map(|u| rom.diagnostics(u))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("entropy diagnostics"))?;
        let (volume_nodes, boundary_nodes) = match &rom.hr {
            Some(h) => (h.quadrature.len(), h.boundary_points.len()),
            None => (self.fom.num_nodes(), self.fom.ops.boundary.len()),
        };
        Ok(RomRun {
            trajectory,
            error,
            diagnostics,
            hyperreduced,
            volume_nodes,
            boundary_nodes,
        })
    }
}

impl OfflineArtifacts {
    pub fn energy_residual(&self) -> f64 {
        energy_residual(&self.basis.singular_values, self.basis.num_modes())
    }

    /// Writes `basis.esdg`, `singular_values.csv` and `manifest.json` to `dir`.
    pub fn save(&self, dir: &Path, exp: &Experiment) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::write_matrix(&dir.join("basis.esdg"), &self.basis.modes)?;
        let rows: Vec<Vec<String>> = self
            .basis
            .singular_values
            .iter()
            .enumerate()
            .map(|(k, s)| vec![(k + 1).to_string(), format!("{s:e}"), format!("{:e}", energy_residual(&self.basis.singular_values, k + 1))])
            .collect();
        io::write_csv(&dir.join("singular_values.csv"), &["index", "singular_value", "energy_residual"], &rows)?;
        let manifest = ArtifactManifest {
            experiment: exp.config.name.clone(),
            law: exp.law().name().to_string(),
            num_nodes: exp.fom.num_nodes(),
            modes: self.basis.num_modes(),
            enriched: self.enriched,
            singular_values: self.basis.singular_values.clone(),
            hyperreduction: self.hyperreduction.as_ref().map(|h| HyperReductionManifest {
                options: exp.config.hyperreduction_options(),
                quadrature: h.quadrature.clone(),
            }),
        };
        io::write_json(&dir.join("manifest.json"), &manifest)
    }

    /// Reloads artifacts written by [`OfflineArtifacts::save`]; the hyper-reduced
    /// operators are reassembled from the stored quadrature.
    pub fn load(dir: &Path, exp: &Experiment) -> Result<Self> {
        let manifest: ArtifactManifest = io::read_json(&dir.join("manifest.json"))?;
        if manifest.law != exp.law().name() || manifest.num_nodes != exp.fom.num_nodes() {
            return Err(EsdgError::config(
                "artifacts",
                format!(
                    "artifacts are for {} on {} nodes, the configuration is {} on {} nodes",
                    manifest.law,
                    manifest.num_nodes,
                    exp.law().name(),
                    exp.fom.num_nodes()
                ),
            ));
        }
        let modes = io::read_matrix(&dir.join("basis.esdg"))?;
        if modes.nrows() != manifest.num_nodes || modes.ncols() != manifest.modes {
            return Err(EsdgError::Format("basis.esdg does not match manifest.json".into()));
        }
        let basis = ReducedBasis {
            modes,
            singular_values: manifest.singular_values,
            weights: exp.fom.ops.weights.clone(),
        };
        let hyperreduction = match manifest.hyperreduction {
            None => None,
            Some(h) => {
                let ops = &exp.fom.ops;
                let test_bases = ops
                    .q
                    .iter()
                    .map(|q| build_test_basis(&basis.modes, &ops.weights, q, h.options.test_basis))
                    .collect();
                Some(assemble_hyperreduced(ops, &basis, h.quadrature, test_bases).map_err(|e| e.in_stage("hyper-reduction"))?)
            }
        };
        Ok(OfflineArtifacts {
            basis,
            enriched: manifest.enriched,
            hyperreduction,
        })
    }
}
