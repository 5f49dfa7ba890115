//! Experiment configuration: one TOML file describes the grid, potential,
//! initial state, evolution, ensemble, perception family and theory list
//! for a named experiment. `validate` reports every violation it can find,
//! not just the first.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use bohmlab_core::{
    build_perception_family, make_state_with, validate_family, Axis, EvolutionConfig, FamilySpec,
    Grid, InitialDensity, Perception, PerceptionSet, Point, Potential, Region, StateRecipe,
    Wavefunction,
};

use crate::RunnerError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Evolve,
    Trajectories,
    Equivariance,
    Perceptions,
    Typicality,
    Compare,
    SelectTrajectory,
}


#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// per-axis `[min, max)` extents
    pub extent: Vec<[f64; 2]>,
    /// per-axis point counts (powers of two)
    pub points: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub mass: Option<Vec<f64>>,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    /// snapshot spacing of the wavefunction store; defaults to half the
    /// ensemble output step so RK substeps land on snapshots
    #[serde(default)]
    pub snapshot_dt: Option<f64>,
}

fn default_hbar() -> f64 {
    1.0
}

/// Serde mirror of the state recipe with TOML-friendly complex
/// coefficients `{ re, im }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSection {
    Gaussian {
        center: Vec<f64>,
        width: Vec<f64>,
        momentum: Vec<f64>,
    },
    Eigenstate {
        n: Vec<usize>,
    },
    Superposition {
        terms: Vec<SuperpositionTerm>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperpositionTerm {
    #[serde(default = "default_one")]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub state: StateSection,
}

fn default_one() -> f64 {
    1.0
}

impl StateSection {
    /// Eigenstate recipes refer to the experiment's potential.
    pub fn to_recipe(&self, potential: &Potential) -> StateRecipe {
        match self {
            StateSection::Gaussian {
                center,
                width,
                momentum,
            } => StateRecipe::Gaussian {
                center: center.clone(),
                width: width.clone(),
                momentum: momentum.clone(),
            },
            StateSection::Eigenstate { n } => StateRecipe::Eigenstate {
                potential: potential.clone(),
                n: n.clone(),
            },
            StateSection::Superposition { terms } => StateRecipe::Superposition {
                terms: terms
                    .iter()
                    .map(|t| (Complex64::new(t.re, t.im), t.state.to_recipe(potential)))
                    .collect(),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodePolicySection {
    #[serde(default)]
    pub node_epsilon: Option<f64>,
    #[serde(default)]
    pub speed_cap: Option<f64>,
    #[serde(default)]
    pub substep_shrink: Option<f64>,
    #[serde(default)]
    pub dt_min: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub seed: u64,
    #[serde(default)]
    pub n: Option<usize>,
    /// explicit seed positions (used instead of sampling when given)
    #[serde(default)]
    pub x0: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_density")]
    pub density: InitialDensity,
    pub output_dt: f64,
    #[serde(default)]
    pub node_policy: Option<NodePolicySection>,
}

fn default_density() -> InitialDensity {
    InitialDensity::Quantum
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionsSection {
    /// uniform partition: one perception per cell at each time
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub cells: Option<Vec<usize>>,
    #[serde(default = "default_one")]
    pub prior_weight: f64,
    /// alternative: explicit perception definition file
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoryKind {
    Sqm,
    Sbm,
    Scbm,
    Gcbm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    pub kind: TheoryKind,
    #[serde(default = "default_one")]
    pub prior: f64,
    /// SBM: which ensemble member carries the definite trajectory
    #[serde(default)]
    pub trajectory_index: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    /// observed perception id for theory comparison
    #[serde(default)]
    pub observed: Option<String>,
    /// how many ensemble members to showcase as single-trajectory SBM
    /// theories in the typicality experiment
    #[serde(default = "default_sbm_samples")]
    pub sbm_samples: usize,
}

fn default_sbm_samples() -> usize {
    3
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            observed: None,
            sbm_samples: default_sbm_samples(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// analysis times: state export times for `evolve`, KS times for
    /// `equivariance`
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub emit_svg: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: ExperimentKind,
    pub grid: GridConfig,
    pub potential: Potential,
    pub initial_state: StateSection,
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub perceptions: Option<PerceptionsSection>,
    #[serde(default)]
    pub theories: Vec<TheorySection>,
    #[serde(default)]
    pub inference: InferenceSection,
    pub output: OutputSection,
}

/// One validation finding: the config field it concerns and what is wrong.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RunnerError> {
        toml::from_str(text).map_err(|e| RunnerError::ConfigParse(e.to_string()))
    }

    /// Whether this run must build a trajectory ensemble: trajectory-level
    /// experiments always do; measure-level experiments only when some
    /// theory carries dynamics (SBM/SCBM/GCBM).
    pub fn needs_ensemble(&self) -> bool {
        match self.experiment {
            ExperimentKind::Evolve => false,
            ExperimentKind::Trajectories
            | ExperimentKind::Equivariance
            | ExperimentKind::SelectTrajectory => true,
            ExperimentKind::Perceptions | ExperimentKind::Typicality | ExperimentKind::Compare => {
                self.theories.iter().any(|t| !matches!(t.kind, TheoryKind::Sqm))
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn build_grid(&self) -> Result<Grid, RunnerError> {
        if self.grid.extent.len() != self.grid.points.len() {
            return Err(RunnerError::Invalid(format!(
                "grid: {} extents but {} point counts",
                self.grid.extent.len(),
                self.grid.points.len()
            )));
        }
        let axes: Vec<Axis> = self
            .grid
            .extent
            .iter()
            .zip(&self.grid.points)
            .map(|(e, p)| Axis {
                min: e[0],
                max: e[1],
                points: *p,
            })
            .collect();
        Ok(Grid::new(axes)?)
    }

    pub fn masses(&self, dims: usize) -> Vec<f64> {
        self.evolution.mass.clone().unwrap_or_else(|| vec![1.0; dims])
    }

    pub fn build_state(&self, grid: &Grid) -> Result<Wavefunction, RunnerError> {
        let recipe = self.initial_state.to_recipe(&self.potential);
        Ok(make_state_with(
            grid,
            &recipe,
            &self.masses(grid.dims()),
            self.evolution.hbar,
        )?)
    }

    pub fn build_evolution_config(&self, grid: &Grid) -> Result<EvolutionConfig, RunnerError> {
        Ok(EvolutionConfig::new(
            grid,
            self.evolution.dt,
            self.masses(grid.dims()),
            self.evolution.hbar,
        )?)
    }

    /// Snapshot spacing: explicit, or half the ensemble output step, or a
    /// hundredth of the horizon for pure evolution runs.
    pub fn snapshot_dt(&self) -> f64 {
        if let Some(s) = self.evolution.snapshot_dt {
            return s;
        }
        match &self.ensemble {
            Some(e) => 0.5 * e.output_dt,
            None => (self.evolution.t_final / 100.0).max(self.evolution.dt),
        }
    }

    /// Uniform ensemble output times from 0 to t_final.
    pub fn output_times(&self) -> Option<Vec<f64>> {
        let e = self.ensemble.as_ref()?;
        let steps = (self.evolution.t_final / e.output_dt).round().max(1.0) as usize;
        Some(
            (0..=steps)
                .map(|i| self.evolution.t_final * i as f64 / steps as f64)
                .collect(),
        )
    }

    pub fn explicit_points(&self) -> Option<Vec<Point>> {
        let e = self.ensemble.as_ref()?;
        e.x0.as_ref()
            .map(|list| list.iter().map(|c| Point::from_slice(c)).collect())
    }

    /// Builds the perception set: a generated partition family or an
    /// explicit definition file (resolved relative to `base_dir`).
    pub fn build_perceptions(
        &self,
        grid: &Grid,
        base_dir: &Path,
    ) -> Result<Option<PerceptionSet>, RunnerError> {
        let Some(section) = &self.perceptions else {
            return Ok(None);
        };
        if let Some(file) = &section.file {
            let path = if file.is_absolute() {
                file.clone()
            } else {
                base_dir.join(file)
            };
            let set = load_perception_file(&path)?;
            validate_family(&set, grid)?;
            return Ok(Some(set));
        }
        let (Some(times), Some(cells)) = (&section.times, &section.cells) else {
            return Err(RunnerError::Invalid(
                "perceptions: need either a file or both times and cells".into(),
            ));
        };
        let family = build_perception_family(
            grid,
            &FamilySpec {
                times: times.clone(),
                cells: cells.clone(),
                prior_weight: section.prior_weight,
            },
        )?;
        Ok(Some(family))
    }

    /// Every violation found, in config order; empty means runnable.
    pub fn validate(&self, base_dir: &Path) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut diag = |field: &str, message: String| {
            out.push(Diagnostic {
                field: field.to_string(),
                message,
            })
        };

        if self.name.is_empty() {
            diag("name", "experiment name must not be empty".into());
        }
        if !(self.evolution.t_final.is_finite() && self.evolution.t_final >= 0.0) {
            diag("evolution.t_final", "final time must be nonnegative".into());
        }

        let grid = match self.build_grid() {
            Ok(g) => g,
            Err(e) => {
                diag("grid", e.to_string());
                return out;
            }
        };

        if let Err(e) = self.potential.values_on(&grid) {
            diag("potential", e.to_string());
        }
        if let Err(e) = self.build_evolution_config(&grid) {
            diag("evolution", e.to_string());
        }
        if let Err(e) = self.build_state(&grid) {
            diag("initial_state", e.to_string());
        }

        if self.needs_ensemble() {
            match &self.ensemble {
                None => diag(
                    "ensemble",
                    format!("experiment {:?} needs an [ensemble] section", self.experiment),
                ),
                Some(e) => {
                    if e.n.is_none() && e.x0.is_none() {
                        diag("ensemble", "need a sample count n or explicit x0 list".into());
                    }
                    if let Some(n) = e.n {
                        if n == 0 {
                            diag("ensemble.n", "sample count must be at least 1".into());
                        }
                    }
                    if !(e.output_dt.is_finite() && e.output_dt > 0.0) {
                        diag("ensemble.output_dt", "output step must be positive".into());
                    } else if e.output_dt > self.evolution.t_final && self.evolution.t_final > 0.0 {
                        diag(
                            "ensemble.output_dt",
                            "output step exceeds the evolution horizon".into(),
                        );
                    }
                    if let Some(points) = self.explicit_points() {
                        for (i, p) in points.iter().enumerate() {
                            if !grid.contains(*p) {
                                diag(
                                    "ensemble.x0",
                                    format!("seed position {} lies outside the grid extent", i),
                                );
                            }
                        }
                    }
                    if let InitialDensity::Custom { values } = &e.density {
                        if values.len() != grid.len() {
                            diag(
                                "ensemble.density",
                                format!(
                                    "custom density has {} values, grid has {}",
                                    values.len(),
                                    grid.len()
                                ),
                            );
                        }
                    }
                    if let Some(np) = &e.node_policy {
                        for (name, v) in [
                            ("node_epsilon", np.node_epsilon),
                            ("speed_cap", np.speed_cap),
                            ("dt_min", np.dt_min),
                        ] {
                            if let Some(v) = v {
                                if !(v.is_finite() && v > 0.0) {
                                    diag(
                                        "ensemble.node_policy",
                                        format!("{name} must be positive"),
                                    );
                                }
                            }
                        }
                        if let Some(s) = np.substep_shrink {
                            if !(s > 0.0 && s < 1.0) {
                                diag(
                                    "ensemble.node_policy.substep_shrink",
                                    "must lie strictly between 0 and 1".into(),
                                );
                            }
                        }
                    }
                }
            }
        }

        match self.build_perceptions(&grid, base_dir) {
            Err(e) => diag("perceptions", e.to_string()),
            Ok(Some(set)) => {
                for p in set.perceptions() {
                    if p.t > self.evolution.t_final + 1e-12 || p.t < 0.0 {
                        diag(
                            "perceptions",
                            format!(
                                "perception {:?}: time {} is outside the evolved range [0, {}]",
                                p.id, p.t, self.evolution.t_final
                            ),
                        );
                    }
                }
                if let Some(observed) = &self.inference.observed {
                    if set.get(observed).is_none() {
                        diag(
                            "inference.observed",
                            format!("observed perception {:?} is not in the set", observed),
                        );
                    }
                }
            }
            Ok(None) => {
                if matches!(
                    self.experiment,
                    ExperimentKind::Perceptions | ExperimentKind::Typicality | ExperimentKind::Compare
                ) {
                    diag(
                        "perceptions",
                        format!("experiment {:?} needs a [perceptions] section", self.experiment),
                    );
                }
            }
        }

        for (i, th) in self.theories.iter().enumerate() {
            if !(th.prior.is_finite() && th.prior > 0.0) {
                diag(
                    "theories",
                    format!("theory {} has non-positive prior {}", i, th.prior),
                );
            }
            match th.kind {
                TheoryKind::Sbm => match th.trajectory_index {
                    None => diag(
                        "theories",
                        format!("sbm theory {} needs a trajectory_index", i),
                    ),
                    Some(idx) => {
                        let size = self
                            .ensemble
                            .as_ref()
                            .and_then(|e| e.n.or_else(|| e.x0.as_ref().map(|v| v.len())));
                        if let Some(n) = size {
                            if idx >= n {
                                diag(
                                    "theories",
                                    format!(
                                        "sbm theory {}: trajectory_index {} exceeds ensemble size {}",
                                        i, idx, n
                                    ),
                                );
                            }
                        }
                    }
                },
                TheoryKind::Scbm => {
                    if let Some(e) = &self.ensemble {
                        if !matches!(e.density, InitialDensity::Quantum) {
                            diag(
                                "theories",
                                "scbm needs the ensemble sampled from the quantum density".into(),
                            );
                        }
                    }
                }
                TheoryKind::Gcbm => {
                    if let Some(e) = &self.ensemble {
                        if matches!(e.density, InitialDensity::Quantum) {
                            diag(
                                "theories",
                                "gcbm needs the ensemble sampled from a custom density".into(),
                            );
                        }
                    }
                }
                TheoryKind::Sqm => {}
            }
        }

        if matches!(self.experiment, ExperimentKind::Compare) {
            if self.inference.observed.is_none() {
                diag("inference.observed", "compare needs an observed perception".into());
            }
            if self.theories.is_empty() {
                diag("theories", "compare needs at least one theory".into());
            }
        }
        if matches!(
            self.experiment,
            ExperimentKind::Perceptions | ExperimentKind::Typicality
        ) && self.theories.is_empty()
        {
            diag("theories", "need at least one theory to evaluate".into());
        }

        for (i, t) in self.output.times.iter().enumerate() {
            if *t < 0.0 || *t > self.evolution.t_final + 1e-12 {
                diag(
                    "output.times",
                    format!("time {} (entry {}) is outside [0, {}]", t, i, self.evolution.t_final),
                );
            }
        }

        out
    }
}

/// Serde row of the perception definition file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerceptionRow {
    id: String,
    t: f64,
    #[serde(default = "default_one")]
    prior_weight: f64,
    #[serde(default)]
    intervals: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    rects: Option<Vec<[f64; 4]>>,
}

#[derive(Serialize, Deserialize)]
struct PerceptionFile {
    #[serde(rename = "perception")]
    rows: Vec<PerceptionRow>,
}

/// Reads a perception definition file: `[[perception]]` entries with id,
/// time, prior weight and either 1D intervals or 2D rects.
pub fn load_perception_file(path: &Path) -> Result<PerceptionSet, RunnerError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunnerError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let file: PerceptionFile =
        toml::from_str(&text).map_err(|e| RunnerError::ConfigParse(e.to_string()))?;
    let perceptions = file
        .rows
        .into_iter()
        .map(|row| {
            let region = match (&row.intervals, &row.rects) {
                (Some(iv), None) => {
                    let pairs: Vec<(f64, f64)> = iv.iter().map(|ab| (ab[0], ab[1])).collect();
                    Region::intervals(&pairs)?
                }
                (None, Some(rc)) => {
                    let quads: Vec<(f64, f64, f64, f64)> =
                        rc.iter().map(|r| (r[0], r[1], r[2], r[3])).collect();
                    Region::rectangles(&quads)?
                }
                _ => {
                    return Err(RunnerError::Invalid(format!(
                        "perception {:?} needs exactly one of intervals or rects",
                        row.id
                    )))
                }
            };
            Ok(Perception {
                id: row.id,
                t: row.t,
                region,
                prior_weight: row.prior_weight,
            })
        })
        .collect::<Result<Vec<_>, RunnerError>>()?;
    Ok(PerceptionSet::new(perceptions)?)
}

/// Writes the perception definition file format.
pub fn write_perception_file(
    set: &PerceptionSet,
    dims: usize,
    header: &str,
) -> String {
    let rows: Vec<PerceptionRow> = set
        .perceptions()
        .iter()
        .map(|p| {
            let (intervals, rects) = if dims == 1 {
                (
                    Some(p.region.boxes().iter().map(|b| [b[0][0], b[0][1]]).collect()),
                    None,
                )
            } else {
                (
                    None,
                    Some(
                        p.region
                            .boxes()
                            .iter()
                            .map(|b| [b[0][0], b[0][1], b[1][0], b[1][1]])
                            .collect(),
                    ),
                )
            };
            PerceptionRow {
                id: p.id.clone(),
                t: p.t,
                prior_weight: p.prior_weight,
                intervals,
                rects,
            }
        })
        .collect();
    let body = toml::to_string_pretty(&PerceptionFile { rows }).expect("serialises");
    format!("# {}\n{}", header, body)
}
