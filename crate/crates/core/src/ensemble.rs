//! Ensembles of Bohmian trajectories: seeded inverse-CDF sampling of
//! initial positions, transport of whole ensembles under the pilot-wave
//! flow, Kolmogorov-Smirnov equivariance tests against `|psi|^2`, and the
//! max-path-density trajectory selection rule.
//!
//! The continuum ensembles are realised by finite Monte Carlo draws with
//! explicit `sqrt(N)` error bands; everything is deterministic given the
//! 64-bit seed (counter-based ChaCha generator, fixed-order reductions).

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::configspace::evolve::{EvolutionContext, EvolveError};
use crate::configspace::grid::{Grid, Point};
use crate::pilotwave::{integrate_trajectory, path_density_integral, NodePolicy, PilotWaveError, Trajectory, VelocityTable};
use crate::stats::{ks_statistic, ks_threshold, GridCdf};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("initial density is identically zero")]
    ZeroDensity,
    #[error("initial density has a negative value at grid point {index}")]
    NegativeDensity { index: usize },
    #[error("custom density has {got} values but the grid has {expected} points")]
    LengthMismatch { got: usize, expected: usize },
    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: usize,
        source: PilotWaveError,
    },
    #[error("requested time {t} is outside the ensemble's sampled range")]
    TimeNotSampled { t: f64 },
    #[error("ensemble CSV parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}

/// Measure density used to seed an ensemble: the quantum density
/// `|psi(x, t0)|^2` or an arbitrary tabulated nonnegative function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDensity {
    Quantum,
    Custom { values: Vec<f64> },
}

impl InitialDensity {
    pub fn label(&self) -> &'static str {
        match self {
            InitialDensity::Quantum => "quantum",
            InitialDensity::Custom { .. } => "custom",
        }
    }

    /// Resolves to per-point density values at time `t0`, normalised to
    /// unit grid quadrature.
    pub fn values(&self, ctx: &EvolutionContext, t0: f64) -> Result<Vec<f64>, EnsembleError> {
        let raw = match self {
            InitialDensity::Quantum => ctx.density_field(t0)?,
            InitialDensity::Custom { values } => {
                if values.len() != ctx.grid().len() {
                    return Err(EnsembleError::LengthMismatch {
                        got: values.len(),
                        expected: ctx.grid().len(),
                    });
                }
                values.clone()
            }
        };
        if let Some(index) = raw.iter().position(|v| *v < 0.0 || !v.is_finite()) {
            return Err(EnsembleError::NegativeDensity { index });
        }
        let total: f64 = raw.iter().sum::<f64>() * ctx.grid().cell_volume();
        if total <= 0.0 {
            return Err(EnsembleError::ZeroDensity);
        }
        Ok(raw.into_iter().map(|v| v / total).collect())
    }
}

/// Draws `n` points from a tabulated density by inverse-CDF sampling with
/// within-cell uniform placement; 2D densities are decomposed into the
/// axis-0 marginal and the conditional column. Deterministic given `seed`.
pub fn sample_initial(
    grid: &Grid,
    density: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Point>, EnsembleError> {
    if n == 0 {
        return Err(EnsembleError::EmptySample);
    }
    if density.len() != grid.len() {
        return Err(EnsembleError::LengthMismatch {
            got: density.len(),
            expected: grid.len(),
        });
    }
    if let Some(index) = density.iter().position(|v| *v < 0.0 || !v.is_finite()) {
        return Err(EnsembleError::NegativeDensity { index });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match grid.dims() {
        1 => {
            let cdf = GridCdf::from_masses(grid.axis(0), density).ok_or(EnsembleError::ZeroDensity)?;
            Ok((0..n)
                .map(|_| Point::new_1d(cdf.inverse(rng.gen::<f64>())))
                .collect())
        }
        _ => {
            let (nx, ny) = (grid.axis(0).points, grid.axis(1).points);
            let marginal: Vec<f64> = (0..nx)
                .map(|i| density[i * ny..(i + 1) * ny].iter().sum())
                .collect();
            let marginal_cdf =
                GridCdf::from_masses(grid.axis(0), &marginal).ok_or(EnsembleError::ZeroDensity)?;
            let dx = grid.axis(0).dx();
            let mut points = Vec::with_capacity(n);
            for _ in 0..n {
                let x = marginal_cdf.inverse(rng.gen::<f64>());
                let ix = (((x - grid.axis(0).min) / dx).floor() as usize).min(nx - 1);
                let column = &density[ix * ny..(ix + 1) * ny];
                let column_cdf = GridCdf::from_masses(grid.axis(1), column)
                    .ok_or(EnsembleError::ZeroDensity)?;
                let y = column_cdf.inverse(rng.gen::<f64>());
                points.push(Point::new_2d(x, y));
            }
            Ok(points)
        }
    }
}

/// A finite realisation of a trajectory continuum: every member shares the
/// output time grid.
#[derive(Clone, Debug)]
pub struct Ensemble {
    trajectories: Vec<Trajectory>,
    output_times: Vec<f64>,
    seed: u64,
    density_label: String,
}

impl Ensemble {
    pub fn new(
        trajectories: Vec<Trajectory>,
        output_times: Vec<f64>,
        seed: u64,
        density_label: String,
    ) -> Self {
        assert!(!trajectories.is_empty(), "ensemble needs at least one member");
        Ensemble {
            trajectories,
            output_times,
            seed,
            density_label,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }

    pub fn output_times(&self) -> &[f64] {
        &self.output_times
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn density_label(&self) -> &str {
        &self.density_label
    }

    pub fn start_time(&self) -> f64 {
        self.output_times[0]
    }

    pub fn end_time(&self) -> f64 {
        self.output_times[self.output_times.len() - 1]
    }

    /// Member positions at time `t` (interpolated between output samples).
    pub fn positions_at(&self, t: f64) -> Result<Vec<Point>, EnsembleError> {
        self.trajectories
            .iter()
            .enumerate()
            .map(|(index, traj)| {
                traj.position_at(t)
                    .map_err(|source| EnsembleError::Trajectory { index, source })
            })
            .collect()
    }

    /// CSV export, columns `traj_id,t,x[,y]`.
    pub fn write_csv(&self, w: &mut impl Write, dims: usize) -> std::io::Result<()> {
        writeln!(w, "{}", if dims == 1 { "traj_id,t,x" } else { "traj_id,t,x,y" })?;
        for (id, traj) in self.trajectories.iter().enumerate() {
            for (t, p) in traj.samples() {
                write!(w, "{},{}", id, t)?;
                for c in p.coords(dims) {
                    write!(w, ",{}", c)?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Reads the `write_csv` format back (ids must be contiguous from 0).
    pub fn read_csv(
        r: impl BufRead,
        seed: u64,
        density_label: String,
    ) -> Result<Self, EnsembleError> {
        let mut per_traj: Vec<Vec<(f64, Point)>> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| EnsembleError::Csv {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("traj_id") {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(EnsembleError::Csv {
                    line: lineno + 1,
                    message: format!("expected 3 or 4 columns, got {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| EnsembleError::Csv {
                    line: lineno + 1,
                    message: e.to_string(),
                })
            };
            let id = fields[0].trim().parse::<usize>().map_err(|e| EnsembleError::Csv {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let t = parse(fields[1])?;
            let coords: Vec<f64> = fields[2..]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_, _>>()?;
            if id >= per_traj.len() {
                per_traj.resize_with(id + 1, Vec::new);
            }
            per_traj[id].push((t, Point::from_slice(&coords)));
        }
        if per_traj.is_empty() {
            return Err(EnsembleError::EmptySample);
        }
        let trajectories: Vec<Trajectory> = per_traj
            .into_iter()
            .enumerate()
            .map(|(index, samples)| {
                Trajectory::from_samples(samples)
                    .map_err(|source| EnsembleError::Trajectory { index, source })
            })
            .collect::<Result<_, _>>()?;
        let output_times: Vec<f64> = trajectories[0].samples().iter().map(|(t, _)| *t).collect();
        // every member must share the output time grid
        for (index, traj) in trajectories.iter().enumerate() {
            let same = traj.samples().len() == output_times.len()
                && traj
                    .samples()
                    .iter()
                    .zip(&output_times)
                    .all(|((t, _), t0)| t == t0);
            if !same {
                return Err(EnsembleError::Csv {
                    line: 0,
                    message: format!("trajectory {index} does not share the output time grid"),
                });
            }
        }
        Ok(Ensemble::new(trajectories, output_times, seed, density_label))
    }
}

/// Integrates every seed point independently on a shared output time grid.
/// Members run in parallel; results keep the input order, so the outcome is
/// independent of the thread count. Node failures are reported with their
/// trajectory index and leave other members unaffected.
pub fn evolve_ensemble(
    points: &[Point],
    output_times: &[f64],
    table: &VelocityTable,
    policy: &NodePolicy,
    seed: u64,
    density_label: &str,
) -> Result<Ensemble, EnsembleError> {
    if points.is_empty() {
        return Err(EnsembleError::EmptySample);
    }
    let results: Vec<Result<Trajectory, PilotWaveError>> = points
        .par_iter()
        .map(|&x0| integrate_trajectory(x0, output_times, table, policy))
        .collect();
    let trajectories: Vec<Trajectory> = results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|source| EnsembleError::Trajectory { index, source }))
        .collect::<Result<_, _>>()?;
    Ok(Ensemble::new(
        trajectories,
        output_times.to_vec(),
        seed,
        density_label.to_string(),
    ))
}

/// Per-time equivariance check result; `d` holds the KS statistic per axis
/// (one entry in 1D, per-axis marginals in 2D).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivarianceEntry {
    pub t: f64,
    pub d: Vec<f64>,
    pub threshold: f64,
    pub pass: bool,
}

/// Kolmogorov-Smirnov comparison of ensemble positions against the quantum
/// density `|psi(x,t)|^2` at each requested time, at the 1% level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub n: usize,
    pub entries: Vec<EquivarianceEntry>,
}

impl EquivarianceReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// Compares the empirical CDF of member positions with the CDF of
/// `|psi(x,t)|^2` by grid quadrature; passes when `D_N < 1.63/sqrt(N)`.
pub fn equivariance_test(
    ens: &Ensemble,
    ctx: &EvolutionContext,
    times: &[f64],
) -> Result<EquivarianceReport, EnsembleError> {
    let grid = ctx.grid();
    let n = ens.len();
    let threshold = ks_threshold(n);
    let mut entries = Vec::with_capacity(times.len());
    for &t in times {
        let tol = 1e-9 * (ens.end_time() - ens.start_time()).abs().max(1e-300);
        if t < ens.start_time() - tol || t > ens.end_time() + tol {
            return Err(EnsembleError::TimeNotSampled { t });
        }
        let positions = ens.positions_at(t)?;
        let density = ctx.density_field(t)?;
        let mut d = Vec::with_capacity(grid.dims());
        for a in 0..grid.dims() {
            let masses = axis_marginal(grid, &density, a);
            let cdf = GridCdf::from_masses(grid.axis(a), &masses).ok_or(EnsembleError::ZeroDensity)?;
            let coords: Vec<f64> = positions.iter().map(|p| p.coord(a)).collect();
            d.push(ks_statistic(&coords, |x| cdf.eval(x)));
        }
        let pass = d.iter().all(|v| *v < threshold);
        entries.push(EquivarianceEntry {
            t,
            d,
            threshold,
            pass,
        });
    }
    Ok(EquivarianceReport { n, entries })
}

fn axis_marginal(grid: &Grid, density: &[f64], axis: usize) -> Vec<f64> {
    match grid.dims() {
        1 => density.to_vec(),
        _ => {
            let (nx, ny) = (grid.axis(0).points, grid.axis(1).points);
            if axis == 0 {
                (0..nx)
                    .map(|i| density[i * ny..(i + 1) * ny].iter().sum())
                    .collect()
            } else {
                let mut m = vec![0.0; ny];
                for i in 0..nx {
                    for (j, mj) in m.iter_mut().enumerate() {
                        *mj += density[i * ny + j];
                    }
                }
                m
            }
        }
    }
}

/// Argmax of the path density integral over ensemble members; ties break
/// towards the lowest index. Returns `(index, integral)`.
pub fn select_max_density_trajectory(
    ens: &Ensemble,
    ctx: &EvolutionContext,
) -> Result<(usize, f64), EnsembleError> {
    let values = path_density_integrals(ens, ctx)?;
    let mut best = (0usize, values[0]);
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > best.1 {
            best = (i, *v);
        }
    }
    Ok(best)
}

/// Path density integral of every member, in member order.
pub fn path_density_integrals(
    ens: &Ensemble,
    ctx: &EvolutionContext,
) -> Result<Vec<f64>, EnsembleError> {
    ens.trajectories
        .iter()
        .enumerate()
        .map(|(index, traj)| {
            path_density_integral(traj, ctx)
                .map_err(|source| EnsembleError::Trajectory { index, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::evolve::EvolutionConfig;
    use crate::configspace::potential::Potential;
    use crate::configspace::state::{make_state, StateRecipe};
    use approx::assert_abs_diff_eq;

    fn grid512() -> Grid {
        Grid::line(-16.0, 16.0, 512).unwrap()
    }

    fn gaussian_ctx(t_end: f64, snap_dt: f64) -> EvolutionContext {
        let grid = grid512();
        let psi = make_state(
            &grid,
            &StateRecipe::Gaussian {
                center: vec![0.0],
                width: vec![1.0],
                momentum: vec![0.0],
            },
        )
        .unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        EvolutionContext::new(&psi, &Potential::Free, &cfg, t_end, snap_dt).unwrap()
    }

    fn ground_state_ctx(t_end: f64, snap_dt: f64) -> EvolutionContext {
        ground_state_ctx_with_dt(t_end, snap_dt, 0.002)
    }

    fn ground_state_ctx_with_dt(t_end: f64, snap_dt: f64, dt: f64) -> EvolutionContext {
        let grid = grid512();
        let psi = make_state(
            &grid,
            &StateRecipe::Eigenstate {
                potential: Potential::Harmonic { omega: 1.0 },
                n: vec![0],
            },
        )
        .unwrap();
        let cfg = EvolutionConfig::natural(&grid, dt).unwrap();
        EvolutionContext::new(&psi, &Potential::Harmonic { omega: 1.0 }, &cfg, t_end, snap_dt)
            .unwrap()
    }

    fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
    }

    #[test]
    fn uniform_density_sample_mean_is_centered() {
        let grid = Grid::line(0.0, 1.0, 64).unwrap();
        let density = vec![1.0; 64];
        let n = 100_000;
        let points = sample_initial(&grid, &density, n, 42).unwrap();
        let mean: f64 = points.iter().map(|p| p.coord(0)).sum::<f64>() / n as f64;
        let band = 3.0 / (12.0f64).sqrt() / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < band, "mean {mean} outside band {band}");
    }

    #[test]
    fn ground_state_sample_variance_matches_quadrature_oracle() {
        let ctx = ground_state_ctx(0.1, 0.05);
        let grid = ctx.grid().clone();
        let density = InitialDensity::Quantum.values(&ctx, 0.0).unwrap();
        // quadrature oracle for the variance and fourth moment of |psi_0|^2
        let dx = grid.axis(0).dx();
        let mut var = 0.0;
        let mut mu4 = 0.0;
        for (i, rho) in density.iter().enumerate() {
            let x = grid.point(i).coord(0);
            var += x * x * rho * dx;
            mu4 += x * x * x * x * rho * dx;
        }
        assert_abs_diff_eq!(var, 0.5, epsilon = 1e-6);

        let n = 100_000;
        let points = sample_initial(&grid, &density, n, 7).unwrap();
        let mean: f64 = points.iter().map(|p| p.coord(0)).sum::<f64>() / n as f64;
        let sample_var: f64 =
            points.iter().map(|p| (p.coord(0) - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let band = 3.0 * ((mu4 - var * var) / n as f64).sqrt();
        assert!(
            (sample_var - var).abs() < band,
            "variance {sample_var} deviates from {var} beyond {band}"
        );
    }

    #[test]
    fn same_seed_gives_identical_points() {
        let grid = grid512();
        let density: Vec<f64> = (0..512)
            .map(|i| (-(grid.point(i).coord(0).powi(2))).exp())
            .collect();
        let a = sample_initial(&grid, &density, 1000, 99).unwrap();
        let b = sample_initial(&grid, &density, 1000, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_initial(&grid, &density, 1000, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn node_failures_carry_the_trajectory_index() {
        // member 1 sits exactly on the n=1 eigenstate node and cannot move
        let grid = grid512();
        let psi = make_state(
            &grid,
            &StateRecipe::Eigenstate {
                potential: Potential::Harmonic { omega: 1.0 },
                n: vec![1],
            },
        )
        .unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let ctx =
            EvolutionContext::new(&psi, &Potential::Harmonic { omega: 1.0 }, &cfg, 0.5, 0.01)
                .unwrap();
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 0.5).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let times = uniform_times(0.0, 0.5, 10);
        let err = evolve_ensemble(
            &[Point::new_1d(1.0), Point::new_1d(0.0)],
            &times,
            &table,
            &policy,
            0,
            "quantum",
        )
        .unwrap_err();
        match err {
            EnsembleError::Trajectory { index, source } => {
                assert_eq!(index, 1);
                assert!(matches!(source, PilotWaveError::NodeUnderflow { .. }));
            }
            other => panic!("expected an indexed trajectory failure, got {other}"),
        }
    }

    #[test]
    fn zero_density_is_an_error() {
        let grid = grid512();
        assert!(matches!(
            sample_initial(&grid, &vec![0.0; 512], 10, 0),
            Err(EnsembleError::ZeroDensity)
        ));
    }

    #[test]
    fn sampling_2d_respects_both_marginals() {
        let grid = Grid::plane((0.0, 1.0, 32), (0.0, 2.0, 32)).unwrap();
        // density uniform in x, linear ramp in y
        let density: Vec<f64> = (0..grid.len())
            .map(|i| {
                
                grid.point(i).coord(1)
            })
            .collect();
        let n = 50_000;
        let points = sample_initial(&grid, &density, n, 5).unwrap();
        let mean_x: f64 = points.iter().map(|p| p.coord(0)).sum::<f64>() / n as f64;
        let mean_y: f64 = points.iter().map(|p| p.coord(1)).sum::<f64>() / n as f64;
        // E[x] = 1/2; E[y] = integral y * y dy / integral y dy = 4/3 on [0,2]
        assert!((mean_x - 0.5).abs() < 0.01);
        assert!((mean_y - 4.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn stationary_ensemble_is_static_and_singleton_matches_single() {
        // small dt keeps the splitting noise in the evolved eigenstate
        // below the 1e-8 drift bound
        let ctx = ground_state_ctx_with_dt(2.0, 0.01, 1.25e-4);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let times = uniform_times(0.0, 2.0, 50);
        let points = vec![Point::new_1d(-1.0), Point::new_1d(0.5), Point::new_1d(1.5)];
        let ens = evolve_ensemble(&points, &times, &table, &policy, 1, "quantum").unwrap();
        for (traj, p0) in ens.trajectories().iter().zip(&points) {
            for (_, p) in traj.samples() {
                assert!((p.coord(0) - p0.coord(0)).abs() < 1e-8);
            }
        }
        // singleton reduces to integrate_trajectory exactly
        let single = evolve_ensemble(&points[..1], &times, &table, &policy, 1, "quantum").unwrap();
        let direct = integrate_trajectory(points[0], &times, &table, &policy).unwrap();
        assert_eq!(single.trajectory(0), &direct);
    }

    #[test]
    fn quantum_sampled_ensemble_passes_equivariance() {
        let ctx = gaussian_ctx(2.0, 0.01);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let density = InitialDensity::Quantum.values(&ctx, 0.0).unwrap();
        let points = sample_initial(ctx.grid(), &density, 4000, 11).unwrap();
        let times = uniform_times(0.0, 2.0, 100);
        let ens = evolve_ensemble(&points, &times, &table, &policy, 11, "quantum").unwrap();
        let report = equivariance_test(&ens, &ctx, &[0.0, 1.0, 2.0]).unwrap();
        assert!(report.all_pass(), "{:?}", report);
    }

    #[test]
    fn free_gaussian_ensemble_variance_tracks_spreading_law() {
        let ctx = gaussian_ctx(2.0, 0.01);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let density = InitialDensity::Quantum.values(&ctx, 0.0).unwrap();
        let n = 10_000;
        let points = sample_initial(ctx.grid(), &density, n, 3).unwrap();
        let times = uniform_times(0.0, 2.0, 100);
        let ens = evolve_ensemble(&points, &times, &table, &policy, 3, "quantum").unwrap();
        let positions = ens.positions_at(2.0).unwrap();
        let mean: f64 = positions.iter().map(|p| p.coord(0)).sum::<f64>() / n as f64;
        let var: f64 =
            positions.iter().map(|p| (p.coord(0) - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // sigma(2)^2 = 2 for sigma0 = 1; gaussian variance-of-variance band
        let expect = 2.0;
        let band = 3.0 * (2.0 * expect * expect / n as f64).sqrt();
        assert!(
            (var - expect).abs() < band,
            "variance {var} deviates from {expect} beyond {band}"
        );
    }

    #[test]
    fn wrong_density_fails_equivariance_immediately() {
        let ctx = gaussian_ctx(1.0, 0.01);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 1.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        // uniform stripe over [2, 6]: nothing like |psi|^2
        let grid = ctx.grid().clone();
        let custom: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.point(i).coord(0);
                if (2.0..6.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let density = InitialDensity::Custom { values: custom };
        let values = density.values(&ctx, 0.0).unwrap();
        let points = sample_initial(&grid, &values, 2000, 8).unwrap();
        let times = uniform_times(0.0, 1.0, 20);
        let ens = evolve_ensemble(&points, &times, &table, &policy, 8, density.label()).unwrap();
        let report = equivariance_test(&ens, &ctx, &[0.0]).unwrap();
        assert!(!report.entries[0].pass);
        assert!(report.entries[0].d[0] > 10.0 * report.entries[0].threshold);
    }

    #[test]
    fn ks_statistic_scales_inversely_with_sqrt_n() {
        // median D_N over seeds should roughly halve from N to 4N
        let ctx = gaussian_ctx(0.1, 0.05);
        let density = InitialDensity::Quantum.values(&ctx, 0.0).unwrap();
        let grid = ctx.grid().clone();
        let cdf = GridCdf::from_masses(grid.axis(0), &density).unwrap();
        let median_d = |n: usize| {
            let mut ds: Vec<f64> = (0..15u64)
                .map(|seed| {
                    let pts = sample_initial(&grid, &density, n, 1000 + seed).unwrap();
                    let xs: Vec<f64> = pts.iter().map(|p| p.coord(0)).collect();
                    ks_statistic(&xs, |x| cdf.eval(x))
                })
                .collect();
            crate::stats::median(&mut ds)
        };
        let ratio = median_d(500) / median_d(2000);
        assert!(
            (1.4..2.9).contains(&ratio),
            "sqrt-N scaling violated: ratio {ratio}"
        );
    }

    #[test]
    fn selection_prefers_the_density_peak() {
        let ctx = ground_state_ctx(10.0, 0.05);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 10.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let times = uniform_times(0.0, 10.0, 100);
        let points = vec![
            Point::new_1d(1.5),
            Point::new_1d(0.0),
            Point::new_1d(-0.8),
            Point::new_1d(2.5),
        ];
        let ens = evolve_ensemble(&points, &times, &table, &policy, 2, "quantum").unwrap();
        let (index, value) = select_max_density_trajectory(&ens, &ctx).unwrap();
        assert_eq!(index, 1);
        // brute force comparison over all members
        let all = path_density_integrals(&ens, &ctx).unwrap();
        for v in &all {
            assert!(value >= *v);
        }
    }

    #[test]
    fn singleton_selection_returns_index_zero() {
        let ctx = ground_state_ctx(1.0, 0.05);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 1.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let times = uniform_times(0.0, 1.0, 10);
        let ens = evolve_ensemble(&[Point::new_1d(0.3)], &times, &table, &policy, 0, "quantum")
            .unwrap();
        assert_eq!(select_max_density_trajectory(&ens, &ctx).unwrap().0, 0);
    }

    #[test]
    fn ensemble_csv_roundtrip() {
        let ctx = ground_state_ctx(1.0, 0.05);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 1.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let times = uniform_times(0.0, 1.0, 4);
        let points = vec![Point::new_1d(-0.5), Point::new_1d(0.5)];
        let ens = evolve_ensemble(&points, &times, &table, &policy, 21, "quantum").unwrap();
        let mut buf = Vec::new();
        ens.write_csv(&mut buf, 1).unwrap();
        let back = Ensemble::read_csv(&buf[..], 21, "quantum".into()).unwrap();
        assert_eq!(back.len(), ens.len());
        for (a, b) in back.trajectories().iter().zip(ens.trajectories()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn two_dimensional_equivariance_per_axis_marginals() {
        let grid = Grid::plane((-16.0, 16.0, 64), (-16.0, 16.0, 64)).unwrap();
        let psi = make_state(
            &grid,
            &StateRecipe::Gaussian {
                center: vec![0.0, 0.5],
                width: vec![1.0, 1.2],
                momentum: vec![0.0, 0.0],
            },
        )
        .unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.01).unwrap();
        let ctx = EvolutionContext::new(&psi, &Potential::Free, &cfg, 1.0, 0.01).unwrap();
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 1.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let density = InitialDensity::Quantum.values(&ctx, 0.0).unwrap();
        let points = sample_initial(&grid, &density, 3000, 13).unwrap();
        let times = uniform_times(0.0, 1.0, 50);
        let ens = evolve_ensemble(&points, &times, &table, &policy, 13, "quantum").unwrap();
        let report = equivariance_test(&ens, &ctx, &[0.0, 1.0]).unwrap();
        for entry in &report.entries {
            assert_eq!(entry.d.len(), 2);
            assert!(entry.pass, "{:?}", entry);
        }
    }

    #[test]
    fn transported_custom_density_is_consistent_across_n() {
        // GCBM self-consistency: the same custom density transported with N
        // and 10N members agrees in distribution at the final time
        let ctx = gaussian_ctx(1.0, 0.01);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 1.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let grid = ctx.grid().clone();
        let custom: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.point(i).coord(0);
                (-(x - 0.5).powi(2)).exp()
            })
            .collect();
        let density = InitialDensity::Custom { values: custom };
        let values = density.values(&ctx, 0.0).unwrap();
        let times = uniform_times(0.0, 1.0, 50);
        let small = evolve_ensemble(
            &sample_initial(&grid, &values, 800, 31).unwrap(),
            &times,
            &table,
            &policy,
            31,
            "custom",
        )
        .unwrap();
        let large = evolve_ensemble(
            &sample_initial(&grid, &values, 8000, 32).unwrap(),
            &times,
            &table,
            &policy,
            32,
            "custom",
        )
        .unwrap();
        let xs: Vec<f64> = small
            .positions_at(1.0)
            .unwrap()
            .iter()
            .map(|p| p.coord(0))
            .collect();
        let mut ys: Vec<f64> = large
            .positions_at(1.0)
            .unwrap()
            .iter()
            .map(|p| p.coord(0))
            .collect();
        ys.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let yn = ys.len() as f64;
        let empirical = |x: f64| ys.partition_point(|v| *v <= x) as f64 / yn;
        let d = ks_statistic(&xs, empirical);
        // two-sample KS threshold at the 1% level
        let threshold = 1.63 * ((xs.len() + ys.len()) as f64 / (xs.len() * ys.len()) as f64).sqrt();
        assert!(d < threshold, "D = {d}, threshold = {threshold}");
    }
}
