//! The Bohmian velocity field and single-trajectory integration.
//!
//! The velocity law for spinless particles is the scaled imaginary part of
//! the logarithmic gradient, `v_a = (hbar/m_a) Im(d_a psi / psi)`, computed
//! spectrally. It is undefined at wavefunction zeros; grid points whose
//! density falls below a threshold are flagged and the integrator treats
//! their neighbourhood specially: step sizes shrink, speeds are capped, and
//! a trajectory that cannot make progress reports the node it is stuck at.
//!
//! Trajectories are integrated with classical RK4 on a fixed output grid,
//! sampling velocity fields stored on a uniform snapshot grid (multilinear
//! in space, linear in time between snapshots).

use std::io::{BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::configspace::evolve::{EvolutionContext, EvolveError};
use crate::configspace::grid::{Grid, Point};
use crate::configspace::state::Wavefunction;
use crate::fft::FieldFft;

#[derive(Debug, Error)]
pub enum PilotWaveError {
    #[error("need at least two strictly increasing output times")]
    BadOutputTimes,
    #[error("output times [{lo}, {hi}] are outside the velocity table range [{start}, {end}]")]
    OutsideRange {
        lo: f64,
        hi: f64,
        start: f64,
        end: f64,
    },
    #[error("step size underflow below dt_min at a persistent node near t = {t}, x = ({x}, {y})")]
    NodeUnderflow { t: f64, x: f64, y: f64 },
    #[error("time {t} is outside the trajectory range [{start}, {end}]")]
    NotCovered { t: f64, start: f64, end: f64 },
    #[error("invalid node policy: {0}")]
    BadPolicy(String),
    #[error("trajectory CSV parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Evolve(#[from] EvolveError),
}

/// Guards for integrating through the neighbourhood of wavefunction nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodePolicy {
    /// density threshold below which a grid point counts as a node
    pub node_epsilon: f64,
    /// speed bound applied to velocities sampled near flagged points
    pub speed_cap: f64,
    /// factor (in (0,1)) by which steps shrink on node contact
    pub substep_shrink: f64,
    /// smallest admissible internal step
    pub dt_min: f64,
}

impl NodePolicy {
    pub fn new(
        node_epsilon: f64,
        speed_cap: f64,
        substep_shrink: f64,
        dt_min: f64,
    ) -> Result<Self, PilotWaveError> {
        if !(node_epsilon > 0.0 && node_epsilon.is_finite()) {
            return Err(PilotWaveError::BadPolicy("node_epsilon must be positive".into()));
        }
        if !(speed_cap > 0.0 && speed_cap.is_finite()) {
            return Err(PilotWaveError::BadPolicy("speed_cap must be positive".into()));
        }
        if !(substep_shrink > 0.0 && substep_shrink < 1.0) {
            return Err(PilotWaveError::BadPolicy(
                "substep_shrink must lie in (0,1)".into(),
            ));
        }
        if !(dt_min > 0.0 && dt_min.is_finite()) {
            return Err(PilotWaveError::BadPolicy("dt_min must be positive".into()));
        }
        Ok(NodePolicy {
            node_epsilon,
            speed_cap,
            substep_shrink,
            dt_min,
        })
    }

    /// Defaults scaled to an experiment: the node threshold sits 12 orders
    /// below the initial peak density and the speed cap at 100 domain
    /// lengths per experiment duration.
    pub fn for_experiment(ctx: &EvolutionContext, t0: f64, t1: f64) -> Result<Self, PilotWaveError> {
        let duration = (t1 - t0).abs().max(1e-12);
        let extent = ctx
            .grid()
            .axes()
            .iter()
            .map(|a| a.length())
            .fold(0.0, f64::max);
        NodePolicy::new(
            1e-12 * ctx.initial_peak_density(),
            1e2 * extent / duration,
            0.5,
            1e-9 * duration,
        )
    }
}

/// Bohmian velocity vectors on the grid at one time; `flagged[i]` marks
/// points where the density is below the node threshold and the stored
/// velocity (zero) is not meaningful.
#[derive(Clone, Debug)]
pub struct VelocityField {
    grid: Grid,
    time: f64,
    /// one slice of grid.len() values per axis
    components: Vec<Vec<f64>>,
    flagged: Vec<bool>,
}

impl VelocityField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn flagged(&self) -> &[bool] {
        &self.flagged
    }

    /// Multilinear velocity sample; `near_node` reports whether any stencil
    /// corner is flagged.
    pub fn sample(&self, p: Point) -> (Point, bool) {
        let st = self.grid.stencil(p);
        let mut v = [0.0; 2];
        let mut near = false;
        for c in 0..st.count {
            let i = st.corners[c];
            near |= self.flagged[i];
            for (a, comp) in self.components.iter().enumerate() {
                v[a] += st.weights[c] * comp[i];
            }
        }
        (Point::from_slice(&v), near)
    }
}

/// Spectral Bohmian velocity field `v_a = (hbar/m_a) Im(d_a psi / psi)`.
/// Points with `|psi|^2 < node_epsilon` are flagged instead of evaluated.
pub fn velocity_field(
    psi: &Wavefunction,
    masses: &[f64],
    hbar: f64,
    node_epsilon: f64,
) -> VelocityField {
    let grid = psi.grid().clone();
    let shape: Vec<usize> = grid.axes().iter().map(|a| a.points).collect();
    let mut fft = FieldFft::new(&shape);
    let mut spectrum = psi.amplitudes().to_vec();
    fft.forward(&mut spectrum);

    let n = grid.len();
    let mut components = Vec::with_capacity(grid.dims());
    let mut gradients: Vec<Vec<Complex64>> = Vec::with_capacity(grid.dims());
    for a in 0..grid.dims() {
        let ax = grid.axis(a);
        let nyquist = ax.points / 2;
        let mut g = spectrum.clone();
        for (i, gi) in g.iter_mut().enumerate() {
            let j = match grid.dims() {
                1 => i,
                _ => {
                    if a == 0 {
                        i / grid.axis(1).points
                    } else {
                        i % grid.axis(1).points
                    }
                }
            };
            // the Nyquist bin carries no usable sign information for odd
            // derivatives; drop it
            let k = if j == nyquist { 0.0 } else { ax.wavenumber(j) };
            *gi *= Complex64::new(0.0, k);
        }
        fft.inverse(&mut g);
        gradients.push(g);
    }

    let mut flagged = vec![false; n];
    for a in 0..grid.dims() {
        let scale = hbar / masses[a];
        let comp: Vec<f64> = (0..n)
            .map(|i| {
                let amp = psi.amplitudes()[i];
                if amp.norm_sqr() < node_epsilon {
                    flagged[i] = true;
                    return 0.0;
                }
                let v = scale * (gradients[a][i] / amp).im;
                if v.is_finite() {
                    v
                } else {
                    flagged[i] = true;
                    0.0
                }
            })
            .collect();
        components.push(comp);
    }

    VelocityField {
        grid,
        time: psi.time(),
        components,
        flagged,
    }
}

/// Velocity fields precomputed on the snapshot grid of an
/// [`EvolutionContext`]; read-only and safe to share across trajectory
/// integrations.
pub struct VelocityTable {
    grid: Grid,
    t_start: f64,
    snap_dt: f64,
    fields: Vec<VelocityField>,
}

impl VelocityTable {
    pub fn new(ctx: &EvolutionContext, node_epsilon: f64) -> Self {
        let cfg = ctx.cfg();
        let fields: Vec<VelocityField> = ctx
            .snapshots()
            .iter()
            .map(|s| velocity_field(s, &cfg.masses, cfg.hbar, node_epsilon))
            .collect();
        VelocityTable {
            grid: ctx.grid().clone(),
            t_start: ctx.time_start(),
            snap_dt: ctx.snapshot_dt(),
            fields,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time_start(&self) -> f64 {
        self.t_start
    }

    pub fn time_end(&self) -> f64 {
        self.t_start + self.snap_dt * (self.fields.len() - 1) as f64
    }

    /// Velocity at `(p, t)`, linear in time between snapshots. The `bool`
    /// reports node proximity at either bracketing snapshot.
    pub fn sample(&self, p: Point, t: f64) -> (Point, bool) {
        let last = self.fields.len() - 1;
        let u = if last == 0 {
            0.0
        } else {
            ((t - self.t_start) / self.snap_dt).clamp(0.0, last as f64)
        };
        let mut j = u.floor() as usize;
        let mut frac = u - j as f64;
        if j >= last {
            j = last;
            frac = 0.0;
        } else if frac < 1e-9 {
            frac = 0.0;
        } else if frac > 1.0 - 1e-9 {
            j += 1;
            frac = 0.0;
        }
        let (v0, near0) = self.fields[j].sample(p);
        if frac == 0.0 {
            return (v0, near0);
        }
        let (v1, near1) = self.fields[j + 1].sample(p);
        (
            v0.scale(1.0 - frac).add(v1.scale(frac)),
            near0 || near1,
        )
    }
}

/// A time-sampled path in configuration space.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, Point)>,
}

impl Trajectory {
    pub fn from_samples(samples: Vec<(f64, Point)>) -> Result<Self, PilotWaveError> {
        if samples.is_empty() || samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PilotWaveError::BadOutputTimes);
        }
        Ok(Trajectory { samples })
    }

    pub fn samples(&self) -> &[(f64, Point)] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn seed_position(&self) -> Point {
        self.samples[0].1
    }

    /// Position at `t`, linearly interpolated between adjacent samples.
    pub fn position_at(&self, t: f64) -> Result<Point, PilotWaveError> {
        let (start, end) = (self.start_time(), self.end_time());
        let tol = 1e-9 * (end - start).abs().max(1e-300);
        if t < start - tol || t > end + tol {
            return Err(PilotWaveError::NotCovered { t, start, end });
        }
        let idx = self.samples.partition_point(|(ts, _)| *ts <= t);
        if idx == 0 {
            return Ok(self.samples[0].1);
        }
        if idx >= self.samples.len() {
            return Ok(self.samples[self.samples.len() - 1].1);
        }
        let (t0, p0) = self.samples[idx - 1];
        let (t1, p1) = self.samples[idx];
        let w = (t - t0) / (t1 - t0);
        Ok(p0.scale(1.0 - w).add(p1.scale(w)))
    }

    /// CSV export, columns `t,x[,y]`.
    pub fn write_csv(&self, w: &mut impl Write, dims: usize) -> std::io::Result<()> {
        writeln!(w, "{}", if dims == 1 { "t,x" } else { "t,x,y" })?;
        for (t, p) in &self.samples {
            write!(w, "{}", t)?;
            for c in p.coords(dims) {
                write!(w, ",{}", c)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the `write_csv` format back.
    pub fn read_csv(r: impl BufRead) -> Result<Self, PilotWaveError> {
        let mut samples = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| PilotWaveError::Csv {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('t') {
                continue;
            }
            let mut parts = trimmed.split(',').map(|s| {
                s.trim().parse::<f64>().map_err(|e| PilotWaveError::Csv {
                    line: lineno + 1,
                    message: e.to_string(),
                })
            });
            let t = parts.next().ok_or(PilotWaveError::Csv {
                line: lineno + 1,
                message: "missing time column".into(),
            })??;
            let coords: Vec<f64> = parts.collect::<Result<_, _>>()?;
            if coords.is_empty() || coords.len() > 2 {
                return Err(PilotWaveError::Csv {
                    line: lineno + 1,
                    message: format!("expected 1 or 2 coordinates, got {}", coords.len()),
                });
            }
            samples.push((t, Point::from_slice(&coords)));
        }
        Trajectory::from_samples(samples)
    }
}

/// Bound on node-mode micro-steps per output interval; exceeding it means
/// the trajectory is pinned at a node.
const MAX_NODE_STEPS: usize = 100_000;

/// Integrates `dx/dt = v(x, t)` from `x0` with RK4, one step per pair of
/// consecutive `output_times`. Near flagged nodes the internal step shrinks
/// by `policy.substep_shrink` and sampled speeds are capped at
/// `policy.speed_cap`; a step that cannot reach `policy.dt_min` progress
/// reports the node position.
pub fn integrate_trajectory(
    x0: Point,
    output_times: &[f64],
    table: &VelocityTable,
    policy: &NodePolicy,
) -> Result<Trajectory, PilotWaveError> {
    if output_times.len() < 2 || output_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PilotWaveError::BadOutputTimes);
    }
    let (lo, hi) = (output_times[0], output_times[output_times.len() - 1]);
    let tol = 1e-9 * table.snap_dt;
    if lo < table.time_start() - tol || hi > table.time_end() + tol {
        return Err(PilotWaveError::OutsideRange {
            lo,
            hi,
            start: table.time_start(),
            end: table.time_end(),
        });
    }

    let grid = table.grid();
    let mut samples = Vec::with_capacity(output_times.len());
    let mut x = grid.wrap_point(x0);
    samples.push((lo, x));
    for pair in output_times.windows(2) {
        x = advance_interval(x, pair[0], pair[1], table, policy)?;
        x = grid.wrap_point(x);
        samples.push((pair[1], x));
    }
    Trajectory::from_samples(samples)
}

fn capped_sample(table: &VelocityTable, policy: &NodePolicy, p: Point, t: f64) -> (Point, bool) {
    let (v, near) = table.sample(p, t);
    if near {
        let speed = v.norm();
        if speed > policy.speed_cap {
            return (v.scale(policy.speed_cap / speed), true);
        }
    }
    (v, near)
}

fn rk4_step(
    x: Point,
    t: f64,
    h: f64,
    table: &VelocityTable,
    policy: &NodePolicy,
) -> (Point, bool) {
    let (k1, n1) = capped_sample(table, policy, x, t);
    let (k2, n2) = capped_sample(table, policy, x.add(k1.scale(0.5 * h)), t + 0.5 * h);
    let (k3, n3) = capped_sample(table, policy, x.add(k2.scale(0.5 * h)), t + 0.5 * h);
    let (k4, n4) = capped_sample(table, policy, x.add(k3.scale(h)), t + h);
    let increment = k1
        .add(k2.scale(2.0))
        .add(k3.scale(2.0))
        .add(k4)
        .scale(h / 6.0);
    (x.add(increment), n1 || n2 || n3 || n4)
}

fn advance_interval(
    mut x: Point,
    t_from: f64,
    t_to: f64,
    table: &VelocityTable,
    policy: &NodePolicy,
) -> Result<Point, PilotWaveError> {
    let span = t_to - t_from;
    let eps = 1e-12 * span;
    let mut t = t_from;
    let mut h = span;
    let mut node_steps = 0usize;
    while t_to - t > eps {
        h = h.min(t_to - t);
        let (x_next, touched) = rk4_step(x, t, h, table, policy);
        if touched {
            let shrunk = h * policy.substep_shrink;
            if shrunk >= policy.dt_min {
                h = shrunk;
                continue;
            }
            // cannot shrink further: creep with capped micro-steps, but a
            // trajectory pinned at a node must surface as an error
            node_steps += 1;
            if node_steps > MAX_NODE_STEPS {
                return Err(PilotWaveError::NodeUnderflow {
                    t,
                    x: x.coord(0),
                    y: x.coord(1),
                });
            }
        }
        x = x_next;
        t += h;
        h = (h / policy.substep_shrink).min(t_to - t_from);
    }
    Ok(x)
}

/// Trapezoidal time integral of `|psi(x(t), t)|^2` along a trajectory.
/// A single-sample trajectory integrates to zero.
pub fn path_density_integral(
    traj: &Trajectory,
    ctx: &EvolutionContext,
) -> Result<f64, PilotWaveError> {
    let samples = traj.samples();
    if samples.len() < 2 {
        return Ok(0.0);
    }
    let mut previous = ctx.density_at(samples[0].1, samples[0].0)?;
    let mut acc = 0.0;
    for pair in samples.windows(2) {
        let next = ctx.density_at(pair[1].1, pair[1].0)?;
        acc += 0.5 * (pair[1].0 - pair[0].0) * (previous + next);
        previous = next;
    }
    Ok(acc)
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

    fn gaussian(center: f64, width: f64, momentum: f64) -> StateRecipe {
        StateRecipe::Gaussian {
            center: vec![center],
            width: vec![width],
            momentum: vec![momentum],
        }
    }

    fn ground_state() -> StateRecipe {
        StateRecipe::Eigenstate {
            potential: Potential::Harmonic { omega: 1.0 },
            n: vec![0],
        }
    }

    #[test]
    fn plane_wave_gaussian_has_constant_velocity() {
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(0.0, 1.0, 2.5)).unwrap();
        let field = velocity_field(&psi, &[1.0], 1.0, 1e-12 * psi.peak_density());
        for i in 0..grid.len() {
            if psi.density()[i] > 1e-6 {
                assert_abs_diff_eq!(field.component(0)[i], 2.5, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn real_positive_state_has_zero_velocity() {
        let grid = grid512();
        let psi = make_state(&grid, &ground_state()).unwrap();
        let field = velocity_field(&psi, &[1.0], 1.0, 1e-12 * psi.peak_density());
        for (i, flagged) in field.flagged().iter().enumerate() {
            if !flagged {
                assert_abs_diff_eq!(field.component(0)[i], 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn velocity_matches_finite_difference_oracle() {
        // evolve the n=0,1 superposition a little so the phase is nontrivial,
        // then compare against a fourth-order central difference of psi
        let grid = Grid::line(-16.0, 16.0, 2048).unwrap();
        let harmonic = Potential::Harmonic { omega: 1.0 };
        let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let psi0 = make_state(
            &grid,
            &StateRecipe::Superposition {
                terms: vec![
                    (
                        c,
                        StateRecipe::Eigenstate {
                            potential: harmonic.clone(),
                            n: vec![0],
                        },
                    ),
                    (
                        c,
                        StateRecipe::Eigenstate {
                            potential: harmonic.clone(),
                            n: vec![1],
                        },
                    ),
                ],
            },
        )
        .unwrap();
        let cfg = EvolutionConfig::natural(&grid, 1e-4).unwrap();
        let psi = crate::configspace::evolve::evolve(&psi0, &harmonic, &cfg, 0.3).unwrap();

        let eps = 1e-12 * psi.peak_density();
        let field = velocity_field(&psi, &[1.0], 1.0, eps);
        let amps = psi.amplitudes();
        let n = grid.len();
        let h = grid.axis(0).dx();
        let density = psi.density();
        for i in 0..n {
            if density[i] <= 10.0 * eps {
                continue;
            }
            let m2 = amps[(i + n - 2) % n];
            let m1 = amps[(i + n - 1) % n];
            let p1 = amps[(i + 1) % n];
            let p2 = amps[(i + 2) % n];
            let grad = (p1 - m1) * 8.0 - (p2 - m2);
            let oracle = ((grad / (12.0 * h)) / amps[i]).im;
            assert_abs_diff_eq!(field.component(0)[i], oracle, epsilon = 1e-6);
        }
    }

    #[test]
    fn global_phase_leaves_velocity_unchanged() {
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(0.3, 1.0, 1.2)).unwrap();
        let eps = 1e-12 * psi.peak_density();
        let rotated = Wavefunction::normalized(
            grid.clone(),
            psi.amplitudes()
                .iter()
                .map(|a| a * Complex64::cis(1.234))
                .collect(),
            psi.time(),
        )
        .unwrap();
        let f0 = velocity_field(&psi, &[1.0], 1.0, eps);
        let f1 = velocity_field(&rotated, &[1.0], 1.0, eps);
        // rounding in 1/psi amplifies towards the tails, so compare where
        // the density is resolved
        let floor = 1e-4 * psi.peak_density();
        for (i, (a, b)) in f0.component(0).iter().zip(f1.component(0)).enumerate() {
            if psi.density()[i] > floor {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    fn context(
        recipe: &StateRecipe,
        potential: &Potential,
        t_end: f64,
        snap_dt: f64,
    ) -> EvolutionContext {
        context_with_dt(recipe, potential, t_end, snap_dt, 0.002)
    }

    fn context_with_dt(
        recipe: &StateRecipe,
        potential: &Potential,
        t_end: f64,
        snap_dt: f64,
        dt: f64,
    ) -> EvolutionContext {
        let grid = grid512();
        let psi = make_state(&grid, recipe).unwrap();
        let cfg = EvolutionConfig::natural(&grid, dt).unwrap();
        EvolutionContext::new(&psi, potential, &cfg, t_end, snap_dt).unwrap()
    }

    fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
    }

    #[test]
    fn stationary_state_trajectories_are_static() {
        // the residual velocity comes from the O(dt^2) splitting noise of
        // the evolved eigenstate, so the 1e-8 drift bound needs a small dt
        let ctx = context_with_dt(
            &ground_state(),
            &Potential::Harmonic { omega: 1.0 },
            10.0,
            0.05,
            1.25e-4,
        );
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 10.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        for x0 in [-1.0, -0.5, 0.3, 1.0] {
            let traj =
                integrate_trajectory(Point::new_1d(x0), &uniform_times(0.0, 10.0, 100), &table, &policy)
                    .unwrap();
            for (_, p) in traj.samples() {
                assert!((p.coord(0) - x0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn free_gaussian_center_stays_put() {
        let ctx = context(&gaussian(0.0, 1.0, 0.0), &Potential::Free, 2.0, 0.01);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let traj =
            integrate_trajectory(Point::new_1d(0.0), &uniform_times(0.0, 2.0, 100), &table, &policy)
                .unwrap();
        for (_, p) in traj.samples() {
            assert!(p.coord(0).abs() < 1e-6);
        }
    }

    #[test]
    fn free_gaussian_follows_the_scaling_law() {
        // x(t) = x0 sqrt(1 + t^2/4) for sigma0 = 1
        let ctx = context(&gaussian(0.0, 1.0, 0.0), &Potential::Free, 2.0, 0.005);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let traj =
            integrate_trajectory(Point::new_1d(1.0), &uniform_times(0.0, 2.0, 200), &table, &policy)
                .unwrap();
        let end = traj.samples().last().unwrap().1.coord(0);
        assert_abs_diff_eq!(end, 2.0f64.sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn trajectories_do_not_cross_in_one_dimension() {
        let ctx = context(&gaussian(0.0, 1.0, 0.5), &Potential::Free, 2.0, 0.01);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let times = uniform_times(0.0, 2.0, 100);
        let seeds = [-2.0, -1.0, -0.25, 0.0, 0.4, 1.3, 2.2];
        let trajectories: Vec<Trajectory> = seeds
            .iter()
            .map(|&x0| integrate_trajectory(Point::new_1d(x0), &times, &table, &policy).unwrap())
            .collect();
        for k in 0..times.len() {
            for w in trajectories.windows(2) {
                assert!(w[0].samples()[k].1.coord(0) < w[1].samples()[k].1.coord(0));
            }
        }
    }

    #[test]
    fn rk4_error_drops_sixteenfold_when_step_halves() {
        // snapshots at 2/320 so every run's RK substeps land exactly on
        // snapshot times, leaving pure RK4 truncation error
        let ctx = context(&gaussian(0.0, 1.0, 0.0), &Potential::Free, 2.0, 2.0 / 320.0);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let endpoint = |steps: usize| {
            integrate_trajectory(Point::new_1d(1.0), &uniform_times(0.0, 2.0, steps), &table, &policy)
                .unwrap()
                .samples()
                .last()
                .unwrap()
                .1
                .coord(0)
        };
        let reference = endpoint(160);
        let e1 = (endpoint(10) - reference).abs();
        let e2 = (endpoint(20) - reference).abs();
        let ratio = e1 / e2;
        assert!(
            (8.0..32.0).contains(&ratio),
            "expected ~16x error reduction, got {ratio} (e1 = {e1:.3e}, e2 = {e2:.3e})"
        );
    }

    #[test]
    fn trajectory_pinned_at_a_node_reports_underflow() {
        // the n=1 eigenstate has a persistent node at x=0 with zero velocity
        let ctx = context(
            &StateRecipe::Eigenstate {
                potential: Potential::Harmonic { omega: 1.0 },
                n: vec![1],
            },
            &Potential::Harmonic { omega: 1.0 },
            1.0,
            0.01,
        );
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 1.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let err = integrate_trajectory(
            Point::new_1d(0.0),
            &uniform_times(0.0, 1.0, 10),
            &table,
            &policy,
        )
        .unwrap_err();
        assert!(matches!(err, PilotWaveError::NodeUnderflow { .. }));
    }

    #[test]
    fn path_integral_of_static_peak_trajectory() {
        // |psi(0)|^2 = pi^(-1/2) for the harmonic ground state, so ten time
        // units integrate to 10/sqrt(pi)
        let ctx = context(&ground_state(), &Potential::Harmonic { omega: 1.0 }, 10.0, 0.05);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 10.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let traj =
            integrate_trajectory(Point::new_1d(0.0), &uniform_times(0.0, 10.0, 200), &table, &policy)
                .unwrap();
        let value = path_density_integral(&traj, &ctx).unwrap();
        let expect = 10.0 * std::f64::consts::PI.powf(-0.5);
        assert_abs_diff_eq!(value, expect, epsilon = 1e-4);
    }

    #[test]
    fn zero_length_interval_integrates_to_zero() {
        let ctx = context(&ground_state(), &Potential::Harmonic { omega: 1.0 }, 1.0, 0.01);
        let traj = Trajectory::from_samples(vec![(0.0, Point::new_1d(0.0))]).unwrap();
        assert_eq!(path_density_integral(&traj, &ctx).unwrap(), 0.0);
    }

    #[test]
    fn peak_trajectory_beats_offset_trajectory() {
        let ctx = context(&ground_state(), &Potential::Harmonic { omega: 1.0 }, 10.0, 0.05);
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 10.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let times = uniform_times(0.0, 10.0, 100);
        let at = |x0: f64| {
            let traj = integrate_trajectory(Point::new_1d(x0), &times, &table, &policy).unwrap();
            path_density_integral(&traj, &ctx).unwrap()
        };
        assert!(at(0.0) > at(2.0));
    }

    #[test]
    fn two_dimensional_plane_wave_velocity() {
        // widths chosen so the periodic tails sit below 1e-11 and do not
        // contaminate the spectral derivative
        let grid = Grid::plane((-8.0, 8.0, 64), (-8.0, 8.0, 64)).unwrap();
        let psi = make_state(
            &grid,
            &StateRecipe::Gaussian {
                center: vec![0.0, 0.0],
                width: vec![0.8, 0.8],
                momentum: vec![2.0, -1.5],
            },
        )
        .unwrap();
        let field = velocity_field(&psi, &[1.0, 1.0], 1.0, 1e-12 * psi.peak_density());
        let density = psi.density();
        for (i, rho) in density.iter().enumerate() {
            if *rho > 1e-4 {
                assert_abs_diff_eq!(field.component(0)[i], 2.0, epsilon = 1e-6);
                assert_abs_diff_eq!(field.component(1)[i], -1.5, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn two_dimensional_free_gaussian_scales_per_axis() {
        // the free flow is separable: each coordinate follows the 1D
        // scaling law x_a(t) = x_a(0) sqrt(1 + t^2/(4 sigma_a^4))
        let grid = Grid::plane((-16.0, 16.0, 128), (-16.0, 16.0, 128)).unwrap();
        let psi = make_state(
            &grid,
            &StateRecipe::Gaussian {
                center: vec![0.0, 0.0],
                width: vec![1.0, 1.0],
                momentum: vec![0.0, 0.0],
            },
        )
        .unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.005).unwrap();
        let ctx = EvolutionContext::new(&psi, &Potential::Free, &cfg, 2.0, 0.01).unwrap();
        let policy = NodePolicy::for_experiment(&ctx, 0.0, 2.0).unwrap();
        let table = VelocityTable::new(&ctx, policy.node_epsilon);
        let traj = integrate_trajectory(
            Point::new_2d(1.0, -0.5),
            &uniform_times(0.0, 2.0, 100),
            &table,
            &policy,
        )
        .unwrap();
        let end = traj.samples().last().unwrap().1;
        let scale = 2.0f64.sqrt();
        assert_abs_diff_eq!(end.coord(0), scale, epsilon = 1e-3);
        assert_abs_diff_eq!(end.coord(1), -0.5 * scale, epsilon = 1e-3);
    }

    #[test]
    fn trajectory_csv_roundtrip() {
        let traj = Trajectory::from_samples(vec![
            (0.0, Point::new_1d(1.0)),
            (0.5, Point::new_1d(1.25)),
            (1.0, Point::new_1d(1.5)),
        ])
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, 1).unwrap();
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn position_interpolates_between_samples() {
        let traj = Trajectory::from_samples(vec![
            (0.0, Point::new_1d(0.0)),
            (1.0, Point::new_1d(2.0)),
        ])
        .unwrap();
        assert_abs_diff_eq!(traj.position_at(0.25).unwrap().coord(0), 0.5);
        assert!(traj.position_at(2.0).is_err());
    }
}
