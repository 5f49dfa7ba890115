//! Unitary time evolution by the split-step spectral method on a periodic
//! grid: a half potential phase, a full kinetic phase applied in the
//! transform domain, and a second half potential phase per step. Each step
//! is exactly unitary up to rounding, which is what the long-horizon
//! ensemble statistics rely on.

use num_complex::Complex64;
use thiserror::Error;

use super::grid::{Grid, Point};
use super::potential::{Potential, PotentialError};
use super::state::{StateError, Wavefunction};
use crate::fft::FieldFft;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("dt must be positive and finite, got {0}")]
    BadDt(f64),
    #[error("need one positive mass per axis")]
    BadMasses,
    #[error("hbar must be positive and finite, got {0}")]
    BadHbar(f64),
    #[error(
        "spectral aliasing: dt * max kinetic phase = {phase:.3} is not below pi; \
         reduce dt or refine the grid"
    )]
    Aliasing { phase: f64 },
    #[error("target time {target} is before the state time {current}")]
    BackwardTarget { target: f64, current: f64 },
    #[error("non-finite amplitude detected at step {step}")]
    NonFinite { step: usize },
    #[error("time {t} is outside the evolved range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Time-stepping parameters. Construction checks the spectral aliasing
/// bound `dt * max_kinetic_phase < pi` against the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub masses: Vec<f64>,
    pub hbar: f64,
}

impl EvolutionConfig {
    pub fn new(grid: &Grid, dt: f64, masses: Vec<f64>, hbar: f64) -> Result<Self, EvolveError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(EvolveError::BadDt(dt));
        }
        if masses.len() != grid.dims() || masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(EvolveError::BadMasses);
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(EvolveError::BadHbar(hbar));
        }
        let max_phase: f64 = grid
            .axes()
            .iter()
            .zip(&masses)
            .map(|(ax, m)| hbar * ax.k_max().powi(2) / (2.0 * m))
            .sum::<f64>()
            * dt;
        if max_phase >= std::f64::consts::PI {
            return Err(EvolveError::Aliasing { phase: max_phase });
        }
        Ok(EvolutionConfig { dt, masses, hbar })
    }

    /// Natural units: unit mass on every axis, hbar = 1.
    pub fn natural(grid: &Grid, dt: f64) -> Result<Self, EvolveError> {
        EvolutionConfig::new(grid, dt, vec![1.0; grid.dims()], 1.0)
    }
}

/// Reusable split-step machinery for one (grid, potential, config) triple.
pub(crate) struct Propagator {
    potential_values: Vec<f64>,
    cfg: EvolutionConfig,
    fft: FieldFft,
    /// kinetic phase rate per spectral bin: hbar * k^2 / (2m) summed per axis
    kinetic_rate: Vec<f64>,
    /// cached phase factors for the nominal dt
    pot_half_nominal: Vec<Complex64>,
    kin_nominal: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: Grid, potential: &Potential, cfg: EvolutionConfig) -> Result<Self, EvolveError> {
        let potential_values = potential.values_on(&grid)?;
        let shape: Vec<usize> = grid.axes().iter().map(|a| a.points).collect();
        let fft = FieldFft::new(&shape);
        let kinetic_rate: Vec<f64> = (0..grid.len())
            .map(|i| {
                let idx = match grid.dims() {
                    1 => [i, 0],
                    _ => [i / grid.axis(1).points, i % grid.axis(1).points],
                };
                (0..grid.dims())
                    .map(|a| {
                        let k = grid.axis(a).wavenumber(idx[a]);
                        cfg.hbar * k * k / (2.0 * cfg.masses[a])
                    })
                    .sum()
            })
            .collect();
        let pot_half_nominal = potential_phase(&potential_values, 0.5 * cfg.dt / cfg.hbar);
        let kin_nominal = kinetic_phase(&kinetic_rate, cfg.dt);
        Ok(Propagator {
            potential_values,
            cfg,
            fft,
            kinetic_rate,
            pot_half_nominal,
            kin_nominal,
        })
    }

    /// One split step of size `dt` (may be negative; the scheme is
    /// time-symmetric).
    pub fn step(&mut self, amps: &mut [Complex64], dt: f64) {
        let nominal = (dt - self.cfg.dt).abs() < 1e-15 * self.cfg.dt.abs();
        if nominal {
            apply_phase(amps, &self.pot_half_nominal);
            self.fft.forward(amps);
            apply_phase(amps, &self.kin_nominal);
            self.fft.inverse(amps);
            apply_phase(amps, &self.pot_half_nominal);
        } else {
            let pot = potential_phase(&self.potential_values, 0.5 * dt / self.cfg.hbar);
            let kin = kinetic_phase(&self.kinetic_rate, dt);
            apply_phase(amps, &pot);
            self.fft.forward(amps);
            apply_phase(amps, &kin);
            self.fft.inverse(amps);
            apply_phase(amps, &pot);
        }
    }

    /// Advances `psi` to `t_target` with steps of the nominal dt and a final
    /// shortened step landing exactly on the target.
    pub fn advance(&mut self, psi: &mut Wavefunction, t_target: f64) -> Result<(), EvolveError> {
        let t0 = psi.time();
        if t_target < t0 {
            return Err(EvolveError::BackwardTarget {
                target: t_target,
                current: t0,
            });
        }
        let span = t_target - t0;
        if span == 0.0 {
            return Ok(());
        }
        let dt = self.cfg.dt;
        let mut n_full = (span / dt).floor() as usize;
        let mut remainder = span - n_full as f64 * dt;
        if remainder < 1e-12 * dt {
            remainder = 0.0;
        } else if dt - remainder < 1e-12 * dt {
            n_full += 1;
            remainder = 0.0;
        }
        let amps = psi.amplitudes_mut();
        for step in 0..n_full {
            self.step(amps, dt);
            check_finite(amps, step)?;
        }
        if remainder > 0.0 {
            self.step(amps, remainder);
            check_finite(amps, n_full)?;
        }
        psi.set_time(t_target);
        Ok(())
    }
}

fn potential_phase(v: &[f64], scale: f64) -> Vec<Complex64> {
    v.iter().map(|vi| Complex64::cis(-vi * scale)).collect()
}

fn kinetic_phase(rate: &[f64], dt: f64) -> Vec<Complex64> {
    rate.iter().map(|r| Complex64::cis(-r * dt)).collect()
}

fn apply_phase(amps: &mut [Complex64], phase: &[Complex64]) {
    for (a, p) in amps.iter_mut().zip(phase) {
        *a *= p;
    }
}

fn check_finite(amps: &[Complex64], step: usize) -> Result<(), EvolveError> {
    if amps.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
        Err(EvolveError::NonFinite { step })
    } else {
        Ok(())
    }
}

/// Evolves `psi` to `t_target` under the potential, returning a new
/// wavefunction. `t_target == psi.time()` returns an identical copy.
pub fn evolve(
    psi: &Wavefunction,
    potential: &Potential,
    cfg: &EvolutionConfig,
    t_target: f64,
) -> Result<Wavefunction, EvolveError> {
    let mut prop = Propagator::new(psi.grid().clone(), potential, cfg.clone())?;
    let mut out = psi.clone();
    prop.advance(&mut out, t_target)?;
    Ok(out)
}

/// Immutable store of wavefunction snapshots on a uniform time grid,
/// built once and then shared read-only by trajectory integration,
/// quadrature and statistics. Densities between snapshots are linearly
/// interpolated in time.
pub struct EvolutionContext {
    snapshots: Vec<Wavefunction>,
    densities: Vec<Vec<f64>>,
    t_start: f64,
    snap_dt: f64,
    potential: Potential,
    cfg: EvolutionConfig,
}

impl EvolutionContext {
    /// Evolves `psi0` up to `t_end`, keeping snapshots roughly `snap_dt`
    /// apart (the spacing is adjusted so the range divides evenly).
    pub fn new(
        psi0: &Wavefunction,
        potential: &Potential,
        cfg: &EvolutionConfig,
        t_end: f64,
        snap_dt: f64,
    ) -> Result<Self, EvolveError> {
        let t0 = psi0.time();
        if t_end < t0 {
            return Err(EvolveError::BackwardTarget {
                target: t_end,
                current: t0,
            });
        }
        if !(snap_dt.is_finite() && snap_dt > 0.0) {
            return Err(EvolveError::BadDt(snap_dt));
        }
        let span = t_end - t0;
        let count = if span == 0.0 {
            0
        } else {
            (span / snap_dt).round().max(1.0) as usize
        };
        let actual_dt = if count == 0 { snap_dt } else { span / count as f64 };
        let mut prop = Propagator::new(psi0.grid().clone(), potential, cfg.clone())?;
        let mut snapshots = Vec::with_capacity(count + 1);
        let mut current = psi0.clone();
        snapshots.push(current.clone());
        for j in 1..=count {
            prop.advance(&mut current, t0 + j as f64 * actual_dt)?;
            snapshots.push(current.clone());
        }
        let densities = snapshots.iter().map(|s| s.density()).collect();
        Ok(EvolutionContext {
            snapshots,
            densities,
            t_start: t0,
            snap_dt: actual_dt,
            potential: potential.clone(),
            cfg: cfg.clone(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.snapshots[0].grid()
    }

    pub fn cfg(&self) -> &EvolutionConfig {
        &self.cfg
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn time_start(&self) -> f64 {
        self.t_start
    }

    pub fn time_end(&self) -> f64 {
        self.t_start + self.snap_dt * (self.snapshots.len() - 1) as f64
    }

    pub fn snapshot_dt(&self) -> f64 {
        self.snap_dt
    }

    pub fn snapshots(&self) -> &[Wavefunction] {
        &self.snapshots
    }

    /// Locates `t` on the snapshot grid: index of the left snapshot and the
    /// in-between fraction. Times within a small tolerance of a snapshot
    /// land exactly on it.
    pub fn locate(&self, t: f64) -> Result<(usize, f64), EvolveError> {
        let last = self.snapshots.len() - 1;
        let tol = 1e-9 * self.snap_dt.max(1e-300);
        if t < self.t_start - tol || t > self.time_end() + tol {
            return Err(EvolveError::TimeOutOfRange {
                t,
                start: self.t_start,
                end: self.time_end(),
            });
        }
        if last == 0 {
            return Ok((0, 0.0));
        }
        let u = ((t - self.t_start) / self.snap_dt).clamp(0.0, last as f64);
        let mut j = u.floor() as usize;
        let mut frac = u - j as f64;
        if frac > 1.0 - 1e-9 {
            j += 1;
            frac = 0.0;
        } else if frac < 1e-9 {
            frac = 0.0;
        }
        if j >= last {
            j = last;
            frac = 0.0;
        }
        Ok((j, frac))
    }

    /// Probability density field at time `t` (linear blend of the two
    /// bracketing snapshots).
    pub fn density_field(&self, t: f64) -> Result<Vec<f64>, EvolveError> {
        let (j, frac) = self.locate(t)?;
        if frac == 0.0 {
            return Ok(self.densities[j].clone());
        }
        Ok(self.densities[j]
            .iter()
            .zip(&self.densities[j + 1])
            .map(|(a, b)| (1.0 - frac) * a + frac * b)
            .collect())
    }

    /// Density at a single configuration-space point and time, multilinear
    /// in space and linear in time.
    pub fn density_at(&self, p: Point, t: f64) -> Result<f64, EvolveError> {
        let (j, frac) = self.locate(t)?;
        let grid = self.grid();
        let st = grid.stencil(p);
        let mut value = 0.0;
        for c in 0..st.count {
            let i = st.corners[c];
            let d0 = self.densities[j][i];
            let d = if frac == 0.0 {
                d0
            } else {
                (1.0 - frac) * d0 + frac * self.densities[j + 1][i]
            };
            value += st.weights[c] * d;
        }
        Ok(value)
    }

    /// Peak density of the initial snapshot; used to scale node thresholds.
    pub fn initial_peak_density(&self) -> f64 {
        self.snapshots[0].peak_density()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::state::{make_state, StateRecipe};
    use approx::assert_abs_diff_eq;

    fn gaussian(center: f64, width: f64, momentum: f64) -> StateRecipe {
        StateRecipe::Gaussian {
            center: vec![center],
            width: vec![width],
            momentum: vec![momentum],
        }
    }

    fn grid512() -> Grid {
        Grid::line(-16.0, 16.0, 512).unwrap()
    }

    #[test]
    fn config_rejects_aliasing_dt() {
        let grid = grid512();
        // k_max = pi/dx = pi * 16; phase rate ~ 1264 per unit time
        assert!(matches!(
            EvolutionConfig::natural(&grid, 0.01),
            Err(EvolveError::Aliasing { .. })
        ));
        assert!(EvolutionConfig::natural(&grid, 0.002).is_ok());
    }

    #[test]
    fn evolve_to_current_time_is_identity() {
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(0.0, 1.0, 0.0)).unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let out = evolve(&psi, &Potential::Free, &cfg, 0.0).unwrap();
        assert_eq!(out.amplitudes(), psi.amplitudes());
        assert_eq!(out.time(), 0.0);
    }

    #[test]
    fn stationary_state_density_is_static() {
        let grid = grid512();
        let psi = make_state(
            &grid,
            &StateRecipe::Eigenstate {
                potential: Potential::Harmonic { omega: 1.0 },
                n: vec![0],
            },
        )
        .unwrap();
        // the quasi-eigenstate mismatch of the splitting is O(dt^2); at
        // dt = 5e-4 the density wobble sits near 5e-9
        let cfg = EvolutionConfig::natural(&grid, 0.0005).unwrap();
        let out = evolve(&psi, &Potential::Harmonic { omega: 1.0 }, &cfg, 10.0).unwrap();
        assert_abs_diff_eq!(out.norm_squared(), 1.0, epsilon = 1e-10);
        for (a, b) in psi.density().iter().zip(out.density()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn free_gaussian_spreads_at_the_closed_form_rate() {
        // sigma(t) = sigma0 * sqrt(1 + t^2 / (4 sigma0^4))
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(0.0, 1.0, 0.0)).unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let out = evolve(&psi, &Potential::Free, &cfg, 2.0).unwrap();
        let dx = grid.axis(0).dx();
        let density = out.density();
        let mean: f64 = density
            .iter()
            .enumerate()
            .map(|(i, rho)| grid.point(i).coord(0) * rho * dx)
            .sum();
        let var: f64 = density
            .iter()
            .enumerate()
            .map(|(i, rho)| {
                let d = grid.point(i).coord(0) - mean;
                d * d * rho * dx
            })
            .sum();
        let expect = (1.0f64 + 4.0 / 4.0).sqrt();
        assert_abs_diff_eq!(var.sqrt(), expect, epsilon = 1e-4);
    }

    #[test]
    fn norm_is_preserved_over_many_steps() {
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(1.0, 0.7, 2.0)).unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let out = evolve(&psi, &Potential::Harmonic { omega: 1.0 }, &cfg, 4.0).unwrap();
        assert_abs_diff_eq!(out.norm_squared(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn scheme_is_time_reversible() {
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(0.5, 1.0, 1.0)).unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let mut prop = Propagator::new(grid.clone(), &Potential::Harmonic { omega: 1.0 }, cfg).unwrap();
        let mut amps = psi.amplitudes().to_vec();
        let steps = 500;
        for _ in 0..steps {
            prop.step(&mut amps, 0.002);
        }
        for _ in 0..steps {
            prop.step(&mut amps, -0.002);
        }
        for (a, b) in amps.iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn splitting_is_second_order_in_dt() {
        // error against a dt/8 reference drops ~4x when dt halves
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(0.0, 1.0, 1.0)).unwrap();
        let pot = Potential::Harmonic { omega: 1.0 };
        let run = |dt: f64| {
            let cfg = EvolutionConfig::natural(&grid, dt).unwrap();
            evolve(&psi, &pot, &cfg, 1.0).unwrap()
        };
        let reference = run(0.002 / 8.0);
        let err = |dt: f64| {
            run(dt)
                .amplitudes()
                .iter()
                .zip(reference.amplitudes())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.002) / err(0.001);
        assert!(
            (2.5..6.0).contains(&ratio),
            "expected ~4x reduction, got {ratio}"
        );
    }

    #[test]
    fn partial_final_step_lands_exactly() {
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(0.0, 1.0, 0.0)).unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let out = evolve(&psi, &Potential::Free, &cfg, 0.0077).unwrap();
        assert_eq!(out.time(), 0.0077);
        assert_abs_diff_eq!(out.norm_squared(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn context_interpolates_density_between_snapshots() {
        let grid = grid512();
        let psi = make_state(&grid, &gaussian(0.0, 1.0, 0.0)).unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.002).unwrap();
        let ctx = EvolutionContext::new(&psi, &Potential::Free, &cfg, 1.0, 0.01).unwrap();
        assert_eq!(ctx.snapshots().len(), 101);
        assert_abs_diff_eq!(ctx.time_end(), 1.0, epsilon = 1e-12);
        let p = Point::new_1d(0.3);
        let exact = ctx.density_at(p, 0.5).unwrap();
        let blended = ctx.density_at(p, 0.505).unwrap();
        assert!((exact - blended).abs() < 1e-3);
        assert!(ctx.density_at(p, 1.5).is_err());
    }

    #[test]
    fn evolution_is_unitary_in_two_dimensions() {
        let grid = Grid::plane((-8.0, 8.0, 64), (-8.0, 8.0, 64)).unwrap();
        let psi = make_state(
            &grid,
            &StateRecipe::Gaussian {
                center: vec![0.0, 0.5],
                width: vec![1.0, 0.8],
                momentum: vec![1.0, -0.5],
            },
        )
        .unwrap();
        let cfg = EvolutionConfig::natural(&grid, 0.005).unwrap();
        let out = evolve(&psi, &Potential::Harmonic { omega: 1.0 }, &cfg, 1.0).unwrap();
        assert_abs_diff_eq!(out.norm_squared(), 1.0, epsilon = 1e-10);
    }
}
