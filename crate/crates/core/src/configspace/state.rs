//! Wavefunctions on a grid and the recipes that build initial states.
//!
//! Closed forms are used throughout: Gaussian packets are parametrised by
//! the standard deviation of their position density (so a width-`s` packet
//! has `|psi|^2` variance `s^2`), harmonic eigenstates come from the
//! normalised Hermite recurrence and box eigenstates from the infinite-well
//! sines. Every recipe is sampled on the grid and renormalised.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::Grid;
use super::potential::Potential;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("recipe parameter list has {got} entries but the grid has {dims} axes")]
    DimsMismatch { got: usize, dims: usize },
    #[error("axis {axis}: gaussian width {width} is below the 2*dx = {limit} resolution floor")]
    WidthUnresolved { axis: usize, width: f64, limit: f64 },
    #[error("axis {axis}: momentum {momentum} exceeds the grid Nyquist limit {limit}")]
    MomentumUnresolved {
        axis: usize,
        momentum: f64,
        limit: f64,
    },
    #[error("axis {axis}: eigenstate n={n} is spatially unresolved: {reason}")]
    EigenstateUnresolved {
        axis: usize,
        n: usize,
        reason: String,
    },
    #[error("no closed-form eigenstates for this potential kind")]
    UnsupportedEigenstate,
    #[error("superposition has no terms")]
    EmptySuperposition,
    #[error("state has vanishing norm and cannot be normalised")]
    ZeroNorm,
    #[error("{0}")]
    BadParameter(String),
}

/// Recipe for an initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateRecipe {
    /// Gaussian packet; `width` is the standard deviation of the position
    /// density per axis, `momentum` the plane-wave modulation wavenumber.
    Gaussian {
        center: Vec<f64>,
        width: Vec<f64>,
        momentum: Vec<f64>,
    },
    /// Closed-form eigenstate of a harmonic or box potential, quantum
    /// number `n` per axis (0-based).
    Eigenstate { potential: Potential, n: Vec<usize> },
    Superposition {
        terms: Vec<(Complex64, StateRecipe)>,
    },
}

/// Complex amplitudes on a grid at a simulation time.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavefunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl Wavefunction {
    /// Wraps raw amplitudes, rescaling so that the grid quadrature of
    /// `|psi|^2` is exactly one.
    pub fn normalized(
        grid: Grid,
        mut amplitudes: Vec<Complex64>,
        time: f64,
    ) -> Result<Self, StateError> {
        assert_eq!(amplitudes.len(), grid.len(), "amplitude count mismatch");
        let dv = grid.cell_volume();
        let total: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * dv;
        if !(total.is_finite() && total > 1e-300) {
            return Err(StateError::ZeroNorm);
        }
        let scale = 1.0 / total.sqrt();
        for a in amplitudes.iter_mut() {
            *a *= scale;
        }
        Ok(Wavefunction {
            grid,
            amplitudes,
            time,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut Vec<Complex64> {
        &mut self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Grid quadrature of `|psi|^2`.
    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Pointwise probability density `|psi|^2`.
    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn peak_density(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0, f64::max)
    }

    /// CSV snapshot: `x[,y],re,im,density` per grid point.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        if self.grid.dims() == 1 {
            writeln!(w, "x,re,im,density")?;
        } else {
            writeln!(w, "x,y,re,im,density")?;
        }
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = self.grid.point(i);
            for c in p.coords(self.grid.dims()) {
                write!(w, "{},", c)?;
            }
            writeln!(w, "{},{},{}", a.re, a.im, a.norm_sqr())?;
        }
        Ok(())
    }

    /// Compact binary snapshot. Layout, all little-endian:
    /// magic `BWF1`, u32 dims, per axis (f64 min, f64 max, u64 points),
    /// f64 time, 64 bytes of ASCII metadata (zero-padded), then interleaved
    /// re/im f64 pairs in row-major point order.
    pub fn write_binary(&self, w: &mut impl Write, meta: &str) -> io::Result<()> {
        w.write_all(b"BWF1")?;
        w.write_all(&(self.grid.dims() as u32).to_le_bytes())?;
        for ax in self.grid.axes() {
            w.write_all(&ax.min.to_le_bytes())?;
            w.write_all(&ax.max.to_le_bytes())?;
            w.write_all(&(ax.points as u64).to_le_bytes())?;
        }
        w.write_all(&self.time.to_le_bytes())?;
        let mut tag = [0u8; 64];
        let bytes = meta.as_bytes();
        let n = bytes.len().min(64);
        tag[..n].copy_from_slice(&bytes[..n]);
        w.write_all(&tag)?;
        for a in &self.amplitudes {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Builds a normalised state at time zero with natural units (m = hbar = 1).
pub fn make_state(grid: &Grid, recipe: &StateRecipe) -> Result<Wavefunction, StateError> {
    make_state_with(grid, recipe, &vec![1.0; grid.dims()], 1.0)
}

/// Builds a normalised state at time zero; `masses` and `hbar` set the
/// length scale of eigenstate recipes.
pub fn make_state_with(
    grid: &Grid,
    recipe: &StateRecipe,
    masses: &[f64],
    hbar: f64,
) -> Result<Wavefunction, StateError> {
    if masses.len() != grid.dims() {
        return Err(StateError::DimsMismatch {
            got: masses.len(),
            dims: grid.dims(),
        });
    }
    if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) || !(hbar.is_finite() && hbar > 0.0) {
        return Err(StateError::BadParameter(
            "masses and hbar must be positive and finite".into(),
        ));
    }
    let amplitudes = sample_recipe(grid, recipe, masses, hbar)?;
    Wavefunction::normalized(grid.clone(), amplitudes, 0.0)
}

fn sample_recipe(
    grid: &Grid,
    recipe: &StateRecipe,
    masses: &[f64],
    hbar: f64,
) -> Result<Vec<Complex64>, StateError> {
    match recipe {
        StateRecipe::Gaussian {
            center,
            width,
            momentum,
        } => sample_gaussian(grid, center, width, momentum),
        StateRecipe::Eigenstate { potential, n } => sample_eigenstate(grid, potential, n, masses, hbar),
        StateRecipe::Superposition { terms } => {
            if terms.is_empty() {
                return Err(StateError::EmptySuperposition);
            }
            let mut sum = vec![Complex64::default(); grid.len()];
            for (coeff, sub) in terms {
                // each term enters with unit norm so coefficients mean what
                // they say before the final renormalisation
                let part = sample_recipe(grid, sub, masses, hbar)?;
                let dv = grid.cell_volume();
                let norm: f64 = part.iter().map(|a| a.norm_sqr()).sum::<f64>() * dv;
                if norm <= 1e-300 {
                    return Err(StateError::ZeroNorm);
                }
                let scale = coeff / norm.sqrt();
                for (acc, a) in sum.iter_mut().zip(&part) {
                    *acc += scale * a;
                }
            }
            Ok(sum)
        }
    }
}

fn check_len(got: usize, dims: usize) -> Result<(), StateError> {
    if got != dims {
        Err(StateError::DimsMismatch { got, dims })
    } else {
        Ok(())
    }
}

fn sample_gaussian(
    grid: &Grid,
    center: &[f64],
    width: &[f64],
    momentum: &[f64],
) -> Result<Vec<Complex64>, StateError> {
    let dims = grid.dims();
    check_len(center.len(), dims)?;
    check_len(width.len(), dims)?;
    check_len(momentum.len(), dims)?;
    for a in 0..dims {
        let ax = grid.axis(a);
        let limit = 2.0 * ax.dx();
        if !(width[a].is_finite() && width[a] >= limit) {
            return Err(StateError::WidthUnresolved {
                axis: a,
                width: width[a],
                limit,
            });
        }
        if momentum[a].abs() >= ax.k_max() {
            return Err(StateError::MomentumUnresolved {
                axis: a,
                momentum: momentum[a],
                limit: ax.k_max(),
            });
        }
    }
    let amps = (0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            let mut v = Complex64::new(1.0, 0.0);
            for a in 0..dims {
                let dxc = p.coord(a) - center[a];
                let envelope = (-dxc * dxc / (4.0 * width[a] * width[a])).exp();
                v *= envelope * Complex64::cis(momentum[a] * p.coord(a));
            }
            v
        })
        .collect();
    Ok(amps)
}

fn sample_eigenstate(
    grid: &Grid,
    potential: &Potential,
    n: &[usize],
    masses: &[f64],
    hbar: f64,
) -> Result<Vec<Complex64>, StateError> {
    let dims = grid.dims();
    check_len(n.len(), dims)?;
    // per-axis real profiles; the product state is separable
    let mut profiles: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for a in 0..dims {
        let ax = grid.axis(a);
        let profile = match potential {
            Potential::Harmonic { omega } => {
                let scale = (masses[a] * omega / hbar).sqrt();
                // local wavenumber at the centre and classical turning point
                let k_local = ((2 * n[a] + 1) as f64).sqrt() * scale;
                if k_local > 0.5 * ax.k_max() {
                    return Err(StateError::EigenstateUnresolved {
                        axis: a,
                        n: n[a],
                        reason: format!(
                            "oscillation wavenumber {:.3} exceeds half the Nyquist limit {:.3}",
                            k_local,
                            ax.k_max()
                        ),
                    });
                }
                let turning = ((2 * n[a] + 1) as f64).sqrt() / scale;
                let margin = 4.0 / scale;
                if turning + margin > ax.max.min(-ax.min) {
                    return Err(StateError::EigenstateUnresolved {
                        axis: a,
                        n: n[a],
                        reason: format!(
                            "classical turning point {:.3} does not fit the extent",
                            turning
                        ),
                    });
                }
                (0..ax.points)
                    .map(|i| hermite_function(n[a], scale * ax.coord(i)))
                    .collect()
            }
            Potential::Box { width, .. } => {
                let mode = n[a] + 1;
                if mode as f64 * ax.dx() > 0.5 * width {
                    return Err(StateError::EigenstateUnresolved {
                        axis: a,
                        n: n[a],
                        reason: format!("mode {} is unresolved inside a width-{} well", mode, width),
                    });
                }
                if *width > ax.length() {
                    return Err(StateError::EigenstateUnresolved {
                        axis: a,
                        n: n[a],
                        reason: "well is wider than the grid extent".into(),
                    });
                }
                (0..ax.points)
                    .map(|i| {
                        let x = ax.coord(i);
                        if x.abs() <= 0.5 * width {
                            (mode as f64 * std::f64::consts::PI * (x + 0.5 * width) / width).sin()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            _ => return Err(StateError::UnsupportedEigenstate),
        };
        profiles.push(profile);
    }
    let amps = (0..grid.len())
        .map(|i| {
            let value: f64 = match dims {
                1 => profiles[0][i],
                _ => {
                    let ny = grid.axis(1).points;
                    profiles[0][i / ny] * profiles[1][i % ny]
                }
            };
            Complex64::new(value, 0.0)
        })
        .collect();
    Ok(amps)
}

/// Normalised Hermite function `phi_n(xi)` via the stable three-term
/// recurrence; `phi_0 = pi^(-1/4) exp(-xi^2/2)`.
pub fn hermite_function(n: usize, xi: f64) -> f64 {
    let phi0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    if n == 0 {
        return phi0;
    }
    let mut prev = phi0;
    let mut cur = std::f64::consts::SQRT_2 * xi * phi0;
    for k in 2..=n {
        let next = xi * (2.0 / k as f64).sqrt() * cur - ((k - 1) as f64 / k as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}
